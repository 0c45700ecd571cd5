// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--seeds N] [--out DIR] [--only 1,2,...]
//
// Criteria 5 and 6 train the default benchmark (full, wo_dc_loss, s2,
// s2_wo_target) on N >= 5 seeds and take most of the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oneranker/data/io.hpp"
#include "oneranker/data/synth.hpp"
#include "oneranker/harness/gradsuite.hpp"
#include "oneranker/harness/pipeline.hpp"
#include "oneranker/model/oneranker.hpp"
#include "oracles.hpp"

using namespace oneranker;
using namespace oneranker::harness;
using model::Tensor;
using T64 = Tensor<double>;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

T64 random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, bool grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(r * c);
    for (auto& x : v) x = dist(rng);
    return T64::from({r, c}, std::move(v), grad);
}

bool rows_equal(const T64& a, std::size_t ra, const T64& b, std::size_t rb) {
    for (std::size_t x = 0; x < a.cols(); ++x) {
        if (a.at(ra, x) != b.at(rb, x)) return false;
    }
    return true;
}

oracle::Vec to_vec(const T64& t) { return {t.values().begin(), t.values().end()}; }

oracle::Mat to_mat(const T64& t) {
    oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    }
    return m;
}

// ---------------------------------------------------------------- 1

Verdict gradients() {
    const auto t0 = Clock::now();
    std::size_t checks = 0, failed = 0;
    std::string worst;
    double worst_err = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (const auto& e : run_gradient_suite(seed, 1e-4)) {
            ++checks;
            if (!e.report.passed) ++failed;
            if (e.report.max_rel_error() >= worst_err) {
                worst_err = e.report.max_rel_error();
                worst = e.name;
            }
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream os;
    os << checks << " checks over 3 seeds, " << failed << " failed, worst " << worst << " rel=" << worst_err << ", "
       << secs << "s";
    return {failed == 0 && secs < 60.0, os.str()};
}

// ---------------------------------------------------------------- 2

Verdict invariances() {
    tensor::NoGradGuard guard;
    model::ModelConfig cfg = micro_model_config();
    cfg.hetero_layers = 1;
    std::mt19937_64 rng(2024);
    const std::size_t m = cfg.task_count(), k = cfg.fake_items;
    std::map<std::string, std::size_t> broken;
    const int trials = 100;

    tensor::ParameterStore<double> store(7);
    model::HeteroDecoder<double> dec(store, cfg);
    model::RDecoder<double> rd(store, cfg);

    for (int t = 0; t < trials; ++t) {
        const auto h1 = random_matrix(rng, 9, cfg.d);
        const auto tasks = random_matrix(rng, m, cfg.d);
        const auto fakes = random_matrix(rng, k, cfg.d);
        const auto base = dec(tasks, fakes, h1);

        // Task causality: perturbing task j leaves tasks before j unchanged.
        const std::size_t jt = 1 + rng() % (m - 1);
        auto t2 = tasks.clone();
        for (std::size_t x = 0; x < cfg.d; ++x) t2.mutable_values()[jt * cfg.d + x] += 0.75;
        const auto pt = dec(t2, fakes, h1);
        bool ok = true;
        for (std::size_t i = 0; i < jt; ++i) ok &= rows_equal(base.task_reps, i, pt.task_reps, i);
        if (!ok) ++broken["task causality"];

        // Fake items never see each other.
        const std::size_t jf = rng() % k;
        auto f2 = fakes.clone();
        for (std::size_t x = 0; x < cfg.d; ++x) f2.mutable_values()[jf * cfg.d + x] -= 1.25;
        const auto pf = dec(tasks, f2, h1);
        ok = true;
        for (std::size_t j = 0; j < k; ++j) {
            if (j != jf) ok &= rows_equal(base.fake_reps, j, pf.fake_reps, j);
        }
        if (!ok) ++broken["fake invisibility"];

        // Ranker: candidate independence and permutation equivariance.
        const std::size_t n = 2 + rng() % 29;
        const auto kv = model::fuse_kv(h1, base.task_reps, base.fake_reps);
        const auto c = rd.candidate_tokens(random_matrix(rng, n, cfg.d), random_matrix(rng, n, k));
        const auto s = rd(c, kv);
        const std::size_t j = rng() % n;
        auto c2 = c.clone();
        for (std::size_t x = 0; x < cfg.d; ++x) c2.mutable_values()[j * cfg.d + x] *= -3.0;
        const auto s2 = rd(c2, kv);
        ok = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (i != j) ok &= s.values()[i] == s2.values()[i];
        }
        if (!ok) ++broken["candidate independence"];

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto sp = rd(tensor::gather_rows<double>(c, perm), kv);
        ok = true;
        for (std::size_t i = 0; i < n; ++i) ok &= sp.values()[i] == s.values()[perm[i]];
        if (!ok) ++broken["permutation equivariance"];
    }
    std::ostringstream os;
    os << "4 properties x " << trials << " trials";
    for (const auto& [name, count] : broken) os << ", " << name << " broken " << count << "x";
    return {broken.empty(), os.str()};
}

// ---------------------------------------------------------------- 3

Verdict loss_oracles() {
    std::mt19937_64 rng(303);
    double mtp_err = 0, bpr_err = 0, dc_err = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        const std::size_t heads = 1 + rng() % 4, d = 1 + rng() % 8, k = rng() % 5, levels = 1 + rng() % 3;
        std::vector<T64> books, cosines;
        std::vector<oracle::Mat> obooks;
        const auto centers = random_matrix(rng, std::max<std::size_t>(k, 1), d);
        for (std::size_t l = 0; l < levels; ++l) {
            books.push_back(random_matrix(rng, 2 + rng() % 12, d));
            obooks.push_back(to_mat(books.back()));
            if (k) cosines.push_back(tensor::cosine_similarity(books.back(), centers));
        }
        std::vector<std::vector<std::uint32_t>> gt(heads);
        for (auto& p : gt) {
            for (std::size_t l = 0; l < levels; ++l) p.push_back(static_cast<std::uint32_t>(rng() % books[l].rows()));
        }
        const auto e = random_matrix(rng, heads, d);
        const auto s = k ? random_matrix(rng, heads, k) : T64{};
        const double got = model::mtp_loss(e, s, gt, std::span<const T64>(books), std::span<const T64>(cosines)).item();
        const double want = oracle::mtp(to_mat(e), k ? to_mat(s) : oracle::Mat{}, gt, obooks,
                                        k ? to_mat(centers) : oracle::Mat{});
        mtp_err = std::max(mtp_err, std::abs(got - want));

        const std::size_t n = 2 + rng() % 30;
        std::vector<double> labels(n);
        for (auto& y : labels) y = static_cast<double>(rng() % 6) * 0.25;
        labels[rng() % n] = 3.0;
        const auto sc = random_matrix(rng, n, 1);
        bpr_err = std::max(bpr_err, std::abs(model::bpr_rank_loss(sc, labels).item() - oracle::bpr(to_vec(sc), labels)));

        const double tau = 0.1 + static_cast<double>(rng() % 40) / 8.0;
        const auto g = random_matrix(rng, 1, n);
        dc_err = std::max(dc_err, std::abs(model::dc_loss(sc, g, tau).item() - oracle::dc(to_vec(sc), to_vec(g), tau)));
    }

    // Detachment: the consistency loss alone puts no gradient on ranker weights.
    const auto cfg = micro_model_config();
    bool detached = true;
    std::size_t ranker_params = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        model::OneRankerModel<double> net(cfg, seed);
        const auto inst = random_instance(cfg, 6, 5, seed);
        auto fwd = net.forward(inst, {}, 0, false);
        tensor::reverse_accumulate(model::dc_loss(fwd.rank_scores, fwd.gen_logits, 2.0));
        for (const auto& [name, p] : net.store().entries()) {
            if (name.rfind("ranker.", 0) != 0) continue;
            ++ranker_params;
            for (double v : p.grad()) detached &= v == 0.0;
        }
    }
    std::ostringstream os;
    os << trials << " instances each: max |err| mtp=" << mtp_err << " bpr=" << bpr_err << " dc=" << dc_err
       << "; ranker grads under dc " << (detached ? "all zero" : "NONZERO");
    const bool pass = mtp_err <= 1e-9 && bpr_err <= 1e-9 && dc_err <= 1e-9 && detached && ranker_params > 0;
    return {pass, os.str()};
}

// ---------------------------------------------------------------- 4

Verdict metric_oracles() {
    std::mt19937_64 rng(404);
    std::size_t mismatches = 0;
    const int sets = 1000;
    for (int t = 0; t < sets; ++t) {
        const std::size_t n = 5 + rng() % 40;
        std::vector<double> scores(n), gains(n);
        for (auto& s : scores) s = (t % 2) ? static_cast<double>(rng() % 6) : std::normal_distribution<double>()(rng);
        for (auto& g : gains) g = static_cast<double>(rng() % 5) * 0.5;
        std::vector<std::uint32_t> ids(n);
        std::iota(ids.begin(), ids.end(), 0u);
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t pos = rng() % n;
        gains[pos] = 3.0;
        const auto order = rank_order(scores, ids);
        for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{5}, n}) {
            if (hr_at_k(order, pos, k) != oracle::hr(scores, ids, pos, k)) ++mismatches;
            if (ndcg_at_k(order, gains, k) != oracle::ndcg(scores, ids, gains, k)) ++mismatches;
        }
    }
    double hits = 0.0;
    const int draws = 20000;
    for (int t = 0; t < draws; ++t) {
        std::vector<double> scores(30);
        for (auto& s : scores) s = std::uniform_real_distribution<double>()(rng);
        std::vector<std::uint32_t> ids(30);
        std::iota(ids.begin(), ids.end(), 0u);
        hits += hr_at_k(rank_order(scores, ids), rng() % 30, 5);
    }
    const double hr5 = hits / draws;
    std::ostringstream os;
    os << sets << " sets, " << mismatches << " mismatches; random HR@5 (n=30, " << draws << " draws) = " << hr5;
    return {mismatches == 0 && std::abs(hr5 - 1.0 / 6.0) <= 0.02, os.str()};
}

// ---------------------------------------------------------------- 5 and 6

struct Benchmark {
    std::map<std::string, std::vector<double>> hr5;
    std::map<std::string, std::vector<double>> top1;
    std::map<std::string, std::vector<double>> median_dev;
    bool files = true;
    double seconds = 0.0;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

Benchmark run_benchmark(std::size_t seeds, const fs::path& root) {
    Benchmark b;
    const auto t0 = Clock::now();
    const std::vector<std::string> variants{"full", "wo_dc_loss", "s2", "s2_wo_target"};
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
        RunConfig base;
        base.seed = seed;
        const auto ds = data::generate_synthetic_dataset(base.data, seed);
        for (const auto& v : variants) {
            RunConfig cfg = base;
            cfg.variant = v;
            const auto dir = root / ("seed" + std::to_string(seed)) / v;
            const auto res = run_experiment(cfg, ds, dir);
            b.hr5[v].push_back(metric_value(res.test_rows, "hr", 5));
            if (res.consistency) {
                b.top1[v].push_back(res.consistency->overlap[0]);
                b.median_dev[v].push_back(box_stats(res.consistency->all_deviations).median);
                for (const char* f : {kConsistencyFile, kBoxplotFile, kOverlapFile}) b.files &= fs::exists(dir / f);
            }
            std::fprintf(stderr, "  seed %llu %-13s hr@5=%.4f (%.0fs)\n", static_cast<unsigned long long>(seed),
                         v.c_str(), b.hr5[v].back(), seconds_since(t0));
        }
    }
    b.seconds = seconds_since(t0);
    return b;
}

Verdict table2(const Benchmark& b) {
    const double full = mean(b.hr5.at("full")), wo = mean(b.hr5.at("wo_dc_loss"));
    const double s2 = mean(b.hr5.at("s2")), s2t = mean(b.hr5.at("s2_wo_target"));
    std::ostringstream os;
    os << "mean HR@5 over " << b.hr5.at("full").size() << " seeds: full=" << full << " wo_dc_loss=" << wo
       << " s2=" << s2 << " s2_wo_target=" << s2t << "; " << b.seconds << "s";
    return {full >= wo && full > s2 && s2 > s2t && b.seconds <= 1800.0, os.str()};
}

Verdict dc_consistency(const Benchmark& b) {
    const double o_dc = mean(b.top1.at("full")), o_wo = mean(b.top1.at("wo_dc_loss"));
    const double d_dc = mean(b.median_dev.at("full")), d_wo = mean(b.median_dev.at("wo_dc_loss"));
    std::ostringstream os;
    os << "top-1 overlap " << o_dc << " (dc) vs " << o_wo << " (no dc); median |rank dev| " << d_dc << " vs " << d_wo
       << "; files " << (b.files ? "written" : "MISSING");
    return {o_dc >= o_wo && d_dc <= d_wo && b.files, os.str()};
}

// ---------------------------------------------------------------- 7

Verdict determinism(const fs::path& root) {
    RunConfig cfg;
    cfg.data.num_items = 400;
    cfg.data.num_records = 300;
    cfg.data.history_length = 16;
    cfg.model.max_len = 64;
    cfg.train.epochs = 2;
    std::vector<std::string> first, second;
    std::vector<std::string> names;
    for (int rep = 0; rep < 2; ++rep) {
        const auto dir = root / ("rep" + std::to_string(rep));
        fs::remove_all(dir);
        data::generate_synthetic_dataset(cfg.data, cfg.seed, dir / "data");
        const auto ds = data::load_dataset_dir(dir / "data");
        auto& out = rep == 0 ? first : second;
        for (const std::string v : {"full", "s2"}) {
            cfg.variant = v;
            const auto run = dir / v;
            const auto res = run_experiment(cfg, ds, run);
            data::write_text(run / kEvalFile,
                             metrics_csv(evaluate_checkpoint(run / kCheckpointFile, res.config, ds, "valid")));
            for (const char* f : {kMetricsFile, kEvalFile, kConsistencyFile, kBoxplotFile, kCheckpointFile}) {
                if (!fs::exists(run / f)) continue;
                out.push_back(data::read_text(run / f));
                if (rep == 0) names.push_back(v + "/" + f);
            }
        }
        for (const auto& entry : fs::directory_iterator(dir / "data")) {
            out.push_back(data::read_text(entry.path()));
            if (rep == 0) names.push_back("data/" + entry.path().filename().string());
        }
    }
    std::vector<std::string> differ;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i >= second.size() || first[i] != second[i]) differ.push_back(names[i]);
    }
    std::ostringstream os;
    os << names.size() << " artifacts compared across two identical runs";
    for (const auto& d : differ) os << ", differs: " << d;
    return {differ.empty() && first.size() == second.size(), os.str()};
}

// ---------------------------------------------------------------- 8

Verdict score_identity() {
    std::mt19937_64 rng(808);
    double worst = 0.0;
    const int pairs = 10000;
    for (int t = 0; t < pairs; ++t) {
        const std::size_t d = 1 + rng() % 64, k = 1 + rng() % 16;
        const auto e = random_matrix(rng, 1, d), item = random_matrix(rng, 1, d);
        const auto s = random_matrix(rng, 1, k), centers = random_matrix(rng, k, d);
        const auto user = model::user_representation(e, s);
        const auto enhanced = model::enhance_item(item, centers);
        const double got = model::score_user_item(user, enhanced).item();
        double want = oracle::dot(to_vec(e), to_vec(item));
        for (std::size_t j = 0; j < k; ++j) want += s.values()[j] * enhanced.at(0, d + j);
        worst = std::max(worst, std::abs(got - want));
    }
    std::ostringstream os;
    os << pairs << " pairs, max |err| = " << worst;
    return {worst <= 1e-12, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::size_t seeds = 5;
    std::string out = "acceptance_runs";
    std::vector<int> only;
    app.add_option("--seeds", seeds, "Benchmark seeds for criteria 5 and 6")->check(CLI::Range(5, 100));
    app.add_option("--out", out, "Directory for benchmark artifacts");
    app.add_option("--only", only, "Criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
    const fs::path root = out;
    bool all = true;
    const auto report = [&](int id, const char* name, const Verdict& v) {
        std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
        std::fflush(stdout);
        all &= v.pass;
    };
    const auto guarded = [&](int id, const char* name, auto&& fn) {
        if (!wanted(id)) return;
        try {
            report(id, name, fn());
        } catch (const std::exception& e) {
            report(id, name, Verdict{false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, "gradient integrity", gradients);
    guarded(2, "mask information flow", invariances);
    guarded(3, "loss oracles", loss_oracles);
    guarded(4, "metric oracles", metric_oracles);
    if (wanted(5) || wanted(6)) {
        try {
            const auto bench = run_benchmark(seeds, root / "benchmark");
            if (wanted(5)) report(5, "ablation ordering", table2(bench));
            if (wanted(6)) report(6, "consistency under DC", dc_consistency(bench));
        } catch (const std::exception& e) {
            for (int c : {5, 6}) {
                if (wanted(c)) report(c, "benchmark", Verdict{false, std::string("exception: ") + e.what()});
            }
        }
    }
    guarded(7, "determinism", [&] { return determinism(root / "determinism"); });
    guarded(8, "score identity", score_identity);
    return all ? 0 : 1;
}
