#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "oneranker/data/io.hpp"
#include "oneranker/data/kmeans.hpp"
#include "oneranker/data/semantic_id.hpp"
#include "oneranker/data/synth.hpp"

using namespace oneranker::data;
namespace fs = std::filesystem;

namespace {

Matrix mixture(std::size_t clusters, std::size_t per, double spread, std::uint64_t seed,
               std::vector<std::size_t>* labels = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(clusters * per, 2);
    for (std::size_t c = 0; c < clusters; ++c) {
        const double cx = 10.0 * std::cos(2.0 * M_PI * c / clusters), cy = 10.0 * std::sin(2.0 * M_PI * c / clusters);
        for (std::size_t i = 0; i < per; ++i) {
            auto r = m.row(c * per + i);
            r[0] = cx + spread * n(rng);
            r[1] = cy + spread * n(rng);
            if (labels) labels->push_back(c);
        }
    }
    return m;
}

// Plain Lloyd from k distinct uniformly chosen points; the restart baseline.
double random_init_lloyd(const Matrix& pts, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(pts.rows);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<double>> c(k);
    for (std::size_t j = 0; j < k; ++j) c[j].assign(pts.row(idx[j]).begin(), pts.row(idx[j]).end());
    std::vector<std::size_t> a(pts.rows, 0);
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < pts.rows; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                double d = 0;
                for (std::size_t x = 0; x < pts.cols; ++x) d += (pts.row(i)[x] - c[j][x]) * (pts.row(i)[x] - c[j][x]);
                if (d < best) best = d, a[i] = j;
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<double> s(pts.cols, 0.0);
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < pts.rows; ++i) {
                if (a[i] != j) continue;
                ++cnt;
                for (std::size_t x = 0; x < pts.cols; ++x) s[x] += pts.row(i)[x];
            }
            if (cnt) {
                for (std::size_t x = 0; x < pts.cols; ++x) c[j][x] = s[x] / cnt;
            }
        }
    }
    double total = 0;
    for (std::size_t i = 0; i < pts.rows; ++i) {
        for (std::size_t x = 0; x < pts.cols; ++x) total += std::pow(pts.row(i)[x] - c[a[i]][x], 2);
    }
    return total;
}

DataConfig small_config() {
    DataConfig c;
    c.num_items = 300;
    c.num_clusters = 8;
    c.num_records = 200;
    c.history_length = 24;
    c.sid_branch = 8;
    c.high_value_clusters = 2;
    return c;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("oneranker_test_data_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("kmeans separates two obvious groups") {
    Matrix pts(4, 2, {0, 0, 0, 1, 10, 0, 10, 1});
    auto r = kmeans(pts, 2, 50, 7);
    std::vector<std::pair<double, double>> centers;
    for (std::size_t c = 0; c < 2; ++c) centers.emplace_back(r.centers.row(c)[0], r.centers.row(c)[1]);
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0].first == doctest::Approx(0.0));
    CHECK(centers[0].second == doctest::Approx(0.5));
    CHECK(centers[1].first == doctest::Approx(10.0));
    CHECK(centers[1].second == doctest::Approx(0.5));
    CHECK(r.assignments[0] == r.assignments[1]);
    CHECK(r.assignments[2] == r.assignments[3]);
    CHECK(r.assignments[0] != r.assignments[2]);
}

TEST_CASE("kmeans with k equal to the point count reproduces the points") {
    Matrix pts(5, 2, {1, 2, -3, 4, 5, 5, 0, 0, 9, -1});
    auto r = kmeans(pts, 5, 50, 3);
    CHECK(r.inertia == 0.0);
    std::set<std::vector<double>> a, b;
    for (std::size_t i = 0; i < 5; ++i) {
        a.insert({pts.row(i).begin(), pts.row(i).end()});
        b.insert({r.centers.row(i).begin(), r.centers.row(i).end()});
    }
    CHECK(a == b);
}

TEST_CASE("kmeans errors and degenerate input") {
    Matrix pts(3, 2, {1, 1, 1, 1, 1, 1});
    CHECK_THROWS_AS(kmeans(pts, 4, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(pts, 0, 10, 0), std::invalid_argument);
    auto r = kmeans(pts, 2, 10, 0);
    CHECK(r.degenerate);
    CHECK(r.centers.rows == 2);
    CHECK(r.centers.row(1)[0] == 1.0);
    CHECK_FALSE(kmeans(pts, 1, 10, 0).degenerate);
}

TEST_CASE("kmeans matches or beats random-restart Lloyd on a 3-cluster mixture") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Matrix pts = mixture(3, 40, 1.0, 100 + seed);
        double baseline = std::numeric_limits<double>::infinity();
        for (std::uint64_t r = 0; r < 20; ++r) baseline = std::min(baseline, random_init_lloyd(pts, 3, r * 31 + seed));
        auto km = kmeans(pts, 3, 100, seed);
        CHECK(km.inertia <= baseline * (1.0 + 1e-9));
    }
}

TEST_CASE("kmeans inertia is non-increasing and every center owns a point") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Matrix pts = mixture(5, 30, 4.0, seed);
        auto km = kmeans(pts, 7, 100, seed);
        for (std::size_t i = 1; i < km.inertia_history.size(); ++i) {
            CHECK(km.inertia_history[i] <= km.inertia_history[i - 1] + 1e-9);
        }
        std::vector<std::size_t> counts(7, 0);
        for (auto a : km.assignments) ++counts[a];
        for (auto c : counts) CHECK(c >= 1);
        CHECK(km.inertia == doctest::Approx(inertia(pts, km.centers, km.assignments)));
    }
}

TEST_CASE("semantic ids: one level with branch equal to item count gives unique ids") {
    Matrix pts = mixture(3, 4, 2.0, 5);
    SemanticIdOptions opt;
    opt.levels = 1;
    opt.branch = pts.rows;
    auto t = build_semantic_ids(pts, opt);
    std::set<SemanticId> seen(t.paths.begin(), t.paths.end());
    CHECK(seen.size() == pts.rows);
    CHECK(t.max_collisions == 1);
    for (const auto& p : t.paths) CHECK(t.valid(p));
}

TEST_CASE("semantic ids: identical embeddings share a prefix and get distinct tie-break codes") {
    Matrix pts(6, 2, {0, 0, 0, 0, 5, 5, 5, 6, -5, 5, -5, 6});
    SemanticIdOptions opt;
    opt.levels = 2;
    opt.branch = 2;
    auto t = build_semantic_ids(pts, opt);
    CHECK(t.paths[0].path[0] == t.paths[1].path[0]);
    CHECK(t.paths[0] != t.paths[1]);
    std::set<SemanticId> seen(t.paths.begin(), t.paths.end());
    CHECK(seen.size() == 6);
    for (const auto& p : t.paths) CHECK(t.valid(p));
}

TEST_CASE("semantic ids: level-1 purity on a planted mixture") {
    std::vector<std::size_t> labels;
    Matrix pts = mixture(4, 50, 1.0, 11, &labels);
    SemanticIdOptions opt;
    opt.levels = 2;
    opt.branch = 4;
    auto t = build_semantic_ids(pts, opt);
    std::map<std::uint32_t, std::map<std::size_t, std::size_t>> table;
    for (std::size_t i = 0; i < pts.rows; ++i) ++table[t.paths[i].path[0]][labels[i]];
    std::size_t majority = 0;
    for (auto& [code, counts] : table) {
        std::size_t best = 0;
        for (auto& [label, n] : counts) best = std::max(best, n);
        majority += best;
    }
    CHECK(static_cast<double>(majority) / pts.rows > 0.9);
    std::set<SemanticId> seen(t.paths.begin(), t.paths.end());
    CHECK(seen.size() == pts.rows);
}

TEST_CASE("semantic ids: errors") {
    Matrix pts = mixture(2, 10, 1.0, 1);
    SemanticIdOptions opt;
    opt.levels = 0;
    CHECK_THROWS_AS(build_semantic_ids(pts, opt), std::invalid_argument);
    opt.levels = 2;
    opt.branch = 1;
    CHECK_THROWS_AS(build_semantic_ids(pts, opt), std::invalid_argument);
    opt.branch = 4;
    opt.dedup = false;
    CHECK_THROWS_AS(build_semantic_ids(pts, opt), std::invalid_argument);  // 16 < 20
    opt.branch = 5;
    CHECK_NOTHROW(build_semantic_ids(pts, opt));
}

TEST_CASE("sample_value_target") {
    const std::vector<double> one{2.5};
    for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_value_target(one, s) == 0);

    const std::vector<double> equal{1, 1, 1, 1};
    std::vector<int> hist(4, 0);
    for (std::uint64_t s = 0; s < 40000; ++s) ++hist[sample_value_target(equal, s)];
    for (int h : hist) CHECK(std::abs(h / 40000.0 - 0.25) < 0.01);

    const std::vector<double> vals{1, 3};
    int second = 0;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100000; ++i) second += sample_value_target_u(vals, u(rng)) == 1;
    CHECK(std::abs(second / 100000.0 - 0.75) < 0.01);

    const std::vector<double> zero{0, 0};
    CHECK_THROWS_AS(sample_value_target(zero, 1), std::invalid_argument);
    const std::vector<double> neg{1, -1};
    CHECK_THROWS_AS(sample_value_target(neg, 1), std::invalid_argument);
    const std::vector<double> skip{0, 5, 0};
    for (std::uint64_t s = 0; s < 50; ++s) CHECK(sample_value_target(skip, s) == 1);
}

TEST_CASE("synthetic dataset structure") {
    const auto cfg = small_config();
    const auto ds = generate_synthetic_dataset(cfg, 42);
    CHECK(ds.records.size() == cfg.num_records);
    CHECK(ds.manifest.record_count == cfg.num_records);
    CHECK(ds.train.size() + ds.valid.size() + ds.test.size() == cfg.num_records);
    CHECK(ds.valid.size() > 0);
    CHECK(ds.test.size() > 0);

    std::set<SemanticId> sids;
    for (const auto& it : ds.items) sids.insert(it.sid);
    CHECK(sids.size() == ds.items.size());

    for (const auto& rec : ds.records) {
        CHECK(rec.events.size() == cfg.history_length);
        for (const auto& e : rec.events) {
            if (e.conversion) CHECK(e.click);
            if (e.click) CHECK(e.impression);
            CHECK(e.ecpm >= 0.0);
            CHECK(e.content_tokens.size() == (e.click ? 1u : 0u));
        }
    }
    for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
        for (const auto& inst : *split) {
            REQUIRE(inst.candidates.size() == cfg.num_candidates);
            std::size_t hits = 0;
            std::set<std::uint32_t> ids;
            for (const auto& c : inst.candidates) {
                hits += c.item == inst.target.item;
                ids.insert(c.item);
                CHECK(c.ecpm >= 0.0);
                CHECK(c.sid == ds.items[c.item].sid);
            }
            CHECK(hits == 1);
            CHECK(ids.size() == cfg.num_candidates);
            CHECK(inst.candidates[inst.positive_index()].item == inst.target.item);
            for (std::size_t l = 0; l < inst.target.sid.path.size(); ++l) {
                CHECK(inst.target.sid.path[l] < ds.manifest.level_vocab[l]);
            }
        }
    }
}

TEST_CASE("synthetic dataset: high-value clusters exceed the rest by the configured margin") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto ds = generate_synthetic_dataset(small_config(), seed);
        double hi = 0, lo = 0;
        std::size_t nh = 0, nl = 0;
        for (const auto& it : ds.items) {
            (it.high_value ? hi : lo) += it.ecpm;
            ++(it.high_value ? nh : nl);
        }
        const double ratio = (hi / nh) / (lo / nl);
        CHECK(std::abs(ratio / small_config().value_multiplier - 1.0) <= 0.05);
    }
}

TEST_CASE("synthetic dataset: thread count does not change the output") {
    auto cfg = small_config();
    const auto a = generate_synthetic_dataset(cfg, 9);
    cfg.threads = 3;
    const auto b = generate_synthetic_dataset(cfg, 9);
    CHECK(a.train == b.train);
    CHECK(a.records == b.records);
    CHECK(a.manifest == b.manifest);
}

TEST_CASE("synthetic dataset files are byte-deterministic and round-trip") {
    const auto cfg = small_config();
    const auto d1 = temp_dir("a"), d2 = temp_dir("b");
    const auto m1 = generate_synthetic_dataset(cfg, 5, d1);
    const auto m2 = generate_synthetic_dataset(cfg, 5, d2);
    CHECK(m1 == m2);
    for (const char* f : {"items.jsonl", "interactions.jsonl", "train.jsonl", "valid.jsonl", "test.jsonl", "manifest.json"}) {
        CHECK_MESSAGE(read_text(d1 / f) == read_text(d2 / f), f);
    }
    const auto mem = generate_synthetic_dataset(cfg, 5);
    const auto disk = load_dataset_dir(d1);
    CHECK(disk.manifest == mem.manifest);
    CHECK(disk.items == mem.items);
    CHECK(disk.records == mem.records);
    CHECK(disk.train == mem.train);
    CHECK(disk.valid == mem.valid);
    CHECK(disk.test == mem.test);
    CHECK(m1.fingerprint == data_fingerprint(cfg, 5));
    CHECK(m1.fingerprint != data_fingerprint(cfg, 6));

    const auto other = generate_synthetic_dataset(cfg, 6);
    CHECK_FALSE(other.train == mem.train);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("load_dataset reports the line number of a malformed record") {
    const auto dir = temp_dir("bad");
    fs::create_directories(dir);
    const auto ds = generate_synthetic_dataset(small_config(), 1);
    std::string text = to_jsonl_line(to_json(ds.train[0])) + to_jsonl_line(to_json(ds.train[1])) + "{\"user_tokens\": [1]}\n";
    write_text(dir / "x.jsonl", text);
    try {
        load_dataset(dir / "x.jsonl");
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("x.jsonl:3") != std::string::npos);
    }
    write_text(dir / "y.jsonl", "not json\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir / "y.jsonl"), doctest::Contains("y.jsonl:1"), std::runtime_error);
    CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("batching") {
    const auto b = batch(103, 10, 7, 0);
    REQUIRE(b.size() == 11);
    for (std::size_t i = 0; i + 1 < b.size(); ++i) CHECK(b[i].size() == 10);
    CHECK(b.back().size() == 3);
    std::vector<std::size_t> all;
    for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

    CHECK(batch(103, 10, 7, 0) == b);
    CHECK(batch(103, 10, 7, 1) != b);
    CHECK(batch(103, 10, 8, 0) != b);
    CHECK(batch(0, 4, 1, 0).empty());
    CHECK_THROWS_AS(batch(5, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("data config json round-trip and unknown keys") {
    auto cfg = small_config();
    cfg.noise_rate = 0.25;
    CHECK(data_config_from_json(nlohmann::json::parse(to_json(cfg).dump())) == cfg);
    CHECK_THROWS_WITH_AS(data_config_from_json(nlohmann::json{{"num_itemz", 3}}), doctest::Contains("num_itemz"),
                         std::invalid_argument);
}

TEST_CASE("token stream layout and truncation") {
    TrainingInstance inst;
    inst.user_tokens = {3, 40};
    inst.context_tokens = {5};
    for (std::uint32_t i = 0; i < 10; ++i) {
        HistoryEvent h;
        h.item = i;
        h.click = i % 3 == 0;
        h.conversion = i == 9;
        inst.history.push_back(h);
    }
    const auto full = to_token_stream(inst, 100);
    CHECK(full.size() == 3 + 10 + 4);
    CHECK(full[0] == Token{TokenType::User, 3});
    CHECK(full[2] == Token{TokenType::Context, 5});
    CHECK(full[3] == Token{TokenType::Item, 0});
    CHECK(full[4] == Token{TokenType::Content, kContentClick});
    CHECK(full.back() == Token{TokenType::Content, kContentConversion});

    const auto cut = to_token_stream(inst, 8);
    CHECK(cut.size() <= 8);
    // Newest events survive: items 7, 8, 9 (9 carries a content token).
    CHECK(cut[3] == Token{TokenType::Item, 7});
    CHECK(cut[cut.size() - 2] == Token{TokenType::Item, 9});
    CHECK_THROWS_AS(to_token_stream(inst, 2), std::invalid_argument);
}
