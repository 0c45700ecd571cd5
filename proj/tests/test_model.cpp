#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "oneranker/model/backbone.hpp"
#include "oneranker/model/losses.hpp"
#include "oneranker/model/oneranker.hpp"
#include "oneranker/model/ranker.hpp"
#include "oneranker/model/taskaware.hpp"
#include "oracles.hpp"

using namespace oneranker;
using namespace oneranker::model;
using tensor::NoGradGuard;
using T64 = Tensor<double>;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.ffn_dim = 16;
    c.backbone_layers = 2;
    c.hetero_layers = 1;
    c.interest_tokens = 3;
    c.value_tokens = 2;
    c.fake_items = 4;
    c.target_hidden = 8;
    c.max_len = 32;
    c.user_vocab = 10;
    c.context_vocab = 4;
    c.item_count = 20;
    c.level_vocab = {4, 4};
    return c;
}

T64 random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, bool grad = false) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(r * c);
    for (auto& x : v) x = dist(rng);
    return T64::from({r, c}, std::move(v), grad);
}

data::TokenStream random_stream(std::mt19937_64& rng, const ModelConfig& c, std::size_t len) {
    data::TokenStream s;
    for (std::size_t i = 0; i < len; ++i) {
        const auto kind = rng() % 4;
        if (kind == 0) s.push_back({data::TokenType::User, static_cast<std::uint32_t>(rng() % c.user_vocab)});
        if (kind == 1) s.push_back({data::TokenType::Content, static_cast<std::uint32_t>(rng() % data::kContentVocab)});
        if (kind == 2) s.push_back({data::TokenType::Context, static_cast<std::uint32_t>(rng() % c.context_vocab)});
        if (kind == 3) s.push_back({data::TokenType::Item, static_cast<std::uint32_t>(rng() % c.item_count)});
    }
    return s;
}

bool rows_equal(const T64& a, std::size_t ra, const T64& b, std::size_t rb) {
    for (std::size_t x = 0; x < a.cols(); ++x) {
        if (a.at(ra, x) != b.at(rb, x)) return false;
    }
    return true;
}

oracle::Mat to_mat(const T64& t) {
    oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    }
    return m;
}

oracle::Vec to_vec(const T64& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

// ---------------------------------------------------------------- backbone

TEST_CASE("causal mask examples") {
    CHECK(causal_mask(1).to_strings() == std::vector<std::string>{"1"});
    CHECK(causal_mask(3).to_strings() == std::vector<std::string>{"100", "110", "111"});
    for (std::size_t n = 1; n < 20; ++n) CHECK(causal_mask(n).allowed_count() == n * (n + 1) / 2);
    CHECK(padded_causal_mask(4, 2).to_strings() == std::vector<std::string>{"1000", "0100", "0010", "0011"});
}

TEST_CASE("backbone is strictly causal under token perturbation") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> store(3);
    Backbone<double> bb(store, cfg);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t len = 2 + rng() % 20;
        auto s = random_stream(rng, cfg, len);
        const auto h = bb.encode_stream(s);
        const std::size_t p = rng() % len;
        auto t = s;
        t[p] = {data::TokenType::Item, static_cast<std::uint32_t>((s[p].id + 1) % cfg.item_count)};
        const auto h2 = bb.encode_stream(t);
        for (std::size_t q = 0; q < p; ++q) CHECK(rows_equal(h, q, h2, q));
        CHECK_FALSE(rows_equal(h, p, h2, p));
    }
}

TEST_CASE("left padding leaves real positions unchanged") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> store(4);
    Backbone<double> bb(store, cfg);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 1 + rng() % 12, pad = rng() % 6;
        const auto s = random_stream(rng, cfg, len);
        data::TokenStream padded(pad, data::Token{data::TokenType::Pad, 0});
        padded.insert(padded.end(), s.begin(), s.end());
        const auto a = bb.encode_stream(s);
        const auto b = bb.encode_stream(padded);
        for (std::size_t q = 0; q < len; ++q) CHECK(rows_equal(a, q, b, pad + q));
    }
}

TEST_CASE("backbone output shape and errors") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> store(5);
    Backbone<double> bb(store, cfg);
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        const std::size_t len = 1 + rng() % cfg.max_len;
        const auto h = bb.encode_stream(random_stream(rng, cfg, len));
        CHECK(h.rows() == len);
        CHECK(h.cols() == cfg.d);
    }
    CHECK_THROWS(bb.encode_stream({{data::TokenType::Item, static_cast<std::uint32_t>(cfg.item_count)}}));
    CHECK_THROWS(bb.encode_stream({{data::TokenType::User, static_cast<std::uint32_t>(cfg.user_vocab)}}));
    CHECK_THROWS(bb.encode_stream(random_stream(rng, cfg, cfg.max_len + 1)));
    CHECK_THROWS(bb.encode_stream({{data::TokenType::Item, 1}, {data::TokenType::Pad, 0}}));
}

TEST_CASE("backbone forward is deterministic") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> s1(9), s2(9);
    Backbone<double> a(s1, cfg), b(s2, cfg);
    std::mt19937_64 rng(14);
    const auto stream = random_stream(rng, cfg, 15);
    const auto x = a.encode_stream(stream), y = b.encode_stream(stream);
    CHECK(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
}

// ---------------------------------------------------------------- taskaware

TEST_CASE("heterogeneous mask examples") {
    CHECK(build_hetero_mask(2, 2).to_strings() == std::vector<std::string>{"1011", "1111", "1110", "1101"});
    CHECK(build_hetero_mask(3, 0) == causal_mask(3));
    for (std::size_t m = 1; m < 6; ++m) {
        for (std::size_t k = 1; k < 6; ++k) {
            const auto mask = build_hetero_mask(m, k);
            for (std::size_t j = 0; j < k; ++j) CHECK(mask.allowed_keys(m + j).size() == m + 1);
        }
    }
}

TEST_CASE("single hetero layer: fakes are mutually invisible and tasks are causal") {
    NoGradGuard guard;
    auto cfg = small_config();
    cfg.hetero_layers = 1;
    std::mt19937_64 rng(21);
    for (bool cross_first : {true, false}) {
        cfg.cross_attention_first = cross_first;
        ParameterStore<double> store(rng());
        HeteroDecoder<double> dec(store, cfg);
        const std::size_t m = cfg.task_count(), k = cfg.fake_items;
        for (int trial = 0; trial < 100; ++trial) {
            const auto h1 = random_matrix(rng, 7, cfg.d);
            const auto tasks = random_matrix(rng, m, cfg.d);
            const auto fakes = random_matrix(rng, k, cfg.d);
            const auto base = dec(tasks, fakes, h1);
            CHECK(base.task_reps.rows() == m);
            CHECK(base.fake_reps.rows() == k);

            const std::size_t jf = rng() % k;
            auto f2 = fakes.clone();
            for (std::size_t x = 0; x < cfg.d; ++x) f2.mutable_values()[jf * cfg.d + x] += 1.0;
            const auto pf = dec(tasks, f2, h1);
            for (std::size_t j = 0; j < k; ++j) {
                if (j != jf) CHECK(rows_equal(base.fake_reps, j, pf.fake_reps, j));
            }
            CHECK_FALSE(rows_equal(base.fake_reps, jf, pf.fake_reps, jf));

            const std::size_t jt = rng() % m;
            auto t2 = tasks.clone();
            for (std::size_t x = 0; x < cfg.d; ++x) t2.mutable_values()[jt * cfg.d + x] -= 0.5;
            const auto pt = dec(t2, fakes, h1);
            for (std::size_t i = 0; i < jt; ++i) CHECK(rows_equal(base.task_reps, i, pt.task_reps, i));
        }
    }
}

TEST_CASE("without the heterogeneous mask fakes see each other") {
    NoGradGuard guard;
    auto cfg = small_config();
    cfg.hetero_mask = false;
    std::mt19937_64 rng(22);
    ParameterStore<double> store(1);
    HeteroDecoder<double> dec(store, cfg);
    const auto h1 = random_matrix(rng, 5, cfg.d);
    const auto tasks = random_matrix(rng, cfg.task_count(), cfg.d);
    const auto fakes = random_matrix(rng, cfg.fake_items, cfg.d);
    auto f2 = fakes.clone();
    f2.mutable_values()[0] += 1.0;
    CHECK_FALSE(rows_equal(dec(tasks, fakes, h1).fake_reps, 1, dec(tasks, f2, h1).fake_reps, 1));
}

TEST_CASE("target channel sums a shared MLP over fakes") {
    std::mt19937_64 rng(31);
    const std::size_t d = 3, hidden = 5, k = 4;
    ParameterStore<double> store(2);
    TargetChannel<double> tc(store, "t", d, hidden, k);
    for (auto* b : {&tc.task_in.bias, &tc.out.bias}) {
        for (auto& v : b->mutable_values()) v = std::normal_distribution<double>(0, 1)(rng);
    }
    const auto tasks = random_matrix(rng, 2, d);
    const auto fakes = random_matrix(rng, k, d);
    const auto s = tc(tasks, fakes);
    REQUIRE(s.rows() == 2);
    REQUIRE(s.cols() == k);

    // Oracle: W1 split into fake rows [0, d) and task rows [d, 2d) of concat(f_j, t_i).
    const auto wf = to_mat(tc.fake_in.weight), wt = to_mat(tc.task_in.weight), wo = to_mat(tc.out.weight);
    const auto b1 = to_vec(tc.task_in.bias), b2 = to_vec(tc.out.bias);
    const auto T = to_mat(tasks), F = to_mat(fakes);
    for (std::size_t i = 0; i < 2; ++i) {
        oracle::Vec want(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t q = 0; q < k; ++q) {
                double o = b2[q];
                for (std::size_t u = 0; u < hidden; ++u) {
                    double z = b1[u];
                    for (std::size_t x = 0; x < d; ++x) z += F[j][x] * wf[x][u] + T[i][x] * wt[x][u];
                    o += z / (1.0 + std::exp(-z)) * wo[u][q];
                }
                want[q] += o;
            }
        }
        for (std::size_t q = 0; q < k; ++q) CHECK(s.at(i, q) == doctest::Approx(want[q]).epsilon(1e-12));
    }

    // Zero output weights: each entry is k times the output bias.
    for (auto& v : tc.out.weight.mutable_values()) v = 0.0;
    const auto z = tc(tasks, fakes);
    for (std::size_t q = 0; q < k; ++q) CHECK(z.at(0, q) == doctest::Approx(static_cast<double>(k) * b2[q]));
}

TEST_CASE("target channel is invariant to fake order") {
    std::mt19937_64 rng(32);
    ParameterStore<double> store(3);
    TargetChannel<double> tc(store, "t", 4, 6, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto tasks = random_matrix(rng, 3, 4);
        const auto fakes = random_matrix(rng, 5, 4);
        std::vector<std::size_t> perm(5);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto a = tc(tasks, fakes);
        const auto b = tc(tasks, tensor::gather_rows<double>(fakes, perm));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("dual-channel representation examples") {
    const auto e = T64::from({1, 2}, {1, 2});
    const auto s = T64::from({1, 1}, {3});
    const auto u = user_representation(e, s);
    CHECK(std::vector<double>(u.values().begin(), u.values().end()) == std::vector<double>{1, 2, 3});
    CHECK(tensor::slice_cols(u, 0, 2).values()[1] == 2.0);
    CHECK(tensor::slice_cols(u, 2, 3).item() == 3.0);
    CHECK(user_representation(e, T64{}).cols() == 2);

    const auto centers = T64::from({2, 2}, {1, 0, 0, 1});
    const auto self = enhance_item(T64::from({1, 2}, {1, 0}), centers);
    CHECK(self.at(0, 2) == 1.0);
    CHECK(self.at(0, 3) == 0.0);
    std::mt19937_64 rng(33);
    const auto item = random_matrix(rng, 3, 2);
    const auto c1 = enhance_item(item, centers), c5 = enhance_item(tensor::scale(item, 5.0), centers);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t j = 2; j < 4; ++j) {
            CHECK(c1.at(r, j) == doctest::Approx(c5.at(r, j)).epsilon(1e-14));
            CHECK(std::abs(c1.at(r, j)) <= 1.0 + 1e-6);
        }
    }
}

TEST_CASE("score_user_item examples") {
    const auto u = user_representation(T64::from({1, 2}, {1, 0}), T64::from({1, 2}, {0.2, 0.1}));
    const auto it = T64::from({1, 4}, {0.5, -0.5, 1, -1});
    CHECK(score_user_item(u, it).item() == doctest::Approx(0.6).epsilon(1e-15));
    const auto u0 = user_representation(T64::from({1, 2}, {1, 0}), T64::from({1, 2}, {0, 0}));
    CHECK(score_user_item(u0, it).item() == doctest::Approx(0.5));
    CHECK_THROWS(score_user_item(u, T64::from({1, 3}, {1, 2, 3})));
}

TEST_CASE("score_user_item equals the two-term decomposition") {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t d = 1 + rng() % 16, k = 1 + rng() % 8;
        const auto e = random_matrix(rng, 1, d), item = random_matrix(rng, 1, d);
        const auto s = random_matrix(rng, 1, k), centers = random_matrix(rng, k, d);
        const double got = score_user_item(user_representation(e, s), enhance_item(item, centers)).item();
        double want = oracle::dot(to_vec(e), to_vec(item));
        const auto sv = to_vec(s);
        const auto C = to_mat(centers);
        for (std::size_t j = 0; j < k; ++j) want += sv[j] * oracle::cosine(to_vec(item), C[j]);
        CHECK(std::abs(got - want) <= 1e-12);
    }
}

TEST_CASE("bag_value_heads examples") {
    const auto one = T64::from({1, 2}, {3, 4});
    CHECK(bag_value_heads(one).values()[1] == 4.0);
    const auto same = T64::from({2, 2}, {3, 4, 3, 4});
    CHECK(bag_value_heads(same).values()[0] == 3.0);
    const auto mix = bag_value_heads(T64::from({2, 2}, {0, 2, 2, 0}));
    CHECK(mix.values()[0] == 1.0);
    CHECK(mix.values()[1] == 1.0);
}

namespace {

GenerationInputs random_generation(std::mt19937_64& rng, std::size_t heads, std::vector<std::size_t> vocab,
                                   std::size_t d, std::size_t k) {
    std::normal_distribution<double> dist(0.0, 1.0);
    GenerationInputs in;
    in.d = d;
    in.k = k;
    in.level_vocab = vocab;
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> e(d), s(k);
        for (auto& x : e) x = dist(rng);
        for (auto& x : s) x = dist(rng);
        in.e_task.push_back(e);
        in.s_target.push_back(s);
    }
    for (auto v : vocab) {
        std::vector<double> book(v * d);
        for (auto& x : book) x = dist(rng);
        in.codebooks.push_back(book);
    }
    in.centers.resize(k * d);
    for (auto& x : in.centers) x = dist(rng);
    return in;
}

// Exhaustive log-probability of every two-level path under one head.
std::vector<std::pair<double, std::vector<std::uint32_t>>> enumerate_paths(const GenerationInputs& in, std::size_t h) {
    std::vector<std::pair<double, std::vector<std::uint32_t>>> out;
    const auto row = [&](std::size_t l, std::size_t c) {
        return oracle::Vec(in.codebooks[l].begin() + static_cast<std::ptrdiff_t>(c * in.d),
                           in.codebooks[l].begin() + static_cast<std::ptrdiff_t>((c + 1) * in.d));
    };
    const auto level = [&](std::size_t l, const oracle::Vec& cond) {
        oracle::Vec sc;
        for (std::size_t c = 0; c < in.level_vocab[l]; ++c) {
            double v = oracle::dot(cond, row(l, c));
            for (std::size_t j = 0; j < in.k; ++j) {
                v += in.s_target[h][j] *
                     oracle::cosine(row(l, c), oracle::Vec(in.centers.begin() + static_cast<std::ptrdiff_t>(j * in.d),
                                                           in.centers.begin() + static_cast<std::ptrdiff_t>((j + 1) * in.d)));
            }
            sc.push_back(v);
        }
        const double z = oracle::log_sum_exp(sc);
        for (auto& v : sc) v -= z;
        return sc;
    };
    const auto l0 = level(0, in.e_task[h]);
    for (std::uint32_t a = 0; a < in.level_vocab[0]; ++a) {
        auto cond = in.e_task[h];
        const auto ra = row(0, a);
        for (std::size_t x = 0; x < in.d; ++x) cond[x] += ra[x];
        const auto l1 = level(1, cond);
        for (std::uint32_t b = 0; b < in.level_vocab[1]; ++b) out.push_back({l0[a] + l1[b], {a, b}});
    }
    return out;
}

}  // namespace

TEST_CASE("mtp_generate: one level with beam 1 is the argmax code") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = random_generation(rng, 1, {7}, 4, 3);
        const auto lp = level_log_probs(in, 0, 0, in.e_task[0]);
        const auto best = static_cast<std::uint32_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
        const auto got = mtp_generate(in, 1, 1);
        REQUIRE(got.size() == 1);
        CHECK(got[0].sid.path == std::vector<std::uint32_t>{best});
    }
}

TEST_CASE("mtp_generate with a full beam equals exhaustive search") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t heads = 1 + rng() % 3;
        const auto in = random_generation(rng, heads, {4, 4}, 5, 2);
        std::map<std::vector<std::uint32_t>, double> best;
        for (std::size_t h = 0; h < heads; ++h) {
            for (const auto& [score, path] : enumerate_paths(in, h)) {
                auto [it, fresh] = best.emplace(path, score);
                if (!fresh) it->second = std::max(it->second, score);
            }
        }
        std::vector<std::pair<double, std::vector<std::uint32_t>>> ranked;
        for (const auto& [p, s] : best) ranked.push_back({s, p});
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        const std::size_t n = 6;
        const auto got = mtp_generate(in, 16, n);
        REQUIRE(got.size() == n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(got[i].sid.path == ranked[i].second);
            CHECK(got[i].score == doctest::Approx(ranked[i].first).epsilon(1e-12));
        }
    }
}

TEST_CASE("mtp_generate returns distinct paths and rejects impossible requests") {
    std::mt19937_64 rng(43);
    const auto in = random_generation(rng, 4, {3, 3}, 4, 2);
    const auto got = mtp_generate(in, 1, 9);
    std::set<std::vector<std::uint32_t>> seen;
    for (const auto& p : got) CHECK(seen.insert(p.sid.path).second);
    CHECK(got.size() == 9);
    CHECK_THROWS(mtp_generate(in, 2, 10));
}

// ---------------------------------------------------------------- ranker

TEST_CASE("rank mask examples") {
    CHECK(build_rank_mask(2).to_strings() == std::vector<std::string>{"100", "110", "101"});
    CHECK(build_rank_mask(1).to_strings() == std::vector<std::string>{"10", "11"});
    const auto m = build_rank_mask(30);
    for (std::size_t j = 1; j <= 30; ++j) CHECK(m.allowed_keys(j).size() == 2);
}

TEST_CASE("fuse_kv stacks rows") {
    std::mt19937_64 rng(51);
    const auto h1 = random_matrix(rng, 64, 4), t = random_matrix(rng, 8, 4), f = random_matrix(rng, 8, 4);
    const auto kv = fuse_kv(h1, t, f);
    CHECK(kv.rows() == 80);
    for (std::size_t r = 0; r < 64; ++r) CHECK(rows_equal(kv, r, h1, r));
    CHECK(rows_equal(kv, 64, t, 0));
    CHECK(rows_equal(kv, 79, f, 7));
    const auto only = fuse_kv(h1, T64{}, T64{});
    CHECK(std::equal(only.values().begin(), only.values().end(), h1.values().begin(), h1.values().end()));
    CHECK_THROWS(fuse_kv(h1, random_matrix(rng, 2, 3), T64{}));
}

TEST_CASE("ranker scores are independent and permutation-equivariant") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> store(52);
    RDecoder<double> rd(store, cfg);
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 10;
        const auto kv = random_matrix(rng, 9, cfg.d);
        const auto c = rd.candidate_tokens(random_matrix(rng, n, cfg.d), random_matrix(rng, n, cfg.fake_items));
        const auto s = rd(c, kv);
        REQUIRE(s.rows() == n);

        const std::size_t j = rng() % n;
        auto c2 = c.clone();
        for (std::size_t x = 0; x < cfg.d; ++x) c2.mutable_values()[j * cfg.d + x] *= -2.0;
        const auto s2 = rd(c2, kv);
        for (std::size_t i = 0; i < n; ++i) {
            if (i != j) CHECK(s.values()[i] == s2.values()[i]);
        }

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const auto sp = rd(tensor::gather_rows<double>(c, perm), kv);
        for (std::size_t i = 0; i < n; ++i) CHECK(sp.values()[i] == s.values()[perm[i]]);

        const std::vector<std::size_t> dup{j, j};
        const auto sd = rd(tensor::gather_rows<double>(c, dup), kv);
        CHECK(sd.values()[0] == sd.values()[1]);
    }
    CHECK_THROWS(rd(T64::zeros({0, cfg.d}), random_matrix(rng, 3, cfg.d)));
}

TEST_CASE("ranker scores depend on the Step-2 rows of the keys") {
    NoGradGuard guard;
    const auto cfg = small_config();
    ParameterStore<double> store(54);
    RDecoder<double> rd(store, cfg);
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        const auto h1 = random_matrix(rng, 6, cfg.d);
        const auto t = random_matrix(rng, cfg.task_count(), cfg.d), f = random_matrix(rng, cfg.fake_items, cfg.d);
        const auto c = rd.candidate_tokens(random_matrix(rng, 5, cfg.d), random_matrix(rng, 5, cfg.fake_items));
        const auto a = rd(c, fuse_kv(h1, t, f));
        const auto b = rd(c, fuse_kv(h1, T64::zeros(t.shape()), T64::zeros(f.shape())));
        bool differs = false;
        for (std::size_t i = 0; i < 5; ++i) differs |= a.values()[i] != b.values()[i];
        CHECK(differs);
    }
}

// ---------------------------------------------------------------- losses

TEST_CASE("mtp_loss examples") {
    std::vector<T64> one{T64::from({1, 2}, {0.3, -0.4})};
    CHECK(mtp_loss(T64::from({1, 2}, {1, 2}), T64{}, {{0}}, std::span<const T64>(one), {}).item() == 0.0);

    std::vector<T64> books{T64::from({2, 2}, {0, 0, 0, 0}), T64::from({2, 2}, {0, 0, 0, 0})};
    const auto l = mtp_loss(T64::from({1, 2}, {1, 2}), T64{}, {{1, 0}}, std::span<const T64>(books), {});
    CHECK(l.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
    CHECK(l.item() == doctest::Approx(1.386294).epsilon(1e-6));
    CHECK_THROWS(mtp_loss(T64::from({1, 2}, {1, 2}), T64{}, {{2, 0}}, std::span<const T64>(books), {}));
}

TEST_CASE("mtp_loss matches the log-sum-exp oracle") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t heads = 1 + rng() % 4, d = 1 + rng() % 6, k = rng() % 4, levels = 1 + rng() % 3;
        std::vector<T64> books, cosines;
        std::vector<oracle::Mat> obooks;
        const auto centers = random_matrix(rng, std::max<std::size_t>(k, 1), d);
        for (std::size_t l = 0; l < levels; ++l) {
            books.push_back(random_matrix(rng, 2 + rng() % 5, d));
            obooks.push_back(to_mat(books.back()));
            if (k) cosines.push_back(tensor::cosine_similarity(books.back(), centers));
        }
        std::vector<std::vector<std::uint32_t>> gt(heads);
        for (auto& p : gt) {
            for (std::size_t l = 0; l < levels; ++l) p.push_back(static_cast<std::uint32_t>(rng() % books[l].rows()));
        }
        const auto e = random_matrix(rng, heads, d);
        const auto s = k ? random_matrix(rng, heads, k) : T64{};
        const double got = mtp_loss(e, s, gt, std::span<const T64>(books), std::span<const T64>(cosines)).item();
        const double want = oracle::mtp(to_mat(e), k ? to_mat(s) : oracle::Mat{}, gt, obooks, k ? to_mat(centers) : oracle::Mat{});
        CHECK(std::abs(got - want) <= 1e-9);
    }
}

TEST_CASE("bpr_rank_loss examples and oracle") {
    const std::vector<double> y{2.0, 1.0};
    CHECK(bpr_rank_loss(T64::from({2, 1}, {0.7, 0.7}), y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(bpr_rank_loss(T64::from({2, 1}, {20.0, 0.0}), y).item() < 1e-8);

    const auto before = bpr_no_pair_count();
    const std::vector<double> flat{1.0, 1.0, 1.0};
    CHECK(bpr_rank_loss(T64::from({3, 1}, {1, 2, 3}), flat).item() == 0.0);
    CHECK(bpr_no_pair_count() == before + 1);
    CHECK_THROWS(bpr_rank_loss(T64::from({1, 1}, {1}), std::vector<double>{1.0}));

    std::mt19937_64 rng(62);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 10;
        std::vector<double> labels(n);
        for (auto& v : labels) v = std::round(u(rng) * 2.0) / 2.0;
        const auto s = random_matrix(rng, n, 1);
        const double got = bpr_rank_loss(s, labels).item();
        CHECK(std::abs(got - oracle::bpr(to_vec(s), labels)) <= 1e-9);
        // Shifting every score by a constant leaves all differences alone.
        const auto shifted = tensor::add(s, T64::from({n, 1}, std::vector<double>(n, 3.25)));
        CHECK(bpr_rank_loss(shifted, labels).item() == doctest::Approx(got).epsilon(1e-12));
    }
}

TEST_CASE("dc_loss examples and oracle") {
    const auto g4 = T64::from({1, 4}, {0, 0, 0, 0});
    CHECK(dc_loss(T64::from({4, 1}, {1, 1, 1, 1}), g4, 2.0).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    const auto l = dc_loss(T64::from({2, 1}, {std::log(3.0), 0.0}), T64::from({1, 2}, {0.0, 0.0}), 1.0);
    CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    // Very high temperature: the teacher is uniform and the loss is the mean of -log pi.
    std::mt19937_64 rng(63);
    const auto s = random_matrix(rng, 6, 1), g = random_matrix(rng, 1, 6);
    const auto gv = to_vec(g);
    const double z = oracle::log_sum_exp(gv);
    double mean_nll = 0.0;
    for (double v : gv) mean_nll -= (v - z) / 6.0;
    CHECK(std::abs(dc_loss(s, g, 1e6).item() - mean_nll) < 1e-6);

    CHECK_THROWS(dc_loss(T64::from({1, 1}, {1}), T64::from({1, 1}, {1}), 1.0));
    CHECK_THROWS(dc_loss(s, g, 0.0));

    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 30;
        const double tau = 0.1 + static_cast<double>(rng() % 50) / 10.0;
        const auto st = random_matrix(rng, n, 1), gt = random_matrix(rng, 1, n);
        CHECK(std::abs(dc_loss(st, gt, tau).item() - oracle::dc(to_vec(st), to_vec(gt), tau)) <= 1e-9);
    }
}

TEST_CASE("dc_loss gradient vanishes when the generator matches the teacher") {
    std::mt19937_64 rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng() % 10;
        const double tau = 0.5 + static_cast<double>(rng() % 4);
        auto s = random_matrix(rng, n, 1, true);
        // log pi = s / tau up to a constant, so pi = p_target.
        std::vector<double> gv(n);
        for (std::size_t i = 0; i < n; ++i) gv[i] = s.values()[i] / tau + 0.7;
        auto g = T64::from({1, n}, gv, true);
        tensor::reverse_accumulate(dc_loss(s, g, tau));
        for (double v : g.grad()) CHECK(std::abs(v) < 1e-12);
        for (double v : s.grad()) CHECK(v == 0.0);
    }
}

TEST_CASE("consistency loss leaves ranker parameters without gradient") {
    auto cfg = small_config();
    OneRankerModel<double> model(cfg, 7);
    const auto inst = [&] {
        data::TrainingInstance t;
        t.user_tokens = {1, 2};
        t.context_tokens = {3};
        for (std::uint32_t i = 0; i < 6; ++i) t.history.push_back({i, {{i % 4, (i + 1) % 4}}, true, i % 2 == 0, false, 1.0});
        for (std::uint32_t i = 0; i < 5; ++i) t.candidates.push_back({i + 3, {{i % 4, i % 3}}, 0.2 * i, i == 4});
        t.target = {7, {{0, 1}}};
        return t;
    }();
    auto fwd = model.forward(inst, {}, 1, false);
    tensor::reverse_accumulate(dc_loss(fwd.rank_scores, fwd.gen_logits, 2.0));
    std::size_t ranker_params = 0;
    bool generator_moved = false;
    for (const auto& [name, t] : model.store().entries()) {
        if (name.rfind("ranker.", 0) == 0) {
            ++ranker_params;
            for (double g : t.grad()) CHECK(g == 0.0);
        } else if (name.rfind("taskaware.codebook", 0) == 0) {
            for (double g : t.grad()) generator_moved |= g != 0.0;
        }
    }
    CHECK(ranker_params > 0);
    CHECK(generator_moved);
}

TEST_CASE("total_loss weighting") {
    LossComponents<double> parts{T64::scalar(1.5), T64::scalar(0.25), T64::scalar(2.0)};
    CHECK(total_loss(parts, {1, 0, 0, 2}).item() == 1.5);
    CHECK(total_loss(parts, {1, 1, 0, 2}).item() == 1.75);
    const double base = total_loss(parts, {1, 1, 0.5, 2}).item();
    CHECK(total_loss(parts, {2, 2, 1, 2}).item() == doctest::Approx(2.0 * base).epsilon(1e-15));
    CHECK_THROWS(LossWeights{0, 0, 0, 1}.validate());
    CHECK_THROWS(LossWeights{1, 1, 1, 0}.validate());
}

// ---------------------------------------------------------------- full model

TEST_CASE("variant switches change the model as described") {
    auto cfg = small_config();
    cfg.use_ranker = false;
    OneRankerModel<double> s2(cfg, 1);
    for (const auto& [name, _] : s2.store().entries()) CHECK(name.rfind("ranker.", 0) != 0);
    const auto has = [](const OneRankerModel<double>& m, const std::string& prefix) {
        for (const auto& [name, _] : m.store().entries()) {
            if (name.rfind(prefix, 0) == 0) return true;
        }
        return false;
    };
    CHECK(has(s2, "taskaware.fake_items"));
    cfg.use_target = false;
    OneRankerModel<double> no_target(cfg, 1);
    CHECK_FALSE(has(no_target, "taskaware.fake_items"));
    CHECK_FALSE(has(no_target, "taskaware.target"));
    cfg.shared_head = true;
    OneRankerModel<double> shared(cfg, 1);
    CHECK(has(shared, "taskaware.head_shared"));
    CHECK_FALSE(has(shared, "taskaware.head0"));
}

TEST_CASE("fake items are initialised from k-means and can be frozen") {
    auto cfg = small_config();
    cfg.freeze_fake_items = true;
    OneRankerModel<double> model(cfg, 3);
    std::vector<data::SemanticId> sids;
    for (std::uint32_t a = 0; a < 4; ++a) {
        for (std::uint32_t b = 0; b < 4; ++b) sids.push_back({{a, b}});
    }
    const std::vector<double> before(model.fake_items().values().begin(), model.fake_items().values().end());
    model.init_fake_items(sids, 5);
    CHECK(std::vector<double>(model.fake_items().values().begin(), model.fake_items().values().end()) != before);
    CHECK_FALSE(model.trainable("taskaware.fake_items"));
    CHECK(model.trainable("taskaware.codebook0"));
}
