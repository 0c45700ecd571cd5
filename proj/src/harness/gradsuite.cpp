#include "oneranker/harness/gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "oneranker/common/random.hpp"
#include "oneranker/model/oneranker.hpp"
#include "oneranker/tensor/attention.hpp"
#include "oneranker/tensor/ops.hpp"

namespace oneranker::harness {

using namespace tensor;
using T64 = Tensor<double>;

model::ModelConfig micro_model_config() {
    model::ModelConfig c;
    c.d = 8;
    c.heads = 2;
    c.ffn_dim = 16;
    c.backbone_layers = 2;
    c.hetero_layers = 2;
    c.interest_tokens = 2;
    c.value_tokens = 1;
    c.fake_items = 4;
    c.target_hidden = 8;
    c.max_len = 24;
    c.user_vocab = 6;
    c.context_vocab = 3;
    c.item_count = 12;
    c.level_vocab = {3, 4};
    return c;
}

data::TrainingInstance random_instance(const model::ModelConfig& cfg, std::size_t history, std::size_t n,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto below = [&](std::size_t m) { return static_cast<std::uint32_t>(rng() % m); };
    auto sid = [&] {
        data::SemanticId s;
        for (auto v : cfg.level_vocab) s.path.push_back(below(v));
        return s;
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    data::TrainingInstance inst;
    inst.user_tokens = {below(cfg.user_vocab), below(cfg.user_vocab)};
    inst.context_tokens = {below(cfg.context_vocab)};
    for (std::size_t e = 0; e < history; ++e) {
        data::HistoryEvent ev;
        ev.item = below(cfg.item_count);
        ev.sid = sid();
        ev.click = unit(rng) < 0.4;
        ev.conversion = ev.click && unit(rng) < 0.5;
        ev.ecpm = unit(rng) * 2.0;
        inst.history.push_back(ev);
    }
    const std::size_t pos = below(n);
    for (std::size_t c = 0; c < n; ++c) {
        data::Candidate cand;
        cand.item = below(cfg.item_count);
        cand.sid = sid();
        cand.ecpm = 0.05 + unit(rng);
        cand.is_positive = c == pos;
        inst.candidates.push_back(cand);
    }
    inst.candidates[pos].ecpm += 1.0;
    inst.target = {inst.candidates[pos].item, inst.candidates[pos].sid};
    return inst;
}

namespace {

T64 random_param(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return T64::from(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed random weights, so every output element matters.
T64 probe(const T64& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> w(y.size());
    for (auto& x : w) x = dist(rng);
    return sum(mul(y, T64::from(y.shape(), w)));
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double tol) {
    std::vector<GradSuiteEntry> out;
    auto check = [&](const std::string& name, const std::function<T64()>& f, std::vector<NamedParam> params,
                     double step = 1e-6, double floor = 1e-8) {
        out.push_back({name, finite_difference_check(f, std::move(params), step, tol, floor)});
    };

    std::mt19937_64 rng(seed);
    const std::size_t r = 3, c = 4, m = 5;
    auto a = random_param(rng, {r, c});
    auto b = random_param(rng, {r, c});
    auto w = random_param(rng, {c, m});
    auto wt = random_param(rng, {m, c});
    auto row = random_param(rng, {1, c});
    auto pos = random_param(rng, {r, c}, 0.5, 2.0);
    auto gain = random_param(rng, {1, c}, 0.5, 1.5);
    const std::uint64_t s = rng();
    std::vector<std::size_t> idx{r - 1, 0, r - 1};
    std::vector<std::pair<std::size_t, std::size_t>> picks{{0, c - 1}, {r - 1, 0}, {0, c - 1}};

    check("add", [&] { return probe(add(a, b), s); }, {{"a", a}, {"b", b}});
    check("sub", [&] { return probe(sub(a, b), s); }, {{"a", a}, {"b", b}});
    check("mul", [&] { return probe(mul(a, b), s); }, {{"a", a}, {"b", b}});
    check("scale", [&] { return probe(scale(a, -1.7), s); }, {{"a", a}});
    check("add_row", [&] { return probe(add_row(a, row), s); }, {{"a", a}, {"row", row}});
    check("matmul", [&] { return probe(matmul(a, w), s); }, {{"a", a}, {"w", w}});
    check("matmul_nt", [&] { return probe(matmul_nt(a, wt), s); }, {{"a", a}, {"wt", wt}});
    check("transpose", [&] { return probe(transpose(a), s); }, {{"a", a}});
    check("reshape", [&] { return probe(reshape(a, {c, r}), s); }, {{"a", a}});
    check("concat", [&] { return probe(concat<double>({a, b, a}, 1), s); }, {{"a", a}, {"b", b}});
    check("slice_rows", [&] { return probe(slice_rows(a, 1, r), s); }, {{"a", a}});
    check("slice_cols", [&] { return probe(slice_cols(a, 1, c), s); }, {{"a", a}});
    check("gather_rows", [&] { return probe(gather_rows<double>(a, idx), s); }, {{"a", a}});
    check("select", [&] { return probe(select<double>(a, picks), s); }, {{"a", a}});
    check("layer_norm", [&] { return probe(layer_norm(a, gain, row), s); }, {{"a", a}, {"gain", gain}, {"bias", row}});
    check("silu", [&] { return probe(silu(a), s); }, {{"a", a}});
    check("sigmoid", [&] { return probe(sigmoid(a), s); }, {{"a", a}});
    check("log_sigmoid", [&] { return probe(log_sigmoid(scale(a, 4.0)), s); }, {{"a", a}});
    check("exp", [&] { return probe(exp(a), s); }, {{"a", a}});
    check("log", [&] { return probe(log(pos), s); }, {{"pos", pos}});
    check("softmax", [&] { return probe(softmax(a, 1), s); }, {{"a", a}});
    check("log_softmax", [&] { return probe(log_softmax(a, 0), s); }, {{"a", a}});
    check("sum", [&] { return sum(mul(a, b)); }, {{"a", a}, {"b", b}});
    check("mean", [&] { return mean(mul(a, b)); }, {{"a", a}, {"b", b}});
    check("sum_rows", [&] { return probe(sum_rows(a), s); }, {{"a", a}});
    check("mean_rows", [&] { return probe(mean_rows(a), s); }, {{"a", a}});
    check("cosine_similarity", [&] { return probe(cosine_similarity(a, wt), s); }, {{"a", a}, {"wt", wt}});

    auto q = random_param(rng, {3, 4});
    auto k = random_param(rng, {5, 4});
    auto v = random_param(rng, {5, 4});
    AttentionMask mask(3, 5, {1, 0, 1, 0, 1, 0, 1, 1, 1, 0, 1, 1, 1, 1, 1});
    check("masked_attention", [&] { return probe(masked_attention(q, k, v, mask, 2), s); },
          {{"q", q}, {"k", k}, {"v", v}});

    // End to end on the micro-model. The loss is O(10) while some entries are
    // O(1e-8), below what differencing can resolve (round-off is about
    // 1e-15 * |L| / step), so the relative-error floor is raised to 1e-6.
    const auto cfg = micro_model_config();
    model::OneRankerModel<double> net(cfg, seed);
    const auto inst = random_instance(cfg, 6, 5, derive_seed(seed, {0x6ad}));
    const model::LossWeights weights{1.0, 1.0, 0.5, 2.0};
    const std::uint64_t value_seed = derive_seed(seed, {0x7a1e});
    T64 teacher;
    {
        NoGradGuard guard;
        const auto fwd = net.forward(inst, weights, value_seed, true);
        teacher = T64::from(fwd.rank_scores.shape(), {fwd.rank_scores.values().begin(), fwd.rank_scores.values().end()});
    }
    std::vector<NamedParam> params;
    for (const auto& [name, t] : net.store().entries()) params.push_back({name, t});
    check("total_loss(micro-model)", [&] {
        auto fwd = net.forward(inst, weights, value_seed, true);
        fwd.parts.dc = model::dc_loss(teacher, fwd.gen_logits, weights.tau);
        return model::total_loss(fwd.parts, weights);
    }, std::move(params), 1e-4, 1e-6);
    return out;
}

}  // namespace oneranker::harness
