#include "oneranker/model/losses.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "oneranker/tensor/ops.hpp"

namespace oneranker::model {

using namespace tensor;

namespace {
std::atomic<std::uint64_t> g_no_pair{0};

template <typename T>
Tensor<T> as_row(const Tensor<T>& x) {
    if (x.rank() == 2 && x.rows() == 1) return x;
    return reshape(x, {1, x.size()});
}
}  // namespace

std::uint64_t bpr_no_pair_count() { return g_no_pair.load(); }

void LossWeights::validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) throw std::invalid_argument("LossWeights: weights must be >= 0");
    if (alpha + beta + gamma <= 0.0) throw std::invalid_argument("LossWeights: at least one weight must be > 0");
    if (!(tau > 0.0)) throw std::invalid_argument("LossWeights: tau must be > 0");
}

template <typename T>
Tensor<T> mtp_loss(const Tensor<T>& user_reps, const Tensor<T>& s_target,
                   const std::vector<std::vector<std::uint32_t>>& gt, std::span<const Tensor<T>> codebooks,
                   std::span<const Tensor<T>> code_cosines) {
    const std::size_t heads = user_reps.rows();
    const std::size_t levels = codebooks.size();
    if (gt.size() != heads) throw std::invalid_argument("mtp_loss: one ground-truth path per head required");
    const bool target = s_target.defined();
    if (target && code_cosines.size() != levels) throw std::invalid_argument("mtp_loss: cosines per level required");

    Tensor<T> prefix;  // H x d running sum of teacher-forced code embeddings
    Tensor<T> total;
    for (std::size_t l = 0; l < levels; ++l) {
        std::vector<std::size_t> codes(heads);
        std::vector<std::pair<std::size_t, std::size_t>> picks(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            if (gt[h].size() != levels) throw std::invalid_argument("mtp_loss: path length != level count");
            if (gt[h][l] >= codebooks[l].rows()) {
                throw std::invalid_argument("mtp_loss: code " + std::to_string(gt[h][l]) + " at level " +
                                            std::to_string(l) + " outside vocab " + std::to_string(codebooks[l].rows()));
            }
            codes[h] = gt[h][l];
            picks[h] = {h, gt[h][l]};
        }
        const Tensor<T> cond = prefix.defined() ? add(user_reps, prefix) : user_reps;
        Tensor<T> scores = matmul_nt(cond, codebooks[l]);
        if (target) scores = add(scores, matmul_nt(s_target, code_cosines[l]));
        const Tensor<T> nll = scale(sum(select(log_softmax(scores, 1), std::span<const std::pair<std::size_t, std::size_t>>(picks))), T{-1});
        total = total.defined() ? add(total, nll) : nll;
        if (l + 1 < levels) {
            const Tensor<T> chosen = gather_rows(codebooks[l], std::span<const std::size_t>(codes));
            prefix = prefix.defined() ? add(prefix, chosen) : chosen;
        }
    }
    return total;
}

template <typename T>
Tensor<T> bpr_rank_loss(const Tensor<T>& scores, std::span<const double> labels) {
    const std::size_t n = scores.size();
    if (labels.size() != n) throw std::invalid_argument("bpr_rank_loss: score and label counts differ");
    if (n < 2) throw std::invalid_argument("bpr_rank_loss: need at least 2 candidates");
    const Tensor<T> row = as_row(scores);
    std::vector<std::pair<std::size_t, std::size_t>> hi, lo;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[i] > labels[j]) {
                hi.emplace_back(0, i);
                lo.emplace_back(0, j);
            }
        }
    }
    if (hi.empty()) {
        ++g_no_pair;
        return scale(sum(row), T{0});
    }
    const auto diff = sub(select(row, std::span<const std::pair<std::size_t, std::size_t>>(hi)),
                          select(row, std::span<const std::pair<std::size_t, std::size_t>>(lo)));
    return scale(mean(log_sigmoid(diff)), T{-1});
}

template <typename T>
Tensor<T> dc_loss(const Tensor<T>& ranker_scores, const Tensor<T>& generator_logits, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("dc_loss: tau must be > 0");
    if (ranker_scores.size() != generator_logits.size()) throw std::invalid_argument("dc_loss: size mismatch");
    if (ranker_scores.size() < 2) throw std::invalid_argument("dc_loss: need at least 2 candidates");
    const Tensor<T> target = softmax(scale(detach(as_row(ranker_scores)), static_cast<T>(1.0 / tau)), 1);
    return scale(sum(mul(target, log_softmax(as_row(generator_logits), 1))), T{-1});
}

template <typename T>
Tensor<T> total_loss(const LossComponents<T>& parts, const LossWeights& w) {
    Tensor<T> total;
    auto term = [&](const Tensor<T>& x, double weight) {
        if (!x.defined() || weight == 0.0) return;
        const auto t = scale(x, static_cast<T>(weight));
        total = total.defined() ? add(total, t) : t;
    };
    term(parts.mtp, w.alpha);
    term(parts.rank, w.beta);
    term(parts.dc, w.gamma);
    if (!total.defined()) throw std::invalid_argument("total_loss: no active component");
    return total;
}

#define ONERANKER_LOSS_INST(T)                                                                                  \
    template Tensor<T> mtp_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<std::vector<std::uint32_t>>&, \
                                std::span<const Tensor<T>>, std::span<const Tensor<T>>);                        \
    template Tensor<T> bpr_rank_loss(const Tensor<T>&, std::span<const double>);                                \
    template Tensor<T> dc_loss(const Tensor<T>&, const Tensor<T>&, double);                                     \
    template Tensor<T> total_loss(const LossComponents<T>&, const LossWeights&);
ONERANKER_LOSS_INST(float)
ONERANKER_LOSS_INST(double)

}  // namespace oneranker::model
