#include "oneranker/model/ranker.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace oneranker::model {

using namespace tensor;

AttentionMask build_rank_mask(std::size_t n) {
    if (n == 0) throw std::invalid_argument("build_rank_mask: n must be >= 1");
    const std::size_t q = n + 1;
    std::vector<std::uint8_t> allowed(q * q, 0);
    allowed[0] = 1;
    for (std::size_t j = 1; j < q; ++j) {
        allowed[j * q] = 1;
        allowed[j * q + j] = 1;
    }
    return AttentionMask(q, q, std::move(allowed));
}

template <typename T>
Tensor<T> fuse_kv(const Tensor<T>& h1, const Tensor<T>& task_reps, const Tensor<T>& fake_reps) {
    std::vector<Tensor<T>> parts{h1};
    for (const auto* p : {&task_reps, &fake_reps}) {
        if (!p->defined()) continue;
        if (p->cols() != h1.cols()) {
            throw std::invalid_argument("fuse_kv: step-2 dim " + std::to_string(p->cols()) + " != H1 dim " +
                                        std::to_string(h1.cols()));
        }
        parts.push_back(*p);
    }
    if (parts.size() == 1) return h1;
    return concat<T>(std::span<const Tensor<T>>(parts), 0);
}

template <typename T>
RDecoder<T>::RDecoder(ParameterStore<T>& store, const ModelConfig& cfg) {
    if (cfg.ranker_layers != 1) throw std::invalid_argument("RDecoder: ranker_layers must be 1");
    const std::string p = "ranker";
    task_token = store.normal(p + ".task_token", {1, cfg.d}, cfg.init_std);
    if (cfg.active_fakes()) cos_proj = Linear<T>(store, p + ".cos_proj", cfg.active_fakes(), cfg.d, false);
    ln_cross = LayerNorm<T>(store, p + ".ln_cross", cfg.d);
    cross = MultiHeadAttention<T>(store, p + ".cross", cfg.d, cfg.heads);
    ln_self = LayerNorm<T>(store, p + ".ln_self", cfg.d);
    self = MultiHeadAttention<T>(store, p + ".self", cfg.d, cfg.heads);
    ln_ffn = LayerNorm<T>(store, p + ".ln_ffn", cfg.d);
    ffn = FeedForward<T>(store, p + ".ffn", cfg.d, cfg.ffn_dim);
    final_norm = LayerNorm<T>(store, p + ".final_norm", cfg.d);
    const std::size_t half = std::max<std::size_t>(1, cfg.d / 2);
    head_hidden = Linear<T>(store, p + ".head_hidden", cfg.d, half);
    head_out = Linear<T>(store, p + ".head_out", half, 1);
}

template <typename T>
Tensor<T> RDecoder<T>::candidate_tokens(const Tensor<T>& item_embeddings, const Tensor<T>& cosines) const {
    if (!cos_proj.weight.defined() || !cosines.defined()) return item_embeddings;
    return add(item_embeddings, cos_proj(cosines));
}

template <typename T>
Tensor<T> RDecoder<T>::operator()(const Tensor<T>& cands, const Tensor<T>& kv) const {
    if (!cands.defined() || cands.rows() == 0) throw std::invalid_argument("r_decoder_score: empty candidate set");
    if (cands.cols() != task_token.cols() || kv.cols() != task_token.cols()) {
        throw std::invalid_argument("r_decoder_score: dim mismatch");
    }
    const std::size_t n = cands.rows();
    Tensor<T> h = concat<T>({task_token, cands}, 0);
    h = add(h, cross(ln_cross(h), kv, AttentionMask::full(n + 1, kv.rows())));
    const auto s = ln_self(h);
    h = add(h, self(s, s, build_rank_mask(n)));
    h = add(h, ffn(ln_ffn(h)));
    h = final_norm(slice_rows(h, 1, n + 1));
    return head_out(silu(head_hidden(h)));
}

template Tensor<float> fuse_kv(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse_kv(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template struct RDecoder<float>;
template struct RDecoder<double>;

}  // namespace oneranker::model
