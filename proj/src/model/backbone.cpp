#include "oneranker/model/backbone.hpp"

#include <stdexcept>
#include <string>

namespace oneranker::model {

using namespace tensor;

AttentionMask causal_mask(std::size_t seq_len) { return padded_causal_mask(seq_len, 0); }

AttentionMask padded_causal_mask(std::size_t seq_len, std::size_t pad) {
    if (seq_len == 0) throw std::invalid_argument("causal_mask: seq_len must be >= 1");
    if (pad > seq_len) throw std::invalid_argument("causal_mask: pad exceeds seq_len");
    std::vector<std::uint8_t> allowed(seq_len * seq_len, 0);
    for (std::size_t r = 0; r < seq_len; ++r) {
        if (r < pad) {
            allowed[r * seq_len + r] = 1;
            continue;
        }
        for (std::size_t c = pad; c <= r; ++c) allowed[r * seq_len + c] = 1;
    }
    return AttentionMask(seq_len, seq_len, std::move(allowed));
}

template <typename T>
HeterogeneousEmbedding<T>::HeterogeneousEmbedding(ParameterStore<T>& store, const ModelConfig& cfg)
    : max_len(cfg.max_len) {
    const double s = cfg.init_std;
    user = store.normal("backbone.embed.user", {cfg.user_vocab, cfg.d}, s);
    content = store.normal("backbone.embed.content", {data::kContentVocab, cfg.d}, s);
    context = store.normal("backbone.embed.context", {cfg.context_vocab, cfg.d}, s);
    item = store.normal("backbone.embed.item", {cfg.item_count, cfg.d}, s);
    pad = Tensor<T>::zeros({1, cfg.d});
    type = store.normal("backbone.embed.type", {4, cfg.d}, s);
    position = store.normal("backbone.embed.position", {cfg.max_len, cfg.d}, s);
}

template <typename T>
Tensor<T> HeterogeneousEmbedding<T>::operator()(const data::TokenStream& stream) const {
    if (stream.empty()) throw std::invalid_argument("encode_stream: empty stream");
    if (stream.size() > max_len) {
        throw std::invalid_argument("encode_stream: stream length " + std::to_string(stream.size()) +
                                    " exceeds max_len " + std::to_string(max_len));
    }
    std::size_t pad_count = 0;
    while (pad_count < stream.size() && stream[pad_count].type == data::TokenType::Pad) ++pad_count;

    // Gather each type's rows, then scatter back into stream order with one
    // more gather over the stacked table of looked-up rows.
    const Tensor<T>* tables[4] = {&user, &content, &context, &item};
    std::vector<std::size_t> ids[4];
    std::vector<std::size_t> slot(stream.size());
    std::vector<std::size_t> type_ids, pos_ids;
    std::size_t pads = 0;
    for (std::size_t p = 0; p < stream.size(); ++p) {
        const auto& tok = stream[p];
        if (tok.type == data::TokenType::Pad) {
            if (p >= pad_count) throw std::invalid_argument("encode_stream: pad token at position " + std::to_string(p) + " follows a real token");
            ++pads;
            continue;
        }
        const auto t = static_cast<std::size_t>(tok.type);
        if (t > 3) throw std::invalid_argument("encode_stream: bad token type at position " + std::to_string(p));
        if (tok.id >= tables[t]->rows()) {
            throw std::invalid_argument("encode_stream: unknown token id " + std::to_string(tok.id) + " at position " +
                                        std::to_string(p) + " (vocab " + std::to_string(tables[t]->rows()) + ")");
        }
        ids[t].push_back(tok.id);
    }
    std::vector<Tensor<T>> parts;
    std::size_t offset[5] = {0, 0, 0, 0, 0};
    std::size_t total = 0;
    for (std::size_t t = 0; t < 4; ++t) {
        offset[t] = total;
        if (!ids[t].empty()) {
            parts.push_back(gather_rows(*tables[t], std::span<const std::size_t>(ids[t])));
            total += ids[t].size();
        }
    }
    offset[4] = total;
    if (pads) parts.push_back(pad);
    const Tensor<T> stacked = parts.size() == 1 ? parts[0] : concat<T>(std::span<const Tensor<T>>(parts), 0);

    std::size_t next[4] = {0, 0, 0, 0};
    for (std::size_t p = 0; p < stream.size(); ++p) {
        const auto& tok = stream[p];
        if (tok.type == data::TokenType::Pad) {
            slot[p] = offset[4];
            continue;
        }
        const auto t = static_cast<std::size_t>(tok.type);
        slot[p] = offset[t] + next[t]++;
        type_ids.push_back(t);
        pos_ids.push_back(p - pad_count);
    }
    Tensor<T> tokens = gather_rows(stacked, std::span<const std::size_t>(slot));
    if (pad_count == stream.size()) return tokens;
    Tensor<T> extra = add(gather_rows(type, std::span<const std::size_t>(type_ids)),
                          gather_rows(position, std::span<const std::size_t>(pos_ids)));
    if (pad_count > 0) {
        extra = concat<T>({Tensor<T>::zeros({pad_count, extra.cols()}), extra}, 0);
    }
    return add(tokens, extra);
}

template <typename T>
GDecoder<T>::GDecoder(ParameterStore<T>& store, const ModelConfig& cfg) {
    for (std::size_t l = 0; l < cfg.backbone_layers; ++l) {
        const std::string p = "backbone.layer" + std::to_string(l);
        DecoderBlock<T> b;
        b.ln_attn = LayerNorm<T>(store, p + ".ln_attn", cfg.d);
        b.attn = MultiHeadAttention<T>(store, p + ".attn", cfg.d, cfg.heads);
        b.ln_ffn = LayerNorm<T>(store, p + ".ln_ffn", cfg.d);
        b.ffn = FeedForward<T>(store, p + ".ffn", cfg.d, cfg.ffn_dim);
        blocks.push_back(std::move(b));
    }
    final_norm = LayerNorm<T>(store, "backbone.final_norm", cfg.d);
}

template <typename T>
Tensor<T> GDecoder<T>::operator()(const Tensor<T>& x, const AttentionMask& mask) const {
    Tensor<T> h = x;
    for (const auto& b : blocks) {
        const auto n = b.ln_attn(h);
        h = add(h, b.attn(n, n, mask));
        h = add(h, b.ffn(b.ln_ffn(h)));
    }
    return final_norm(h);
}

template <typename T>
Backbone<T>::Backbone(ParameterStore<T>& store, const ModelConfig& cfg)
    : embedding(store, cfg), decoder(store, cfg) {}

template <typename T>
Tensor<T> Backbone<T>::encode_stream(const data::TokenStream& stream) const {
    Tensor<T> x = embedding(stream);
    std::size_t pad = 0;
    while (pad < stream.size() && stream[pad].type == data::TokenType::Pad) ++pad;
    return decoder(x, padded_causal_mask(stream.size(), pad));
}

template struct HeterogeneousEmbedding<float>;
template struct HeterogeneousEmbedding<double>;
template struct GDecoder<float>;
template struct GDecoder<double>;
template struct Backbone<float>;
template struct Backbone<double>;

}  // namespace oneranker::model
