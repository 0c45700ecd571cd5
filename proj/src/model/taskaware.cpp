#include "oneranker/model/taskaware.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace oneranker::model {

using namespace tensor;

AttentionMask build_hetero_mask(std::size_t m_total, std::size_t k) {
    if (m_total == 0) throw std::invalid_argument("build_hetero_mask: need at least one task token");
    const std::size_t n = m_total + k;
    std::vector<std::uint8_t> allowed(n * n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = allowed.begin() + static_cast<std::ptrdiff_t>(r * n);
        if (r < m_total) {
            std::fill(row, row + static_cast<std::ptrdiff_t>(r + 1), 1);
            std::fill(row + static_cast<std::ptrdiff_t>(m_total), row + static_cast<std::ptrdiff_t>(n), 1);
        } else {
            std::fill(row, row + static_cast<std::ptrdiff_t>(m_total), 1);
            row[static_cast<std::ptrdiff_t>(r)] = 1;
        }
    }
    return AttentionMask(n, n, std::move(allowed));
}

template <typename T>
HeteroDecoder<T>::HeteroDecoder(ParameterStore<T>& store, const ModelConfig& cfg)
    : cross_first(cfg.cross_attention_first), hetero_mask(cfg.hetero_mask) {
    if (cfg.hetero_layers == 0) throw std::invalid_argument("HeteroDecoder: layers must be >= 1");
    for (std::size_t l = 0; l < cfg.hetero_layers; ++l) {
        const std::string p = "taskaware.layer" + std::to_string(l);
        HeteroLayer<T> h;
        h.ln_cross = LayerNorm<T>(store, p + ".ln_cross", cfg.d);
        h.cross = MultiHeadAttention<T>(store, p + ".cross", cfg.d, cfg.heads);
        h.ln_self = LayerNorm<T>(store, p + ".ln_self", cfg.d);
        h.self = MultiHeadAttention<T>(store, p + ".self", cfg.d, cfg.heads);
        h.ln_ffn = LayerNorm<T>(store, p + ".ln_ffn", cfg.d);
        h.ffn = FeedForward<T>(store, p + ".ffn", cfg.d, cfg.ffn_dim);
        layers.push_back(std::move(h));
    }
    final_norm = LayerNorm<T>(store, "taskaware.final_norm", cfg.d);
}

template <typename T>
HeteroOutput<T> HeteroDecoder<T>::operator()(const Tensor<T>& tasks, const Tensor<T>& fakes,
                                             const Tensor<T>& h1) const {
    const std::size_t m = tasks.rows();
    const std::size_t k = fakes.defined() ? fakes.rows() : 0;
    if (tasks.cols() != h1.cols() || (k && fakes.cols() != h1.cols())) {
        throw std::invalid_argument("hetero_decoder_forward: query dim " + std::to_string(tasks.cols()) +
                                    " does not match H1 dim " + std::to_string(h1.cols()));
    }
    const AttentionMask self_mask = hetero_mask ? build_hetero_mask(m, k) : AttentionMask::full(m + k, m + k);
    const AttentionMask cross_mask = AttentionMask::full(m + k, h1.rows());

    Tensor<T> h = k ? concat<T>({tasks, fakes}, 0) : tasks;
    for (const auto& layer : layers) {
        auto cross = [&] { h = add(h, layer.cross(layer.ln_cross(h), h1, cross_mask)); };
        auto self = [&] {
            const auto n = layer.ln_self(h);
            h = add(h, layer.self(n, n, self_mask));
        };
        if (cross_first) {
            cross();
            self();
        } else {
            self();
            cross();
        }
        h = add(h, layer.ffn(layer.ln_ffn(h)));
    }
    h = final_norm(h);
    HeteroOutput<T> out;
    out.task_reps = k ? slice_rows(h, 0, m) : h;
    if (k) out.fake_reps = slice_rows(h, m, m + k);
    return out;
}

template <typename T>
TargetChannel<T>::TargetChannel(ParameterStore<T>& store, const std::string& name, std::size_t d,
                                std::size_t hidden, std::size_t k) {
    // Fan-in of the first layer is 2d, shared by both halves.
    const double g = std::sqrt(0.5);
    fake_in = Linear<T>(store, name + ".fake_in", d, hidden, false, g);
    task_in = Linear<T>(store, name + ".task_in", d, hidden, true, g);
    // Small output gain: the channel starts close to neutral so an untrained
    // s_target does not swamp the inner-product score.
    out = Linear<T>(store, name + ".out", hidden, k, true, 0.1);
}

template <typename T>
Tensor<T> TargetChannel<T>::operator()(const Tensor<T>& task_reps, const Tensor<T>& fake_reps) const {
    const std::size_t h = task_reps.rows();
    const std::size_t k = fake_reps.rows();
    const Tensor<T> a = fake_in(fake_reps);  // k x hidden
    const Tensor<T> b = task_in(task_reps);  // h x hidden
    std::vector<std::size_t> fi(h * k), ti(h * k);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            fi[i * k + j] = j;
            ti[i * k + j] = i;
        }
    }
    const Tensor<T> hidden = silu(add(gather_rows(a, std::span<const std::size_t>(fi)),
                                      gather_rows(b, std::span<const std::size_t>(ti))));
    const Tensor<T> per_pair = out(hidden);  // (h*k) x k
    std::vector<T> group(h * h * k, T{0});
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < k; ++j) group[i * h * k + i * k + j] = T{1};
    }
    return matmul(Tensor<T>::from({h, h * k}, std::move(group)), per_pair);
}

template <typename T>
Tensor<T> user_representation(const Tensor<T>& e_task, const Tensor<T>& s_target) {
    if (!s_target.defined()) return e_task;
    return concat<T>({e_task, s_target}, 1);
}

template <typename T>
Tensor<T> enhance_item(const Tensor<T>& e_item, const Tensor<T>& centers) {
    if (!centers.defined()) return e_item;
    return concat<T>({e_item, cosine_similarity(e_item, centers)}, 1);
}

template <typename T>
Tensor<T> score_user_item(const Tensor<T>& user_rep, const Tensor<T>& item_rep) {
    if (user_rep.cols() != item_rep.cols()) {
        throw std::invalid_argument("score_user_item: user dim " + std::to_string(user_rep.cols()) +
                                    " != item dim " + std::to_string(item_rep.cols()));
    }
    return matmul_nt(user_rep, item_rep);
}

template <typename T>
Tensor<T> bag_value_heads(const Tensor<T>& value_reps) {
    return mean_rows(value_reps);
}

std::vector<double> level_log_probs(const GenerationInputs& in, std::size_t head, std::size_t level,
                                    const std::vector<double>& conditioned) {
    const std::size_t vocab = in.level_vocab[level];
    const auto& book = in.codebooks[level];
    std::vector<double> scores(vocab, 0.0);
    for (std::size_t c = 0; c < vocab; ++c) {
        const double* e = book.data() + c * in.d;
        double s = 0.0;
        for (std::size_t x = 0; x < in.d; ++x) s += conditioned[x] * e[x];
        if (in.k) {
            double en = 0.0;
            for (std::size_t x = 0; x < in.d; ++x) en += e[x] * e[x];
            en = std::sqrt(en);
            for (std::size_t j = 0; j < in.k; ++j) {
                const double* f = in.centers.data() + j * in.d;
                double dot = 0.0, fn = 0.0;
                for (std::size_t x = 0; x < in.d; ++x) {
                    dot += e[x] * f[x];
                    fn += f[x] * f[x];
                }
                fn = std::sqrt(fn);
                const double cos = (en > 0.0 && fn > 0.0) ? dot / (en * fn) : 0.0;
                s += in.s_target[head][j] * cos;
            }
        }
        scores[c] = s;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    const double lz = mx + std::log(z);
    for (double& s : scores) s -= lz;
    return scores;
}

namespace {

struct Beam {
    std::vector<std::uint32_t> path;
    double score = 0.0;
};

std::vector<Beam> beam_search(const GenerationInputs& in, std::size_t head, std::size_t width) {
    std::vector<Beam> beams{Beam{}};
    for (std::size_t level = 0; level < in.level_vocab.size(); ++level) {
        std::vector<Beam> next;
        for (const auto& b : beams) {
            std::vector<double> cond = in.e_task[head];
            for (std::size_t l = 0; l < b.path.size(); ++l) {
                const double* e = in.codebooks[l].data() + b.path[l] * in.d;
                for (std::size_t x = 0; x < in.d; ++x) cond[x] += e[x];
            }
            const auto lp = level_log_probs(in, head, level, cond);
            for (std::size_t c = 0; c < lp.size(); ++c) {
                Beam nb = b;
                nb.path.push_back(static_cast<std::uint32_t>(c));
                nb.score += lp[c];
                next.push_back(std::move(nb));
            }
        }
        // Highest score first; ties by lexicographic path for determinism.
        std::sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) {
            return a.score != b.score ? a.score > b.score : a.path < b.path;
        });
        if (next.size() > width) next.resize(width);
        beams = std::move(next);
    }
    return beams;
}

}  // namespace

std::vector<GeneratedPath> mtp_generate(const GenerationInputs& in, std::size_t beam_width, std::size_t n) {
    if (beam_width == 0) throw std::invalid_argument("mtp_generate: beam_width must be >= 1");
    if (in.e_task.empty()) throw std::invalid_argument("mtp_generate: no heads");
    double expressible = 1.0;
    for (auto v : in.level_vocab) expressible *= static_cast<double>(v);
    if (static_cast<double>(n) > expressible) {
        throw std::invalid_argument("mtp_generate: n=" + std::to_string(n) + " exceeds the " +
                                    std::to_string(static_cast<std::size_t>(expressible)) + " expressible paths");
    }
    std::size_t width = beam_width;
    for (;;) {
        std::map<std::vector<std::uint32_t>, GeneratedPath> best;
        for (std::size_t h = 0; h < in.e_task.size(); ++h) {
            for (auto& b : beam_search(in, h, width)) {
                auto it = best.find(b.path);
                if (it == best.end() || b.score > it->second.score) {
                    best[b.path] = GeneratedPath{data::SemanticId{b.path}, b.score, h};
                }
            }
        }
        if (best.size() >= n || static_cast<double>(width) >= expressible) {
            std::vector<GeneratedPath> out;
            for (auto& [_, p] : best) out.push_back(std::move(p));
            std::sort(out.begin(), out.end(), [](const GeneratedPath& a, const GeneratedPath& b) {
                return a.score != b.score ? a.score > b.score : a.sid < b.sid;
            });
            out.resize(std::min(out.size(), n));
            return out;
        }
        width *= 2;
    }
}

template struct HeteroDecoder<float>;
template struct HeteroDecoder<double>;
template struct TargetChannel<float>;
template struct TargetChannel<double>;
template Tensor<float> user_representation(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> user_representation(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> enhance_item(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> enhance_item(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> score_user_item(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> score_user_item(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> bag_value_heads(const Tensor<float>&);
template Tensor<double> bag_value_heads(const Tensor<double>&);

}  // namespace oneranker::model
