#include "oneranker/model/oneranker.hpp"

#include <stdexcept>

#include "oneranker/common/random.hpp"
#include "oneranker/data/kmeans.hpp"
#include "oneranker/data/synth.hpp"

namespace oneranker::model {

using namespace tensor;

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + what);
    };
    need(d >= 1 && heads >= 1 && d % heads == 0, "heads must divide d");
    need(ffn_dim >= 1, "ffn_dim must be >= 1");
    need(backbone_layers >= 1, "backbone_layers must be >= 1");
    need(hetero_layers >= 1, "hetero_layers must be >= 1");
    need(ranker_layers == 1, "ranker_layers must be 1");
    need(interest_tokens >= 1, "interest_tokens must be >= 1");
    need(value_tokens >= 1, "value_tokens must be >= 1");
    need(fake_items >= 1, "fake_items must be >= 1");
    need(target_hidden >= 1, "target_hidden must be >= 1");
    need(max_len >= 2, "max_len must be >= 2");
    need(beam_width >= 1, "beam_width must be >= 1");
    need(!level_vocab.empty(), "level_vocab must be non-empty");
    for (auto v : level_vocab) need(v >= 1, "level vocab sizes must be >= 1");
    need(user_vocab >= 1 && context_vocab >= 1 && item_count >= 1, "vocabularies must be non-empty");
}

template <typename T>
OneRankerModel<T>::OneRankerModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), store_(derive_seed(seed, {0x30de1})) {
    cfg_.validate();
    backbone_ = Backbone<T>(store_, cfg_);
    tasks_ = store_.normal("taskaware.task_tokens", {cfg_.task_count(), cfg_.d}, cfg_.init_std);
    if (cfg_.use_target) fakes_ = store_.normal("taskaware.fake_items", {cfg_.fake_items, cfg_.d}, cfg_.init_std);
    hetero_ = HeteroDecoder<T>(store_, cfg_);
    if (cfg_.shared_head) {
        heads_.emplace_back(store_, "taskaware.head_shared", cfg_.d, cfg_.d);
    } else {
        for (std::size_t h = 0; h < cfg_.head_count(); ++h) {
            heads_.emplace_back(store_, "taskaware.head" + std::to_string(h), cfg_.d, cfg_.d);
        }
    }
    if (cfg_.use_target) {
        target_ = TargetChannel<T>(store_, "taskaware.target", cfg_.d, cfg_.target_hidden, cfg_.fake_items);
    }
    for (std::size_t l = 0; l < cfg_.levels(); ++l) {
        codebooks_.push_back(
            store_.normal("taskaware.codebook" + std::to_string(l), {cfg_.level_vocab[l], cfg_.d}, cfg_.init_std));
    }
    if (cfg_.use_ranker) ranker_ = RDecoder<T>(store_, cfg_);
}

template <typename T>
bool OneRankerModel<T>::trainable(const std::string& name) const {
    return !(cfg_.freeze_fake_items && name == "taskaware.fake_items");
}

template <typename T>
Tensor<T> OneRankerModel<T>::composite(const std::vector<const data::SemanticId*>& sids) const {
    Tensor<T> out;
    for (std::size_t l = 0; l < codebooks_.size(); ++l) {
        std::vector<std::size_t> codes(sids.size());
        for (std::size_t i = 0; i < sids.size(); ++i) {
            const auto& path = sids[i]->path;
            if (path.size() != codebooks_.size() || path[l] >= codebooks_[l].rows()) {
                throw std::invalid_argument("composite: semantic id does not fit the codebooks");
            }
            codes[i] = path[l];
        }
        const auto rows = gather_rows(codebooks_[l], std::span<const std::size_t>(codes));
        out = out.defined() ? add(out, rows) : rows;
    }
    return out;
}

template <typename T>
void OneRankerModel<T>::init_fake_items(const std::vector<data::SemanticId>& item_sids, std::uint64_t seed) {
    if (!cfg_.use_target || item_sids.empty()) return;
    NoGradGuard guard;
    std::vector<const data::SemanticId*> ptrs;
    for (const auto& s : item_sids) ptrs.push_back(&s);
    const auto comp = composite(ptrs);
    data::Matrix pts(comp.rows(), comp.cols());
    for (std::size_t i = 0; i < comp.size(); ++i) pts.values[i] = static_cast<double>(comp.values()[i]);
    const std::size_t k = std::min(cfg_.fake_items, pts.rows);
    const auto km = data::kmeans(pts, k, 50, derive_seed(seed, {0xfa4e}));
    auto& dst = fakes_.mutable_values();
    for (std::size_t j = 0; j < cfg_.fake_items; ++j) {
        const auto row = km.centers.row(j % k);
        for (std::size_t x = 0; x < cfg_.d; ++x) dst[j * cfg_.d + x] = static_cast<T>(row[x]);
    }
}

template <typename T>
Tensor<T> OneRankerModel<T>::heads(const Tensor<T>& reps) const {
    if (heads_.size() == 1) return heads_[0](reps);
    std::vector<Tensor<T>> rows;
    rows.reserve(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h) rows.push_back(heads_[h](slice_rows(reps, h, h + 1)));
    return concat<T>(std::span<const Tensor<T>>(rows), 0);
}

template <typename T>
ForwardResult<T> OneRankerModel<T>::forward(const data::TrainingInstance& inst, const LossWeights& w,
                                            std::uint64_t value_seed, bool with_loss) const {
    const std::size_t n = inst.candidates.size();
    if (n == 0) throw std::invalid_argument("forward: instance has no candidates");
    ForwardResult<T> r;
    r.h1 = backbone_.encode_stream(data::to_token_stream(inst, cfg_.max_len));

    auto hetero_out = hetero_(tasks_, fakes_, r.h1);
    r.task_reps = hetero_out.task_reps;
    r.fake_reps = hetero_out.fake_reps;

    const std::size_t m = cfg_.interest_tokens;
    const auto bagged = bag_value_heads(slice_rows(r.task_reps, m, cfg_.task_count()));
    const auto head_in = concat<T>({slice_rows(r.task_reps, 0, m), bagged}, 0);
    r.e_task = heads(head_in);
    if (cfg_.use_target) r.s_target = target_(head_in, r.fake_reps);

    std::vector<const data::SemanticId*> sids(n);
    std::vector<std::size_t> ids(n);
    std::vector<double> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        sids[i] = &inst.candidates[i].sid;
        ids[i] = inst.candidates[i].item;
        labels[i] = inst.candidates[i].ecpm;
    }
    const auto comp = composite(sids);
    Tensor<T> cand_cos;
    if (cfg_.use_target) cand_cos = cosine_similarity(comp, fakes_);

    const auto value_row = slice_rows(r.e_task, m, m + 1);
    const auto value_user = user_representation(value_row, cfg_.use_target ? slice_rows(r.s_target, m, m + 1) : Tensor<T>{});
    const auto cand_rep = cfg_.use_target ? concat<T>({comp, cand_cos}, 1) : comp;
    r.gen_logits = score_user_item(value_user, cand_rep);

    if (cfg_.use_ranker) {
        const auto kv = cfg_.inject_s2_kv ? fuse_kv(r.h1, r.task_reps, r.fake_reps) : r.h1;
        const auto item_emb = gather_rows(backbone_.embedding.item, std::span<const std::size_t>(ids));
        r.rank_scores = ranker_(ranker_.candidate_tokens(item_emb, cand_cos), kv);
    }

    if (!with_loss) return r;

    double label_sum = 0.0;
    for (double y : labels) label_sum += y;
    r.value_target = label_sum > 0.0 ? data::sample_value_target(labels, value_seed)
                                     : static_cast<std::size_t>(mix64(value_seed) % n);
    std::vector<std::vector<std::uint32_t>> gt(cfg_.head_count(), inst.target.sid.path);
    gt[m] = inst.candidates[r.value_target].sid.path;

    std::vector<Tensor<T>> code_cos;
    if (cfg_.use_target) {
        for (const auto& book : codebooks_) code_cos.push_back(cosine_similarity(book, fakes_));
    }
    r.parts.mtp = mtp_loss(r.e_task, r.s_target, gt, std::span<const Tensor<T>>(codebooks_),
                           std::span<const Tensor<T>>(code_cos));
    if (cfg_.use_ranker) {
        if (w.beta != 0.0) r.parts.rank = bpr_rank_loss(r.rank_scores, labels);
        if (w.gamma != 0.0) r.parts.dc = dc_loss(r.rank_scores, r.gen_logits, w.tau);
    }
    r.total = total_loss(r.parts, w);
    return r;
}

template <typename T>
GenerationInputs OneRankerModel<T>::generation_inputs(const ForwardResult<T>& fwd) const {
    GenerationInputs in;
    in.d = cfg_.d;
    in.k = cfg_.active_fakes();
    for (std::size_t h = 0; h < fwd.e_task.rows(); ++h) {
        std::vector<double> e(cfg_.d), s(in.k);
        for (std::size_t x = 0; x < cfg_.d; ++x) e[x] = fwd.e_task.at(h, x);
        for (std::size_t j = 0; j < in.k; ++j) s[j] = fwd.s_target.at(h, j);
        in.e_task.push_back(std::move(e));
        in.s_target.push_back(std::move(s));
    }
    for (const auto& book : codebooks_) {
        in.codebooks.emplace_back(book.values().begin(), book.values().end());
        in.level_vocab.push_back(book.rows());
    }
    if (in.k) in.centers.assign(fakes_.values().begin(), fakes_.values().end());
    return in;
}

template class OneRankerModel<float>;
template class OneRankerModel<double>;

}  // namespace oneranker::model
