#include "oneranker/harness/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "oneranker/common/parallel.hpp"
#include "oneranker/common/random.hpp"
#include "oneranker/data/io.hpp"

namespace oneranker::harness {

using tensor::NoGradGuard;
using tensor::Tensor;

void configure_for_dataset(RunConfig& c, const data::DatasetManifest& m) {
    c.model.user_vocab = m.user_vocab;
    c.model.context_vocab = m.context_vocab;
    c.model.item_count = m.item_count;
    c.model.level_vocab.assign(m.level_vocab.begin(), m.level_vocab.end());
}

void Adam::step(Model& model) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : model.store().entries()) {
        if (!model.trainable(name)) continue;
        const auto g = p.grad();
        if (g.empty()) continue;
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        auto& w = const_cast<Tensor<float>&>(p).mutable_values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            w[i] -= static_cast<float>(cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps));
        }
    }
}

std::vector<ScoredInstance> score_split(const Model& model, const std::vector<data::TrainingInstance>& instances,
                                        std::size_t threads) {
    std::vector<ScoredInstance> out(instances.size());
    parallel_for(instances.size(), threads, [&](std::size_t i) {
        NoGradGuard guard;
        const auto& inst = instances[i];
        const auto fwd = model.forward(inst, {}, 0, false);
        auto& s = out[i];
        const std::size_t n = inst.candidates.size();
        for (std::size_t c = 0; c < n; ++c) {
            s.step2.push_back(fwd.gen_logits.values()[c]);
            s.ids.push_back(inst.candidates[c].item);
            s.gains.push_back(inst.candidates[c].ecpm);
            if (fwd.rank_scores.defined()) s.step3.push_back(fwd.rank_scores.values()[c]);
        }
        s.positive = inst.positive_index();
    });
    return out;
}

std::vector<MetricsRow> ranking_metrics(const std::vector<ScoredInstance>& scored, const std::vector<std::size_t>& ks,
                                        std::size_t epoch, const std::string& split) {
    if (scored.empty()) throw std::invalid_argument("ranking_metrics: no instances");
    std::vector<double> hr(ks.size(), 0.0), ndcg(ks.size(), 0.0);
    for (const auto& s : scored) {
        const auto& scores = s.step3.empty() ? s.step2 : s.step3;
        const auto order = rank_order(scores, s.ids);
        for (std::size_t j = 0; j < ks.size(); ++j) {
            hr[j] += hr_at_k(order, s.positive, ks[j]);
            ndcg[j] += ndcg_at_k(order, s.gains, ks[j]);
        }
    }
    std::vector<MetricsRow> rows;
    const double count = static_cast<double>(scored.size());
    for (std::size_t j = 0; j < ks.size(); ++j) rows.push_back({epoch, split, "hr", ks[j], hr[j] / count});
    for (std::size_t j = 0; j < ks.size(); ++j) rows.push_back({epoch, split, "ndcg", ks[j], ndcg[j] / count});
    return rows;
}

ConsistencyReport consistency_from_scores(const std::vector<ScoredInstance>& scored) {
    std::vector<std::vector<double>> s2, s3;
    std::vector<std::vector<std::uint32_t>> ids;
    for (const auto& s : scored) {
        if (s.step3.empty()) continue;
        s2.push_back(s.step2);
        s3.push_back(s.step3);
        ids.push_back(s.ids);
    }
    if (s2.empty()) throw std::invalid_argument("consistency: model has no Step-3 ranker");
    return consistency_report(s2, s3, ids);
}

std::unique_ptr<Model> make_model(const RunConfig& config, const data::Dataset& dataset) {
    auto model = std::make_unique<Model>(config.model, config.seed);
    std::vector<data::SemanticId> sids;
    sids.reserve(dataset.items.size());
    for (const auto& it : dataset.items) sids.push_back(it.sid);
    model->init_fake_items(sids, config.seed);
    return model;
}

namespace {

double value_of(const Tensor<float>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; }

struct Accum {
    double loss = 0, mtp = 0, rank = 0, dc = 0;
    void add(const Accum& o) {
        loss += o.loss;
        mtp += o.mtp;
        rank += o.rank;
        dc += o.dc;
    }
};

// Forward and backward over `idx` on `m`, loss scaled by 1/batch.
Accum run_chunk(Model& m, const std::vector<data::TrainingInstance>& insts, std::span<const std::size_t> idx,
                std::size_t batch, const RunConfig& cfg, std::size_t epoch, std::size_t b) {
    Accum a;
    const float inv = 1.0f / static_cast<float>(batch);
    for (std::size_t i : idx) {
        const auto fwd = m.forward(insts[i], cfg.loss, derive_seed(cfg.seed, {0x7a1e, epoch, i}), true);
        const double total = value_of(fwd.total);
        if (!std::isfinite(total)) {
            throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                                     std::to_string(b) + " instance " + std::to_string(i) +
                                     ": mtp=" + std::to_string(value_of(fwd.parts.mtp)) +
                                     " rank=" + std::to_string(value_of(fwd.parts.rank)) +
                                     " dc=" + std::to_string(value_of(fwd.parts.dc)));
        }
        tensor::reverse_accumulate(tensor::scale(fwd.total, inv));
        a.loss += total;
        a.mtp += value_of(fwd.parts.mtp);
        a.rank += value_of(fwd.parts.rank);
        a.dc += value_of(fwd.parts.dc);
    }
    return a;
}

void copy_values(const Model& from, Model& to) {
    const auto& src = from.store().entries();
    const auto& dst = to.store().entries();
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto& w = const_cast<Tensor<float>&>(dst[i].second).mutable_values();
        const auto v = src[i].second.values();
        std::copy(v.begin(), v.end(), w.begin());
    }
}

}  // namespace

TrainOutcome train(Model& model, const data::Dataset& dataset, const RunConfig& config, const ProgressFn& progress) {
    config.validate();
    std::vector<data::TrainingInstance> train_set = dataset.train;
    if (config.train.max_train > 0 && train_set.size() > config.train.max_train) train_set.resize(config.train.max_train);
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");

    const std::size_t threads = std::max<std::size_t>(1, config.threads);
    std::vector<std::unique_ptr<Model>> replicas;
    for (std::size_t t = 1; t < threads; ++t) replicas.push_back(std::make_unique<Model>(config.model, config.seed));

    Adam opt(config.optim);
    TrainOutcome out;
    for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
        const auto batches = data::batch(train_set.size(), config.train.batch_size, config.seed, epoch);
        Accum sum;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            model.store().zero_grad();
            if (replicas.empty()) {
                sum.add(run_chunk(model, train_set, idx, idx.size(), config, epoch, b));
            } else {
                const std::size_t parts = std::min(threads, idx.size());
                const std::size_t chunk = (idx.size() + parts - 1) / parts;
                std::vector<Model*> workers{&model};
                for (std::size_t t = 1; t < parts; ++t) {
                    copy_values(model, *replicas[t - 1]);
                    replicas[t - 1]->store().zero_grad();
                    workers.push_back(replicas[t - 1].get());
                }
                std::vector<Accum> acc(parts);
                parallel_for(parts, parts, [&](std::size_t t) {
                    const std::size_t lo = std::min(idx.size(), t * chunk);
                    const std::size_t hi = std::min(idx.size(), lo + chunk);
                    acc[t] = run_chunk(*workers[t], train_set, std::span(idx).subspan(lo, hi - lo), idx.size(), config,
                                       epoch, b);
                });
                // Fixed reduction order: thread 0 (the master) first, then 1, 2, ...
                const auto& dst = model.store().entries();
                for (std::size_t t = 1; t < parts; ++t) {
                    const auto& src = workers[t]->store().entries();
                    for (std::size_t p = 0; p < dst.size(); ++p) {
                        const auto g = src[p].second.grad();
                        if (g.empty()) continue;
                        auto& mg = const_cast<Tensor<float>&>(dst[p].second).mutable_grad();
                        if (mg.empty()) mg.assign(g.size(), 0.0f);
                        for (std::size_t x = 0; x < g.size(); ++x) mg[x] += g[x];
                    }
                }
                for (const auto& a : acc) sum.add(a);
            }
            opt.step(model);
        }
        const double count = static_cast<double>(train_set.size());
        EpochLog log{epoch + 1, sum.loss / count, sum.mtp / count, sum.rank / count, sum.dc / count};
        out.epochs.push_back(log);
        out.rows.push_back({epoch + 1, "train", "loss", 0, log.loss});
        out.rows.push_back({epoch + 1, "train", "mtp", 0, log.mtp});
        out.rows.push_back({epoch + 1, "train", "rank", 0, log.rank});
        out.rows.push_back({epoch + 1, "train", "dc", 0, log.dc});
        if (!dataset.valid.empty()) {
            const auto rows = ranking_metrics(score_split(model, dataset.valid, threads), config.eval.ks, epoch + 1, "valid");
            out.rows.insert(out.rows.end(), rows.begin(), rows.end());
        }
        if (progress) progress(log);
    }
    return out;
}

namespace {

constexpr char kMagic[] = "ONERANKER-CKPT 1\n";

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_str(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::string get_str(std::istream& is) {
    const auto n = get_u64(is);
    if (n > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

std::ifstream open_checkpoint(const std::filesystem::path& path, LoadedCheckpoint& head) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::string magic(sizeof kMagic - 1, '\0');
    if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kMagic) {
        throw std::runtime_error("checkpoint: " + path.string() + " is not a checkpoint");
    }
    head.fingerprint = get_str(is);
    head.data_fingerprint = get_str(is);
    head.config = nlohmann::ordered_json::parse(get_str(is));
    return is;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const RunConfig& config,
                     const std::string& data_fingerprint) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
    os.write(kMagic, sizeof kMagic - 1);
    put_str(os, run_fingerprint(config));
    put_str(os, data_fingerprint);
    put_str(os, to_json(config).dump());
    const auto& entries = model.store().entries();
    put_u64(os, entries.size());
    for (const auto& [name, t] : entries) {
        put_str(os, name);
        put_u64(os, t.shape().size());
        for (auto s : t.shape()) put_u64(os, s);
        const auto v = t.values();
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

LoadedCheckpoint read_checkpoint_header(const std::filesystem::path& path) {
    LoadedCheckpoint head;
    open_checkpoint(path, head);
    return head;
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                                       const std::string& data_fingerprint) {
    LoadedCheckpoint head;
    auto is = open_checkpoint(path, head);
    const auto want = run_fingerprint(config);
    if (head.fingerprint != want) {
        throw std::runtime_error("checkpoint fingerprint mismatch: file " + head.fingerprint + ", config " + want);
    }
    if (head.data_fingerprint != data_fingerprint) {
        throw std::runtime_error("checkpoint data fingerprint mismatch: file " + head.data_fingerprint + ", dataset " +
                                 data_fingerprint);
    }
    auto model = std::make_unique<Model>(config.model, config.seed);
    const auto count = get_u64(is);
    if (count != model->store().entries().size()) {
        throw std::runtime_error("checkpoint: parameter count " + std::to_string(count) + " does not match the model");
    }
    for (std::uint64_t p = 0; p < count; ++p) {
        const auto name = get_str(is);
        const auto* t = model->store().find(name);
        if (!t) throw std::runtime_error("checkpoint: unexpected parameter " + name);
        const auto rank = get_u64(is);
        tensor::Shape shape;
        for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get_u64(is));
        if (shape != t->shape()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
        auto& w = const_cast<Tensor<float>*>(t)->mutable_values();
        if (!is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(float)))) {
            throw std::runtime_error("checkpoint: truncated file");
        }
    }
    return model;
}

}  // namespace oneranker::harness
