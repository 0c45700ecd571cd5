#include "oneranker/harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "oneranker/common/random.hpp"
#include "oneranker/data/io.hpp"

namespace oneranker::harness {

using nlohmann::json;
using nlohmann::ordered_json;

#define ONERANKER_RUN_FIELDS(X) X(seed) X(variant) X(data_dir) X(out_dir) X(threads)
#define ONERANKER_MODEL_FIELDS(X)                                                                             \
    X(d) X(heads) X(ffn_dim) X(backbone_layers) X(hetero_layers) X(ranker_layers) X(interest_tokens)          \
    X(value_tokens) X(fake_items) X(target_hidden) X(max_len) X(beam_width) X(init_std) X(cell_type)          \
    X(use_target) X(shared_head) X(cross_attention_first) X(hetero_mask) X(use_ranker) X(inject_s2_kv)        \
    X(freeze_fake_items)
#define ONERANKER_LOSS_FIELDS(X) X(alpha) X(beta) X(gamma) X(tau)
#define ONERANKER_OPTIM_FIELDS(X) X(lr) X(beta1) X(beta2) X(eps)
#define ONERANKER_TRAIN_FIELDS(X) X(epochs) X(batch_size) X(max_train)
#define ONERANKER_EVAL_FIELDS(X) X(ks) X(generate_n)

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
#define X(name) j["run"][#name] = c.name;
    ONERANKER_RUN_FIELDS(X)
#undef X
    j["data"] = data::to_json(c.data);
#define X(name) j["model"][#name] = c.model.name;
    ONERANKER_MODEL_FIELDS(X)
#undef X
#define X(name) j["loss"][#name] = c.loss.name;
    ONERANKER_LOSS_FIELDS(X)
#undef X
#define X(name) j["optim"][#name] = c.optim.name;
    ONERANKER_OPTIM_FIELDS(X)
#undef X
#define X(name) j["train"][#name] = c.train.name;
    ONERANKER_TRAIN_FIELDS(X)
#undef X
#define X(name) j["eval"][#name] = c.eval.name;
    ONERANKER_EVAL_FIELDS(X)
#undef X
    return j;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    const auto j = to_json(RunConfig{});
    for (auto s = j.begin(); s != j.end(); ++s) {
        for (auto k = s.value().begin(); k != s.value().end(); ++k) keys.push_back(s.key() + "." + k.key());
    }
    return keys;
}

std::string nearest_key(const std::string& key) {
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& k : config_keys()) {
        // Compare the bare key too, so "gama" finds "loss.gamma".
        const auto bare = k.substr(k.find('.') + 1);
        const std::size_t d = std::min(levenshtein(key, k), levenshtein(key, bare));
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

namespace {

[[noreturn]] void unknown_key(const std::string& key) {
    throw std::invalid_argument("unknown config key '" + key + "' (nearest valid key: '" + nearest_key(key) + "')");
}

template <typename A, typename B>
bool same_kind(const A& want, const B& got) {
    if (want.is_number()) return got.is_number() && !(want.is_number_integer() && got.is_number_float());
    if (want.is_boolean()) return got.is_boolean();
    if (want.is_string()) return got.is_string();
    if (want.is_array()) return got.is_array();
    return true;
}

// Validates `patch` against the structure of `full` and writes it in place.
void merge(ordered_json& full, const json& patch) {
    if (!patch.is_object()) throw std::invalid_argument("config: top level must be an object of sections");
    for (auto s = patch.begin(); s != patch.end(); ++s) {
        if (!full.contains(s.key())) unknown_key(s.key());
        if (!s.value().is_object()) throw std::invalid_argument("config: section '" + s.key() + "' must be an object");
        auto& section = full[s.key()];
        for (auto k = s.value().begin(); k != s.value().end(); ++k) {
            const std::string dotted = s.key() + "." + k.key();
            if (!section.contains(k.key())) unknown_key(dotted);
            if (!same_kind(section[k.key()], k.value())) {
                throw std::invalid_argument("config: bad value type for '" + dotted + "': " + k.value().dump());
            }
            if (k.value().is_number_integer() && k.value().get<long long>() < 0 && section[k.key()].is_number_unsigned()) {
                throw std::invalid_argument("config: '" + dotted + "' must be non-negative");
            }
            section[k.key()] = k.value();
        }
    }
}

RunConfig from_full(const json& j) {
    RunConfig c;
#define X(name) c.name = j.at("run").at(#name).get<decltype(c.name)>();
    ONERANKER_RUN_FIELDS(X)
#undef X
    c.data = data::data_config_from_json(j.at("data"));
#define X(name) c.model.name = j.at("model").at(#name).get<decltype(c.model.name)>();
    ONERANKER_MODEL_FIELDS(X)
#undef X
#define X(name) c.loss.name = j.at("loss").at(#name).get<decltype(c.loss.name)>();
    ONERANKER_LOSS_FIELDS(X)
#undef X
#define X(name) c.optim.name = j.at("optim").at(#name).get<decltype(c.optim.name)>();
    ONERANKER_OPTIM_FIELDS(X)
#undef X
#define X(name) c.train.name = j.at("train").at(#name).get<decltype(c.train.name)>();
    ONERANKER_TRAIN_FIELDS(X)
#undef X
#define X(name) c.eval.name = j.at("eval").at(#name).get<decltype(c.eval.name)>();
    ONERANKER_EVAL_FIELDS(X)
#undef X
    return c;
}

RunConfig rebuild(const RunConfig& base, const ordered_json& full) {
    RunConfig c = from_full(json::parse(full.dump()));
    // Dataset-derived model fields are not in the file; keep the base's.
    c.model.user_vocab = base.model.user_vocab;
    c.model.context_vocab = base.model.context_vocab;
    c.model.item_count = base.model.item_count;
    c.model.level_vocab = base.model.level_vocab;
    return c;
}

}  // namespace

void RunConfig::validate() const {
    data.validate();
    model.validate();
    loss.validate();
    if (!(optim.lr > 0.0) || !(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0) ||
        !(optim.eps > 0.0)) {
        throw std::invalid_argument("RunConfig: invalid optimizer settings");
    }
    if (train.epochs == 0 || train.batch_size == 0) throw std::invalid_argument("RunConfig: epochs and batch_size must be >= 1");
    if (threads == 0) throw std::invalid_argument("RunConfig: threads must be >= 1");
    if (eval.ks.empty()) throw std::invalid_argument("RunConfig: eval.ks must be non-empty");
    for (auto k : eval.ks) {
        if (k == 0 || k > data.num_candidates) throw std::invalid_argument("RunConfig: eval.ks entries must be in [1, num_candidates]");
    }
    if (std::find(variant_names().begin(), variant_names().end(), variant) == variant_names().end()) {
        throw std::invalid_argument("RunConfig: unknown variant '" + variant + "'");
    }
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
    auto full = to_json(base);
    merge(full, j);
    return rebuild(base, full);
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(data::read_text(path));
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not section.key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    const auto dot = key.find('.');
    if (dot == std::string::npos) unknown_key(key);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json patch;
    patch[key.substr(0, dot)][key.substr(dot + 1)] = value;
    config = run_config_from_json(patch, config);
}

std::string run_fingerprint(const RunConfig& config) {
    auto j = to_json(config);
    j["run"].erase("data_dir");
    j["run"].erase("out_dir");
    j["run"].erase("threads");
    j["data"].erase("threads");
    const std::string text = j.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
    return buf;
}

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names{
        "full", "wo_dc_loss", "wo_s2_token_injection", "s3_ranker_only", "s2",
        "s2_wo_target", "s2_wo_target_mda", "s2_baseline", "s2_wo_ca_pri", "s2_wo_h_mask"};
    return names;
}

RunConfig with_variant(RunConfig c, const std::string& v) {
    c.variant = v;
    if (v == "full") return c;
    if (v == "wo_dc_loss") {
        c.loss.gamma = 0.0;
    } else if (v == "wo_s2_token_injection") {
        c.model.inject_s2_kv = false;
    } else if (v == "s3_ranker_only") {
        c.loss.gamma = 0.0;
        c.model.inject_s2_kv = false;
    } else if (v == "s2" || v == "s2_baseline") {
        c.model.use_ranker = false;
    } else if (v == "s2_wo_target") {
        c.model.use_ranker = false;
        c.model.use_target = false;
    } else if (v == "s2_wo_target_mda") {
        c.model.use_ranker = false;
        c.model.use_target = false;
        c.model.shared_head = true;
    } else if (v == "s2_wo_ca_pri") {
        c.model.use_ranker = false;
        c.model.cross_attention_first = false;
    } else if (v == "s2_wo_h_mask") {
        c.model.use_ranker = false;
        c.model.hetero_mask = false;
    } else {
        throw std::invalid_argument("unknown variant '" + v + "'");
    }
    return c;
}

std::vector<RunConfig> ablation_matrix(const RunConfig& base) {
    std::vector<RunConfig> out;
    for (const auto& v : variant_names()) out.push_back(with_variant(base, v));
    return out;
}

std::string canonical_variant(const std::string& v) { return v == "s2_baseline" ? "s2" : v; }

}  // namespace oneranker::harness
