#include "oneranker/data/io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "oneranker/common/random.hpp"

namespace oneranker::data {

namespace {

using json = nlohmann::json;

ordered_json sid_json(const SemanticId& sid) { return ordered_json(sid.path); }

SemanticId sid_from(const json& j) { return SemanticId{j.get<std::vector<std::uint32_t>>()}; }

const json& field(const json& j, const char* key) {
    if (!j.is_object()) throw std::runtime_error("expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw std::runtime_error(std::string("missing field '") + key + "'");
    return *it;
}

template <typename T>
T get(const json& j, const char* key) {
    try {
        return field(j, key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("field '") + key + "': " + e.what());
    }
}

template <typename T, typename F>
std::vector<T> load_lines(const std::filesystem::path& path, F&& parse) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(parse(json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
        }
    }
    return out;
}

}  // namespace

ordered_json to_json(const TrainingInstance& inst) {
    ordered_json j;
    j["user_tokens"] = inst.user_tokens;
    j["context_tokens"] = inst.context_tokens;
    ordered_json hist = ordered_json::array();
    for (const auto& h : inst.history) {
        ordered_json e;
        e["item"] = h.item;
        e["sid"] = sid_json(h.sid);
        e["flags"] = {{"impression", h.impression}, {"click", h.click}, {"conversion", h.conversion}};
        e["ecpm"] = h.ecpm;
        hist.push_back(std::move(e));
    }
    j["history"] = std::move(hist);
    j["target"] = {{"item", inst.target.item}, {"sid", sid_json(inst.target.sid)}};
    ordered_json cands = ordered_json::array();
    for (const auto& c : inst.candidates) {
        ordered_json e;
        e["item"] = c.item;
        e["sid"] = sid_json(c.sid);
        e["ecpm"] = c.ecpm;
        e["is_positive"] = c.is_positive;
        cands.push_back(std::move(e));
    }
    j["candidates"] = std::move(cands);
    return j;
}

TrainingInstance instance_from_json(const json& j) {
    TrainingInstance inst;
    inst.user_tokens = get<std::vector<std::uint32_t>>(j, "user_tokens");
    inst.context_tokens = get<std::vector<std::uint32_t>>(j, "context_tokens");
    for (const auto& e : field(j, "history")) {
        HistoryEvent h;
        h.item = get<std::uint32_t>(e, "item");
        h.sid = sid_from(field(e, "sid"));
        const auto& flags = field(e, "flags");
        h.impression = get<bool>(flags, "impression");
        h.click = get<bool>(flags, "click");
        h.conversion = get<bool>(flags, "conversion");
        h.ecpm = get<double>(e, "ecpm");
        inst.history.push_back(std::move(h));
    }
    const auto& t = field(j, "target");
    inst.target = Target{get<std::uint32_t>(t, "item"), sid_from(field(t, "sid"))};
    for (const auto& e : field(j, "candidates")) {
        Candidate c;
        c.item = get<std::uint32_t>(e, "item");
        c.sid = sid_from(field(e, "sid"));
        c.ecpm = get<double>(e, "ecpm");
        c.is_positive = get<bool>(e, "is_positive");
        inst.candidates.push_back(std::move(c));
    }
    return inst;
}

ordered_json to_json(const InteractionRecord& rec) {
    ordered_json j;
    j["user"] = rec.user;
    j["user_tokens"] = rec.user_tokens;
    j["context_tokens"] = rec.context_tokens;
    ordered_json events = ordered_json::array();
    for (const auto& ev : rec.events) {
        ordered_json e;
        e["item_id"] = ev.item;
        e["semantic_id"] = sid_json(ev.sid);
        e["content_tokens"] = ev.content_tokens;
        e["impression"] = ev.impression;
        e["click"] = ev.click;
        e["conversion"] = ev.conversion;
        e["ecpm"] = ev.ecpm;
        events.push_back(std::move(e));
    }
    j["events"] = std::move(events);
    return j;
}

InteractionRecord record_from_json(const json& j) {
    InteractionRecord rec;
    rec.user = get<std::uint32_t>(j, "user");
    rec.user_tokens = get<std::vector<std::uint32_t>>(j, "user_tokens");
    rec.context_tokens = get<std::vector<std::uint32_t>>(j, "context_tokens");
    for (const auto& e : field(j, "events")) {
        Event ev;
        ev.item = get<std::uint32_t>(e, "item_id");
        ev.sid = sid_from(field(e, "semantic_id"));
        ev.content_tokens = get<std::vector<std::uint32_t>>(e, "content_tokens");
        ev.impression = get<bool>(e, "impression");
        ev.click = get<bool>(e, "click");
        ev.conversion = get<bool>(e, "conversion");
        ev.ecpm = get<double>(e, "ecpm");
        rec.events.push_back(std::move(ev));
    }
    return rec;
}

ordered_json to_json(const ItemInfo& item) {
    ordered_json j;
    j["item"] = item.item;
    j["cluster"] = item.cluster;
    j["sid"] = sid_json(item.sid);
    j["ecpm"] = item.ecpm;
    j["high_value"] = item.high_value;
    return j;
}

ItemInfo item_from_json(const json& j) {
    ItemInfo it;
    it.item = get<std::uint32_t>(j, "item");
    it.cluster = get<std::uint32_t>(j, "cluster");
    it.sid = sid_from(field(j, "sid"));
    it.ecpm = get<double>(j, "ecpm");
    it.high_value = get<bool>(j, "high_value");
    return it;
}

ordered_json to_json(const DatasetManifest& m) {
    ordered_json j;
    j["record_count"] = m.record_count;
    j["fingerprint"] = m.fingerprint;
    j["seed"] = m.seed;
    j["level_vocab"] = m.level_vocab;
    j["item_count"] = m.item_count;
    j["train_count"] = m.train_count;
    j["valid_count"] = m.valid_count;
    j["test_count"] = m.test_count;
    j["user_vocab"] = m.user_vocab;
    j["context_vocab"] = m.context_vocab;
    return j;
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.record_count = get<std::size_t>(j, "record_count");
    m.fingerprint = get<std::string>(j, "fingerprint");
    m.seed = get<std::uint64_t>(j, "seed");
    m.level_vocab = get<std::vector<std::size_t>>(j, "level_vocab");
    m.item_count = get<std::size_t>(j, "item_count");
    m.train_count = get<std::size_t>(j, "train_count");
    m.valid_count = get<std::size_t>(j, "valid_count");
    m.test_count = get<std::size_t>(j, "test_count");
    m.user_vocab = get<std::size_t>(j, "user_vocab");
    m.context_vocab = get<std::size_t>(j, "context_vocab");
    return m;
}

#define ONERANKER_DATA_FIELDS(X) \
    X(num_items)                 \
    X(num_clusters)              \
    X(embed_dim)                 \
    X(cluster_spread)            \
    X(num_records)               \
    X(num_archetypes)            \
    X(dirichlet_alpha)           \
    X(personal_mix)              \
    X(history_length)            \
    X(noise_rate)                \
    X(ecpm_sigma)                \
    X(value_multiplier)          \
    X(high_value_clusters)       \
    X(target_value_power)        \
    X(num_candidates)            \
    X(hard_negative_ratio)       \
    X(negative_label_scale)      \
    X(sid_levels)                \
    X(sid_branch)                \
    X(kmeans_iters)              \
    X(valid_fraction)            \
    X(test_fraction)             \
    X(user_vocab_demo)           \
    X(user_vocab_bucket)         \
    X(context_vocab)             \
    X(threads)

ordered_json to_json(const DataConfig& c) {
    ordered_json j;
#define X(name) j[#name] = c.name;
    ONERANKER_DATA_FIELDS(X)
#undef X
    return j;
}

DataConfig data_config_from_json(const json& j, DataConfig c) {
    if (!j.is_object()) throw std::invalid_argument("data config: expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        bool known = false;
#define X(name)                                                                              \
    if (key == #name) {                                                                      \
        known = true;                                                                        \
        try {                                                                                \
            c.name = it.value().get<decltype(c.name)>();                                     \
        } catch (const nlohmann::json::exception& e) {                                       \
            throw std::invalid_argument("data config: bad value for '" + key + "': " + e.what()); \
        }                                                                                    \
    }
        ONERANKER_DATA_FIELDS(X)
#undef X
        if (!known) throw std::invalid_argument("data config: unknown key '" + key + "'");
    }
    return c;
}

std::string to_jsonl_line(const ordered_json& j) { return j.dump() + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<TrainingInstance> load_dataset(const std::filesystem::path& path) {
    return load_lines<TrainingInstance>(path, instance_from_json);
}

std::vector<ItemInfo> load_items(const std::filesystem::path& path) {
    return load_lines<ItemInfo>(path, item_from_json);
}

std::vector<InteractionRecord> load_records(const std::filesystem::path& path) {
    return load_lines<InteractionRecord>(path, record_from_json);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    try {
        return manifest_from_json(json::parse(read_text(path)));
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
    }
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
    Dataset ds;
    ds.manifest = load_manifest(dir / "manifest.json");
    ds.items = load_items(dir / "items.jsonl");
    ds.records = load_records(dir / "interactions.jsonl");
    ds.train = load_dataset(dir / "train.jsonl");
    ds.valid = load_dataset(dir / "valid.jsonl");
    ds.test = load_dataset(dir / "test.jsonl");
    return ds;
}

std::vector<std::vector<std::size_t>> batch(std::size_t count, std::size_t size, std::uint64_t seed,
                                            std::uint64_t epoch) {
    if (size == 0) throw std::invalid_argument("batch: size must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, {0xba7c, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < count; i += size) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + size)));
    }
    return out;
}

}  // namespace oneranker::data
