#include "oneranker/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "oneranker/common/parallel.hpp"
#include "oneranker/common/random.hpp"
#include "oneranker/data/io.hpp"

namespace oneranker::data {

std::size_t TrainingInstance::positive_index() const {
    std::size_t found = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].is_positive) {
            if (found != candidates.size()) throw std::runtime_error("TrainingInstance: more than one positive");
            found = i;
        }
    }
    if (found == candidates.size()) throw std::runtime_error("TrainingInstance: no positive candidate");
    return found;
}

void DataConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("DataConfig: ") + what);
    };
    need(num_items >= 2, "num_items must be >= 2");
    need(num_clusters >= 1 && num_clusters <= num_items, "num_clusters must be in [1, num_items]");
    need(embed_dim >= 1, "embed_dim must be >= 1");
    need(cluster_spread >= 0.0, "cluster_spread must be >= 0");
    need(num_records >= 1, "num_records must be >= 1");
    need(num_archetypes >= 1, "num_archetypes must be >= 1");
    need(dirichlet_alpha > 0.0, "dirichlet_alpha must be > 0");
    need(personal_mix >= 0.0 && personal_mix <= 1.0, "personal_mix must be in [0, 1]");
    need(history_length >= 1, "history_length must be >= 1");
    need(noise_rate >= 0.0 && noise_rate <= 1.0, "noise_rate must be in [0, 1]");
    need(ecpm_sigma >= 0.0, "ecpm_sigma must be >= 0");
    need(value_multiplier > 0.0, "value_multiplier must be > 0");
    need(high_value_clusters <= num_clusters, "high_value_clusters exceeds num_clusters");
    need(num_candidates >= 2 && num_candidates <= num_items, "num_candidates must be in [2, num_items]");
    need(hard_negative_ratio >= 0.0 && hard_negative_ratio <= 1.0, "hard_negative_ratio must be in [0, 1]");
    need(negative_label_scale >= 0.0, "negative_label_scale must be >= 0");
    need(sid_levels >= 1, "sid_levels must be >= 1");
    need(sid_branch >= 2, "sid_branch must be >= 2");
    need(valid_fraction >= 0.0 && test_fraction >= 0.0 && valid_fraction + test_fraction < 1.0,
         "valid_fraction + test_fraction must be < 1");
    need(user_vocab_demo >= num_archetypes, "user_vocab_demo must be >= num_archetypes");
    need(user_vocab_bucket >= 1 && context_vocab >= 1, "token vocabularies must be non-empty");
}

std::string data_fingerprint(const DataConfig& config, std::uint64_t seed) {
    auto j = to_json(config);
    j.erase("threads");
    j["seed"] = seed;
    const std::string text = j.dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text.data(), text.size())));
    return buf;
}

std::size_t sample_value_target_u(std::span<const double> ecpm, double u) {
    if (ecpm.empty()) throw std::invalid_argument("sample_value_target: empty value list");
    double total = 0.0;
    for (std::size_t i = 0; i < ecpm.size(); ++i) {
        if (!(ecpm[i] >= 0.0) || !std::isfinite(ecpm[i])) {
            throw std::invalid_argument("sample_value_target: value " + std::to_string(i) +
                                        " is negative or non-finite");
        }
        total += ecpm[i];
    }
    if (total <= 0.0) throw std::invalid_argument("sample_value_target: all values are zero");
    double acc = 0.0;
    const double x = u * total;
    std::size_t last = 0;
    for (std::size_t i = 0; i < ecpm.size(); ++i) {
        if (ecpm[i] <= 0.0) continue;
        acc += ecpm[i];
        last = i;
        if (x < acc) return i;
    }
    return last;
}

std::size_t sample_value_target(std::span<const double> ecpm, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_value_target_u(ecpm, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

namespace {

std::vector<double> dirichlet(std::size_t n, double alpha, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(alpha, 1.0);
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& x : p) s += (x = g(rng));
    if (s <= 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
        return p;
    }
    for (auto& x : p) x /= s;
    return p;
}

std::size_t draw(std::span<const double> weights, std::mt19937_64& rng) {
    return sample_value_target_u(weights, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

struct World {
    std::vector<ItemInfo> items;
    Matrix embeddings;
    std::vector<std::vector<std::uint32_t>> cluster_members;
    std::vector<std::vector<double>> archetype_pref;
    std::vector<std::size_t> level_vocab;
    std::vector<double> value_weight;  // ecpm^target_value_power
};

World build_world(const DataConfig& cfg, std::uint64_t seed) {
    World w;
    std::mt19937_64 rng(derive_seed(seed, {0x17e5}));
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix centers(cfg.num_clusters, cfg.embed_dim);
    for (double& v : centers.values) v = normal(rng);

    // Every cluster owns at least one item; the rest are assigned uniformly.
    std::vector<std::uint32_t> cluster_of(cfg.num_items);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        cluster_of[i] = i < cfg.num_clusters
                            ? static_cast<std::uint32_t>(i)
                            : static_cast<std::uint32_t>(
                                  std::uniform_int_distribution<std::size_t>(0, cfg.num_clusters - 1)(rng));
    }
    std::shuffle(cluster_of.begin(), cluster_of.end(), rng);

    w.embeddings = Matrix(cfg.num_items, cfg.embed_dim);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        auto row = w.embeddings.row(i);
        auto c = centers.row(cluster_of[i]);
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) row[j] = c[j] + cfg.cluster_spread * normal(rng);
    }

    std::vector<std::uint32_t> order(cfg.num_clusters);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> high(cfg.num_clusters, false);
    for (std::size_t i = 0; i < cfg.high_value_clusters; ++i) high[order[i]] = true;

    // Log-normal base values, rescaled to unit sample mean within each value
    // tier so tier means sit exactly at 1 and value_multiplier.
    std::vector<double> base(cfg.num_items);
    for (auto& b : base) b = std::exp(cfg.ecpm_sigma * normal(rng));
    double sum[2] = {0.0, 0.0};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        sum[high[cluster_of[i]]] += base[i];
        ++cnt[high[cluster_of[i]]];
    }

    w.items.resize(cfg.num_items);
    w.cluster_members.resize(cfg.num_clusters);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        const int tier = high[cluster_of[i]] ? 1 : 0;
        auto& it = w.items[i];
        it.item = static_cast<std::uint32_t>(i);
        it.cluster = cluster_of[i];
        it.high_value = tier == 1;
        it.ecpm = base[i] * static_cast<double>(cnt[tier]) / sum[tier] * (tier ? cfg.value_multiplier : 1.0);
        w.cluster_members[cluster_of[i]].push_back(static_cast<std::uint32_t>(i));
        w.value_weight.push_back(std::pow(it.ecpm, cfg.target_value_power));
    }

    SemanticIdOptions opt;
    opt.levels = cfg.sid_levels;
    opt.branch = cfg.sid_branch;
    opt.kmeans_iters = cfg.kmeans_iters;
    opt.seed = derive_seed(seed, {0x51d});
    auto table = build_semantic_ids(w.embeddings, opt);
    for (std::size_t i = 0; i < cfg.num_items; ++i) w.items[i].sid = table.paths[i];
    w.level_vocab = table.level_vocab;

    w.archetype_pref.resize(cfg.num_archetypes);
    for (auto& p : w.archetype_pref) p = dirichlet(cfg.num_clusters, cfg.dirichlet_alpha, rng);
    return w;
}

struct UserSample {
    InteractionRecord record;
    TrainingInstance instance;
};

UserSample sample_user(const DataConfig& cfg, const World& w, std::uint64_t seed, std::uint32_t user) {
    std::mt19937_64 rng(derive_seed(seed, {0x05e7, user}));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t archetype = std::uniform_int_distribution<std::size_t>(0, cfg.num_archetypes - 1)(rng);

    auto own = dirichlet(cfg.num_clusters, cfg.dirichlet_alpha, rng);
    std::vector<double> pref(cfg.num_clusters);
    double top = 0.0;
    for (std::size_t c = 0; c < cfg.num_clusters; ++c) {
        pref[c] = (1.0 - cfg.personal_mix) * w.archetype_pref[archetype][c] + cfg.personal_mix * own[c];
        top = std::max(top, pref[c]);
    }
    auto interest = [&](std::uint32_t item) { return top > 0.0 ? pref[w.items[item].cluster] / top : 0.0; };

    UserSample s;
    auto& rec = s.record;
    rec.user = user;
    const std::size_t demo_span = cfg.user_vocab_demo / cfg.num_archetypes;
    rec.user_tokens = {
        static_cast<std::uint32_t>(archetype * demo_span +
                                   std::uniform_int_distribution<std::size_t>(0, demo_span - 1)(rng)),
        static_cast<std::uint32_t>(cfg.user_vocab_demo + mix64(user) % cfg.user_vocab_bucket)};
    rec.context_tokens = {
        static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, cfg.context_vocab - 1)(rng))};

    for (std::size_t e = 0; e < cfg.history_length; ++e) {
        std::uint32_t item;
        if (unif(rng) < cfg.noise_rate) {
            item = static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, cfg.num_items - 1)(rng));
        } else {
            const auto& members = w.cluster_members[draw(pref, rng)];
            item = members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];
        }
        const double a = interest(item);
        Event ev;
        ev.item = item;
        ev.sid = w.items[item].sid;
        ev.ecpm = w.items[item].ecpm;
        ev.impression = true;
        ev.click = unif(rng) < 0.05 + 0.6 * a;
        ev.conversion = ev.click && unif(rng) < 0.1 + 0.4 * a;
        if (ev.click) ev.content_tokens.push_back(ev.conversion ? kContentConversion : kContentClick);
        rec.events.push_back(std::move(ev));
    }

    auto& inst = s.instance;
    inst.user_tokens = rec.user_tokens;
    inst.context_tokens = rec.context_tokens;
    for (const auto& ev : rec.events) {
        inst.history.push_back(HistoryEvent{ev.item, ev.sid, ev.impression, ev.click, ev.conversion, ev.ecpm});
    }

    // Next item: interest times value, so the positive leans towards high eCPM.
    std::vector<double> weight(cfg.num_items);
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
        weight[i] = pref[w.items[i].cluster] * w.value_weight[i];
    }
    const auto target = static_cast<std::uint32_t>(draw(weight, rng));
    inst.target = Target{target, w.items[target].sid};

    std::vector<std::uint32_t> chosen{target};
    std::unordered_set<std::uint32_t> taken{target};
    const std::size_t negatives = cfg.num_candidates - 1;
    const auto hard_want = static_cast<std::size_t>(std::llround(cfg.hard_negative_ratio * static_cast<double>(negatives)));
    std::vector<std::uint32_t> pool = w.cluster_members[w.items[target].cluster];
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::uint32_t item : pool) {
        if (chosen.size() > hard_want) break;
        if (taken.insert(item).second) chosen.push_back(item);
    }
    while (chosen.size() < cfg.num_candidates) {
        const auto item =
            static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, cfg.num_items - 1)(rng));
        if (taken.insert(item).second) chosen.push_back(item);
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
    for (std::uint32_t item : chosen) {
        Candidate c;
        c.item = item;
        c.sid = w.items[item].sid;
        c.is_positive = item == target;
        c.ecpm = c.is_positive ? w.items[item].ecpm
                               : w.items[item].ecpm * std::min(1.0, cfg.negative_label_scale * interest(item));
        inst.candidates.push_back(std::move(c));
    }
    return s;
}

}  // namespace

Dataset generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    World w = build_world(cfg, seed);

    std::vector<UserSample> users(cfg.num_records);
    parallel_for(cfg.num_records, cfg.threads,
                 [&](std::size_t u) { users[u] = sample_user(cfg, w, seed, static_cast<std::uint32_t>(u)); });

    Dataset ds;
    ds.items = std::move(w.items);
    const auto valid_cut = static_cast<std::uint64_t>(cfg.valid_fraction * 1e6);
    const auto test_cut = static_cast<std::uint64_t>((cfg.valid_fraction + cfg.test_fraction) * 1e6);
    for (std::size_t u = 0; u < users.size(); ++u) {
        const std::uint64_t bucket = derive_seed(seed, {0x5b17, u}) % 1000000;
        auto& inst = users[u].instance;
        if (bucket < valid_cut) {
            ds.valid.push_back(std::move(inst));
        } else if (bucket < test_cut) {
            ds.test.push_back(std::move(inst));
        } else {
            ds.train.push_back(std::move(inst));
        }
        ds.records.push_back(std::move(users[u].record));
    }

    auto& m = ds.manifest;
    m.record_count = ds.records.size();
    m.fingerprint = data_fingerprint(cfg, seed);
    m.seed = seed;
    m.level_vocab = w.level_vocab;
    m.item_count = ds.items.size();
    m.train_count = ds.train.size();
    m.valid_count = ds.valid.size();
    m.test_count = ds.test.size();
    m.user_vocab = cfg.user_vocab_demo + cfg.user_vocab_bucket;
    m.context_vocab = cfg.context_vocab;
    return ds;
}

DatasetManifest generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed,
                                           const std::filesystem::path& dir) {
    Dataset ds = generate_synthetic_dataset(cfg, seed);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("generate_synthetic_dataset: cannot create " + dir.string() + ": " + ec.message());

    auto dump = [&](const char* name, const auto& rows) {
        std::string text;
        for (const auto& r : rows) text += to_jsonl_line(to_json(r));
        write_text(dir / name, text);
    };
    dump("items.jsonl", ds.items);
    dump("interactions.jsonl", ds.records);
    dump("train.jsonl", ds.train);
    dump("valid.jsonl", ds.valid);
    dump("test.jsonl", ds.test);
    auto manifest = to_json(ds.manifest);
    manifest["config"] = to_json(cfg);
    manifest["config"].erase("threads");
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return ds.manifest;
}

}  // namespace oneranker::data
