#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "oneranker/data/semantic_id.hpp"

namespace oneranker::data {

// Feedback token ids emitted as content tokens after an engaged event.
inline constexpr std::uint32_t kContentClick = 0;
inline constexpr std::uint32_t kContentConversion = 1;
inline constexpr std::size_t kContentVocab = 2;

struct Event {
    std::uint32_t item = 0;
    SemanticId sid;
    std::vector<std::uint32_t> content_tokens;
    bool impression = true;
    bool click = false;
    bool conversion = false;
    double ecpm = 0.0;

    friend bool operator==(const Event&, const Event&) = default;
};

struct InteractionRecord {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> user_tokens;
    std::vector<std::uint32_t> context_tokens;
    std::vector<Event> events;  // chronological

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

struct HistoryEvent {
    std::uint32_t item = 0;
    SemanticId sid;
    bool impression = true;
    bool click = false;
    bool conversion = false;
    double ecpm = 0.0;

    friend bool operator==(const HistoryEvent&, const HistoryEvent&) = default;
};

struct Target {
    std::uint32_t item = 0;
    SemanticId sid;

    friend bool operator==(const Target&, const Target&) = default;
};

struct Candidate {
    std::uint32_t item = 0;
    SemanticId sid;
    double ecpm = 0.0;  // value label of this candidate for this user
    bool is_positive = false;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct TrainingInstance {
    std::vector<std::uint32_t> user_tokens;
    std::vector<std::uint32_t> context_tokens;
    std::vector<HistoryEvent> history;
    Target target;
    std::vector<Candidate> candidates;

    std::size_t positive_index() const;

    friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

struct ItemInfo {
    std::uint32_t item = 0;
    std::uint32_t cluster = 0;  // planted cluster
    SemanticId sid;
    double ecpm = 0.0;          // base per-item value
    bool high_value = false;

    friend bool operator==(const ItemInfo&, const ItemInfo&) = default;
};

struct DatasetManifest {
    std::size_t record_count = 0;
    std::string fingerprint;
    std::uint64_t seed = 0;
    std::vector<std::size_t> level_vocab;
    std::size_t item_count = 0;
    std::size_t train_count = 0;
    std::size_t valid_count = 0;
    std::size_t test_count = 0;
    std::size_t user_vocab = 0;
    std::size_t context_vocab = 0;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<ItemInfo> items;
    std::vector<InteractionRecord> records;
    std::vector<TrainingInstance> train;
    std::vector<TrainingInstance> valid;
    std::vector<TrainingInstance> test;
};

/// Token kinds of the heterogeneous stream. Pad is masked out of attention.
enum class TokenType : std::uint8_t { User = 0, Content = 1, Context = 2, Item = 3, Pad = 4 };

struct Token {
    TokenType type = TokenType::Pad;
    std::uint32_t id = 0;

    friend bool operator==(const Token&, const Token&) = default;
};

using TokenStream = std::vector<Token>;

/// Serialises an instance as [user tokens; context tokens; per event: item
/// token, then one content token when clicked]. Keeps the newest events when
/// the stream would exceed max_len.
TokenStream to_token_stream(const TrainingInstance& instance, std::size_t max_len);

}  // namespace oneranker::data
