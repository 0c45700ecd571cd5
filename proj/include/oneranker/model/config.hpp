#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace oneranker::model {

/// Architecture dimensions plus the switches the ablation variants flip.
struct ModelConfig {
    std::size_t d = 32;
    std::size_t heads = 4;
    std::size_t ffn_dim = 64;
    std::size_t backbone_layers = 2;
    std::size_t hetero_layers = 2;
    std::size_t ranker_layers = 1;
    std::size_t interest_tokens = 6;  // m
    std::size_t value_tokens = 2;     // v
    std::size_t fake_items = 8;       // k
    std::size_t target_hidden = 32;
    std::size_t max_len = 160;
    std::size_t beam_width = 4;
    double init_std = 0.1;
    std::string cell_type = "prenorm_decoder";

    // Filled from the dataset manifest.
    std::size_t user_vocab = 96;
    std::size_t context_vocab = 8;
    std::size_t item_count = 2000;
    std::vector<std::size_t> level_vocab{16, 16};

    // Variant switches; the defaults are the full model.
    bool use_target = true;             // fake-item tokens, s_target and cosine channel
    bool shared_head = false;           // one output head instead of per-task heads
    bool cross_attention_first = true;  // sublayer order in the Step-2 decoder
    bool hetero_mask = true;            // false: Step-2 self-attention is fully visible
    bool use_ranker = true;             // false: rank by the value-head score
    bool inject_s2_kv = true;           // false: ranker keys/values are H1 only
    bool freeze_fake_items = false;

    std::size_t task_count() const { return interest_tokens + value_tokens; }
    std::size_t head_count() const { return interest_tokens + 1; }
    std::size_t active_fakes() const { return use_target ? fake_items : 0; }
    std::size_t levels() const { return level_vocab.size(); }

    void validate() const;
};

}  // namespace oneranker::model
