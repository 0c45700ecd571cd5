#include <stdexcept>
#include <string>

#include "oneranker/data/types.hpp"

namespace oneranker::data {

TokenStream to_token_stream(const TrainingInstance& inst, std::size_t max_len) {
    const std::size_t fixed = inst.user_tokens.size() + inst.context_tokens.size();
    if (fixed > max_len) {
        throw std::invalid_argument("to_token_stream: user and context tokens alone (" + std::to_string(fixed) +
                                    ") exceed max_len " + std::to_string(max_len));
    }
    // Walk back from the newest event to find how many fit.
    std::size_t budget = max_len - fixed;
    std::size_t first = inst.history.size();
    while (first > 0) {
        const std::size_t cost = inst.history[first - 1].click ? 2 : 1;
        if (cost > budget) break;
        budget -= cost;
        --first;
    }

    TokenStream out;
    out.reserve(max_len - budget);
    for (auto id : inst.user_tokens) out.push_back({TokenType::User, id});
    for (auto id : inst.context_tokens) out.push_back({TokenType::Context, id});
    for (std::size_t e = first; e < inst.history.size(); ++e) {
        const auto& h = inst.history[e];
        out.push_back({TokenType::Item, h.item});
        if (h.click) out.push_back({TokenType::Content, h.conversion ? kContentConversion : kContentClick});
    }
    return out;
}

}  // namespace oneranker::data
