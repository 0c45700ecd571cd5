#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "oneranker/data/kmeans.hpp"

namespace oneranker::data {

struct SemanticId {
    std::vector<std::uint32_t> path;

    friend bool operator==(const SemanticId&, const SemanticId&) = default;
    friend auto operator<=>(const SemanticId&, const SemanticId&) = default;
};

struct SemanticIdTable {
    std::vector<SemanticId> paths;          // one per item
    std::vector<std::size_t> level_vocab;   // codes per level
    std::size_t max_collisions = 1;         // largest leaf before tie-breaking

    bool valid(const SemanticId& sid) const;
};

struct SemanticIdOptions {
    std::size_t levels = 2;
    std::size_t branch = 16;
    std::size_t kmeans_iters = 25;
    std::size_t restarts = 4;
    bool dedup = true;
    std::uint64_t seed = 0;
};

/// Hierarchical codes by nested k-means: level 1 clusters every item, each
/// deeper level clusters within its parent cluster. Items still sharing a full
/// path get a tie-break rank r (by distance to their leaf center, then item
/// index) folded into the last code as `code + branch * r`, which makes paths
/// unique and sizes the last vocabulary as branch * max_collisions.
SemanticIdTable build_semantic_ids(const Matrix& item_embeddings, const SemanticIdOptions& options);

}  // namespace oneranker::data
