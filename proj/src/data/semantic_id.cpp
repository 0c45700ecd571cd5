#include "oneranker/data/semantic_id.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "oneranker/common/random.hpp"

namespace oneranker::data {

bool SemanticIdTable::valid(const SemanticId& sid) const {
    if (sid.path.size() != level_vocab.size()) return false;
    for (std::size_t l = 0; l < sid.path.size(); ++l) {
        if (sid.path[l] >= level_vocab[l]) return false;
    }
    return true;
}

SemanticIdTable build_semantic_ids(const Matrix& emb, const SemanticIdOptions& opt) {
    if (opt.levels < 1) throw std::invalid_argument("build_semantic_ids: levels must be >= 1");
    if (opt.branch < 2) throw std::invalid_argument("build_semantic_ids: branch must be >= 2");
    const std::size_t n = emb.rows;
    if (n == 0) throw std::invalid_argument("build_semantic_ids: no items");
    if (!opt.dedup) {
        const double capacity = std::pow(static_cast<double>(opt.branch), static_cast<double>(opt.levels));
        if (capacity < static_cast<double>(n)) {
            throw std::invalid_argument("build_semantic_ids: branch^L = " + std::to_string(capacity) +
                                        " < item count " + std::to_string(n) + " with dedup disabled");
        }
    }

    SemanticIdTable table;
    table.paths.assign(n, SemanticId{std::vector<std::uint32_t>(opt.levels, 0)});

    // Groups of item indices sharing a prefix; level 0 has a single group.
    std::vector<std::vector<std::size_t>> groups{std::vector<std::size_t>(n)};
    for (std::size_t i = 0; i < n; ++i) groups[0][i] = i;
    // Leaf centers, kept for tie-break ordering on the last level.
    std::vector<std::vector<double>> leaf_center(n);

    for (std::size_t level = 0; level < opt.levels; ++level) {
        std::vector<std::vector<std::size_t>> next;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const auto& members = groups[g];
            Matrix pts(members.size(), emb.cols);
            for (std::size_t i = 0; i < members.size(); ++i) {
                std::copy(emb.row(members[i]).begin(), emb.row(members[i]).end(), pts.row(i).begin());
            }
            const std::size_t k = std::min(opt.branch, members.size());
            const auto km = kmeans_restarts(pts, k, opt.kmeans_iters, derive_seed(opt.seed, {level, g}), opt.restarts);
            std::vector<std::vector<std::size_t>> children(k);
            for (std::size_t i = 0; i < members.size(); ++i) {
                const std::size_t code = km.assignments[i];
                table.paths[members[i]].path[level] = static_cast<std::uint32_t>(code);
                children[code].push_back(members[i]);
                if (level + 1 == opt.levels) {
                    auto c = km.centers.row(code);
                    leaf_center[members[i]].assign(c.begin(), c.end());
                }
            }
            for (auto& ch : children) {
                if (!ch.empty()) next.push_back(std::move(ch));
            }
        }
        groups = std::move(next);
    }

    std::size_t max_leaf = 1;
    for (const auto& leaf : groups) max_leaf = std::max(max_leaf, leaf.size());
    table.max_collisions = max_leaf;
    table.level_vocab.assign(opt.levels, opt.branch);

    if (opt.dedup && max_leaf > 1) {
        for (const auto& leaf : groups) {
            if (leaf.size() < 2) continue;
            std::vector<std::pair<double, std::size_t>> order;
            for (std::size_t item : leaf) {
                order.emplace_back(squared_distance(emb.row(item), leaf_center[item]), item);
            }
            std::sort(order.begin(), order.end());
            for (std::size_t r = 0; r < order.size(); ++r) {
                auto& code = table.paths[order[r].second].path.back();
                code = static_cast<std::uint32_t>(code + opt.branch * r);
            }
        }
        table.level_vocab.back() = opt.branch * max_leaf;
    }
    return table;
}

}  // namespace oneranker::data
