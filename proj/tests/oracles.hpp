#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Plain loops over doubles, no tensor engine.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine(const Vec& a, const Vec& b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline double log_sum_exp(const Vec& x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}

// Sum over heads and levels of -log p(gt code). Level-l scores for head h are
// (e_h + sum of gt code vectors at levels < l) . code + s_h . cos(code, centers).
inline double mtp(const Mat& e, const Mat& s, const std::vector<std::vector<std::uint32_t>>& gt,
                  const std::vector<Mat>& books, const Mat& centers) {
    double loss = 0.0;
    for (std::size_t h = 0; h < e.size(); ++h) {
        Vec cond = e[h];
        for (std::size_t l = 0; l < books.size(); ++l) {
            Vec scores;
            for (const auto& code : books[l]) {
                double sc = dot(cond, code);
                if (!s.empty()) {
                    for (std::size_t j = 0; j < centers.size(); ++j) sc += s[h][j] * cosine(code, centers[j]);
                }
                scores.push_back(sc);
            }
            loss -= scores[gt[h][l]] - log_sum_exp(scores);
            for (std::size_t x = 0; x < cond.size(); ++x) cond[x] += books[l][gt[h][l]][x];
        }
    }
    return loss;
}

inline double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double bpr(const Vec& s, const Vec& y) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] > y[j]) {
                total += log1p_exp(-(s[i] - s[j]));
                ++pairs;
            }
        }
    }
    return pairs ? total / static_cast<double>(pairs) : 0.0;
}

inline double dc(const Vec& s, const Vec& g, double tau) {
    Vec st(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) st[i] = s[i] / tau;
    const double zs = log_sum_exp(st), zg = log_sum_exp(g);
    double loss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) loss -= std::exp(st[i] - zs) * (g[i] - zg);
    return loss;
}

// 1-based rank of candidate i: one plus the number of candidates ordered before
// it (higher score, or equal score and smaller id).
inline std::size_t rank_of(const Vec& scores, const std::vector<std::uint32_t>& ids, std::size_t i) {
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j == i) continue;
        if (scores[j] > scores[i] || (scores[j] == scores[i] && ids[j] < ids[i])) ++ahead;
    }
    return ahead + 1;
}

inline double hr(const Vec& scores, const std::vector<std::uint32_t>& ids, std::size_t positive, std::size_t k) {
    return rank_of(scores, ids, positive) <= k ? 1.0 : 0.0;
}

inline double ndcg(const Vec& scores, const std::vector<std::uint32_t>& ids, const Vec& gains, std::size_t k) {
    // Accumulated in rank order so the floating-point sum is reproducible.
    Vec by_rank(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) by_rank[rank_of(scores, ids, i) - 1] = gains[i];
    double dcg = 0.0;
    for (std::size_t r = 1; r <= k; ++r) dcg += by_rank[r - 1] / std::log2(static_cast<double>(r) + 1.0);
    // Ideal: repeatedly take the largest remaining gain.
    Vec left = gains;
    double idcg = 0.0;
    for (std::size_t r = 1; r <= k; ++r) {
        auto it = std::max_element(left.begin(), left.end());
        idcg += *it / std::log2(static_cast<double>(r) + 1.0);
        *it = -1.0;
    }
    return dcg / idcg;
}

}  // namespace oracle
