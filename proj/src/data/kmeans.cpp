#include "oneranker/data/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "oneranker/common/random.hpp"

namespace oneranker::data {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != r * c) throw std::invalid_argument("Matrix: value count does not match shape");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double inertia(const Matrix& points, const Matrix& centers, std::span<const std::size_t> assignments) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) total += squared_distance(points.row(i), centers.row(assignments[i]));
    return total;
}

namespace {

std::size_t nearest(const Matrix& centers, std::span<const double> p, double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows; ++c) {
        const double d = squared_distance(p, centers.row(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
    Matrix centers(k, points.cols);
    std::vector<bool> used(points.rows, false);
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, points.rows - 1)(rng);
    std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
    used[first] = true;

    std::vector<double> d2(points.rows);
    for (std::size_t i = 0; i < points.rows; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));

    // Greedy variant: draw a few D^2-weighted candidates per step and keep the
    // one that lowers the potential most.
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::vector<double> trial_d2(points.rows), best_d2(points.rows);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = points.rows;
        if (total > 0.0) {
            double best_potential = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < trials; ++t) {
                double u = std::uniform_real_distribution<double>(0.0, total)(rng);
                std::size_t cand = points.rows;
                for (std::size_t i = 0; i < points.rows; ++i) {
                    if (d2[i] <= 0.0) continue;
                    cand = i;
                    u -= d2[i];
                    if (u <= 0.0) break;
                }
                double potential = 0.0;
                for (std::size_t i = 0; i < points.rows; ++i) {
                    trial_d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(cand)));
                    potential += trial_d2[i];
                }
                if (potential < best_potential) {
                    best_potential = potential;
                    pick = cand;
                    best_d2.swap(trial_d2);
                }
            }
        }
        if (pick == points.rows) {
            // Fewer distinct points than k: fall back to the first unused index.
            for (std::size_t i = 0; i < points.rows; ++i) {
                if (!used[i]) {
                    pick = i;
                    break;
                }
            }
            for (std::size_t i = 0; i < points.rows; ++i) {
                best_d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(pick)));
            }
        }
        used[pick] = true;
        std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
        d2 = best_d2;
    }
    return centers;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    if (k == 0) throw std::invalid_argument("kmeans: k must be at least 1");
    if (k > points.rows) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds point count " +
                                    std::to_string(points.rows));
    }
    KMeansResult result;
    result.assignments.assign(points.rows, 0);

    bool identical = true;
    for (std::size_t i = 1; i < points.rows && identical; ++i) {
        identical = squared_distance(points.row(i), points.row(0)) == 0.0;
    }
    if (identical) {
        result.centers = Matrix(k, points.cols);
        for (std::size_t c = 0; c < k; ++c)
            std::copy(points.row(0).begin(), points.row(0).end(), result.centers.row(c).begin());
        result.degenerate = k > 1;
        result.inertia = 0.0;
        result.inertia_history.push_back(0.0);
        return result;
    }

    std::mt19937_64 rng(seed);
    Matrix centers = seed_plus_plus(points, k, rng);
    std::vector<std::size_t>& assign = result.assignments;
    for (std::size_t i = 0; i < points.rows; ++i) assign[i] = nearest(centers, points.row(i));

    std::vector<std::size_t> counts(k);
    for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
        // Update step, with empty clusters taking over the worst-served point.
        for (;;) {
            std::fill(counts.begin(), counts.end(), 0);
            for (std::size_t a : assign) ++counts[a];
            auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
            if (empty == counts.end()) break;
            const std::size_t c = static_cast<std::size_t>(empty - counts.begin());
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < points.rows; ++i) {
                if (counts[assign[i]] <= 1) continue;
                const double d = squared_distance(points.row(i), centers.row(assign[i]));
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            std::copy(points.row(far).begin(), points.row(far).end(), centers.row(c).begin());
            assign[far] = c;
        }
        std::fill(centers.values.begin(), centers.values.end(), 0.0);
        for (std::size_t i = 0; i < points.rows; ++i) {
            auto dst = centers.row(assign[i]);
            auto src = points.row(i);
            for (std::size_t j = 0; j < points.cols; ++j) dst[j] += src[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            for (double& v : centers.row(c)) v /= static_cast<double>(counts[c]);
        }
        result.inertia_history.push_back(inertia(points, centers, assign));
        result.iterations = iter + 1;

        bool changed = false;
        for (std::size_t i = 0; i < points.rows; ++i) {
            const std::size_t a = nearest(centers, points.row(i));
            // Keep the current center on exact ties so the fixpoint is reachable.
            if (a != assign[i] &&
                squared_distance(points.row(i), centers.row(a)) < squared_distance(points.row(i), centers.row(assign[i]))) {
                assign[i] = a;
                changed = true;
            }
        }
        if (!changed) break;
    }
    result.inertia = inertia(points, centers, assign);
    result.centers = std::move(centers);
    return result;
}

KMeansResult kmeans_restarts(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed,
                             std::size_t restarts) {
    KMeansResult best = kmeans(points, k, max_iters, seed);
    for (std::size_t r = 1; r < restarts && !best.degenerate; ++r) {
        auto next = kmeans(points, k, max_iters, derive_seed(seed, {r}));
        if (next.inertia < best.inertia) best = std::move(next);
    }
    return best;
}

}  // namespace oneranker::data
