#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace oneranker::data {

/// Row-major dense matrix of doubles; the point-set currency of this module.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v);

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

double squared_distance(std::span<const double> a, std::span<const double> b);

struct KMeansResult {
    Matrix centers;
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
    std::size_t iterations = 0;
    // Inertia after each Lloyd update; non-increasing.
    std::vector<double> inertia_history;
    // Set when every point is identical; centers are then k copies of it.
    bool degenerate = false;
};

/// Lloyd's algorithm from k-means++ seeding. Stops at an assignment fixpoint or
/// after max_iters updates. Empty clusters are reseeded to the point farthest
/// from its current center, so every returned center owns at least one point
/// (unless the input is degenerate).
KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// Best of `restarts` independent runs by final inertia (seeds derived from `seed`).
KMeansResult kmeans_restarts(const Matrix& points, std::size_t k, std::size_t max_iters, std::uint64_t seed,
                             std::size_t restarts);

double inertia(const Matrix& points, const Matrix& centers, std::span<const std::size_t> assignments);

}  // namespace oneranker::data
