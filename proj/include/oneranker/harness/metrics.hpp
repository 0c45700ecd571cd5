#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace oneranker::harness {

struct MetricsRow {
    std::size_t epoch = 0;
    std::string split;
    std::string metric;
    std::size_t k = 0;
    double value = 0.0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Candidate indices by descending score; equal scores order by ascending id.
std::vector<std::size_t> rank_order(std::span<const double> scores, std::span<const std::uint32_t> ids);

/// 1 when `positive` is among the first K entries of `ranking`.
double hr_at_k(std::span<const std::size_t> ranking, std::size_t positive, std::size_t k);

/// DCG@K of the predicted order over the ideal DCG@K; gain_i / log2(rank + 1).
double ndcg_at_k(std::span<const std::size_t> ranking, std::span<const double> gains, std::size_t k);

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    friend bool operator==(const BoxStats&, const BoxStats&) = default;
};

/// Linear-interpolated quartiles of a non-empty sample.
BoxStats box_stats(std::vector<double> sample);

struct ConsistencyReport {
    std::size_t n = 0;
    std::vector<BoxStats> deviation;  // index r-1 for Step-3 rank r
    std::vector<double> overlap;      // index K-1
    std::vector<double> all_deviations;
    std::size_t instances = 0;
};

/// Rank agreement between Step-2 and Step-3 scores of the same candidates.
/// For the candidate at each Step-3 rank r, records |rank_step2 - r|;
/// overlap(K) is the mean of |top-K(step2) ∩ top-K(step3)| / K.
ConsistencyReport consistency_report(const std::vector<std::vector<double>>& step2,
                                     const std::vector<std::vector<double>>& step3,
                                     const std::vector<std::vector<std::uint32_t>>& ids);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string consistency_csv(const ConsistencyReport& report);

/// Self-contained SVG renderings of the per-rank boxplot and the overlap curve.
std::string boxplot_svg(const ConsistencyReport& report, const std::string& title);
std::string overlap_svg(const std::vector<std::pair<std::string, const ConsistencyReport*>>& series,
                        const std::string& title);

std::string format_value(double v);

}  // namespace oneranker::harness
