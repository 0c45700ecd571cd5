#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oneranker/data/types.hpp"

namespace oneranker::data {

struct DataConfig {
    std::size_t num_items = 2000;
    std::size_t num_clusters = 16;
    std::size_t embed_dim = 16;
    double cluster_spread = 0.35;

    std::size_t num_records = 5000;  // one record (user) per row
    std::size_t num_archetypes = 8;
    double dirichlet_alpha = 0.3;
    double personal_mix = 0.3;       // weight of the user's own preference draw
    std::size_t history_length = 64;
    double noise_rate = 0.1;

    double ecpm_sigma = 0.5;
    double value_multiplier = 3.0;
    std::size_t high_value_clusters = 4;
    double target_value_power = 2.0;

    std::size_t num_candidates = 30;
    double hard_negative_ratio = 0.25;
    double negative_label_scale = 0.15;

    std::size_t sid_levels = 2;
    std::size_t sid_branch = 16;
    std::size_t kmeans_iters = 25;

    double valid_fraction = 0.1;
    double test_fraction = 0.1;

    std::size_t user_vocab_demo = 32;
    std::size_t user_vocab_bucket = 64;
    std::size_t context_vocab = 8;

    std::size_t threads = 1;

    void validate() const;
    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// Hex FNV-1a digest over the canonical serialisation of (config, seed).
/// The thread count is excluded since output does not depend on it.
std::string data_fingerprint(const DataConfig& config, std::uint64_t seed);

/// In-memory generation. Items, semantic IDs and per-user records are all
/// derived from `seed`; per-user streams use derive_seed(seed, user) so the
/// result is independent of the thread count.
Dataset generate_synthetic_dataset(const DataConfig& config, std::uint64_t seed);

/// Generates and writes items.jsonl, interactions.jsonl, train/valid/test.jsonl
/// and manifest.json into `dir`.
DatasetManifest generate_synthetic_dataset(const DataConfig& config, std::uint64_t seed,
                                           const std::filesystem::path& dir);

/// Value-weighted draw: index i with probability ecpm[i] / sum(ecpm).
std::size_t sample_value_target(std::span<const double> ecpm, std::uint64_t seed);

/// Uniform-in-[0,1) variant for callers that hold their own generator.
std::size_t sample_value_target_u(std::span<const double> ecpm, double u);

}  // namespace oneranker::data
