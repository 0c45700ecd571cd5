#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "oneranker/data/synth.hpp"
#include "oneranker/data/types.hpp"

namespace oneranker::data {

using ordered_json = nlohmann::ordered_json;

ordered_json to_json(const TrainingInstance& instance);
ordered_json to_json(const InteractionRecord& record);
ordered_json to_json(const ItemInfo& item);
ordered_json to_json(const DatasetManifest& manifest);
ordered_json to_json(const DataConfig& config);

TrainingInstance instance_from_json(const nlohmann::json& j);
InteractionRecord record_from_json(const nlohmann::json& j);
ItemInfo item_from_json(const nlohmann::json& j);
DatasetManifest manifest_from_json(const nlohmann::json& j);
/// Starts from `base` and overrides the keys present; unknown keys throw.
DataConfig data_config_from_json(const nlohmann::json& j, DataConfig base = {});

std::string to_jsonl_line(const ordered_json& j);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Reads one TrainingInstance per line. Malformed lines raise
/// std::runtime_error naming the file and 1-based line number.
std::vector<TrainingInstance> load_dataset(const std::filesystem::path& path);
std::vector<ItemInfo> load_items(const std::filesystem::path& path);
std::vector<InteractionRecord> load_records(const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Everything generate_synthetic_dataset writes, read back from `dir`.
Dataset load_dataset_dir(const std::filesystem::path& dir);

/// Shuffled index batches over `count` items. The permutation depends on
/// (seed, epoch) only; all batches have `size` entries except possibly the last.
std::vector<std::vector<std::size_t>> batch(std::size_t count, std::size_t size, std::uint64_t seed,
                                            std::uint64_t epoch);

}  // namespace oneranker::data
