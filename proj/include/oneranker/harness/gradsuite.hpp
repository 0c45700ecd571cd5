#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oneranker/data/types.hpp"
#include "oneranker/model/config.hpp"
#include "oneranker/tensor/gradcheck.hpp"

namespace oneranker::harness {

struct GradSuiteEntry {
    std::string name;
    tensor::GradCheckReport report;
};

/// The micro-model used for end-to-end gradient checks: d=8, m=2, v=1, k=4,
/// two code levels and two decoder layers per stack.
model::ModelConfig micro_model_config();

/// Random instance that fits `config`: history of `history` events and `n`
/// candidates with one positive and distinct non-negative labels.
data::TrainingInstance random_instance(const model::ModelConfig& config, std::size_t history, std::size_t n,
                                       std::uint64_t seed);

/// Central-difference checks in double precision for every differentiable
/// tensor op, masked attention, and the total loss of the micro-model with
/// n=5 candidates. The consistency teacher is held at its value at the
/// unperturbed point, which is what stopping its gradient means.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace oneranker::harness
