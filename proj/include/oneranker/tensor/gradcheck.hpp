#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "oneranker/tensor/tensor.hpp"

namespace oneranker::tensor {

struct ParamCheck {
    std::string name;
    std::size_t size = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;
    double tolerance = 0.0;
    bool passed = true;

    double max_rel_error() const;
    std::string summary() const;
};

struct NamedParam {
    std::string name;
    Tensor<double> tensor;
};

/// Compares reverse-mode gradients against five-point central differences.
///
/// `f` must rebuild its graph from the current parameter values on every call
/// and return a scalar. Relative error per element is
/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, floor). Throws std::runtime_error when two
/// evaluations at the same point disagree.
GradCheckReport finite_difference_check(const std::function<Tensor<double>()>& f,
                                        std::vector<NamedParam> params, double step = 1e-6,
                                        double tolerance = 1e-4, double floor = 1e-8);

}  // namespace oneranker::tensor
