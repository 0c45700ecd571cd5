#include "oneranker/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace oneranker::tensor {

double GradCheckReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
    return worst;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os.precision(3);
    for (const auto& p : params) {
        os << (p.max_rel_error <= tolerance ? "ok   " : "FAIL ") << p.name << " n=" << p.size
           << " max_rel=" << std::scientific << p.max_rel_error;
        if (p.max_rel_error > tolerance) {
            os << " at " << p.worst_index << " ad=" << p.worst_analytic << " fd=" << p.worst_numeric;
        }
        os << std::defaultfloat << '\n';
    }
    return os.str();
}

GradCheckReport finite_difference_check(const std::function<Tensor<double>()>& f,
                                        std::vector<NamedParam> params, double step,
                                        double tolerance, double floor) {
    if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be positive");
    for (auto& p : params) {
        if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
            throw std::invalid_argument("finite_difference_check: " + p.name +
                                        " is not a trainable leaf");
        }
        p.tensor.zero_grad();
    }

    const Tensor<double> loss = f();
    if (loss.size() != 1) throw std::invalid_argument("finite_difference_check: f must return a scalar");
    const double base = loss.item();
    reverse_accumulate(loss);

    double again = 0.0;
    {
        NoGradGuard guard;
        again = f().item();
    }
    if (again != base) {
        std::ostringstream os;
        os.precision(17);
        os << "finite_difference_check: f is non-deterministic (" << base << " vs " << again << ")";
        throw std::runtime_error(os.str());
    }

    GradCheckReport report;
    report.tolerance = tolerance;
    NoGradGuard guard;
    for (auto& p : params) {
        ParamCheck check;
        check.name = p.name;
        check.size = p.tensor.size();
        const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
        auto& values = p.tensor.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            auto at = [&](double offset) {
                values[i] = original + offset;
                return f().item();
            };
            // Five-point stencil, truncation error O(step^4).
            const double numeric =
                (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
            values[i] = original;
            const double ad = analytic.empty() ? 0.0 : analytic[i];
            const double denom = std::max({std::abs(ad), std::abs(numeric), floor});
            const double rel = std::abs(ad - numeric) / denom;
            if (i == 0 || rel > check.max_rel_error) {
                check.max_rel_error = rel;
                check.worst_index = i;
                check.worst_analytic = ad;
                check.worst_numeric = numeric;
            }
        }
        if (check.max_rel_error > tolerance) report.passed = false;
        report.params.push_back(std::move(check));
    }
    return report;
}

}  // namespace oneranker::tensor
