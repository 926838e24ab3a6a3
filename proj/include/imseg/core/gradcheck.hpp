#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "imseg/core/tensor.hpp"

namespace imseg {

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    bool passed = true;

    double max_rel_error() const {
        double m = 0.0;
        for (const auto& e : entries)
            m = std::max(m, e.max_rel_error);
        return m;
    }
};

struct GradCheckOptions {
    double step = 1e-5;
    // Denominator floor for the relative error. Central differences at 64-bit
    // carry ~1e-11 absolute noise, so gradients below this are compared
    // absolutely.
    double floor = 1e-7;
};

/// Compares tape gradients of the scalar `f` against central differences,
/// element by element, for every named input. `f` must rebuild its graph
/// from the inputs' current values on each call.
inline GradCheckReport gradient_check(const std::function<Tensor<double>()>& f,
                                      std::vector<std::pair<std::string, Tensor<double>>> inputs,
                                      double tol, GradCheckOptions opt = {}) {
    GradCheckReport report;
    report.tol = tol;
    for (auto& [name, t] : inputs)
        t.zero_grad();
    {
        Tensor<double> loss = f();
        loss.backward();
    }
    for (auto& [name, t] : inputs) {
        GradCheckEntry e;
        e.name = name;
        e.count = t.size();
        const std::vector<double> analytic = t.grad();
        auto values = t.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            double fp = 0.0, fm = 0.0;
            {
                NoGradGuard guard;
                values[i] = saved + opt.step;
                fp = f().item();
                values[i] = saved - opt.step;
                fm = f().item();
            }
            values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * opt.step);
            const double abs_err = std::abs(analytic[i] - numeric);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
            const double rel = abs_err == 0.0 ? 0.0 : abs_err / denom;
            e.max_abs_error = std::max(e.max_abs_error, abs_err);
            if (rel > e.max_rel_error) {
                e.max_rel_error = rel;
                e.worst_index = i;
            }
        }
        report.passed = report.passed && e.max_rel_error <= tol;
        report.entries.push_back(std::move(e));
    }
    for (auto& [name, t] : inputs)
        t.zero_grad();
    return report;
}

} // namespace imseg
