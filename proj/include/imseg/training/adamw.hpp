#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "imseg/core/errors.hpp"
#include "imseg/core/parameter.hpp"

namespace imseg {

struct AdamWConfig {
    double lr_adapter = 5e-5;
    double lr_decoder = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive moments with decoupled weight decay and one learning rate per
/// parameter group. Frozen parameters are never touched.
template <class T>
class AdamW {
  public:
    AdamW(ParameterList<T>& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
        for (const auto& p : params) {
            m_.emplace_back(p.group == ParamGroup::frozen ? 0 : p.tensor.size(), 0.0);
            v_.emplace_back(p.group == ParamGroup::frozen ? 0 : p.tensor.size(), 0.0);
        }
    }

    std::size_t steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    double learning_rate(ParamGroup g) const {
        return g == ParamGroup::adapter ? cfg_.lr_adapter : g == ParamGroup::decoder ? cfg_.lr_decoder : 0.0;
    }

    /// One update from the accumulated gradients. A non-finite gradient
    /// aborts the step before any parameter changes.
    void step() {
        for (const auto& p : *params_) {
            if (p.group == ParamGroup::frozen)
                continue;
            for (T g : p.tensor.grad_span())
                if (!std::isfinite(static_cast<double>(g)))
                    throw DataError("non-finite gradient in parameter " + p.name + "; step aborted");
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_->size(); ++k) {
            auto& p = (*params_)[k];
            if (p.group == ParamGroup::frozen)
                continue;
            const double lr = learning_rate(p.group);
            const auto g = p.tensor.grad_span();
            auto w = p.tensor.mutable_data();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
                double wi = static_cast<double>(w[i]) * (1.0 - lr * cfg_.weight_decay);
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                wi -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
                w[i] = static_cast<T>(wi);
            }
        }
    }

    void zero_grad() {
        for (auto& p : *params_)
            p.tensor.zero_grad();
    }

  private:
    ParameterList<T>* params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

} // namespace imseg
