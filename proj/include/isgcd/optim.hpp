#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "isgcd/errors.hpp"
#include "isgcd/rng.hpp"
#include "isgcd/tensor.hpp"

namespace isgcd::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam over a fixed parameter set. Moment state lives
// with the optimizer so freezing a parameter group (by simply not stepping its
// optimizer) preserves momentum across phases.
class Adam {
public:
    Adam(std::vector<TensorPtr> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    // Applies the update and zeroes every gradient buffer afterward.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = *params_[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double g = p.grad[i];
                if (!std::isfinite(g))
                    throw training_error("adam: non-finite gradient in parameter '" +
                                         (p.name.empty() ? std::string("<unnamed>") : p.name) + "'");
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
        zero_grad();
    }

    void zero_grad() {
        for (const auto& p : params_) p->zero_grad();
    }

    long steps_taken() const { return t_; }
    const std::vector<TensorPtr>& params() const { return params_; }

private:
    std::vector<TensorPtr> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long t_ = 0;
};

// Xavier/Glorot uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)).
// A vector of length n is treated as n x 1.
inline TensorPtr xavier_init(int rows, int cols, Rng& rng, bool requires_grad = true, std::string name = {}) {
    auto t = make_tensor(rows, cols, requires_grad, std::move(name));
    const double a = std::sqrt(6.0 / (rows + cols));
    for (auto& v : t->value) v = rng.uniform(-a, a);
    return t;
}

// Central-difference check of analytic gradients. The caller populates the
// gradient buffers (forward + backward once) before calling; `f` must rebuild
// its forward pass from the current parameter values on every call. Returns
// the maximum relative error over `samples` coordinates drawn across all
// parameters; coordinate pairs whose combined magnitude is below `atol` count
// as exact.
inline double grad_check(const std::function<double()>& f,
                         const std::vector<TensorPtr>& params,
                         Rng& rng,
                         int samples = 50,
                         double h = 1e-5,
                         double atol = 1e-6) {
    std::size_t total = 0;
    for (const auto& p : params) total += p->size();

    double max_rel = 0.0;
    for (int s = 0; s < samples; ++s) {
        std::size_t flat = rng.below(total);
        std::size_t pi = 0;
        while (flat >= params[pi]->size()) {
            flat -= params[pi]->size();
            ++pi;
        }
        auto& p = *params[pi];
        const double orig = p.value[flat];

        p.value[flat] = orig + h;
        const double fp = f();
        p.value[flat] = orig - h;
        const double fm = f();
        p.value[flat] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p.grad[flat];

        const double denom = std::abs(an) + std::abs(fd);
        if (denom > atol) max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
    return max_rel;
}

} // namespace isgcd::ad
