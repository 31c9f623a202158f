#include "crm/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crm {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_deriv(double x) {
    double phi_cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    double phi_pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return phi_cdf + x * phi_pdf;
}

Matrix2D softmax_rows(const Matrix2D& x) {
    Matrix2D out(x.rows, x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        double mx = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < x.cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

double cross_entropy_logits(const Matrix2D& logits, const std::vector<int>& targets) {
    if (static_cast<int>(targets.size()) != logits.rows) {
        throw std::invalid_argument("cross_entropy_logits: need one target per row, got " +
                                    std::to_string(targets.size()) + " targets for " +
                                    std::to_string(logits.rows) + " rows");
    }
    double total = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        int t = targets[i];
        if (t < 0 || t >= logits.cols) {
            throw std::invalid_argument("cross_entropy_logits: target " + std::to_string(t) +
                                        " out of range for " + std::to_string(logits.cols) +
                                        " classes");
        }
        double mx = logits.at(i, 0);
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
        double lse = 0.0;
        for (int j = 0; j < logits.cols; ++j) lse += std::exp(logits.at(i, j) - mx);
        total += std::log(lse) + mx - logits.at(i, t);
    }
    return total / logits.rows;
}

static void check_distribution(const std::vector<double>& p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) {
            throw std::invalid_argument(std::string("js_divergence: ") + name +
                                        " has a negative entry");
        }
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string("js_divergence: ") + name +
                                    " does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("js_divergence: length mismatch");
    }
    check_distribution(p, "p");
    check_distribution(q, "q");
    double js = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
    }
    return js;
}

void js_divergence_grad(const std::vector<double>& p, const std::vector<double>& q,
                        std::vector<double>& dp, std::vector<double>& dq) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("js_divergence_grad: length mismatch");
    }
    dp.assign(p.size(), 0.0);
    dq.assign(q.size(), 0.0);
    for (size_t i = 0; i < p.size(); ++i) {
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) dp[i] = 0.5 * std::log(p[i] / m);
        if (q[i] > 0.0) dq[i] = 0.5 * std::log(q[i] / m);
    }
}

void adamw_step(const std::vector<Matrix2D*>& params, const std::vector<const Matrix2D*>& grads,
                AdamWState& state, double lr) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adamw_step: parameter/gradient count mismatch");
    }
    if (state.m.empty()) {
        for (const Matrix2D* p : params) {
            state.m.emplace_back(p->rows, p->cols, 0.0);
            state.v.emplace_back(p->rows, p->cols, 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adamw_step: state tracks a different parameter set");
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t k = 0; k < params.size(); ++k) {
        Matrix2D& p = *params[k];
        const Matrix2D& g = *grads[k];
        if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
            throw std::invalid_argument("adamw_step: shape mismatch at parameter " +
                                        std::to_string(k) + " " + p.shape_str() + " vs " +
                                        g.shape_str());
        }
        Matrix2D& m = state.m[k];
        Matrix2D& v = state.v[k];
        for (size_t i = 0; i < p.data.size(); ++i) {
            double gi = g.data[i];
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            double update = lr * mhat / (std::sqrt(vhat) + state.epsilon);
            if (state.weight_decay != 0.0) {
                update += lr * state.weight_decay * p.data[i];
            }
            p.data[i] -= update;
        }
    }
}

double lr_at_step(const LrSchedule& s, int64_t step) {
    if (s.peak_lr <= 0.0) throw std::invalid_argument("lr_at_step: peak_lr must be positive");
    if (s.total_steps <= 0) throw std::invalid_argument("lr_at_step: total_steps must be positive");
    if (s.warmup_ratio < 0.0 || s.warmup_ratio > 1.0) {
        throw std::invalid_argument("lr_at_step: warmup_ratio must be in [0,1]");
    }
    if (step < 0 || step > s.total_steps) {
        throw std::invalid_argument("lr_at_step: step " + std::to_string(step) +
                                    " outside [0, " + std::to_string(s.total_steps) + "]");
    }
    double w = s.warmup_ratio * static_cast<double>(s.total_steps);
    double t = static_cast<double>(step);
    if (t < w) {
        return s.peak_lr * t / w;
    }
    double denom = static_cast<double>(s.total_steps) - w;
    if (denom <= 0.0) return s.peak_lr;  // warmup_ratio == 1: ramp only
    return s.peak_lr * (static_cast<double>(s.total_steps) - t) / denom;
}

std::vector<Matrix2D> finite_diff_grad(const std::function<double()>& f,
                                       const std::vector<Matrix2D*>& params, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be positive");
    std::vector<Matrix2D> grads;
    grads.reserve(params.size());
    for (Matrix2D* p : params) {
        Matrix2D g(p->rows, p->cols, 0.0);
        for (size_t i = 0; i < p->data.size(); ++i) {
            double orig = p->data[i];
            p->data[i] = orig + h;
            double fp = f();
            p->data[i] = orig - h;
            double fm = f();
            p->data[i] = orig;
            g.data[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

}  // namespace crm
