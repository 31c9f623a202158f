#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "crm/matrix.hpp"

namespace crm {

// --- activations ---------------------------------------------------------

double sigmoid(double x);
double gelu(double x);        // exact erf form
double gelu_deriv(double x);  // Phi(x) + x*phi(x)

// --- softmax / losses / divergences --------------------------------------

// Row-wise softmax with per-row max subtraction.
Matrix2D softmax_rows(const Matrix2D& x);

// Mean negative log-probability of targets under row softmax; one target
// index per row.
double cross_entropy_logits(const Matrix2D& logits, const std::vector<int>& targets);

// JS(p||q) = 0.5 KL(p||m) + 0.5 KL(q||m), m = (p+q)/2, natural log.
// Inputs must be same-length distributions (sum 1 within 1e-9, entries >= 0).
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Gradients of JS(p||q) with respect to p and q (0.5*log(p_i/m_i) etc.).
// Used to backpropagate the consistency-regularisation term through softmax.
void js_divergence_grad(const std::vector<double>& p, const std::vector<double>& q,
                        std::vector<double>& dp, std::vector<double>& dq);

// --- optimizer ------------------------------------------------------------

struct AdamWState {
    int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-6;
    double weight_decay = 0.0;
    std::vector<Matrix2D> m;
    std::vector<Matrix2D> v;

    // Moments are allocated lazily on the first step to match the parameter
    // shapes exactly.
    void reset() { step = 0; m.clear(); v.clear(); }
};

// One decoupled-weight-decay Adam update over a parameter set. Bias-corrected
// moments; the decay term lr*weight_decay*param is applied separately from
// the gradient moment update.
void adamw_step(const std::vector<Matrix2D*>& params, const std::vector<const Matrix2D*>& grads,
                AdamWState& state, double lr);

// --- learning-rate schedule -------------------------------------------------

struct LrSchedule {
    double peak_lr = 0.0;
    int64_t total_steps = 1;
    double warmup_ratio = 0.06;
};

// Piecewise-linear: 0 -> peak over warmup_ratio*total_steps, then peak -> 0.
double lr_at_step(const LrSchedule& s, int64_t step);

// --- finite differences -----------------------------------------------------

// Central-difference gradient estimate of a scalar function over a parameter
// set. Restores parameters to their original values. The testing oracle for
// all analytic gradients.
std::vector<Matrix2D> finite_diff_grad(const std::function<double()>& f,
                                       const std::vector<Matrix2D*>& params, double h);

}  // namespace crm
