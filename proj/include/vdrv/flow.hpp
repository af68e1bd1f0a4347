#pragma once

#include "vdrv/language.hpp"
#include "vdrv/model.hpp"
#include "vdrv/rng.hpp"

namespace vdrv {

struct TrajectoryOutput {
    std::vector<std::array<double, 2>> waypoints;  // 20, meters, ego frame
    std::vector<double> speeds;                    // 10, m/s
};

// Flow-head conditioning: pooled semantic hidden states (implicit) next to
// projected ego / navigation / target-point features (explicit).
struct FlowCondition {
    TensorPtr c_imp;  // 1 x d/2
    TensorPtr c_exp;  // 1 x 3d/4
    TensorPtr c_fm;   // 1 x (d/2 + 3d/4)
};

struct FieldPrediction {
    TensorPtr path;   // 20 x 2
    TensorPtr speed;  // 10 x 1
};

// X_tau = (1 - tau) * eps + tau * y, elementwise.
TensorPtr sample_noisy(const TensorPtr& y, const TensorPtr& eps, double tau);

// v* = y - eps.
TensorPtr target_field(const TensorPtr& y, const TensorPtr& eps);

TensorPtr implicit_condition(const TensorPtr& h_vl, const TensorPtr& psi_vl);
TensorPtr explicit_condition(const Model& m, const DrivingSample& s, const TensorPtr& nav_tokens);
FlowCondition flow_condition(const Model& m, const DrivingSample& s, const TensorPtr& h_vl,
                             const TensorPtr& nav_tokens);

// Field prediction on an already-built forward pass.
FieldPrediction predict_field_from(const Model& m, const DrivingSample& s, const SeqBuild& b, const TensorPtr& h);

// Full forward per flow step. lang defaults to the teacher-forced
// instruction prefix when null.
FieldPrediction predict_field(const Model& m, const DrivingSample& s, const NoisyActionState& x,
                              const std::vector<int>* lang = nullptr);

// Fixed-step Euler recurrence X <- X + (1/steps) v(X, tau), tau = k/steps.
// The field callback is the model's velocity prediction in training; tests
// substitute closed-form fields.
using FieldFn = std::function<FieldPrediction(const NoisyActionState&)>;
NoisyActionState euler_path(const NoisyActionState& x0, int steps, const FieldFn& field);

// Euler ODE from seeded Gaussian noise, path and speed advanced jointly,
// outputs de-normalized. A regression-head model decodes in one forward.
TrajectoryOutput euler_integrate(const Model& m, const DrivingSample& s, int steps, uint64_t seed,
                                 const std::vector<int>* lang = nullptr);

// Second-order finite-difference regularizer over 20 waypoints (meters).
TensorPtr smoothness_loss(const TensorPtr& waypoints);
double smoothness_loss(const std::vector<std::array<double, 2>>& waypoints);

// Ground truth in normalized flow coordinates.
TensorPtr norm_path(const DrivingSample& s, const Norms& n);
TensorPtr norm_speed(const DrivingSample& s, const Norms& n);

struct FlowLossTerms {
    TensorPtr path;    // scalar
    TensorPtr speed;   // scalar
    TensorPtr smooth;  // scalar
    TensorPtr hidden;  // H^(L) of the same forward, for the language loss
    SeqBuild build;
};

// One forward serving all drive-loss terms, at a frozen (tau, eps) draw.
FlowLossTerms flow_losses_at(const Model& m, const DrivingSample& s, double tau, const TensorPtr& eps_p,
                             const TensorPtr& eps_v, const std::vector<int>& lang);

// Draws tau ~ U[0,1] and eps ~ N(0, I), then defers to flow_losses_at.
FlowLossTerms flow_losses(const Model& m, const DrivingSample& s, Rng& rng);

TensorPtr path_flow_loss(const Model& m, const DrivingSample& s, Rng& rng);
TensorPtr speed_flow_loss(const Model& m, const DrivingSample& s, Rng& rng);

}  // namespace vdrv
