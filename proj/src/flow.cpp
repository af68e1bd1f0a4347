#include "vdrv/flow.hpp"

#include <cmath>

namespace vdrv {

TensorPtr sample_noisy(const TensorPtr& y, const TensorPtr& eps, double tau) {
    if (y->shape != eps->shape)
        throw InputError("sample_noisy: " + shape_str(*y) + " vs " + shape_str(*eps));
    if (tau < 0.0 || tau > 1.0) throw InputError("flow time outside [0,1]");
    auto out = Tensor::zeros(y->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = (1.0 - tau) * eps->data[i] + tau * y->data[i];
    return out;
}

TensorPtr target_field(const TensorPtr& y, const TensorPtr& eps) {
    if (y->shape != eps->shape)
        throw InputError("target_field: " + shape_str(*y) + " vs " + shape_str(*eps));
    auto out = Tensor::zeros(y->shape);
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = y->data[i] - eps->data[i];
    return out;
}

TensorPtr implicit_condition(const TensorPtr& h_vl, const TensorPtr& psi_vl) {
    return ag::matmul(ag::mean_rows(h_vl), psi_vl);
}

TensorPtr explicit_condition(const Model& m, const DrivingSample& s, const TensorPtr& nav_tokens) {
    if (nav_tokens->rows() < 1) throw InputError("empty navigation tokens");
    const auto& norms = m.config().norms;
    auto ego_in = Tensor::from({1, 5}, ego_features(s.ego, norms));
    auto p_in = Tensor::from({1, 2}, {s.target_x / norms.pos, s.target_y / norms.pos});
    return ag::concat_cols({ag::matmul(ego_in, m.psi_s()),
                            ag::matmul(ag::mean_rows(nav_tokens), m.psi_nav()),
                            ag::matmul(p_in, m.psi_p())});
}

FlowCondition flow_condition(const Model& m, const DrivingSample& s, const TensorPtr& h_vl,
                             const TensorPtr& nav_tokens) {
    FlowCondition c;
    c.c_imp = implicit_condition(h_vl, m.psi_vl());
    c.c_exp = explicit_condition(m, s, nav_tokens);
    c.c_fm = ag::concat_cols({c.c_imp, c.c_exp});
    return c;
}

FieldPrediction predict_field_from(const Model& m, const DrivingSample& s, const SeqBuild& b, const TensorPtr& h) {
    if (!b.action_embed) throw InternalError("predict_field_from: sequence has no action tokens");
    auto h_vl = route_gather(h, b.idx.vl);
    auto cond = flow_condition(m, s, h_vl, b.nav_tokens);

    // Decoupled variant: the flow head sees raw (uncontextualized) action
    // embeddings; otherwise the routed final hidden states.
    TensorPtr h_a;
    if (m.config().variant == Variant::Decoupled) {
        h_a = b.action_embed;
    } else {
        h_a = route_gather(h, b.idx.action);
    }
    auto proj = ag::matmul(h_a, m.psi_a());  // 30 x d/2
    auto proj_path = ag::slice_rows(proj, 0, kPathTokens);
    auto proj_speed = ag::slice_rows(proj, kPathTokens, kActionTokens);

    const std::vector<int> rep_path(kPathTokens, 0), rep_speed(kSpeedTokens, 0);
    auto f_path = ag::concat_cols({proj_path, ag::gather_rows(cond.c_fm, rep_path)});
    auto f_speed = ag::concat_cols({proj_speed, ag::gather_rows(cond.c_fm, rep_speed)});

    FieldPrediction out;
    out.path = mlp2(f_path, m.path_head());
    out.speed = mlp2(f_speed, m.speed_head());
    return out;
}

FieldPrediction predict_field(const Model& m, const DrivingSample& s, const NoisyActionState& x,
                              const std::vector<int>* lang) {
    std::vector<int> teacher;
    if (lang == nullptr) {
        teacher = teacher_lang(s).inputs;
        lang = &teacher;
    }
    auto b = build_sequence(m, s, *lang, &x);
    auto h = model_forward(m, b.seq, b.idx, b.mask);
    return predict_field_from(m, s, b, h);
}

NoisyActionState euler_path(const NoisyActionState& x0, int steps, const FieldFn& field) {
    if (steps < 1) throw ConfigError("euler steps must be >= 1");
    NoisyActionState x;
    x.path = Tensor::from(x0.path->shape, x0.path->data);
    x.speed = Tensor::from(x0.speed->shape, x0.speed->data);
    const double dt = 1.0 / steps;
    for (int k = 0; k < steps; ++k) {
        x.tau = static_cast<double>(k) / steps;
        auto v = field(x);
        for (size_t i = 0; i < x.path->size(); ++i) x.path->data[i] += dt * v.path->data[i];
        for (size_t i = 0; i < x.speed->size(); ++i) x.speed->data[i] += dt * v.speed->data[i];
    }
    x.tau = 1.0;
    return x;
}

TrajectoryOutput euler_integrate(const Model& m, const DrivingSample& s, int steps, uint64_t seed,
                                 const std::vector<int>* lang) {
    if (steps < 1) throw ConfigError("euler steps must be >= 1");
    const auto& norms = m.config().norms;
    NoisyActionState x;
    x.path = Tensor::zeros({kPathTokens, 2});
    x.speed = Tensor::zeros({kSpeedTokens, 1});

    if (m.config().variant == Variant::RegressionHead) {
        // Direct decoding: one forward from the zero query state.
        x.tau = 1.0;
        auto pred = predict_field(m, s, x, lang);
        TrajectoryOutput out;
        for (int k = 0; k < kPathTokens; ++k)
            out.waypoints.push_back({pred.path->at(k, 0) * norms.pos, pred.path->at(k, 1) * norms.pos});
        for (int q = 0; q < kSpeedTokens; ++q) out.speeds.push_back(pred.speed->at(q, 0) * norms.speed);
        return out;
    }

    Rng rng(seed);
    for (double& v : x.path->data) v = rng.gaussian();
    for (double& v : x.speed->data) v = rng.gaussian();

    x = euler_path(x, steps, [&](const NoisyActionState& xk) { return predict_field(m, s, xk, lang); });
    TrajectoryOutput out;
    for (int k = 0; k < kPathTokens; ++k)
        out.waypoints.push_back({x.path->at(k, 0) * norms.pos, x.path->at(k, 1) * norms.pos});
    for (int q = 0; q < kSpeedTokens; ++q) out.speeds.push_back(x.speed->at(q, 0) * norms.speed);
    return out;
}

TensorPtr smoothness_loss(const TensorPtr& waypoints) {
    if (waypoints->rows() != kPathTokens || waypoints->cols() != 2)
        throw InputError("smoothness_loss expects 20x2 waypoints, got " + shape_str(*waypoints));
    auto a = ag::slice_rows(waypoints, 2, kPathTokens);
    auto b = ag::slice_rows(waypoints, 1, kPathTokens - 1);
    auto c = ag::slice_rows(waypoints, 0, kPathTokens - 2);
    auto d2 = ag::add(ag::sub(a, ag::scale(b, 2.0)), c);
    return ag::scale(ag::sum_sq(d2), 1.0 / 18.0);
}

double smoothness_loss(const std::vector<std::array<double, 2>>& waypoints) {
    if (waypoints.size() != kPathTokens) throw InputError("smoothness_loss expects 20 waypoints");
    double total = 0.0;
    for (int k = 2; k < kPathTokens; ++k)
        for (int j = 0; j < 2; ++j) {
            const double d2 = waypoints[k][j] - 2.0 * waypoints[k - 1][j] + waypoints[k - 2][j];
            total += d2 * d2;
        }
    return total / 18.0;
}

TensorPtr norm_path(const DrivingSample& s, const Norms& n) {
    auto t = Tensor::zeros({kPathTokens, 2});
    for (int k = 0; k < kPathTokens; ++k) {
        t->at(k, 0) = s.path[k][0] / n.pos;
        t->at(k, 1) = s.path[k][1] / n.pos;
    }
    return t;
}

TensorPtr norm_speed(const DrivingSample& s, const Norms& n) {
    auto t = Tensor::zeros({kSpeedTokens, 1});
    for (int q = 0; q < kSpeedTokens; ++q) t->at(q, 0) = s.speed[q] / n.speed;
    return t;
}

FlowLossTerms flow_losses_at(const Model& m, const DrivingSample& s, double tau, const TensorPtr& eps_p,
                             const TensorPtr& eps_v, const std::vector<int>& lang) {
    const auto& norms = m.config().norms;
    auto y_p = norm_path(s, norms);
    auto y_v = norm_speed(s, norms);

    FlowLossTerms out;
    if (m.config().variant == Variant::RegressionHead) {
        NoisyActionState x;
        x.path = Tensor::zeros({kPathTokens, 2});
        x.speed = Tensor::zeros({kSpeedTokens, 1});
        x.tau = 1.0;
        out.build = build_sequence(m, s, lang, &x);
        out.hidden = model_forward(m, out.build.seq, out.build.idx, out.build.mask);
        auto pred = predict_field_from(m, s, out.build, out.hidden);
        out.path = ag::mse(pred.path, y_p);
        out.speed = ag::mse(pred.speed, y_v);
        out.smooth = smoothness_loss(ag::scale(pred.path, norms.pos));
        return out;
    }

    NoisyActionState x;
    x.path = sample_noisy(y_p, eps_p, tau);
    x.speed = sample_noisy(y_v, eps_v, tau);
    x.tau = tau;

    out.build = build_sequence(m, s, lang, &x);
    out.hidden = model_forward(m, out.build.seq, out.build.idx, out.build.mask);
    auto pred = predict_field_from(m, s, out.build, out.hidden);
    out.path = ag::mse(pred.path, target_field(y_p, eps_p));
    out.speed = ag::mse(pred.speed, target_field(y_v, eps_v));

    // One-step denoised estimate X_tau + (1-tau) v_hat, in meters.
    auto denoised = ag::scale(ag::add(x.path, ag::scale(pred.path, 1.0 - tau)), norms.pos);
    out.smooth = smoothness_loss(denoised);
    return out;
}

FlowLossTerms flow_losses(const Model& m, const DrivingSample& s, Rng& rng) {
    const double tau = rng.uniform();
    auto eps_p = Tensor::zeros({kPathTokens, 2});
    auto eps_v = Tensor::zeros({kSpeedTokens, 1});
    for (double& v : eps_p->data) v = rng.gaussian();
    for (double& v : eps_v->data) v = rng.gaussian();
    return flow_losses_at(m, s, tau, eps_p, eps_v, teacher_lang(s).inputs);
}

TensorPtr path_flow_loss(const Model& m, const DrivingSample& s, Rng& rng) {
    return flow_losses(m, s, rng).path;
}

TensorPtr speed_flow_loss(const Model& m, const DrivingSample& s, Rng& rng) {
    return flow_losses(m, s, rng).speed;
}

}  // namespace vdrv
