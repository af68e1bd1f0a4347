#include "vdrv/tokenizer.hpp"

#include <cmath>

namespace vdrv {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::vector<double> time_embedding(double tau, int dim) {
    std::vector<double> e(dim);
    for (int k = 0; k < dim / 2; ++k) {
        const double f = kTwoPi * std::ldexp(1.0, k) * tau;
        e[2 * k] = std::sin(f);
        e[2 * k + 1] = std::cos(f);
    }
    return e;
}

TensorPtr embed_symbols(const std::vector<int>& ids, const TensorPtr& table) {
    return ag::gather_rows(table, ids);
}

TensorPtr encode_scene(const std::vector<double>& raster, int r, int patch, const TensorPtr& patch_proj) {
    if (patch <= 0 || r % patch != 0)
        throw ConfigError("raster size " + std::to_string(r) + " not divisible by patch " + std::to_string(patch));
    if (raster.size() != static_cast<size_t>(r) * r)
        throw DimensionError("raster has " + std::to_string(raster.size()) + " cells, expected " +
                             std::to_string(r * r));
    const int per_side = r / patch;
    const int n_tokens = per_side * per_side;
    const int patch_dim = patch * patch;
    if (patch_proj->rows() != patch_dim)
        throw DimensionError("patch projection expects " + std::to_string(patch_proj->rows()) + "-dim patches");
    auto patches = Tensor::zeros({n_tokens, patch_dim});
    for (int pr = 0; pr < per_side; ++pr)
        for (int pc = 0; pc < per_side; ++pc) {
            const int tok = pr * per_side + pc;
            for (int i = 0; i < patch; ++i)
                for (int j = 0; j < patch; ++j)
                    patches->at(tok, i * patch + j) = raster[static_cast<size_t>(pr * patch + i) * r + pc * patch + j];
        }
    return ag::matmul(patches, patch_proj);
}

TensorPtr mlp2(const TensorPtr& input, const MlpParams& mlp) {
    return ag::matmul(ag::silu(ag::matmul(input, mlp.w1)), mlp.w2);
}

TensorPtr project_point(double x, double y, const MlpParams& mlp, const Norms& norms) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw InputError("non-finite target point");
    auto in = Tensor::from({1, 2}, {x / norms.pos, y / norms.pos});
    return mlp2(in, mlp);
}

std::vector<double> ego_features(const EgoState& s, const Norms& norms) {
    return {s.v / norms.speed, s.a / norms.acc, std::sin(s.yaw), std::cos(s.yaw), s.yaw_rate};
}

TensorPtr project_ego(const EgoState& s, const MlpParams& mlp, const Norms& norms) {
    for (double v : {s.v, s.a, s.yaw, s.yaw_rate})
        if (!std::isfinite(v)) throw InputError("non-finite ego state");
    if (s.v < 0.0) throw InputError("negative ego speed");
    auto in = Tensor::from({1, 5}, ego_features(s, norms));
    return mlp2(in, mlp);
}

TensorPtr make_action_tokens(const NoisyActionState& x, const ActionPreproc& pre) {
    if (x.tau < 0.0 || x.tau > 1.0) throw InputError("flow time " + std::to_string(x.tau) + " outside [0,1]");
    if (x.path->rows() != kPathTokens || x.path->cols() != 2)
        throw DimensionError("path state " + shape_str(*x.path) + ", expected [20x2]");
    if (x.speed->rows() != kSpeedTokens || x.speed->cols() != 1)
        throw DimensionError("speed state " + shape_str(*x.speed) + ", expected [10x1]");
    const auto e = time_embedding(x.tau, pre.time_dim);

    auto path_in = Tensor::zeros({kPathTokens, 2 + pre.time_dim});
    for (int i = 0; i < kPathTokens; ++i) {
        path_in->at(i, 0) = x.path->at(i, 0);
        path_in->at(i, 1) = x.path->at(i, 1);
        for (int j = 0; j < pre.time_dim; ++j) path_in->at(i, 2 + j) = e[j];
    }
    auto speed_in = Tensor::zeros({kSpeedTokens, 1 + pre.time_dim});
    for (int i = 0; i < kSpeedTokens; ++i) {
        speed_in->at(i, 0) = x.speed->at(i, 0);
        for (int j = 0; j < pre.time_dim; ++j) speed_in->at(i, 1 + j) = e[j];
    }
    return ag::concat_rows({mlp2(path_in, pre.path), mlp2(speed_in, pre.speed)});
}

InterleavedSequence interleave(const TensorPtr& z_goal, const TensorPtr& z_image, const TensorPtr& z_target,
                               const TensorPtr& z_command, const TensorPtr& z_ego, const TensorPtr& z_action) {
    const std::array<std::pair<const TensorPtr*, TokenType>, 6> groups = {{
        {&z_goal, TokenType::Goal},
        {&z_image, TokenType::Image},
        {&z_target, TokenType::TargetPoint},
        {&z_command, TokenType::Command},
        {&z_ego, TokenType::EgoState},
        {&z_action, TokenType::PathAction},  // action span retagged below
    }};
    const int d = z_image->cols();
    for (const auto& [g, _] : groups)
        if ((*g)->rows() > 0 && (*g)->cols() != d)
            throw DimensionError("interleave: group width " + std::to_string((*g)->cols()) + " vs " +
                                 std::to_string(d));

    InterleavedSequence seq;
    std::vector<TensorPtr> parts;
    int pos = 0;
    GroupSpan* spans[6] = {&seq.spans.goal, &seq.spans.image, &seq.spans.target,
                           &seq.spans.command, &seq.spans.ego, &seq.spans.action};
    for (size_t g = 0; g < groups.size(); ++g) {
        const TensorPtr& t = *groups[g].first;
        spans[g]->begin = pos;
        spans[g]->len = t->rows();
        if (t->rows() > 0) parts.push_back(t);
        for (int i = 0; i < t->rows(); ++i) seq.tags.push_back(groups[g].second);
        pos += t->rows();
    }
    // Action span: PathAction rows first, then SpeedAction rows.
    if (seq.spans.action.len > 0) {
        if (seq.spans.action.len != kActionTokens)
            throw DimensionError("action group has " + std::to_string(seq.spans.action.len) + " rows, expected 30");
        for (int i = 0; i < kSpeedTokens; ++i)
            seq.tags[seq.spans.action.begin + kPathTokens + i] = TokenType::SpeedAction;
    }
    seq.embeddings = parts.empty() ? Tensor::zeros({0, d}) : ag::concat_rows(parts);
    return seq;
}

IndexSets index_sets(const std::vector<TokenType>& tags) {
    IndexSets s;
    for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
        if (is_vl_token(tags[i]))
            s.vl.push_back(i);
        else
            s.act.push_back(i);
        if (is_action_token(tags[i])) s.action.push_back(i);
    }
    return s;
}

IndexSets index_sets(const InterleavedSequence& seq) { return index_sets(seq.tags); }

}  // namespace vdrv
