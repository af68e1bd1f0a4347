#pragma once

#include <array>
#include <optional>
#include <vector>

#include "vdrv/tensor.hpp"

namespace vdrv {

// Token tags. Goal/Image/Command form the vision-language set; the rest are
// routed to the trajectory expert.
enum class TokenType { Goal, Image, TargetPoint, Command, EgoState, PathAction, SpeedAction };

inline bool is_vl_token(TokenType t) {
    return t == TokenType::Goal || t == TokenType::Image || t == TokenType::Command;
}
inline bool is_action_token(TokenType t) {
    return t == TokenType::PathAction || t == TokenType::SpeedAction;
}

struct EgoState {
    double v = 0.0;         // m/s
    double a = 0.0;         // m/s^2
    double yaw = 0.0;       // rad
    double yaw_rate = 0.0;  // rad/s

    bool operator==(const EgoState&) const = default;
};

// Normalization applied before any MLP sees raw physical quantities.
// Inverses are the de-normalization constants stored in checkpoints.
struct Norms {
    double pos = 20.0;    // meters (planning horizon)
    double speed = 15.0;  // m/s
    double acc = 5.0;     // m/s^2
};

// Interpolated flow state: 20x2 path rows and 10x1 speed rows, both in
// normalized coordinates, plus the scalar flow time.
struct NoisyActionState {
    TensorPtr path;   // 20 x 2
    TensorPtr speed;  // 10 x 1
    double tau = 0.0;
};

inline constexpr int kPathTokens = 20;
inline constexpr int kSpeedTokens = 10;
inline constexpr int kActionTokens = kPathTokens + kSpeedTokens;

struct GroupSpan {
    int begin = 0;
    int len = 0;
};

// Fixed group order: Goal, Image, TargetPoint, Command, EgoState, Action.
struct GroupSpans {
    GroupSpan goal, image, target, command, ego, action;
};

struct InterleavedSequence {
    TensorPtr embeddings;  // N x d
    std::vector<TokenType> tags;
    GroupSpans spans;
    int size() const { return static_cast<int>(tags.size()); }
};

struct IndexSets {
    std::vector<int> vl;      // ascending, VL-tagged positions
    std::vector<int> act;     // ascending, trajectory-routed positions
    std::vector<int> action;  // subset of act: PathAction/SpeedAction positions
};

struct MlpParams {
    TensorPtr w1, w2;
};

struct ActionPreproc {
    MlpParams path;   // (2 + time_dim) -> d
    MlpParams speed;  // (1 + time_dim) -> d
    int time_dim = 8;
};

// Sinusoidal flow-time embedding: sin/cos pairs at frequencies 2^k, k=0..dim/2-1.
std::vector<double> time_embedding(double tau, int dim);

// Row lookup into a trainable table.
TensorPtr embed_symbols(const std::vector<int>& ids, const TensorPtr& table);

// Splits an RxR raster into (R/patch)^2 flattened patches and projects each to d.
TensorPtr encode_scene(const std::vector<double>& raster, int r, int patch, const TensorPtr& patch_proj);

// Two-layer silu MLPs over normalized inputs; each yields one token row.
TensorPtr project_point(double x, double y, const MlpParams& mlp, const Norms& norms);
TensorPtr project_ego(const EgoState& s, const MlpParams& mlp, const Norms& norms);
std::vector<double> ego_features(const EgoState& s, const Norms& norms);

// Path tokens then speed tokens, each preproc(concat(state row, e(tau))).
TensorPtr make_action_tokens(const NoisyActionState& x, const ActionPreproc& pre);

InterleavedSequence interleave(const TensorPtr& z_goal, const TensorPtr& z_image, const TensorPtr& z_target,
                               const TensorPtr& z_command, const TensorPtr& z_ego, const TensorPtr& z_action);

IndexSets index_sets(const InterleavedSequence& seq);
IndexSets index_sets(const std::vector<TokenType>& tags);

// Two-layer bias-free silu MLP over a constant input matrix.
TensorPtr mlp2(const TensorPtr& input, const MlpParams& mlp);

}  // namespace vdrv
