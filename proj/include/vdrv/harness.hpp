#pragma once

#include <array>
#include <map>
#include <string>

#include "vdrv/flow.hpp"

namespace vdrv {

struct LossWeights {
    double path = 1.0;
    double smooth = 0.1;
    double speed = 1.0;
};

struct TrainConfig {
    ModelConfig model;
    double lr = 3e-4;
    int batch = 16;
    double grad_clip = 1.0;
    std::array<int, 3> epochs = {10, 12, 7};
    LossWeights weights;
    int euler_steps = 10;
    uint64_t seed = 42;
    bool freeze_attn_stage2 = false;
};

struct StageConfig {
    int stage = 1;  // 1..3
    int epochs = 0;
    double lr = 3e-4;
};

StageConfig make_stage(int stage, const TrainConfig& cfg);

// Stage freezing contract: I freezes trajectory expert + all flow-head
// parameters, II freezes the vision-language expert, LM head and text
// embedding table, III trains everything.
void apply_freezing(Model& m, int stage, bool freeze_attn_stage2);

// lambda_path * L_path + lambda_smooth * L_smooth + lambda_speed * L_speed
TensorPtr drive_loss(const DrivingSample& s, const Model& m, const LossWeights& w, Rng& rng);

// L_lang + L_drive on one shared forward pass.
TensorPtr total_loss(const DrivingSample& s, const Model& m, const LossWeights& w, Rng& rng);

struct EpochLog {
    double lang = 0.0, path = 0.0, speed = 0.0, smooth = 0.0, total = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
};

TrainLog run_stage(const StageConfig& stage, const TrainConfig& cfg, Model& m,
                   const std::vector<DrivingSample>& dataset, bool verbose = false);

struct ClassMetrics {
    int count = 0;
    double ade = 0.0, fde = 0.0, speed_mae = 0.0, accuracy = 0.0;
};

struct EvalReport {
    double ade = 0.0;
    double fde = 0.0;
    double speed_mae = 0.0;
    double accuracy = 0.0;
    std::map<std::string, ClassMetrics> per_class;  // keyed by command symbol
    std::string to_text() const;
};

EvalReport evaluate(const Model& m, const std::vector<DrivingSample>& dataset, int euler_steps = 10,
                    uint64_t seed = 0);

// Binary checkpoint: "VDRV" magic, version, named f32 tensors, then a
// length-prefixed text block with vocab + normalization constants + config.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

// Line-oriented "key = value" config text.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

}  // namespace vdrv
