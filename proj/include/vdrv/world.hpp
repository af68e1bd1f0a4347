#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vdrv/tokenizer.hpp"
#include "vdrv/vocab.hpp"

namespace vdrv {

enum class Command { Follow, TurnLeft, TurnRight, Stop };
enum class LaneShape { Straight, LeftArc, RightArc };
enum class HazardType { None, LeadVehicle, StopLine };

struct Hazard {
    HazardType type = HazardType::None;
    double distance = 0.0;  // meters along the lane, [4, 20] when present
    double speed = 0.0;     // lead vehicle speed, m/s
};

struct Scenario {
    uint64_t seed = 0;
    LaneShape lane = LaneShape::Straight;
    double radius = 0.0;    // meters, [8, 40] for arcs
    double target_s = 20.0; // arc length of the target point, [18, 25]
    Command command = Command::Follow;
    Hazard hazard;
    EgoState ego;
};

struct DrivingSample {
    uint64_t seed = 0;
    std::vector<double> raster;               // 16x16 row-major
    std::vector<int> goal_ids;
    int command_id = 0;
    double target_x = 0.0, target_y = 0.0;    // meters, ego frame
    EgoState ego;
    std::vector<std::array<double, 2>> path;  // 20 waypoints, meters
    std::vector<double> speed;                // 10 values, m/s
    std::vector<int> instr_ids;               // [hazard, maneuver, intent, <eos>]

    bool operator==(const DrivingSample&) const = default;
};

inline constexpr int kRasterSize = 16;
inline constexpr double kCruiseSpeed = 8.0;  // m/s
inline constexpr double kMaxDecel = 2.0;     // m/s^2 at 1 Hz steps

// Deterministic scenario from a seed. Class proportions: 50% follow,
// 20% each turn, 10% stop.
Scenario sample_scenario(uint64_t seed);

// Centerline point at arc length s, ego frame (x forward, y left).
std::array<double, 2> lane_point(const Scenario& sc, double s);

// Waypoints at s = 1..20 m.
std::vector<std::array<double, 2>> expert_path(const Scenario& sc);

// Trapezoidal 1 Hz speed profile: cruise hold, or ramp toward the
// hazard-appropriate speed at 2 m/s^2.
std::vector<double> expert_speed(const Scenario& sc);

// [hazard-symbol, maneuver-symbol, speed-intent-symbol, <eos>]
std::vector<int> expert_instruction(const Scenario& sc, const SymbolVocab& vocab);

// 16x16 occupancy grid: lane cells 0.5, ego cell 0.25, hazard cell 1.0.
std::vector<double> rasterize(const Scenario& sc);

DrivingSample make_sample(const Scenario& sc, const SymbolVocab& vocab);
std::vector<DrivingSample> generate_dataset(uint64_t seed_start, int count, const SymbolVocab& vocab);

// Newline-delimited self-describing records; floats round-trip bit-exactly.
void write_dataset(const std::vector<DrivingSample>& samples, const std::string& path);
std::vector<DrivingSample> read_dataset(const std::string& path);

}  // namespace vdrv
