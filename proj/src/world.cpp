#include "vdrv/world.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vdrv/rng.hpp"

namespace vdrv {

namespace {

const char* command_symbol(Command c) {
    switch (c) {
        case Command::Follow: return "cmd_follow";
        case Command::TurnLeft: return "cmd_left";
        case Command::TurnRight: return "cmd_right";
        case Command::Stop: return "cmd_stop";
    }
    throw InternalError("bad command");
}

const char* maneuver_symbol(Command c) {
    switch (c) {
        case Command::Follow: return "mv_follow";
        case Command::TurnLeft: return "mv_left";
        case Command::TurnRight: return "mv_right";
        case Command::Stop: return "mv_halt";
    }
    throw InternalError("bad command");
}

}  // namespace

Scenario sample_scenario(uint64_t seed) {
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    Scenario sc;
    sc.seed = seed;
    const double u = rng.uniform();
    if (u < 0.5)
        sc.command = Command::Follow;
    else if (u < 0.7)
        sc.command = Command::TurnLeft;
    else if (u < 0.9)
        sc.command = Command::TurnRight;
    else
        sc.command = Command::Stop;

    switch (sc.command) {
        case Command::TurnLeft:
            sc.lane = LaneShape::LeftArc;
            sc.radius = rng.uniform(8.0, 40.0);
            break;
        case Command::TurnRight:
            sc.lane = LaneShape::RightArc;
            sc.radius = rng.uniform(8.0, 40.0);
            break;
        default:
            sc.lane = LaneShape::Straight;
            break;
    }
    sc.target_s = rng.uniform(18.0, 25.0);

    sc.ego.v = rng.uniform(3.0, 10.0);
    sc.ego.a = rng.uniform(-1.0, 1.0);
    sc.ego.yaw = 0.0;  // ego frame
    switch (sc.lane) {
        case LaneShape::LeftArc: sc.ego.yaw_rate = sc.ego.v / sc.radius; break;
        case LaneShape::RightArc: sc.ego.yaw_rate = -sc.ego.v / sc.radius; break;
        default: sc.ego.yaw_rate = 0.0; break;
    }

    if (sc.command == Command::Stop) {
        sc.hazard.type = HazardType::StopLine;
        sc.hazard.distance = rng.uniform(4.0, 20.0);
    } else if (sc.command == Command::Follow && rng.uniform() < 0.3) {
        sc.hazard.type = HazardType::LeadVehicle;
        sc.hazard.distance = rng.uniform(6.0, 20.0);
        sc.hazard.speed = rng.uniform(2.0, 6.0);
    }
    return sc;
}

std::array<double, 2> lane_point(const Scenario& sc, double s) {
    switch (sc.lane) {
        case LaneShape::Straight:
            return {s, 0.0};
        case LaneShape::LeftArc:
            return {sc.radius * std::sin(s / sc.radius), sc.radius * (1.0 - std::cos(s / sc.radius))};
        case LaneShape::RightArc:
            return {sc.radius * std::sin(s / sc.radius), -sc.radius * (1.0 - std::cos(s / sc.radius))};
    }
    throw InternalError("bad lane shape");
}

std::vector<std::array<double, 2>> expert_path(const Scenario& sc) {
    std::vector<std::array<double, 2>> path(kPathTokens);
    for (int k = 1; k <= kPathTokens; ++k) path[k - 1] = lane_point(sc, static_cast<double>(k));
    return path;
}

std::vector<double> expert_speed(const Scenario& sc) {
    std::vector<double> out(kSpeedTokens);
    const double v0 = sc.ego.v;
    for (int q = 1; q <= kSpeedTokens; ++q) {
        double v;
        switch (sc.hazard.type) {
            case HazardType::None:
                v = kCruiseSpeed;
                break;
            case HazardType::StopLine:
                v = std::max(0.0, v0 - kMaxDecel * q);
                break;
            case HazardType::LeadVehicle:
                if (v0 >= sc.hazard.speed)
                    v = std::max(sc.hazard.speed, v0 - kMaxDecel * q);
                else
                    v = std::min(sc.hazard.speed, v0 + kMaxDecel * q);
                break;
            default:
                throw InternalError("bad hazard");
        }
        out[q - 1] = v;
    }
    return out;
}

std::vector<int> expert_instruction(const Scenario& sc, const SymbolVocab& vocab) {
    const char* hz = sc.hazard.type == HazardType::None        ? "hz_clear"
                     : sc.hazard.type == HazardType::LeadVehicle ? "hz_lead"
                                                                 : "hz_stopline";
    const char* sp = sc.hazard.type == HazardType::None        ? "sp_cruise"
                     : sc.hazard.type == HazardType::LeadVehicle ? "sp_decel"
                                                                 : "sp_brake";
    return {vocab.id(hz), vocab.id(maneuver_symbol(sc.command)), vocab.id(sp), kEos};
}

std::vector<double> rasterize(const Scenario& sc) {
    // 2 m cells: rows bucket x in [0,32), columns bucket y in [-16,16).
    std::vector<double> grid(kRasterSize * kRasterSize, 0.0);
    auto mark = [&](double x, double y, double value) {
        const int r = static_cast<int>(std::floor(x / 2.0));
        const int c = static_cast<int>(std::floor((y + 16.0) / 2.0));
        if (r >= 0 && r < kRasterSize && c >= 0 && c < kRasterSize) grid[r * kRasterSize + c] = value;
    };
    for (double s = 0.0; s <= 30.0; s += 0.25) {
        const auto p = lane_point(sc, s);
        mark(p[0], p[1], 0.5);
    }
    mark(0.0, 0.0, 0.25);  // ego
    if (sc.hazard.type != HazardType::None) {
        const auto p = lane_point(sc, sc.hazard.distance);
        mark(p[0], p[1], 1.0);
    }
    return grid;
}

DrivingSample make_sample(const Scenario& sc, const SymbolVocab& vocab) {
    DrivingSample s;
    s.seed = sc.seed;
    s.raster = rasterize(sc);
    s.goal_ids = {vocab.id("goal"), vocab.id(command_symbol(sc.command))};
    s.command_id = vocab.id(command_symbol(sc.command));
    const auto p = lane_point(sc, sc.target_s);
    s.target_x = p[0];
    s.target_y = p[1];
    s.ego = sc.ego;
    s.path = expert_path(sc);
    s.speed = expert_speed(sc);
    s.instr_ids = expert_instruction(sc, vocab);
    return s;
}

std::vector<DrivingSample> generate_dataset(uint64_t seed_start, int count, const SymbolVocab& vocab) {
    std::vector<DrivingSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(make_sample(sample_scenario(seed_start + i), vocab));
    return out;
}

namespace {

using nlohmann::json;

json to_json(const DrivingSample& s) {
    json j;
    j["seed"] = s.seed;
    j["raster"] = s.raster;
    j["goal"] = s.goal_ids;
    j["command"] = s.command_id;
    j["target"] = {s.target_x, s.target_y};
    j["ego"] = {s.ego.v, s.ego.a, s.ego.yaw, s.ego.yaw_rate};
    json path = json::array();
    for (const auto& p : s.path) path.push_back({p[0], p[1]});
    j["path"] = path;
    j["speed"] = s.speed;
    j["instr"] = s.instr_ids;
    return j;
}

const json& field(const json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw SchemaError(name);
    return *it;
}

DrivingSample from_json(const json& j) {
    DrivingSample s;
    s.seed = field(j, "seed").get<uint64_t>();
    s.raster = field(j, "raster").get<std::vector<double>>();
    s.goal_ids = field(j, "goal").get<std::vector<int>>();
    s.command_id = field(j, "command").get<int>();
    const auto& t = field(j, "target");
    s.target_x = t.at(0).get<double>();
    s.target_y = t.at(1).get<double>();
    const auto& e = field(j, "ego");
    s.ego = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()};
    for (const auto& p : field(j, "path")) s.path.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    s.speed = field(j, "speed").get<std::vector<double>>();
    s.instr_ids = field(j, "instr").get<std::vector<int>>();
    return s;
}

}  // namespace

void write_dataset(const std::vector<DrivingSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path + " for writing");
    for (const auto& s : samples) out << to_json(s).dump() << "\n";
}

std::vector<DrivingSample> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::vector<DrivingSample> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("malformed record", line_no);
        out.push_back(from_json(j));
    }
    return out;
}

}  // namespace vdrv
