// Command-line entry point: dataset generation, three-stage training,
// evaluation, trajectory prediction and ablation comparison.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "vdrv/harness.hpp"

namespace {

using namespace vdrv;

Model make_or_load(const std::string& ckpt_in, const TrainConfig& cfg) {
    if (!ckpt_in.empty()) return load_checkpoint(ckpt_in);
    return Model(cfg.model, SymbolVocab::standard(cfg.model.vocab), cfg.seed);
}

int cmd_gen_data(uint64_t seed_start, int count, const std::string& out_path) {
    auto vocab = SymbolVocab::standard();
    write_dataset(generate_dataset(seed_start, count, vocab), out_path);
    return 0;
}

int cmd_train(const std::string& stage_arg, const std::string& config_path, const std::string& data_path,
              const std::string& ckpt_in, const std::string& ckpt_out, const std::string& variant) {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    if (!variant.empty()) cfg.model.variant = variant_from_string(variant);
    auto data = read_dataset(data_path);
    Model m = make_or_load(ckpt_in, cfg);

    std::vector<int> stages;
    if (stage_arg == "all")
        stages = {1, 2, 3};
    else if (stage_arg == "1" || stage_arg == "2" || stage_arg == "3")
        stages = {std::stoi(stage_arg)};
    else
        throw ConfigError("--stage must be 1, 2, 3 or all");

    for (int st : stages) run_stage(make_stage(st, cfg), cfg, m, data, /*verbose=*/true);
    if (!ckpt_out.empty()) save_checkpoint(m, ckpt_out);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, int euler_steps,
             const std::string& report_path, uint64_t seed) {
    Model m = load_checkpoint(ckpt);
    auto data = read_dataset(data_path);
    auto report = evaluate(m, data, euler_steps, seed);
    const std::string text = report.to_text();
    if (report_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(report_path);
        if (!out) throw InputError("cannot open " + report_path);
        out << text;
    }
    return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& data_path, const std::string& out_path,
                int euler_steps, uint64_t seed) {
    Model m = load_checkpoint(ckpt);
    auto data = read_dataset(data_path);
    std::ofstream out(out_path);
    if (!out) throw InputError("cannot open " + out_path);
    for (size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        auto decoded = greedy_decode(m, s);
        std::vector<int> lang = {kBos};
        for (int id : decoded)
            if (id != kEos) lang.push_back(id);
        auto traj = euler_integrate(m, s, euler_steps, seed + 0x51ED2701ULL * (i + 1), &lang);
        out << "sample " << s.seed << "\n";
        out << "  instruction:";
        for (int id : decoded) out << " " << m.vocab().name(id);
        out << "\n  waypoints_m:";
        char buf[64];
        for (const auto& p : traj.waypoints) {
            std::snprintf(buf, sizeof buf, " %.4f,%.4f", p[0], p[1]);
            out << buf;
        }
        out << "\n  speeds_mps:";
        for (double v : traj.speeds) {
            std::snprintf(buf, sizeof buf, " %.4f", v);
            out << buf;
        }
        out << "\n";
    }
    return 0;
}

int cmd_ablate(std::vector<std::string> variants, const std::string& config_path, const std::string& data_path,
               const std::string& test_path, const std::string& out_path) {
    TrainConfig base;
    if (!config_path.empty()) base = parse_config_file(config_path);
    auto train = read_dataset(data_path);
    auto test = read_dataset(test_path.empty() ? data_path : test_path);
    if (variants.empty()) variants = {"shared-ffn", "decoupled", "single-expert", "regression-head"};

    std::ostringstream report;
    report << "variant ade fde speed_mae accuracy\n";
    for (const auto& vname : variants) {
        TrainConfig cfg = base;
        cfg.model.variant = variant_from_string(vname);
        Model m(cfg.model, SymbolVocab::standard(cfg.model.vocab), cfg.seed);
        std::fprintf(stderr, "ablate: training variant %s\n", vname.c_str());
        for (int st : {1, 2, 3}) run_stage(make_stage(st, cfg), cfg, m, train, /*verbose=*/true);
        auto r = evaluate(m, test, cfg.euler_steps, cfg.seed);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s %.4f %.4f %.4f %.4f\n", vname.c_str(), r.ade, r.fde, r.speed_mae,
                      r.accuracy);
        report << buf;
    }
    if (out_path.empty()) {
        std::cout << report.str();
    } else {
        std::ofstream out(out_path);
        if (!out) throw InputError("cannot open " + out_path);
        out << report.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic-world driving model: routed transformer + flow planner"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    uint64_t seed_start = 0;
    int count = 2000;
    std::string out_path;
    gen->add_option("--seed-start", seed_start, "first scenario seed");
    gen->add_option("--count", count, "number of samples");
    gen->add_option("--out", out_path, "output dataset file")->required();

    auto* train = app.add_subcommand("train", "run the training schedule");
    std::string stage = "all", config_path, data_path, ckpt_in, ckpt_out, variant;
    train->add_option("--stage", stage, "1, 2, 3 or all");
    train->add_option("--config", config_path, "config file (key = value lines)");
    train->add_option("--data", data_path, "training dataset")->required();
    train->add_option("--ckpt-in", ckpt_in, "checkpoint to resume from");
    train->add_option("--ckpt-out", ckpt_out, "checkpoint to write");
    train->add_option("--variant", variant, "model variant override");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, report_path;
    int euler_steps = 10;
    uint64_t eval_seed = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint")->required();
    eval->add_option("--data", eval_data, "dataset")->required();
    eval->add_option("--euler-steps", euler_steps, "ODE solver steps");
    eval->add_option("--report", report_path, "report output file");
    eval->add_option("--seed", eval_seed, "noise seed");

    auto* predict = app.add_subcommand("predict", "decode instructions and trajectories");
    std::string p_ckpt, p_data, p_out;
    int p_steps = 10;
    uint64_t p_seed = 0;
    predict->add_option("--ckpt", p_ckpt, "checkpoint")->required();
    predict->add_option("--data", p_data, "dataset")->required();
    predict->add_option("--out", p_out, "output file")->required();
    predict->add_option("--euler-steps", p_steps, "ODE solver steps");
    predict->add_option("--seed", p_seed, "noise seed");

    auto* ablate = app.add_subcommand("ablate", "train model variants and compare");
    std::vector<std::string> variants;
    std::string a_config, a_data, a_test, a_out;
    ablate->add_option("--variant", variants, "variant name (repeatable; default: all four)");
    ablate->add_option("--config", a_config, "config file");
    ablate->add_option("--data", a_data, "training dataset")->required();
    ablate->add_option("--test", a_test, "evaluation dataset (default: training data)");
    ablate->add_option("--out", a_out, "comparison report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(seed_start, count, out_path);
        if (train->parsed()) return cmd_train(stage, config_path, data_path, ckpt_in, ckpt_out, variant);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, euler_steps, report_path, eval_seed);
        if (predict->parsed()) return cmd_predict(p_ckpt, p_data, p_out, p_steps, p_seed);
        if (ablate->parsed()) return cmd_ablate(variants, a_config, a_data, a_test, a_out);
    } catch (const vdrv::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const vdrv::SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const vdrv::FormatError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const vdrv::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 1;
}
