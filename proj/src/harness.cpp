#include "vdrv/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vdrv {

StageConfig make_stage(int stage, const TrainConfig& cfg) {
    if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2 or 3");
    return {stage, cfg.epochs[stage - 1], cfg.lr};
}

void apply_freezing(Model& m, int stage, bool freeze_attn_stage2) {
    auto& p = m.params();
    p.set_all_trainable(true);
    std::vector<std::string> frozen;
    const int layers = m.config().layers;
    if (stage == 1) {
        for (int l = 0; l < layers; ++l) frozen.push_back("layer" + std::to_string(l) + ".e1.");
        frozen.push_back("flow.");
    } else if (stage == 2) {
        for (int l = 0; l < layers; ++l) frozen.push_back("layer" + std::to_string(l) + ".e0.");
        frozen.push_back("lm.");
        frozen.push_back("tok.table");
        if (freeze_attn_stage2) {
            for (int l = 0; l < layers; ++l) {
                const std::string pre = "layer" + std::to_string(l) + ".";
                frozen.insert(frozen.end(), {pre + "wq", pre + "wk", pre + "wv", pre + "wo",
                                             pre + "ln_attn", pre + "ln_ffn"});
            }
            frozen.push_back("tok.pos");
        }
    }
    p.set_trainable_by_prefix(frozen, false);
}

TensorPtr drive_loss(const DrivingSample& s, const Model& m, const LossWeights& w, Rng& rng) {
    auto terms = flow_losses(m, s, rng);
    return ag::add(ag::add(ag::scale(terms.path, w.path), ag::scale(terms.smooth, w.smooth)),
                   ag::scale(terms.speed, w.speed));
}

TensorPtr total_loss(const DrivingSample& s, const Model& m, const LossWeights& w, Rng& rng) {
    auto terms = flow_losses(m, s, rng);
    auto drive = ag::add(ag::add(ag::scale(terms.path, w.path), ag::scale(terms.smooth, w.smooth)),
                         ag::scale(terms.speed, w.speed));
    auto lang = lm_loss_from_hidden(m, terms.hidden, terms.build, teacher_lang(s).targets);
    return ag::add(lang, drive);
}

namespace {

void check_finite(const Model& m, double loss, int stage, int epoch) {
    if (std::isfinite(loss)) return;
    for (const auto& name : m.params().names()) {
        const auto& t = *m.params().get(name);
        for (double v : t.data)
            if (!std::isfinite(v))
                throw TrainingError("non-finite value in tensor '" + name + "' (stage " + std::to_string(stage) +
                                    ", epoch " + std::to_string(epoch) + ")");
    }
    throw TrainingError("non-finite loss (stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ")");
}

}  // namespace

TrainLog run_stage(const StageConfig& stage, const TrainConfig& cfg, Model& m,
                   const std::vector<DrivingSample>& dataset, bool verbose) {
    if (dataset.empty()) throw InputError("empty training dataset");
    apply_freezing(m, stage.stage, cfg.freeze_attn_stage2);

    Rng shuffle_rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(stage.stage));
    Rng noise_rng(cfg.seed * 7919ULL + 31ULL * static_cast<uint64_t>(stage.stage));

    TrainLog log;
    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        EpochLog el;
        size_t done = 0;
        while (done < order.size()) {
            const size_t batch = std::min<size_t>(cfg.batch, order.size() - done);
            m.params().zero_grad();
            for (size_t b = 0; b < batch; ++b) {
                const DrivingSample& s = dataset[order[done + b]];
                TensorPtr loss;
                if (stage.stage == 1) {
                    // Language-only stage: action tokens cannot influence the
                    // language loss, so the sequence omits them.
                    auto teacher = teacher_lang(s);
                    auto sb = build_sequence(m, s, teacher.inputs, nullptr);
                    auto h = model_forward(m, sb.seq, sb.idx, sb.mask);
                    loss = lm_loss_from_hidden(m, h, sb, teacher.targets);
                    el.lang += ag::value(loss);
                } else {
                    auto terms = flow_losses(m, s, noise_rng);
                    auto drive = ag::add(
                        ag::add(ag::scale(terms.path, cfg.weights.path), ag::scale(terms.smooth, cfg.weights.smooth)),
                        ag::scale(terms.speed, cfg.weights.speed));
                    el.path += ag::value(terms.path);
                    el.speed += ag::value(terms.speed);
                    el.smooth += ag::value(terms.smooth);
                    if (stage.stage == 3) {
                        auto lang = lm_loss_from_hidden(m, terms.hidden, terms.build, teacher_lang(s).targets);
                        el.lang += ag::value(lang);
                        loss = ag::add(lang, drive);
                    } else {
                        loss = drive;
                    }
                }
                el.total += ag::value(loss);
                check_finite(m, ag::value(loss), stage.stage, epoch);
                backward(ag::scale(loss, 1.0 / static_cast<double>(batch)));
            }
            m.params().clip_grad_norm(cfg.grad_clip);
            adam_step(m.params(), stage.lr);
            done += batch;
        }
        const double n = static_cast<double>(order.size());
        el.lang /= n; el.path /= n; el.speed /= n; el.smooth /= n; el.total /= n;
        log.epochs.push_back(el);
        if (verbose)
            std::fprintf(stderr, "stage %d epoch %d/%d: total %.4f lang %.4f path %.4f speed %.4f smooth %.4f\n",
                         stage.stage, epoch + 1, stage.epochs, el.total, el.lang, el.path, el.speed, el.smooth);
    }
    return log;
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    char buf[64];
    auto line = [&](const std::string& key, double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        out << key << ": " << buf << "\n";
    };
    line("ade", ade);
    line("fde", fde);
    line("speed_mae", speed_mae);
    line("accuracy", accuracy);
    for (const auto& [cls, cm] : per_class) {
        out << cls << ".count: " << cm.count << "\n";
        line(cls + ".ade", cm.ade);
        line(cls + ".fde", cm.fde);
        line(cls + ".speed_mae", cm.speed_mae);
        line(cls + ".accuracy", cm.accuracy);
    }
    return out.str();
}

EvalReport evaluate(const Model& m, const std::vector<DrivingSample>& dataset, int euler_steps, uint64_t seed) {
    if (dataset.empty()) throw InputError("empty evaluation dataset");
    EvalReport r;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const DrivingSample& s = dataset[i];
        auto decoded = greedy_decode(m, s);
        int match = 0;
        for (size_t k = 0; k < s.instr_ids.size(); ++k)
            if (k < decoded.size() && decoded[k] == s.instr_ids[k]) ++match;
        const double acc = static_cast<double>(match) / static_cast<double>(s.instr_ids.size());

        // Plan conditioned on the decoded instruction prefix.
        std::vector<int> lang = {kBos};
        for (int id : decoded)
            if (id != kEos) lang.push_back(id);
        auto traj = euler_integrate(m, s, euler_steps, seed + 0x51ED2701ULL * (i + 1), &lang);

        double ade = 0.0;
        for (int k = 0; k < kPathTokens; ++k)
            ade += std::hypot(traj.waypoints[k][0] - s.path[k][0], traj.waypoints[k][1] - s.path[k][1]);
        ade /= kPathTokens;
        const double fde = std::hypot(traj.waypoints[kPathTokens - 1][0] - s.path[kPathTokens - 1][0],
                                      traj.waypoints[kPathTokens - 1][1] - s.path[kPathTokens - 1][1]);
        double mae = 0.0;
        for (int q = 0; q < kSpeedTokens; ++q) mae += std::abs(traj.speeds[q] - s.speed[q]);
        mae /= kSpeedTokens;

        r.ade += ade;
        r.fde += fde;
        r.speed_mae += mae;
        r.accuracy += acc;
        auto& cm = r.per_class[m.vocab().name(s.command_id)];
        cm.count += 1;
        cm.ade += ade;
        cm.fde += fde;
        cm.speed_mae += mae;
        cm.accuracy += acc;
    }
    const double n = static_cast<double>(dataset.size());
    r.ade /= n; r.fde /= n; r.speed_mae /= n; r.accuracy /= n;
    for (auto& [_, cm] : r.per_class) {
        cm.ade /= cm.count;
        cm.fde /= cm.count;
        cm.speed_mae /= cm.count;
        cm.accuracy /= cm.count;
    }
    return r;
}

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'V', 'D', 'R', 'V'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);  // little-endian host
}

template <typename T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw FormatError("truncated checkpoint at byte " + std::to_string(in.tellg() == -1 ? -1L : static_cast<long>(in.tellg())));
    return v;
}

json config_json(const Model& m) {
    const auto& c = m.config();
    json j;
    j["vocab_names"] = m.vocab().names();
    j["norms"] = {{"pos", c.norms.pos}, {"speed", c.norms.speed}, {"acc", c.norms.acc}};
    j["config"] = {{"d", c.d},
                   {"layers", c.layers},
                   {"heads", c.heads},
                   {"d_ff", c.d_ff},
                   {"vocab", c.vocab},
                   {"raster", c.raster},
                   {"patch", c.patch},
                   {"mlp_hidden", c.mlp_hidden},
                   {"time_dim", c.time_dim},
                   {"flow_hidden", c.flow_hidden},
                   {"max_pos", c.max_pos},
                   {"variant", variant_to_string(c.variant)}};
    return j;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    const auto names = m.params().names();
    put<uint32_t>(out, static_cast<uint32_t>(names.size()));
    for (const auto& name : names) {
        const auto& t = *m.params().get(name);
        put<uint16_t>(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<uint8_t>(out, static_cast<uint8_t>(t.shape.size()));
        for (int dim : t.shape) put<uint64_t>(out, static_cast<uint64_t>(dim));
        for (double v : t.data) put<float>(out, static_cast<float>(v));
    }
    const std::string text = config_json(m).dump();
    put<uint64_t>(out, static_cast<uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    if (take<uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
    const uint32_t count = take<uint32_t>(in);

    struct Loaded {
        std::vector<int> shape;
        std::vector<double> data;
    };
    std::map<std::string, Loaded> tensors;
    for (uint32_t t = 0; t < count; ++t) {
        const uint16_t name_len = take<uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("truncated checkpoint name at byte " + std::to_string(static_cast<long>(in.tellg())));
        const uint8_t rank = take<uint8_t>(in);
        Loaded ld;
        size_t numel = 1;
        for (int r = 0; r < rank; ++r) {
            const uint64_t dim = take<uint64_t>(in);
            ld.shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        ld.data.resize(numel);
        for (size_t i = 0; i < numel; ++i) ld.data[i] = static_cast<double>(take<float>(in));
        tensors.emplace(std::move(name), std::move(ld));
    }

    const uint64_t text_len = take<uint64_t>(in);
    std::string text(text_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text_len));
    if (!in) throw FormatError("truncated checkpoint metadata");
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("invalid checkpoint metadata");

    ModelConfig cfg;
    const auto& jc = j.at("config");
    cfg.d = jc.at("d");
    cfg.layers = jc.at("layers");
    cfg.heads = jc.at("heads");
    cfg.d_ff = jc.at("d_ff");
    cfg.vocab = jc.at("vocab");
    cfg.raster = jc.at("raster");
    cfg.patch = jc.at("patch");
    cfg.mlp_hidden = jc.at("mlp_hidden");
    cfg.time_dim = jc.at("time_dim");
    cfg.flow_hidden = jc.at("flow_hidden");
    cfg.max_pos = jc.at("max_pos");
    cfg.variant = variant_from_string(jc.at("variant"));
    const auto& jn = j.at("norms");
    cfg.norms = {jn.at("pos"), jn.at("speed"), jn.at("acc")};
    SymbolVocab vocab(j.at("vocab_names").get<std::vector<std::string>>());

    Model m(cfg, std::move(vocab), 0);
    for (const auto& name : m.params().names()) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint missing tensor '" + name + "'");
        auto& t = *m.params().get(name);
        if (t.shape != it->second.shape)
            throw FormatError("checkpoint tensor '" + name + "' has shape mismatch");
        t.data = it->second.data;
    }
    if (tensors.size() != m.params().names().size()) throw FormatError("checkpoint has extra tensors");
    return m;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "d") cfg.model.d = std::stoi(value);
            else if (key == "layers") cfg.model.layers = std::stoi(value);
            else if (key == "heads") cfg.model.heads = std::stoi(value);
            else if (key == "d-ff") cfg.model.d_ff = std::stoi(value);
            else if (key == "vocab") cfg.model.vocab = std::stoi(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "batch") cfg.batch = std::stoi(value);
            else if (key == "grad-clip") cfg.grad_clip = std::stod(value);
            else if (key == "epochs-stage1") cfg.epochs[0] = std::stoi(value);
            else if (key == "epochs-stage2") cfg.epochs[1] = std::stoi(value);
            else if (key == "epochs-stage3") cfg.epochs[2] = std::stoi(value);
            else if (key == "lambda-path") cfg.weights.path = std::stod(value);
            else if (key == "lambda-smooth") cfg.weights.smooth = std::stod(value);
            else if (key == "lambda-speed") cfg.weights.speed = std::stod(value);
            else if (key == "euler-steps") cfg.euler_steps = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "freeze-attn-stage2") cfg.freeze_attn_stage2 = (value == "true" || value == "1");
            else throw ConfigError("unknown config key '" + key + "' at line " + std::to_string(line_no));
        } catch (const std::invalid_argument&) {
            throw ParseError("bad value for '" + key + "'", line_no);
        } catch (const std::out_of_range&) {
            throw ParseError("value out of range for '" + key + "'", line_no);
        }
    }
    return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace vdrv
