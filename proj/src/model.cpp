#include "vdrv/model.hpp"

#include <cmath>

namespace vdrv {

Variant variant_from_string(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "shared-ffn") return Variant::SharedFfn;
    if (name == "decoupled") return Variant::Decoupled;
    if (name == "single-expert") return Variant::SingleExpert;
    if (name == "regression-head") return Variant::RegressionHead;
    throw ConfigError("unknown variant: " + name);
}

std::string variant_to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::SharedFfn: return "shared-ffn";
        case Variant::Decoupled: return "decoupled";
        case Variant::SingleExpert: return "single-expert";
        case Variant::RegressionHead: return "regression-head";
    }
    throw InternalError("bad variant");
}

void ModelConfig::validate() const {
    if (d <= 0 || layers < 0 || heads <= 0 || d_ff <= 0 || vocab <= 3)
        throw ConfigError("non-positive model dimension");
    if (d % heads != 0) throw ConfigError("d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
    if (d % 4 != 0) throw ConfigError("d must be divisible by 4 for the condition slices");
    if (raster % patch != 0) throw ConfigError("raster not divisible by patch size");
    if (time_dim % 2 != 0) throw ConfigError("time_dim must be even");
}

Model::Model(ModelConfig cfg, SymbolVocab vocab, uint64_t seed) : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    if (vocab_.size() != cfg_.vocab) throw ConfigError("vocab table size mismatch");
    Rng rng(seed);
    const double s = 0.02;
    auto w = [&](const std::string& name, std::vector<int> shape) {
        store_.add(name, Tensor::randn(std::move(shape), rng, s));
    };
    const int d = cfg_.d;
    w("tok.table", {cfg_.vocab, d});
    w("tok.pos", {cfg_.max_pos, d});
    w("tok.patch", {cfg_.patch * cfg_.patch, d});
    w("tok.point.w1", {2, cfg_.mlp_hidden});
    w("tok.point.w2", {cfg_.mlp_hidden, d});
    w("tok.ego.w1", {5, cfg_.mlp_hidden});
    w("tok.ego.w2", {cfg_.mlp_hidden, d});
    w("tok.path_pre.w1", {2 + cfg_.time_dim, cfg_.mlp_hidden});
    w("tok.path_pre.w2", {cfg_.mlp_hidden, d});
    w("tok.speed_pre.w1", {1 + cfg_.time_dim, cfg_.mlp_hidden});
    w("tok.speed_pre.w2", {cfg_.mlp_hidden, d});
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        w(p + "wq", {d, d});
        w(p + "wk", {d, d});
        w(p + "wv", {d, d});
        w(p + "wo", {d, d});
        store_.add(p + "ln_attn", Tensor::full({d}, 1.0));
        store_.add(p + "ln_ffn", Tensor::full({d}, 1.0));
        for (int e = 0; e < 2; ++e) {
            const std::string q = p + "e" + std::to_string(e) + ".";
            w(q + "gate", {d, cfg_.d_ff});
            w(q + "up", {d, cfg_.d_ff});
            w(q + "down", {cfg_.d_ff, d});
        }
    }
    w("lm.w_out", {d, cfg_.vocab});
    w("flow.psi_a", {d, cfg_.cond_imp_dim()});
    w("flow.psi_vl", {d, cfg_.cond_imp_dim()});
    w("flow.psi_s", {5, cfg_.cond_exp_slice()});
    w("flow.psi_nav", {d, cfg_.cond_exp_slice()});
    w("flow.psi_p", {2, cfg_.cond_exp_slice()});
    w("flow.path.w1", {cfg_.flow_in_dim(), cfg_.flow_hidden});
    w("flow.path.w2", {cfg_.flow_hidden, 2});
    w("flow.speed.w1", {cfg_.flow_in_dim(), cfg_.flow_hidden});
    w("flow.speed.w2", {cfg_.flow_hidden, 1});
}

RoutedLayerParams Model::layer(int l) const {
    const std::string p = "layer" + std::to_string(l) + ".";
    RoutedLayerParams lp;
    lp.wq = store_.get(p + "wq");
    lp.wk = store_.get(p + "wk");
    lp.wv = store_.get(p + "wv");
    lp.wo = store_.get(p + "wo");
    lp.ln_attn = store_.get(p + "ln_attn");
    lp.ln_ffn = store_.get(p + "ln_ffn");
    for (int e = 0; e < 2; ++e) {
        const std::string q = p + "e" + std::to_string(e) + ".";
        lp.expert[e] = {store_.get(q + "gate"), store_.get(q + "up"), store_.get(q + "down")};
    }
    return lp;
}

ActionPreproc Model::action_preproc() const {
    ActionPreproc pre;
    pre.path = {store_.get("tok.path_pre.w1"), store_.get("tok.path_pre.w2")};
    pre.speed = {store_.get("tok.speed_pre.w1"), store_.get("tok.speed_pre.w2")};
    pre.time_dim = cfg_.time_dim;
    return pre;
}

TensorPtr build_mask(const std::vector<TokenType>& tags) {
    const int n = static_cast<int>(tags.size());
    if (n == 0) throw InputError("build_mask: empty tag list");
    auto m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (is_action_token(tags[i]) && is_action_token(tags[j])) continue;  // bidirectional block
            if (j > i) m->at(i, j) = -1e9;
        }
    return m;
}

TensorPtr shared_attention(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask, int heads) {
    const int d = h->cols();
    if (d % heads != 0) throw ConfigError("d not divisible by head count");
    if (mask->rows() != h->rows() || mask->cols() != h->rows())
        throw DimensionError("mask " + shape_str(*mask) + " for sequence of " + std::to_string(h->rows()));
    const int dh = d / heads;
    auto x = ag::layer_norm(h, layer.ln_attn);
    auto q = ag::matmul(x, layer.wq);
    auto k = ag::matmul(x, layer.wk);
    auto v = ag::matmul(x, layer.wv);
    std::vector<TensorPtr> ctx;
    ctx.reserve(heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int hd = 0; hd < heads; ++hd) {
        auto qh = ag::slice_cols(q, hd * dh, (hd + 1) * dh);
        auto kh = ag::slice_cols(k, hd * dh, (hd + 1) * dh);
        auto vh = ag::slice_cols(v, hd * dh, (hd + 1) * dh);
        auto scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
        auto probs = ag::masked_softmax(scores, mask);
        ctx.push_back(ag::matmul(probs, vh));
    }
    auto merged = heads == 1 ? ctx[0] : ag::concat_cols(ctx);
    return ag::add(h, ag::matmul(merged, layer.wo));
}

TensorPtr route_gather(const TensorPtr& h, const std::vector<int>& idx) {
    int prev = -1;
    for (int i : idx) {
        if (i <= prev || i >= h->rows()) throw InternalError("route_gather: bad index " + std::to_string(i));
        prev = i;
    }
    return ag::gather_rows(h, idx);
}

TensorPtr expert_ffn(const TensorPtr& x, const ExpertParams& e) {
    return ag::matmul(ag::mul(ag::silu(ag::matmul(x, e.gate)), ag::matmul(x, e.up)), e.down);
}

TensorPtr merge_back(const TensorPtr& h, const TensorPtr& vl_out, const TensorPtr& act_out,
                     const std::vector<int>& i_vl, const std::vector<int>& i_act) {
    return ag::merge_rows(h, {vl_out, act_out}, {i_vl, i_act});
}

TensorPtr layer_forward(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask,
                        const std::vector<int>& i_vl, const std::vector<int>& i_act, int heads, Variant variant) {
    auto ht = shared_attention(h, layer, mask, heads);
    const ExpertParams& vl_e = variant == Variant::SingleExpert ? layer.expert[1] : layer.expert[0];
    const ExpertParams& act_e = variant == Variant::SharedFfn ? layer.expert[0] : layer.expert[1];
    std::vector<TensorPtr> parts;
    std::vector<std::vector<int>> idx;
    if (!i_vl.empty()) {
        auto o1 = ag::layer_norm(route_gather(ht, i_vl), layer.ln_ffn);
        parts.push_back(expert_ffn(o1, vl_e));
        idx.push_back(i_vl);
    }
    if (!i_act.empty()) {
        auto o2 = ag::layer_norm(route_gather(ht, i_act), layer.ln_ffn);
        parts.push_back(expert_ffn(o2, act_e));
        idx.push_back(i_act);
    }
    return ag::merge_rows(ht, parts, idx);
}

TensorPtr layer_forward_unrouted(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask,
                                 int heads, int which_expert) {
    auto ht = shared_attention(h, layer, mask, heads);
    auto o = ag::layer_norm(ht, layer.ln_ffn);
    return ag::add(ht, expert_ffn(o, layer.expert[which_expert]));
}

TensorPtr model_forward(const Model& m, const InterleavedSequence& seq, const IndexSets& idx,
                        const TensorPtr& mask) {
    const int n = seq.size();
    if (n > m.config().max_pos) throw ConfigError("sequence length " + std::to_string(n) + " exceeds max_pos");
    std::vector<int> pos_ids(n);
    for (int i = 0; i < n; ++i) pos_ids[i] = i;
    auto h = ag::add(seq.embeddings, ag::gather_rows(m.pos(), pos_ids));
    for (int l = 0; l < m.config().layers; ++l)
        h = layer_forward(h, m.layer(l), mask, idx.vl, idx.act, m.config().heads, m.config().variant);
    return h;
}

SeqBuild build_sequence(const Model& m, const DrivingSample& s, const std::vector<int>& lang,
                        const NoisyActionState* act) {
    const auto& cfg = m.config();
    SeqBuild b;
    auto z_goal = embed_symbols(s.goal_ids, m.table());
    auto z_image = encode_scene(s.raster, cfg.raster, cfg.patch, m.patch_proj());
    auto z_target = project_point(s.target_x, s.target_y, m.point_mlp(), cfg.norms);
    std::vector<int> cmd_ids = {s.command_id};
    std::vector<int> u_ids = cmd_ids;
    u_ids.insert(u_ids.end(), lang.begin(), lang.end());
    auto z_command = embed_symbols(u_ids, m.table());
    auto z_ego = project_ego(s.ego, m.ego_mlp(), cfg.norms);
    TensorPtr z_action = Tensor::zeros({0, cfg.d});
    if (act != nullptr && cfg.variant != Variant::Decoupled) {
        z_action = make_action_tokens(*act, m.action_preproc());
        b.action_embed = z_action;
    } else if (act != nullptr) {
        // Decoupled variant: action tokens bypass shared attention and reach
        // the flow head only through psi_A on the raw embeddings.
        b.action_embed = make_action_tokens(*act, m.action_preproc());
    }
    b.seq = interleave(z_goal, z_image, z_target, z_command, z_ego, z_action);
    b.idx = index_sets(b.seq);
    b.mask = build_mask(b.seq.tags);
    b.lang_ids = lang;
    const int cmd_begin = b.seq.spans.command.begin;
    for (size_t i = 0; i < lang.size(); ++i) b.lang_positions.push_back(cmd_begin + 1 + static_cast<int>(i));
    b.nav_tokens = ag::concat_rows({z_goal, embed_symbols(cmd_ids, m.table())});
    return b;
}

}  // namespace vdrv
