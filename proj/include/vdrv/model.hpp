#pragma once

#include <cstdint>

#include "vdrv/param_store.hpp"
#include "vdrv/tokenizer.hpp"
#include "vdrv/vocab.hpp"
#include "vdrv/world.hpp"

namespace vdrv {

// Construction-time model variants (ablation axes).
enum class Variant { Full, SharedFfn, Decoupled, SingleExpert, RegressionHead };

Variant variant_from_string(const std::string& name);
std::string variant_to_string(Variant v);

struct ModelConfig {
    int d = 64;
    int layers = 4;
    int heads = 4;
    int d_ff = 128;
    int vocab = 64;
    int raster = 16;
    int patch = 4;
    int mlp_hidden = 32;
    int time_dim = 8;
    int flow_hidden = 64;
    int max_pos = 96;
    Variant variant = Variant::Full;
    Norms norms;

    int cond_imp_dim() const { return d / 2; }   // c_imp width, also psi_A width
    int cond_exp_slice() const { return d / 4; } // each explicit condition slice
    int cond_dim() const { return cond_imp_dim() + 3 * cond_exp_slice(); }
    int flow_in_dim() const { return cond_imp_dim() + cond_dim(); }
    void validate() const;
};

struct ExpertParams {
    TensorPtr gate, up, down;
};

// One layer: shared attention projections plus two gated-FFN expert sets
// (0 = vision-language, 1 = trajectory).
struct RoutedLayerParams {
    TensorPtr wq, wk, wv, wo;
    TensorPtr ln_attn, ln_ffn;
    ExpertParams expert[2];
};

class Model {
public:
    Model(ModelConfig cfg, SymbolVocab vocab, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const SymbolVocab& vocab() const { return vocab_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    RoutedLayerParams layer(int l) const;
    TensorPtr table() const { return store_.get("tok.table"); }
    TensorPtr pos() const { return store_.get("tok.pos"); }
    TensorPtr patch_proj() const { return store_.get("tok.patch"); }
    MlpParams point_mlp() const { return {store_.get("tok.point.w1"), store_.get("tok.point.w2")}; }
    MlpParams ego_mlp() const { return {store_.get("tok.ego.w1"), store_.get("tok.ego.w2")}; }
    ActionPreproc action_preproc() const;
    TensorPtr lm_head() const { return store_.get("lm.w_out"); }

    TensorPtr psi_a() const { return store_.get("flow.psi_a"); }
    TensorPtr psi_vl() const { return store_.get("flow.psi_vl"); }
    TensorPtr psi_s() const { return store_.get("flow.psi_s"); }
    TensorPtr psi_nav() const { return store_.get("flow.psi_nav"); }
    TensorPtr psi_p() const { return store_.get("flow.psi_p"); }
    MlpParams path_head() const { return {store_.get("flow.path.w1"), store_.get("flow.path.w2")}; }
    MlpParams speed_head() const { return {store_.get("flow.speed.w1"), store_.get("flow.speed.w2")}; }

private:
    ModelConfig cfg_;
    SymbolVocab vocab_;
    ParamStore store_;
};

// Hybrid mask: causal everywhere except the all-allowed action block.
TensorPtr build_mask(const std::vector<TokenType>& tags);

// Pre-norm residual multi-head attention with shared Q/K/V/O projections.
TensorPtr shared_attention(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask, int heads);

// Ordered row gather for expert routing.
TensorPtr route_gather(const TensorPtr& h, const std::vector<int>& idx);

// [silu(X Wg) . (X Wu)] Wd
TensorPtr expert_ffn(const TensorPtr& x, const ExpertParams& e);

// Residual scatter restoring the interleaved order.
TensorPtr merge_back(const TensorPtr& h, const TensorPtr& vl_out, const TensorPtr& act_out,
                     const std::vector<int>& i_vl, const std::vector<int>& i_act);

TensorPtr layer_forward(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask,
                        const std::vector<int>& i_vl, const std::vector<int>& i_act, int heads,
                        Variant variant = Variant::Full);

// Reference path with a single shared FFN applied to every token (used by the
// routing-equivalence checks).
TensorPtr layer_forward_unrouted(const TensorPtr& h, const RoutedLayerParams& layer, const TensorPtr& mask,
                                 int heads, int which_expert = 0);

// Full stack over an assembled sequence; adds learned absolute positions at
// the input. Returns H^(L).
TensorPtr model_forward(const Model& m, const InterleavedSequence& seq, const IndexSets& idx,
                        const TensorPtr& mask);

// Assembled per-sample sequence plus the bookkeeping heads need.
struct SeqBuild {
    InterleavedSequence seq;
    IndexSets idx;
    TensorPtr mask;
    std::vector<int> lang_positions;  // sequence positions of [<bos>, o_1, ...]
    std::vector<int> lang_ids;
    TensorPtr nav_tokens;   // goal + command embeddings (pre-transformer)
    TensorPtr action_embed; // raw action token rows, null when absent
};

// lang holds the teacher-forced or partially decoded instruction ids
// (starting with <bos>); act may be null to omit the action span.
SeqBuild build_sequence(const Model& m, const DrivingSample& s, const std::vector<int>& lang,
                        const NoisyActionState* act);

}  // namespace vdrv
