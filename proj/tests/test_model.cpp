#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "vdrv/flow.hpp"
#include "vdrv/model.hpp"

using namespace vdrv;
using test_util::sample_for;
using test_util::tiny_model;

namespace {

NoisyActionState noise_state(uint64_t seed, double tau) {
    Rng rng(seed);
    NoisyActionState x;
    x.path = Tensor::randn({kPathTokens, 2}, rng, 1.0);
    x.speed = Tensor::randn({kSpeedTokens, 1}, rng, 1.0);
    x.tau = tau;
    return x;
}

std::vector<TokenType> standard_tags() {
    std::vector<TokenType> tags;
    tags.insert(tags.end(), 2, TokenType::Goal);
    tags.insert(tags.end(), 16, TokenType::Image);
    tags.push_back(TokenType::TargetPoint);
    tags.insert(tags.end(), 5, TokenType::Command);
    tags.push_back(TokenType::EgoState);
    tags.insert(tags.end(), kPathTokens, TokenType::PathAction);
    tags.insert(tags.end(), kSpeedTokens, TokenType::SpeedAction);
    return tags;
}

}  // namespace

TEST_CASE("variant names round trip") {
    for (auto v : {Variant::Full, Variant::SharedFfn, Variant::Decoupled, Variant::SingleExpert,
                   Variant::RegressionHead})
        CHECK(variant_from_string(variant_to_string(v)) == v);
    CHECK_THROWS_AS(variant_from_string("bogus"), ConfigError);
}

TEST_CASE("config validation") {
    ModelConfig cfg;
    cfg.heads = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    cfg.d = 6;  // not divisible by 4
    cfg.heads = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig{};
    CHECK(cfg.cond_imp_dim() == 32);
    CHECK(cfg.cond_dim() == 32 + 48);
    CHECK(cfg.flow_in_dim() == 32 + 80);
}

TEST_CASE("hybrid mask: causal outside, bidirectional inside the action block") {
    auto tags = standard_tags();
    auto m = build_mask(tags);
    const int n = static_cast<int>(tags.size());
    const int a0 = 25;  // action block begin
    REQUIRE(n == 55);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const bool both_action = i >= a0 && j >= a0;
            const double expect = (both_action || j <= i) ? 0.0 : -1e9;
            CHECK(m->at(i, j) == expect);
        }
    CHECK_THROWS_AS(build_mask({}), InputError);
}

TEST_CASE("single-token attention closed form") {
    // One allowed position: probs = 1, so out = h + LN(h) Wv Wo.
    auto m = tiny_model();
    auto layer = m.layer(0);
    Rng rng(21);
    auto h = Tensor::randn({1, 16}, rng, 1.0);
    auto mask = Tensor::zeros({1, 1});
    auto out = shared_attention(h, layer, mask, m.config().heads);
    auto expect = ag::add(h, ag::matmul(ag::matmul(ag::layer_norm(h, layer.ln_attn), layer.wv), layer.wo));
    for (size_t i = 0; i < out->size(); ++i) CHECK(out->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));
}

TEST_CASE("attention matches an independent multi-head oracle") {
    auto m = tiny_model(3);
    const auto layer = m.layer(1);
    const int d = 16, heads = m.config().heads, dh = d / heads, n = 7;
    Rng rng(33);
    auto h = Tensor::randn({n, d}, rng, 1.0);
    auto mask = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) mask->at(i, j) = -1e9;  // plain causal

    auto got = shared_attention(h, layer, mask, heads);

    // Scalar-loop reference, no shared kernels.
    auto x = ag::layer_norm(h, layer.ln_attn);
    std::vector<std::vector<double>> q(n, std::vector<double>(d, 0.0)), k = q, v = q, ctx = q;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            for (int t = 0; t < d; ++t) {
                q[i][j] += x->at(i, t) * layer.wq->at(t, j);
                k[i][j] += x->at(i, t) * layer.wk->at(t, j);
                v[i][j] += x->at(i, t) * layer.wv->at(t, j);
            }
    for (int hd = 0; hd < heads; ++hd)
        for (int i = 0; i < n; ++i) {
            std::vector<double> scores(n, -1e300);
            double max_s = -1e300;
            for (int j = 0; j <= i; ++j) {
                double s = 0.0;
                for (int t = 0; t < dh; ++t) s += q[i][hd * dh + t] * k[j][hd * dh + t];
                scores[j] = s / std::sqrt(double(dh));
                max_s = std::max(max_s, scores[j]);
            }
            double z = 0.0;
            for (int j = 0; j <= i; ++j) z += std::exp(scores[j] - max_s);
            for (int j = 0; j <= i; ++j) {
                const double p = std::exp(scores[j] - max_s) / z;
                for (int t = 0; t < dh; ++t) ctx[i][hd * dh + t] += p * v[j][hd * dh + t];
            }
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double o = h->at(i, j);
            for (int t = 0; t < d; ++t) o += ctx[i][t] * layer.wo->at(t, j);
            CHECK(got->at(i, j) == doctest::Approx(o).epsilon(1e-10));
        }
}

TEST_CASE("routing with tied experts equals the unrouted forward") {
    for (uint64_t trial = 0; trial < 5; ++trial) {
        auto m = tiny_model(trial + 50);
        for (int l = 0; l < m.config().layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (const char* w : {"gate", "up", "down"})
                m.params().get(p + "e1." + w)->data = m.params().get(p + "e0." + w)->data;
        }
        auto s = sample_for(trial);
        auto x = noise_state(trial, 0.3);
        auto b = build_sequence(m, s, teacher_lang(s).inputs, &x);
        auto routed = model_forward(m, b.seq, b.idx, b.mask);

        std::vector<int> pos_ids(b.seq.size());
        for (int i = 0; i < b.seq.size(); ++i) pos_ids[i] = i;
        auto h = ag::add(b.seq.embeddings, ag::gather_rows(m.pos(), pos_ids));
        for (int l = 0; l < m.config().layers; ++l)
            h = layer_forward_unrouted(h, m.layer(l), b.mask, m.config().heads, 0);

        for (size_t i = 0; i < routed->size(); ++i)
            CHECK(std::abs(routed->data[i] - h->data[i]) <= 1e-12);
    }
}

TEST_CASE("action tokens cannot leak into earlier positions") {
    auto m = tiny_model(8);
    auto s = sample_for(5);
    auto lang = teacher_lang(s).inputs;
    auto x1 = noise_state(101, 0.2);
    auto x2 = noise_state(202, 0.9);
    auto b1 = build_sequence(m, s, lang, &x1);
    auto b2 = build_sequence(m, s, lang, &x2);
    auto h1 = model_forward(m, b1.seq, b1.idx, b1.mask);
    auto h2 = model_forward(m, b2.seq, b2.idx, b2.mask);
    const int a0 = b1.seq.spans.action.begin;
    for (int i = 0; i < a0; ++i)
        for (int j = 0; j < h1->cols(); ++j) CHECK(h1->at(i, j) == h2->at(i, j));  // bit-identical
}

TEST_CASE("route_gather validates its index list") {
    auto h = Tensor::zeros({4, 2});
    CHECK_THROWS_AS(route_gather(h, {1, 1}), InternalError);
    CHECK_THROWS_AS(route_gather(h, {2, 1}), InternalError);
    CHECK_THROWS_AS(route_gather(h, {0, 4}), InternalError);
    CHECK(route_gather(h, {0, 3})->rows() == 2);
}

TEST_CASE("shared-ffn variant ignores the trajectory expert") {
    auto m = tiny_model(4, Variant::SharedFfn);
    auto s = sample_for(9);
    auto x = noise_state(7, 0.5);
    auto b = build_sequence(m, s, teacher_lang(s).inputs, &x);
    auto h1 = model_forward(m, b.seq, b.idx, b.mask);
    for (int l = 0; l < m.config().layers; ++l)
        for (double& v : m.params().get("layer" + std::to_string(l) + ".e1.gate")->data) v += 100.0;
    auto h2 = model_forward(m, b.seq, b.idx, b.mask);
    for (size_t i = 0; i < h1->size(); ++i) CHECK(h1->data[i] == h2->data[i]);
}

TEST_CASE("single-expert variant ignores the vision-language expert") {
    auto m = tiny_model(4, Variant::SingleExpert);
    auto s = sample_for(9);
    auto x = noise_state(7, 0.5);
    auto b = build_sequence(m, s, teacher_lang(s).inputs, &x);
    auto h1 = model_forward(m, b.seq, b.idx, b.mask);
    for (int l = 0; l < m.config().layers; ++l)
        for (double& v : m.params().get("layer" + std::to_string(l) + ".e0.gate")->data) v += 100.0;
    auto h2 = model_forward(m, b.seq, b.idx, b.mask);
    for (size_t i = 0; i < h1->size(); ++i) CHECK(h1->data[i] == h2->data[i]);
}

TEST_CASE("decoupled variant keeps action tokens out of the sequence") {
    auto m = tiny_model(4, Variant::Decoupled);
    auto s = sample_for(2);
    auto x = noise_state(3, 0.4);
    auto b = build_sequence(m, s, teacher_lang(s).inputs, &x);
    CHECK(b.seq.spans.action.len == 0);
    CHECK(b.seq.size() == 25);  // 2 goal + 16 image + 1 target + 5 command + 1 ego
    REQUIRE(b.action_embed != nullptr);
    CHECK(b.action_embed->rows() == kActionTokens);
}

TEST_CASE("build_sequence spans and language bookkeeping") {
    auto m = tiny_model(6);
    auto s = sample_for(3);
    auto lang = teacher_lang(s).inputs;  // [<bos>, o1, o2, o3]
    auto x = noise_state(1, 0.1);
    auto b = build_sequence(m, s, lang, &x);
    CHECK(b.seq.spans.goal.len == 2);
    CHECK(b.seq.spans.image.len == 16);
    CHECK(b.seq.spans.target.len == 1);
    CHECK(b.seq.spans.command.len == 1 + static_cast<int>(lang.size()));
    CHECK(b.seq.spans.ego.len == 1);
    CHECK(b.seq.spans.action.len == kActionTokens);
    CHECK(b.seq.size() == 55);
    REQUIRE(b.lang_positions.size() == lang.size());
    for (size_t i = 0; i < lang.size(); ++i)
        CHECK(b.lang_positions[i] == b.seq.spans.command.begin + 1 + static_cast<int>(i));
    CHECK(b.nav_tokens->rows() == 3);  // goal pair + command token
    // Every language position carries the Command tag (LM-visible span).
    for (int p : b.lang_positions) CHECK(b.seq.tags[p] == TokenType::Command);
}

TEST_CASE("sequences beyond max_pos are rejected") {
    auto cfg = test_util::tiny_config();
    cfg.max_pos = 10;
    Model m(cfg, SymbolVocab::standard(cfg.vocab), 1);
    auto s = sample_for(1);
    auto b = build_sequence(m, s, teacher_lang(s).inputs, nullptr);
    CHECK_THROWS_AS(model_forward(m, b.seq, b.idx, b.mask), ConfigError);
}

TEST_CASE("construction is deterministic in the seed") {
    auto a = tiny_model(77);
    auto b = tiny_model(77);
    auto c = tiny_model(78);
    CHECK(a.params().get("layer0.wq")->data == b.params().get("layer0.wq")->data);
    CHECK(a.params().get("layer0.wq")->data != c.params().get("layer0.wq")->data);
}
