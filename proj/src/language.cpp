#include "vdrv/language.hpp"

namespace vdrv {

TensorPtr lm_logits(const TensorPtr& h_vl, const TensorPtr& w_out) {
    if (h_vl->rows() < 1) throw DimensionError("lm_logits: empty hidden states");
    return ag::matmul(h_vl, w_out);
}

TensorPtr lm_loss(const TensorPtr& logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
    return ag::cross_entropy_mean(logits, targets, mask);
}

TeacherLang teacher_lang(const DrivingSample& s) {
    TeacherLang t;
    t.inputs.push_back(kBos);
    for (size_t i = 0; i + 1 < s.instr_ids.size(); ++i) t.inputs.push_back(s.instr_ids[i]);
    t.targets = s.instr_ids;
    if (t.targets.empty() || t.targets.back() != kEos) throw ContractError("instruction must end with <eos>");
    return t;
}

TensorPtr lm_loss_from_hidden(const Model& m, const TensorPtr& h, const SeqBuild& b,
                              const std::vector<int>& targets) {
    if (b.lang_positions.size() != targets.size())
        throw DimensionError("lang positions vs targets: " + std::to_string(b.lang_positions.size()) + " vs " +
                             std::to_string(targets.size()));
    auto h_lang = route_gather(h, b.lang_positions);
    auto logits = lm_logits(h_lang, m.lm_head());
    std::vector<bool> mask(targets.size(), true);
    return lm_loss(logits, targets, mask);
}

std::vector<int> greedy_decode(const Model& m, const DrivingSample& s, int max_len) {
    if (max_len > 16) throw InputError("max_len above 16");
    std::vector<int> lang = {kBos};
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        auto b = build_sequence(m, s, lang, nullptr);
        auto h = model_forward(m, b.seq, b.idx, b.mask);
        auto logits = lm_logits(route_gather(h, {b.lang_positions.back()}), m.lm_head());
        int best = 0;
        for (int j = 1; j < logits->cols(); ++j)
            if (logits->at(0, j) > logits->at(0, best)) best = j;  // ties keep the lowest id
        out.push_back(best);
        if (best == kEos) break;
        lang.push_back(best);
    }
    return out;
}

}  // namespace vdrv
