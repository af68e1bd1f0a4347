#pragma once

#include "vdrv/model.hpp"

namespace vdrv {

// Row-wise projection of vision-language hidden states to vocabulary logits.
TensorPtr lm_logits(const TensorPtr& h_vl, const TensorPtr& w_out);

// Mean negative log-likelihood over masked positions.
TensorPtr lm_loss(const TensorPtr& logits, const std::vector<int>& targets, const std::vector<bool>& mask);

// Teacher-forced language span for a sample: input ids start at <bos>,
// targets end at <eos>.
struct TeacherLang {
    std::vector<int> inputs;   // [<bos>, o_1, ..., o_{K-1}]
    std::vector<int> targets;  // [o_1, ..., o_K] with o_K = <eos>
};
TeacherLang teacher_lang(const DrivingSample& s);

// Language loss evaluated on an already-built forward pass.
TensorPtr lm_loss_from_hidden(const Model& m, const TensorPtr& h, const SeqBuild& b,
                              const std::vector<int>& targets);

// Greedy autoregressive decode; deterministic argmax with lowest-id
// tie-break, stops at <eos> or max_len. Returns the emitted ids
// (including the terminating <eos> when produced).
std::vector<int> greedy_decode(const Model& m, const DrivingSample& s, int max_len = 16);

}  // namespace vdrv
