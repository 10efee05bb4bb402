#pragma once

#include <vector>

#include "sdtc/tensor.hpp"

namespace sdtc::ctc {

// Blank symbol id, fixed across the project.
constexpr int kBlank = 0;

// Label ids in [1, vocab); never contains the blank.
using LabelSequence = std::vector<int>;

// Minimum number of frames that admits any CTC alignment:
// |labels| plus one mandatory blank between each adjacent equal pair.
int required_length(const LabelSequence& labels);

// -log P(labels | logits) summed over all alignments, forward recursion on
// the blank-augmented label sequence in log space. logits is T×V with blank
// at column 0. Differentiable w.r.t. logits.
Tensor ctc_loss(Tape* tape, const Tensor& logits, const LabelSequence& labels);

// Greedy per-frame decision; ties broken toward the smallest id.
std::vector<int> per_frame_argmax(const Tensor& logits);

// Best-path postprocessing: merge adjacent repeats, then drop blanks.
LabelSequence collapse(const std::vector<int>& frame_ids);

}  // namespace sdtc::ctc
