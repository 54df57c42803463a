#pragma once

#include <cstdint>
#include <vector>

#include "dmrl/policy.hpp"

namespace dmrl {

/// Scripted teacher whose traces give the base policy its natural behavior:
/// easy questions answered briefly, hard ones through a long derivation, and the
/// right answer only part of the time.
struct TeacherConfig {
  int easy_body_length = 3;
  int hard_body_length = 40;
  double accuracy = 0.6;  // probability the emitted answer equals the derivation's result
  // Per-step chance that a restating step drifts to a wrong value, so long
  // derivations are more error-prone than short ones.
  double slip_prob = 0.0;

  // Under the dual-mode prompt the teacher imitates a model that has not been
  // trained on the format yet: it emits each prefix with the given probability
  // (no prefix otherwise), and follows the prefix's length only some of the time.
  double plain_fraction = 0.5;  // share of traces rendered with the plain prompt
  double fast_prefix_prob = 0.45;
  double slow_prefix_prob = 0.35;
  double prefix_consistency = 0.9;

  void validate(const ResponseGrammar& g) const;
};

struct ImprintOptions {
  double lr = 0.05;
  int batch_size = 64;
};

/// Teacher derivation for `item`: body tokens for a body of `body_length` steps. Step t
/// folds in the t-th slot the question refers to, and later steps restate the running value.
std::vector<int> teacher_body(const ResponseGrammar& g, const QAItem& item, int body_length);

/// One full teacher response under the given prompt.
std::vector<int> teacher_trace(const TeacherConfig& teacher, const ResponseGrammar& g, const QAItem& item,
                               PromptStyle prompt, Rng& rng);

/// Maximum-likelihood fit of `policy` to teacher traces on `dataset` for `steps`
/// minibatch updates. Returns a new Reference snapshot (version 0); the input is untouched.
PolicySnapshot imprint_base_behavior(const SequencePolicy& policy, const PolicySnapshot& start,
                                     const TeacherConfig& teacher, const std::vector<QAItem>& dataset, int steps,
                                     std::uint64_t seed, const ImprintOptions& opts = {});

}  // namespace dmrl
