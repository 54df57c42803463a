#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dmrl/common.hpp"
#include "dmrl/grammar.hpp"
#include "dmrl/taskgen.hpp"

namespace dmrl {

inline constexpr int kBos = -1;

/// Everything a policy may condition on when choosing the token at `position`.
struct DecisionContext {
  const QAItem& item;
  PromptStyle prompt;
  Prefix mode;   // prefix at the head of the response so far, whether imposed or chosen
  int prev;      // previous response token, kBos at the start
  int prev2;     // token before that, kBos if absent
  int position;  // index of the token being chosen
};

/// Conditional next-token policy over a response grammar. Parameters live outside
/// the policy in a flat vector so snapshots stay plain immutable data.
class SequencePolicy {
 public:
  virtual ~SequencePolicy() = default;

  virtual const ResponseGrammar& grammar() const = 0;
  virtual std::size_t num_params() const = 0;

  /// Writes grammar().vocab_size() next-token logits.
  virtual void logits(std::span<const double> params, const DecisionContext& ctx,
                      std::span<double> out) const = 0;

  /// grad += (d logits / d params)^T * dlogits.
  virtual void accumulate_grad(std::span<const double> params, const DecisionContext& ctx,
                               std::span<const double> dlogits, std::span<double> grad) const = 0;
};

/// Architecture of the reference policy.
struct ModelSpec {
  ResponseGrammar grammar{4, 48};
  int feature_dim = 20;
  int question_vocab = 7;
  int position_buckets = 64;

  bool operator==(const ModelSpec&) const = default;
};

/// Reference desk-scale policy. Decoding follows the response grammar, so only
/// grammatical continuations get logits. The response's mode prefix and the previous
/// token together select an affine map of the prompt encoding
///
///   z = [features, question-token counts, dual-prompt flag]
///
/// and the logits add a learned embedding of the token before it and a bounded
/// position bias:
///
///   logits[v] = W[mode][prev][v] . z + U[prev2][v] + P[min(position, buckets - 1)][v] + b[v]
///
/// Gating on the previous token lets body tokens carry the running value of a
/// derivation, gating on the mode keeps the two thinking styles from overwriting
/// each other, and U lets the answer step read the last body token across ANSWER_MARK.
class GatedLinearPolicy final : public SequencePolicy {
 public:
  explicit GatedLinearPolicy(ModelSpec spec);

  const ResponseGrammar& grammar() const override { return spec_.grammar; }
  std::size_t num_params() const override { return b_off_ + vocab_; }
  void logits(std::span<const double> params, const DecisionContext& ctx, std::span<double> out) const override;
  void accumulate_grad(std::span<const double> params, const DecisionContext& ctx, std::span<const double> dlogits,
                       std::span<double> grad) const override;

  const ModelSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return input_dim_; }
  void encode(const DecisionContext& ctx, std::span<double> z) const;

  // Parameter addressing, exposed for tests. w_index requires a grammatical (prev, next).
  std::size_t w_index(Prefix mode, int prev, int next, std::size_t j) const;
  std::size_t u_index(int prev2, int next) const {
    return u_off_ + static_cast<std::size_t>(row(prev2)) * vocab_ + static_cast<std::size_t>(next);
  }
  std::size_t p_index(int position, int next) const {
    return p_off_ + static_cast<std::size_t>(bucket(position)) * vocab_ + static_cast<std::size_t>(next);
  }
  std::size_t b_index(int next) const { return b_off_ + static_cast<std::size_t>(next); }

 private:
  int row(int tok) const { return tok == kBos ? static_cast<int>(vocab_) : tok; }
  int bucket(int position) const { return position < spec_.position_buckets ? position : spec_.position_buckets - 1; }
  // The answer readout (after ANSWER_MARK) is shared by all modes.
  std::size_t w_row(Prefix mode, int prev) const {
    const auto& g = spec_.grammar;
    if (prev == g.answer_mark() || g.is_answer(prev)) mode = Prefix::None;
    return ((static_cast<std::size_t>(mode) * (vocab_ + 1) + static_cast<std::size_t>(row(prev))) * slots_) *
           input_dim_;
  }
  void check_context(const DecisionContext& ctx) const;

  ModelSpec spec_;
  std::size_t vocab_;
  std::size_t slots_;
  std::size_t input_dim_;
  std::size_t u_off_, p_off_, b_off_;
};

enum class SnapshotRole { Current, Old, Reference };

std::string_view to_string(SnapshotRole r);
SnapshotRole parse_snapshot_role(std::string_view s);

/// Immutable parameter vector shared between workers; copies are cheap.
class PolicySnapshot {
 public:
  PolicySnapshot(std::vector<double> params, SnapshotRole role, std::int64_t version);

  std::span<const double> params() const { return *params_; }
  std::size_t size() const { return params_->size(); }
  SnapshotRole role() const { return role_; }
  std::int64_t version() const { return version_; }

  /// Same parameters under another role (no copy).
  PolicySnapshot as(SnapshotRole role, std::int64_t version) const;

 private:
  std::shared_ptr<const std::vector<double>> params_;
  SnapshotRole role_;
  std::int64_t version_;
};

/// All-zero parameters: a uniform policy over the vocabulary.
PolicySnapshot zero_snapshot(const SequencePolicy& policy);

struct GenConfig {
  double temperature = 1.0;
  int max_len = 64;
  PromptStyle prompt = PromptStyle::DualMode;
  bool greedy = false;
};

/// Samples k independent rollouts. Rollout r uses the stream derive_seed(seed, r).
/// With a forced prefix the prefix token is inserted as context: it is the first
/// response token but not a policy choice, so it does not enter log_prob.
std::vector<Rollout> sample_rollouts(const SequencePolicy& policy, const PolicySnapshot& snapshot,
                                     const QAItem& item, int k, std::optional<Mode> forced_prefix,
                                     const GenConfig& gen, std::uint64_t seed);

/// Sum of log-probabilities of the policy-chosen tokens.
double log_prob(const SequencePolicy& policy, std::span<const double> params, const QAItem& item,
                const Rollout& rollout, double temperature = 1.0);
inline double log_prob(const SequencePolicy& policy, const PolicySnapshot& s, const QAItem& item,
                       const Rollout& rollout, double temperature = 1.0) {
  return log_prob(policy, s.params(), item, rollout, temperature);
}

/// grad += scale * d log_prob / d params. Returns log_prob.
double accumulate_grad_log_prob(const SequencePolicy& policy, std::span<const double> params, const QAItem& item,
                                const Rollout& rollout, double scale, std::span<double> grad);

std::vector<double> grad_log_prob(const SequencePolicy& policy, const PolicySnapshot& snapshot, const QAItem& item,
                                  const Rollout& rollout);

/// Exact KL(current || reference) of the full next-token distributions, summed over
/// the decision points the rollout visits.
double kl_to_reference(const SequencePolicy& policy, std::span<const double> current,
                       std::span<const double> reference, const QAItem& item, const Rollout& rollout);
inline double kl_to_reference(const SequencePolicy& policy, const PolicySnapshot& current,
                              const PolicySnapshot& reference, const QAItem& item, const Rollout& rollout) {
  return kl_to_reference(policy, current.params(), reference.params(), item, rollout);
}

/// grad += scale * d KL / d current. Returns the KL.
double accumulate_grad_kl(const SequencePolicy& policy, std::span<const double> current,
                          std::span<const double> reference, const QAItem& item, const Rollout& rollout,
                          double scale, std::span<double> grad);

/// Calls fn(ctx, chosen_token) for every policy-chosen token of a rollout.
template <typename Fn>
void for_each_decision(const ResponseGrammar& g, const QAItem& item, const Rollout& rollout, Fn&& fn) {
  const auto& toks = rollout.tokens;
  const std::size_t first = rollout.forced ? 1 : 0;
  for (std::size_t i = first; i < toks.size(); ++i) {
    const DecisionContext ctx{item,
                              rollout.prompt,
                              i >= 1 ? g.prefix_of(toks[0]) : Prefix::None,
                              i >= 1 ? toks[i - 1] : kBos,
                              i >= 2 ? toks[i - 2] : kBos,
                              static_cast<int>(i)};
    fn(ctx, toks[i]);
  }
}

/// In-place log-softmax of logits / temperature.
void log_softmax(std::span<double> logits, double temperature = 1.0);

}  // namespace dmrl
