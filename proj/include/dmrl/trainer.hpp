#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmrl/optim.hpp"
#include "dmrl/sampler.hpp"

namespace dmrl {

enum class RatioLevel { Sequence, Token };

/// Which target the format reward compares against. Auto uses the label unless
/// every rollout is free-form (m == n), which is training without labels.
enum class FormatTarget { Auto, Label, AnyPrefix };

std::string_view to_string(RatioLevel r);
std::string_view to_string(FormatTarget f);
RatioLevel parse_ratio_level(std::string_view s);
FormatTarget parse_format_target(std::string_view s);

struct TrainConfig {
  int n = 8;
  int m = 4;
  double clip_eps = 0.2;
  double kl_beta = 1e-3;
  double lr = 1e-2;
  int batch_size = 32;
  int inner_epochs = 1;
  int max_steps = 150;
  int max_len = 64;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  RatioLevel ratio = RatioLevel::Sequence;
  FormatTarget format_target = FormatTarget::Auto;
  bool normalize_advantages = false;  // ablation switch only

  static TrainConfig paper();
  static TrainConfig toy();

  void validate() const;
  bool uses_labels() const;
};

struct StepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
  std::optional<double> fast_ratio_free;  // absent when m == 0
  std::optional<double> mean_len_fast;    // absent when no rollout carried the prefix
  std::optional<double> mean_len_slow;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double objective = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

struct ObjectiveValue {
  double value = 0.0;      // surrogate - beta * mean KL
  double surrogate = 0.0;  // (1/n) sum of clipped terms
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Adds scale * d J / d current to grad and returns J, where
///   J = (1/n) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta (1/n) sum_i KL_i.
/// `old_log_probs`, when nonempty, supplies log pi_old(y_i) for the sequence-level ratio
/// instead of re-evaluating the old snapshot.
ObjectiveValue accumulate_grpo_objective(const SequencePolicy& policy, const RolloutGroup& group,
                                         std::span<const double> current, std::span<const double> old,
                                         std::span<const double> reference, double eps, double beta,
                                         RatioLevel ratio, double scale, std::span<double> grad,
                                         std::span<const double> old_log_probs = {});

struct ObjectiveResult {
  ObjectiveValue value;
  std::vector<double> gradient;
};

ObjectiveResult grpo_objective(const SequencePolicy& policy, const RolloutGroup& group, const PolicySnapshot& current,
                               const PolicySnapshot& old, const PolicySnapshot& reference, double eps, double beta,
                               RatioLevel ratio = RatioLevel::Sequence);

/// Current/Old/Reference snapshots plus optimizer moments.
class TrainerState {
 public:
  TrainerState(const SequencePolicy& policy, TrainConfig cfg, const PolicySnapshot& base);

  const PolicySnapshot& reference() const { return reference_; }
  PolicySnapshot current() const;
  std::span<const double> current_params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  int steps_done() const { return step_; }

  /// One rollout batch: Old <- Current, sample and score a group per item,
  /// then cfg.inner_epochs optimizer updates.
  StepMetrics train_step(const std::vector<LabeledItem>& batch);

  /// Groups from the most recent step (for debugging dumps).
  const std::vector<RolloutGroup>& last_groups() const { return last_groups_; }

 private:
  const SequencePolicy& policy_;
  TrainConfig cfg_;
  PolicySnapshot reference_;
  std::vector<double> params_;
  Adam adam_;
  int step_ = 0;
  std::vector<RolloutGroup> last_groups_;
};

/// Shuffles labeled items once per pass and stratifies by label, so each batch
/// carries the dataset's fast/slow mix.
std::vector<std::vector<LabeledItem>> make_batches(const std::vector<LabeledItem>& labeled, int batch_size,
                                                   int n_batches, std::uint64_t seed);

struct TrainResult {
  PolicySnapshot final_policy;
  std::vector<StepMetrics> log;
};

using StepCallback = std::function<void(const TrainerState&, const StepMetrics&)>;

/// Reference stays fixed to `base` for the whole run.
TrainResult train(const SequencePolicy& policy, const TrainConfig& cfg, const std::vector<LabeledItem>& labeled,
                  const PolicySnapshot& base, const StepCallback& on_step = {});

}  // namespace dmrl
