#pragma once

#include "m2trec/model.hpp"
#include "m2trec/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace m2trec {

struct TrainConfig {
  std::size_t batch_size = 128;
  int max_epochs = 30;
  int patience = 3;  // non-improving validations before stopping
  int eval_k = 20;
  std::uint64_t seed = 1;
  AdamConfig adam;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  double train_loss = 0.0;  // mean pre-update batch loss
  double valid_hit = 0.0;   // item-task HIT@eval_k
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_valid_hit = -1.0;
  std::uint64_t steps = 0;
  bool early_stopped = false;
};

// Forward, backward and one optimizer update on the batch. Returns the batch
// loss before the update. Throws DivergenceError on a non-finite loss.
double train_step(Model<float>& model, Adam<float>& optimizer, std::span<const Example* const> batch,
                  std::mt19937_64& rng);

using LogSink = std::function<void(const nlohmann::json&)>;

// Trains until early stopping or max_epochs and leaves the best-validation
// parameters in the model. On divergence the best parameters are restored
// before the DivergenceError propagates.
FitResult fit(Model<float>& model, std::span<const Example> train, std::span<const Example> valid,
              const TrainConfig& config, const LogSink& log = {});

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  std::size_t samples_per_tensor = 500;  // all scalars when the tensor is smaller
  std::uint64_t seed = 1;
};

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  std::size_t total = 0;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckGroup> groups;
  bool passed = true;

  const GradCheckGroup* find(std::string_view name) const;
  nlohmann::json to_json() const;
};

// |a - n| / max(|a|, |n|, kGradCheckFloor)
inline constexpr double kGradCheckFloor = 1e-6;
double gradient_relative_error(double analytic, double numeric);

// Central differences on the mean batch loss in inference mode (no dropout),
// one group per registered tensor.
GradCheckReport gradient_check(Model<double>& model, std::span<const Example* const> batch,
                               const GradCheckOptions& options = {});

}  // namespace m2trec
