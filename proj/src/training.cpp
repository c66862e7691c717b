#include "m2trec/training.hpp"

#include "m2trec/errors.hpp"
#include "m2trec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace m2trec {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (eval_k < 1) throw ValidationError("eval_k must be >= 1");
  adam.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"max_epochs", max_epochs}, {"patience", patience},
          {"eval_k", eval_k},         {"seed", seed},             {"optimizer", adam.to_json()}};
}

double train_step(Model<float>& model, Adam<float>& optimizer, std::span<const Example* const> batch,
                  std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Model<float>::Cache cache;
  const auto out = model.forward(batch, Mode::train, &rng, &cache);
  for (std::size_t i = 0; i < out.example_loss.size(); ++i) {
    if (!std::isfinite(out.example_loss[i])) {
      const auto& tag = batch[i]->tag;
      throw DivergenceError("non-finite loss on example " + (tag.empty() ? std::to_string(i) : tag));
    }
  }
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite batch loss");
  model.parameters().zero_grad();
  model.backward(cache);
  optimizer.step();
  return out.loss;
}

namespace {

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

FitResult fit(Model<float>& model, std::span<const Example> train, std::span<const Example> valid,
              const TrainConfig& config, const LogSink& log) {
  config.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  if (valid.empty()) throw ValidationError("validation set is empty");
  Adam<float> optimizer(model.parameters(), config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  FitResult result;
  auto best = model.parameters().snapshot();
  int stale = 0;
  std::vector<const Example*> batch;
  try {
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
      shuffle(order, rng);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
        loss_sum += train_step(model, optimizer, batch, rng);
        ++batches;
      }
      EpochRecord record;
      record.epoch = epoch;
      record.step = optimizer.steps();
      record.train_loss = loss_sum / static_cast<double>(batches);
      record.valid_hit = item_hit_rate(model, valid, config.eval_k);
      result.history.push_back(record);
      result.steps = optimizer.steps();
      if (log) {
        log({{"event", "epoch"},
             {"epoch", epoch},
             {"step", record.step},
             {"train_loss", record.train_loss},
             {"valid_hit", record.valid_hit},
             {"k", config.eval_k}});
      }
      if (record.valid_hit > result.best_valid_hit) {
        result.best_valid_hit = record.valid_hit;
        result.best_epoch = epoch;
        best = model.parameters().snapshot();
        stale = 0;
      } else if (++stale >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  } catch (const DivergenceError& e) {
    model.parameters().restore(best);
    if (log) log({{"event", "diverged"}, {"step", optimizer.steps()}, {"error", e.what()}});
    throw;
  }
  model.parameters().restore(best);
  return result;
}

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

const GradCheckGroup* GradCheckReport::find(std::string_view name) const {
  for (const auto& g : groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json j = {{"tolerance", tolerance}, {"passed", passed}, {"groups", nlohmann::json::array()}};
  for (const auto& g : groups) {
    j["groups"].push_back({{"name", g.name},
                           {"checked", g.checked},
                           {"total", g.total},
                           {"max_rel_error", g.max_rel_error},
                           {"max_abs_grad", g.max_abs_grad},
                           {"passed", g.passed}});
  }
  return j;
}

GradCheckReport gradient_check(Model<double>& model, std::span<const Example* const> batch,
                               const GradCheckOptions& options) {
  auto& registry = model.parameters();
  registry.zero_grad();
  Model<double>::Cache cache;
  model.forward(batch, Mode::infer, nullptr, &cache);
  model.backward(cache);

  const auto loss_at = [&]() { return model.forward(batch, Mode::infer, nullptr).loss; };
  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t p = 0; p < registry.count(); ++p) {
    auto& param = registry.at(p);
    GradCheckGroup group;
    group.name = param.name;
    group.total = static_cast<std::size_t>(param.size());
    std::vector<std::size_t> picks(group.total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (picks.size() > options.samples_per_tensor) {
      shuffle(picks, rng);
      picks.resize(options.samples_per_tensor);
    }
    for (const std::size_t i : picks) {
      double& x = param.value.data()[i];
      const double saved = x;
      x = saved + options.epsilon;
      const double plus = loss_at();
      x = saved - options.epsilon;
      const double minus = loss_at();
      x = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double analytic = param.grad.data()[i];
      group.max_rel_error = std::max(group.max_rel_error, gradient_relative_error(analytic, numeric));
      group.max_abs_grad = std::max(group.max_abs_grad, std::abs(analytic));
      ++group.checked;
    }
    group.passed = group.max_rel_error <= options.tolerance;
    report.passed = report.passed && group.passed;
    report.groups.push_back(group);
  }
  return report;
}

}  // namespace m2trec
