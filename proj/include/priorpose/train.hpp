#pragma once

#include <map>
#include <string>
#include <vector>

#include "priorpose/eval.hpp"
#include "priorpose/io.hpp"
#include "priorpose/model.hpp"

namespace priorpose {

struct TrainConfig {
  double lr_main = 1e-3;
  double lr_disc = 1e-4;
  int decay_epoch = 32;       // lr *= decay_factor from this epoch on
  double decay_factor = 0.1;
  int batch_size = 16;
  int epochs = 40;
  std::uint64_t seed = 0;
  LossWeights weights;
  bool adversarial = true;
};

struct StepRecord {
  int step = 0;
  LossTerms terms;   // batch means
  double total = 0.0;  // composite loss under the configured weights
};

struct TrainResult {
  SddrModel model;
  Discriminator disc;
  std::vector<StepRecord> history;
};

// Adam with bias correction; one (m, v) slot per parameter tensor.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(std::vector<TensorRef> params, std::vector<TensorRef> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

// Alternating optimization: per batch, one discriminator step on the
// adversarial objective followed by one main-network step on the composite
// loss. Deterministic under the config seed; throws DivergenceError when the
// loss stops being finite.
TrainResult train(const Dataset& train_ds, const ModelConfig& model_cfg,
                  const TrainConfig& cfg);

struct EvalAux {
  double mean_depth_l1 = 0.0;
  std::map<std::string, double> chamfer_depth;  // per-category means
  std::map<std::string, double> chamfer_nocs;
  double mean_chamfer_depth = 0.0;
  double mean_chamfer_nocs = 0.0;
  int failed_instances = 0;
};

struct ModelEvaluation {
  EvalReport report;
  EvalAux aux;
  std::vector<PredictionRecord> predictions;
};

// Full inference pipeline per instance: forward, depth assembly, lift,
// alignment of the predicted canonical cloud with the lifted depth, size
// recovery, then the detection-matching protocol against ground truth.
ModelEvaluation evaluate_model(const SddrModel& model, const Dataset& ds,
                               int threads = 1, bool with_curves = true);

void save_checkpoint(const SddrModel& model, const Discriminator& disc,
                     const std::string& path, bool binary = false);
std::pair<SddrModel, Discriminator> load_checkpoint(const std::string& path);

void write_loss_csv(const std::vector<StepRecord>& history,
                    const std::string& path);

}  // namespace priorpose
