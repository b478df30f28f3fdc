#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "earlycast/graph.hpp"
#include "earlycast/optim.hpp"
#include "earlycast/rng.hpp"
#include "earlycast/tensor.hpp"

namespace earlycast {

enum class LstmVariant { kMto, kMtm, kHyb, kPredictor };

std::string_view variant_name(LstmVariant variant);
std::optional<LstmVariant> parse_lstm_variant(std::string_view name);

struct LstmModelConfig {
  LstmVariant variant = LstmVariant::kMtm;
  std::size_t input_features = 20;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  double output_dropout = 0.4;
  double recurrent_dropout = 0.2;
  std::size_t epochs = 200;
  bool full_batch = true;
  /// Initial forget-gate bias. Zero like the other biases unless overridden.
  double forget_bias = 0.0;
  AdamConfig adam;

  /// Defaults per variant: MTO drops 50 % and trains 250 epochs, the others
  /// drop 40 % and train 200.
  static LstmModelConfig for_variant(LstmVariant variant);

  bool has_classifier() const { return variant != LstmVariant::kPredictor; }
  bool has_predictor() const { return variant == LstmVariant::kHyb || variant == LstmVariant::kPredictor; }
  void validate() const;
};

/// One layer. w is [F_in x 4H], u is [H x 4H], b is [4H]; gate blocks are
/// ordered input, forget, candidate, output.
struct LstmLayerParams {
  Tensor w;
  Tensor u;
  Tensor b;
};

struct TrainingInfo {
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct LossHistory {
  std::vector<double> train;
  std::vector<double> validation;
};

struct LstmModel {
  LstmModelConfig config;
  std::vector<LstmLayerParams> layers;
  Tensor cls_w;  // [H x 1], only with a classification head
  Tensor cls_b;  // [1]
  Tensor pred_w;  // [H x F], only with a prediction head
  Tensor pred_b;  // [F]
  TrainingInfo info;

  /// Trainable tensors in declaration order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
};

/// Closed-form count for one layer: 4 (H (F_in + H) + H).
std::size_t lstm_layer_parameter_count(std::size_t input, std::size_t hidden);

/// Xavier-uniform input weights, orthogonal recurrent weights, zero biases
/// (forget block set to config.forget_bias).
LstmModel build_model(const LstmModelConfig& config, Rng& rng);

/// Stacked sequences of equal length. features is [N x T x F]; labels has N
/// entries in {0, 1} (ignored by the predictor).
struct SequenceBatch {
  Tensor features;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t steps() const { return features.dim(1); }
  std::size_t feature_count() const { return features.dim(2); }
};

/// Gathers the rows `index` of `batch`.
SequenceBatch select_rows(const SequenceBatch& batch, std::span<const std::size_t> index);

/// Training-time dropout masks with inverted scaling (kept entries hold
/// 1 / keep). Recurrent masks are [B x 4H] per layer, fixed for the whole
/// sequence; output masks are [B x H] per layer per step. A zero rate leaves
/// the corresponding list empty.
struct LstmMasks {
  std::vector<Tensor> recurrent;
  std::vector<std::vector<Tensor>> output;
};

LstmMasks sample_lstm_masks(const LstmModelConfig& config, std::size_t batch, std::size_t steps, Rng& rng);

struct SequenceOutputs {
  /// [B x T] per-step classification in (0, 1); empty without a classifier.
  std::vector<double> classification;
  /// [B x T x F] prediction of the next observation; empty without a predictor.
  /// Training-mode passes leave the final step NaN (it has no target).
  std::vector<double> prediction;
  std::size_t batch = 0;
  std::size_t steps = 0;
};

/// Runs the model over [B x T x F] (or [T x F]) sequences. With `masks` the
/// pass uses training semantics; without, evaluation semantics (no dropout).
SequenceOutputs forward_sequence(const LstmModel& model, const Tensor& series, const LstmMasks* masks = nullptr);

/// Appends the training loss of `batch` to `graph` and returns the scalar loss
/// node. MTO: BCE at the final step. MTM: mean BCE over all steps. HYB: mean
/// BCE plus MSE of next-step predictions for steps 2..T. PREDICTOR: the MSE
/// term alone.
NodeId lstm_training_loss(Graph& graph, LstmModel& model, const SequenceBatch& batch, const LstmMasks* masks);

/// Same objective evaluated without dropout and without a graph.
double lstm_evaluation_loss(const LstmModel& model, const SequenceBatch& batch);

struct LstmTrainResult {
  LstmModel model;
  LossHistory history;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double validation_loss)>;

/// Full-batch Adam for exactly config.epochs epochs. `rng` seeds the
/// initialization and the per-epoch dropout masks. Throws TrainingError on a
/// non-finite loss.
LstmTrainResult train_model(const LstmModelConfig& config, const SequenceBatch& train,
                            const SequenceBatch& validation, Rng& rng, const EpochCallback& on_epoch = {});

/// Batched step-by-step evaluation of a trained model, sharing the kernels of
/// the training graph so outputs agree bit for bit. Copying a runner copies
/// its recurrent state.
class LstmRunner {
 public:
  LstmRunner(const LstmModel& model, std::size_t batch);

  /// Advances every row by one observation; `x` is [B x F].
  void step(const double* x);
  void reset();

  std::size_t batch() const { return batch_; }
  std::size_t steps_taken() const { return steps_; }
  /// [B] classification after the last step.
  std::span<const double> classification() const { return cls_; }
  /// [B x F] prediction of the next observation after the last step.
  std::span<const double> prediction() const { return pred_; }

 private:
  const LstmModel* model_;
  std::size_t batch_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> h_;
  std::vector<std::vector<double>> c_;
  std::vector<double> gates_, tanh_c_, h_next_, c_next_;
  std::vector<double> cls_, pred_;
};

}  // namespace earlycast
