#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "earlycast/graph.hpp"
#include "earlycast/lstm_model.hpp"
#include "earlycast/optim.hpp"
#include "earlycast/rng.hpp"
#include "earlycast/tensor.hpp"

namespace earlycast {

struct TcnConfig {
  std::string name = "TCN10";
  std::size_t stacks = 1;
  std::size_t filters = 32;
  std::size_t kernel_size = 2;
  std::vector<std::size_t> dilations{1, 5};
  double dropout = 0.2;
  std::size_t batch_size = 32;
  std::size_t epochs = 500;
  std::size_t input_features = 20;
  AdamConfig adam;

  static TcnConfig tcn10();
  static TcnConfig tcn30();
  static TcnConfig tcn60();
  /// "TCN10", "TCN30" or "TCN60".
  static std::optional<TcnConfig> preset(std::string_view name);

  /// stacks * kernel_size * last dilation; a naming convention only.
  std::size_t nominal_receptive_field() const;
  /// 1 + stacks * sum over dilations of 2 (k - 1) d.
  std::size_t receptive_field() const;
  void validate() const;
};

/// Two causal convolutions (C_in -> C, C -> C) with rectifier and dropout
/// after each, plus a 1x1 convolution on the skip path when C_in != C.
/// Kernels are [C_in x k x C].
struct TcnBlockParams {
  std::size_t dilation = 1;
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor down_w, down_b;  // empty without a channel change

  bool has_downsample() const { return down_w.rank() == 3; }
};

struct TcnModel {
  TcnConfig config;
  std::vector<TcnBlockParams> blocks;
  Tensor head_w;  // [C x 1]
  Tensor head_b;  // [1]
  TrainingInfo info;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;
};

std::size_t tcn_block_parameter_count(std::size_t c_in, std::size_t k, std::size_t c_out);

/// He-normal kernels, zero biases, Xavier-uniform head.
TcnModel build_tcn(const TcnConfig& config, Rng& rng);

/// Two [B x T x C] masks per block, one after each activation.
std::vector<Tensor> sample_tcn_masks(const TcnModel& model, std::size_t batch, std::size_t steps, Rng& rng);

/// Appends the network to `graph`; returns the [B x T x 1] probability node.
/// Without masks no dropout is applied.
NodeId tcn_graph_forward(Graph& graph, TcnModel& model, NodeId input, const std::vector<Tensor>* masks);

/// [B x T] per-step probabilities for [B x T x F] (or [T x F]) input.
std::vector<double> tcn_forward(const TcnModel& model, const Tensor& series, const std::vector<Tensor>* masks = nullptr);

NodeId tcn_training_loss(Graph& graph, TcnModel& model, const SequenceBatch& batch, const std::vector<Tensor>* masks);
double tcn_evaluation_loss(const TcnModel& model, const SequenceBatch& batch);

struct TcnTrainResult {
  TcnModel model;
  LossHistory history;
};

/// Mini-batch Adam for exactly config.epochs epochs. Batches come from a
/// fresh shuffle every epoch; the last partial batch is kept. The recorded
/// training loss is the sample-weighted mean over the epoch's batches.
TcnTrainResult train_tcn(const TcnConfig& config, const SequenceBatch& train, const SequenceBatch& validation,
                         Rng& rng, const EpochCallback& on_epoch = {});

}  // namespace earlycast
