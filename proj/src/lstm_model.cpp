#include "earlycast/lstm_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "earlycast/error.hpp"
#include "earlycast/init.hpp"
#include "earlycast/kernels.hpp"
#include "earlycast/loss.hpp"

namespace earlycast {

std::string_view variant_name(LstmVariant variant) {
  switch (variant) {
    case LstmVariant::kMto: return "MTO";
    case LstmVariant::kMtm: return "MTM";
    case LstmVariant::kHyb: return "HYB";
    case LstmVariant::kPredictor: return "PREDICTOR";
  }
  return "unknown";
}

std::optional<LstmVariant> parse_lstm_variant(std::string_view name) {
  for (auto v : {LstmVariant::kMto, LstmVariant::kMtm, LstmVariant::kHyb, LstmVariant::kPredictor}) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

LstmModelConfig LstmModelConfig::for_variant(LstmVariant variant) {
  LstmModelConfig config;
  config.variant = variant;
  if (variant == LstmVariant::kMto) {
    config.output_dropout = 0.5;
    config.epochs = 250;
  }
  return config;
}

void LstmModelConfig::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r < 1.0; };
  if (!rate_ok(output_dropout) || !rate_ok(recurrent_dropout)) {
    throw Error("dropout rates must lie in [0, 1), got " + std::to_string(output_dropout) + " and " +
                std::to_string(recurrent_dropout));
  }
  if (epochs == 0) throw Error("epochs must be positive");
  if (input_features == 0 || hidden == 0 || layers == 0) throw Error("LSTM dimensions must be positive");
}

std::size_t lstm_layer_parameter_count(std::size_t input, std::size_t hidden) {
  return 4 * (hidden * (input + hidden) + hidden);
}

std::vector<Tensor*> LstmModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.w);
    out.push_back(&layer.u);
    out.push_back(&layer.b);
  }
  if (config.has_classifier()) {
    out.push_back(&cls_w);
    out.push_back(&cls_b);
  }
  if (config.has_predictor()) {
    out.push_back(&pred_w);
    out.push_back(&pred_b);
  }
  return out;
}

std::vector<const Tensor*> LstmModel::parameters() const {
  auto mutable_list = const_cast<LstmModel*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

std::size_t LstmModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

LstmModel build_model(const LstmModelConfig& config, Rng& rng) {
  config.validate();
  LstmModel model;
  model.config = config;
  const std::size_t hid = config.hidden;
  std::size_t in = config.input_features;
  for (std::size_t l = 0; l < config.layers; ++l) {
    LstmLayerParams layer;
    layer.w = init_xavier_uniform(rng, in, 4 * hid);
    layer.u = init_orthogonal(rng, hid, 4 * hid);
    layer.b = Tensor(Shape{4 * hid});
    for (std::size_t j = hid; j < 2 * hid; ++j) layer.b[j] = config.forget_bias;
    model.layers.push_back(std::move(layer));
    in = hid;
  }
  if (config.has_classifier()) {
    model.cls_w = init_xavier_uniform(rng, hid, 1);
    model.cls_b = Tensor(Shape{1});
  }
  if (config.has_predictor()) {
    model.pred_w = init_xavier_uniform(rng, hid, config.input_features);
    model.pred_b = Tensor(Shape{config.input_features});
  }
  for (Tensor* p : model.parameters()) p->set_requires_grad(true);
  return model;
}

SequenceBatch select_rows(const SequenceBatch& batch, std::span<const std::size_t> index) {
  if (index.empty()) throw DataError("cannot select an empty batch");
  const std::size_t row = batch.steps() * batch.feature_count();
  SequenceBatch out;
  out.features = Tensor(Shape{index.size(), batch.steps(), batch.feature_count()});
  out.labels.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= batch.size()) throw DataError("row " + std::to_string(index[i]) + " out of range");
    std::copy_n(batch.features.raw() + index[i] * row, row, out.features.raw() + i * row);
    out.labels.push_back(batch.labels[index[i]]);
  }
  return out;
}

namespace {

Tensor as_batch(const Tensor& series) {
  if (series.rank() == 2) return series.reshaped(Shape{1, series.dim(0), series.dim(1)});
  if (series.rank() != 3) throw ShapeError("sequence must be [T x F] or [B x T x F], got " + shape_string(series.shape()));
  return series;
}

void check_features(const LstmModel& model, const Tensor& batch) {
  if (batch.dim(2) != model.config.input_features) {
    throw ShapeError("model expects " + std::to_string(model.config.input_features) + " features, got " +
                     std::to_string(batch.dim(2)));
  }
}

struct GraphOutputs {
  std::vector<NodeId> cls;   // [B x 1] per step
  std::vector<NodeId> pred;  // [B x F] per step
};

GraphOutputs build_forward(Graph& g, LstmModel& model, const Tensor& input, const LstmMasks* masks,
                           bool need_cls_every_step) {
  const auto& cfg = model.config;
  const std::size_t batch = input.dim(0), steps = input.dim(1), hid = cfg.hidden;
  const NodeId in = g.constant(input);
  std::vector<NodeId> w, u, b;
  for (auto& layer : model.layers) {
    w.push_back(g.parameter(layer.w));
    u.push_back(g.parameter(layer.u));
    b.push_back(g.parameter(layer.b));
  }
  NodeId cls_w = 0, cls_b = 0, pred_w = 0, pred_b = 0;
  if (cfg.has_classifier()) {
    cls_w = g.parameter(model.cls_w);
    cls_b = g.parameter(model.cls_b);
  }
  if (cfg.has_predictor()) {
    pred_w = g.parameter(model.pred_w);
    pred_b = g.parameter(model.pred_b);
  }
  const bool rec = masks && !masks->recurrent.empty();
  const bool out_drop = masks && !masks->output.empty();

  std::vector<NodeId> state(cfg.layers, g.constant(Tensor(Shape{batch, 2 * hid})));
  GraphOutputs out;
  for (std::size_t t = 0; t < steps; ++t) {
    NodeId x = g.time_slice(in, t);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      state[l] = g.lstm_cell(x, state[l], w[l], u[l], b[l], rec ? &masks->recurrent[l] : nullptr);
      x = g.slice_cols(state[l], 0, hid);
      if (out_drop) x = g.dropout(x, masks->output[l][t]);
    }
    if (cfg.has_classifier() && (need_cls_every_step || t + 1 == steps)) {
      out.cls.push_back(g.sigmoid(g.add(g.matmul(x, cls_w), cls_b)));
    }
    if (cfg.has_predictor() && t + 1 < steps) out.pred.push_back(g.add(g.matmul(x, pred_w), pred_b));
  }
  return out;
}

Tensor next_step_targets(const Tensor& features) {
  const std::size_t n = features.dim(0), steps = features.dim(1), f = features.dim(2);
  Tensor targets(Shape{n, steps - 1, f});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(features.raw() + (i * steps + 1) * f, (steps - 1) * f, targets.raw() + i * (steps - 1) * f);
  }
  return targets;
}

}  // namespace

LstmMasks sample_lstm_masks(const LstmModelConfig& config, std::size_t batch, std::size_t steps, Rng& rng) {
  LstmMasks masks;
  if (config.recurrent_dropout > 0.0) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      masks.recurrent.push_back(dropout_mask(rng, Shape{batch, 4 * config.hidden}, config.recurrent_dropout));
    }
  }
  if (config.output_dropout > 0.0) {
    masks.output.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
      for (std::size_t t = 0; t < steps; ++t) {
        masks.output[l].push_back(dropout_mask(rng, Shape{batch, config.hidden}, config.output_dropout));
      }
    }
  }
  return masks;
}

SequenceOutputs forward_sequence(const LstmModel& model, const Tensor& series, const LstmMasks* masks) {
  const Tensor input = as_batch(series);
  check_features(model, input);
  const std::size_t batch = input.dim(0), steps = input.dim(1), f = input.dim(2);
  SequenceOutputs out;
  out.batch = batch;
  out.steps = steps;
  if (model.config.has_classifier()) out.classification.resize(batch * steps);
  if (model.config.has_predictor()) out.prediction.resize(batch * steps * f);

  if (!masks) {
    LstmRunner runner(model, batch);
    std::vector<double> x(batch * f);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t r = 0; r < batch; ++r) std::copy_n(input.raw() + (r * steps + t) * f, f, x.data() + r * f);
      runner.step(x.data());
      for (std::size_t r = 0; r < batch; ++r) {
        if (!out.classification.empty()) out.classification[r * steps + t] = runner.classification()[r];
        if (!out.prediction.empty()) {
          std::copy_n(runner.prediction().data() + r * f, f, out.prediction.data() + (r * steps + t) * f);
        }
      }
    }
    return out;
  }

  // Training semantics go through the graph so the masks are applied exactly
  // as during optimization. The final prediction step is not built there.
  LstmModel& m = const_cast<LstmModel&>(model);
  Graph g;
  const GraphOutputs nodes = build_forward(g, m, input, masks, true);
  for (std::size_t t = 0; t < nodes.cls.size(); ++t) {
    const Tensor& v = g.value(nodes.cls[t]);
    for (std::size_t r = 0; r < batch; ++r) out.classification[r * steps + t] = v[r];
  }
  if (!out.prediction.empty()) {
    std::fill(out.prediction.begin(), out.prediction.end(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < nodes.pred.size(); ++t) {
      const Tensor& v = g.value(nodes.pred[t]);
      for (std::size_t r = 0; r < batch; ++r) {
        std::copy_n(v.raw() + r * f, f, out.prediction.data() + (r * steps + t) * f);
      }
    }
  }
  return out;
}

NodeId lstm_training_loss(Graph& g, LstmModel& model, const SequenceBatch& batch, const LstmMasks* masks) {
  check_features(model, batch.features);
  const auto variant = model.config.variant;
  const std::size_t n = batch.size(), steps = batch.steps();
  if (model.config.has_predictor() && steps < 2) throw DataError("next-step prediction needs at least 2 steps");
  const GraphOutputs nodes = build_forward(g, model, batch.features, masks, variant != LstmVariant::kMto);

  std::optional<NodeId> cls_loss, pred_loss;
  if (variant == LstmVariant::kMto) {
    cls_loss = g.bce(nodes.cls.back(), Tensor(Shape{n, 1}, batch.labels));
  } else if (model.config.has_classifier()) {
    Tensor targets(Shape{n, steps, 1});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < steps; ++t) targets[i * steps + t] = batch.labels[i];
    cls_loss = g.bce(g.stack_time(nodes.cls), targets);
  }
  if (model.config.has_predictor()) pred_loss = g.mse(g.stack_time(nodes.pred), next_step_targets(batch.features));
  if (cls_loss && pred_loss) return g.add(*cls_loss, *pred_loss);
  return cls_loss ? *cls_loss : *pred_loss;
}

double lstm_evaluation_loss(const LstmModel& model, const SequenceBatch& batch) {
  const SequenceOutputs out = forward_sequence(model, batch.features);
  const std::size_t n = batch.size(), steps = batch.steps(), f = batch.feature_count();
  double loss = 0.0;
  if (model.config.variant == LstmVariant::kMto) {
    std::vector<double> last(n);
    for (std::size_t i = 0; i < n; ++i) last[i] = out.classification[i * steps + steps - 1];
    loss += bce_value(last, batch.labels);
  } else if (model.config.has_classifier()) {
    std::vector<double> targets(n * steps);
    for (std::size_t i = 0; i < n; ++i) std::fill_n(targets.begin() + i * steps, steps, batch.labels[i]);
    loss += bce_value(out.classification, targets);
  }
  if (model.config.has_predictor()) {
    std::vector<double> pred, target;
    pred.reserve(n * (steps - 1) * f);
    target.reserve(n * (steps - 1) * f);
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = out.prediction.data() + i * steps * f;
      const double* x = batch.features.raw() + i * steps * f;
      pred.insert(pred.end(), p, p + (steps - 1) * f);
      target.insert(target.end(), x + f, x + steps * f);
    }
    loss += mse_value(pred, target);
  }
  return loss;
}

LstmTrainResult train_model(const LstmModelConfig& config, const SequenceBatch& train, const SequenceBatch& validation,
                            Rng& rng, const EpochCallback& on_epoch) {
  if (train.size() == 0) throw DataError("training split is empty");
  Rng init_rng = rng.split(0);
  Rng mask_rng = rng.split(1);
  LstmTrainResult result{build_model(config, init_rng), {}};
  LstmModel& model = result.model;
  model.info.seed = rng.seed();
  AdamState adam(config.adam);
  const auto params = model.parameters();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const LstmMasks masks = sample_lstm_masks(config, train.size(), train.steps(), mask_rng);
    double loss = 0.0;
    {
      Graph g;
      const NodeId loss_node = lstm_training_loss(g, model, train, &masks);
      loss = g.value(loss_node)[0];
      if (!std::isfinite(loss)) {
        throw TrainingError(std::string(variant_name(config.variant)) + ": non-finite training loss at epoch " +
                            std::to_string(epoch));
      }
      g.backward(loss_node);
    }
    adam_step(adam, params);
    const double val = validation.size() ? lstm_evaluation_loss(model, validation)
                                         : std::numeric_limits<double>::quiet_NaN();
    result.history.train.push_back(loss);
    result.history.validation.push_back(val);
    if (on_epoch) on_epoch(epoch, loss, val);
  }
  model.info.epochs_run = config.epochs;
  model.info.final_train_loss = result.history.train.back();
  model.info.final_validation_loss = result.history.validation.back();
  return result;
}

LstmRunner::LstmRunner(const LstmModel& model, std::size_t batch) : model_(&model), batch_(batch) {
  if (batch == 0) throw ShapeError("runner batch must be positive");
  const std::size_t hid = model.config.hidden;
  h_.assign(model.config.layers, std::vector<double>(batch * hid, 0.0));
  c_.assign(model.config.layers, std::vector<double>(batch * hid, 0.0));
  gates_.resize(batch * 4 * hid);
  tanh_c_.resize(batch * hid);
  h_next_.resize(batch * hid);
  c_next_.resize(batch * hid);
  if (model.config.has_classifier()) cls_.assign(batch, 0.0);
  if (model.config.has_predictor()) pred_.assign(batch * model.config.input_features, 0.0);
}

void LstmRunner::reset() {
  for (auto& h : h_) std::fill(h.begin(), h.end(), 0.0);
  for (auto& c : c_) std::fill(c.begin(), c.end(), 0.0);
  steps_ = 0;
}

void LstmRunner::step(const double* x) {
  const auto& cfg = model_->config;
  const std::size_t hid = cfg.hidden, f = cfg.input_features;
  const double* in = x;
  std::size_t in_dim = f;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& p = model_->layers[l];
    kernels::lstm_forward({batch_, in_dim, hid}, in, h_[l].data(), c_[l].data(), p.w.raw(), p.u.raw(), p.b.raw(),
                          nullptr, gates_.data(), c_next_.data(), tanh_c_.data(), h_next_.data());
    h_[l].swap(h_next_);
    c_[l].swap(c_next_);
    in = h_[l].data();
    in_dim = hid;
  }
  // Head arithmetic mirrors the graph: product into zeros, then bias.
  if (!cls_.empty()) {
    std::fill(cls_.begin(), cls_.end(), 0.0);
    kernels::gemm_acc(batch_, 1, hid, in, hid, model_->cls_w.raw(), 1, cls_.data(), 1);
    for (double& v : cls_) v = kernels::sigmoid(v + model_->cls_b[0]);
  }
  if (!pred_.empty()) {
    std::fill(pred_.begin(), pred_.end(), 0.0);
    kernels::gemm_acc(batch_, f, hid, in, hid, model_->pred_w.raw(), f, pred_.data(), f);
    for (std::size_t r = 0; r < batch_; ++r)
      for (std::size_t j = 0; j < f; ++j) pred_[r * f + j] += model_->pred_b[j];
  }
  ++steps_;
}

}  // namespace earlycast
