#include "earlycast/tcn_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "earlycast/error.hpp"
#include "earlycast/init.hpp"
#include "earlycast/loss.hpp"

namespace earlycast {

TcnConfig TcnConfig::tcn10() { return TcnConfig{}; }

TcnConfig TcnConfig::tcn30() {
  TcnConfig c;
  c.name = "TCN30";
  c.stacks = 3;
  c.filters = 20;
  c.dropout = 0.3;
  c.batch_size = 64;
  return c;
}

TcnConfig TcnConfig::tcn60() {
  TcnConfig c;
  c.name = "TCN60";
  c.stacks = 2;
  c.filters = 20;
  c.dilations = {1, 5, 10, 15};
  c.dropout = 0.3;
  c.batch_size = 64;
  return c;
}

std::optional<TcnConfig> TcnConfig::preset(std::string_view name) {
  if (name == "TCN10") return tcn10();
  if (name == "TCN30") return tcn30();
  if (name == "TCN60") return tcn60();
  return std::nullopt;
}

std::size_t TcnConfig::nominal_receptive_field() const {
  return dilations.empty() ? 0 : stacks * kernel_size * dilations.back();
}

std::size_t TcnConfig::receptive_field() const {
  std::size_t per_stack = 0;
  for (std::size_t d : dilations) per_stack += 2 * (kernel_size - 1) * d;
  return 1 + stacks * per_stack;
}

void TcnConfig::validate() const {
  if (stacks == 0 || filters == 0 || kernel_size == 0 || input_features == 0) {
    throw Error(name + ": stacks, filters, kernel size and input features must be positive");
  }
  if (dilations.empty()) throw Error(name + ": needs at least one dilation");
  for (std::size_t d : dilations) {
    if (d == 0) throw Error(name + ": dilations must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(name + ": dropout must lie in [0, 1)");
  if (batch_size == 0) throw Error(name + ": batch size must be positive");
  if (epochs == 0) throw Error(name + ": epochs must be positive");
}

std::vector<Tensor*> TcnModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& b : blocks) {
    out.insert(out.end(), {&b.conv1_w, &b.conv1_b, &b.conv2_w, &b.conv2_b});
    if (b.has_downsample()) out.insert(out.end(), {&b.down_w, &b.down_b});
  }
  out.insert(out.end(), {&head_w, &head_b});
  return out;
}

std::vector<const Tensor*> TcnModel::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* p : const_cast<TcnModel*>(this)->parameters()) out.push_back(p);
  return out;
}

std::size_t TcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

std::size_t tcn_block_parameter_count(std::size_t c_in, std::size_t k, std::size_t c_out) {
  std::size_t n = (c_in * k * c_out + c_out) + (c_out * k * c_out + c_out);
  if (c_in != c_out) n += c_in * c_out + c_out;
  return n;
}

TcnModel build_tcn(const TcnConfig& config, Rng& rng) {
  config.validate();
  TcnModel m;
  m.config = config;
  const std::size_t k = config.kernel_size, c = config.filters;
  std::size_t c_in = config.input_features;
  for (std::size_t s = 0; s < config.stacks; ++s) {
    for (std::size_t d : config.dilations) {
      TcnBlockParams b;
      b.dilation = d;
      b.conv1_w = init_he_normal(rng, c_in * k, Shape{c_in, k, c});
      b.conv1_b = Tensor(Shape{c});
      b.conv2_w = init_he_normal(rng, c * k, Shape{c, k, c});
      b.conv2_b = Tensor(Shape{c});
      if (c_in != c) {
        b.down_w = init_he_normal(rng, c_in, Shape{c_in, 1, c});
        b.down_b = Tensor(Shape{c});
      }
      m.blocks.push_back(std::move(b));
      c_in = c;
    }
  }
  m.head_w = init_xavier_uniform(rng, c, 1);
  m.head_b = Tensor(Shape{1});
  for (Tensor* p : m.parameters()) p->set_requires_grad(true);
  return m;
}

std::vector<Tensor> sample_tcn_masks(const TcnModel& model, std::size_t batch, std::size_t steps, Rng& rng) {
  std::vector<Tensor> masks;
  if (model.config.dropout == 0.0) return masks;
  for (std::size_t i = 0; i < 2 * model.blocks.size(); ++i) {
    masks.push_back(dropout_mask(rng, Shape{batch, steps, model.config.filters}, model.config.dropout));
  }
  return masks;
}

NodeId tcn_graph_forward(Graph& g, TcnModel& model, NodeId input, const std::vector<Tensor>* masks) {
  const Tensor& x = g.value(input);
  if (x.rank() != 3 || x.dim(2) != model.config.input_features) {
    throw ShapeError(model.config.name + " expects [B x T x " + std::to_string(model.config.input_features) +
                     "] input, got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), steps = x.dim(1), c = model.config.filters;
  if (steps == 0) throw ShapeError(model.config.name + ": empty series");
  const bool drop = masks && !masks->empty();
  if (drop && masks->size() != 2 * model.blocks.size()) throw ShapeError("wrong number of TCN dropout masks");

  NodeId h = input;
  std::size_t mi = 0;
  for (auto& b : model.blocks) {
    NodeId y = g.relu(g.causal_conv(h, g.parameter(b.conv1_w), g.parameter(b.conv1_b), b.dilation));
    if (drop) y = g.dropout(y, (*masks)[mi]);
    ++mi;
    y = g.relu(g.causal_conv(y, g.parameter(b.conv2_w), g.parameter(b.conv2_b), b.dilation));
    if (drop) y = g.dropout(y, (*masks)[mi]);
    ++mi;
    const NodeId skip = b.has_downsample() ? g.causal_conv(h, g.parameter(b.down_w), g.parameter(b.down_b), 1) : h;
    h = g.relu(g.add(y, skip));
  }
  const NodeId flat = g.reshape(h, Shape{batch * steps, c});
  const NodeId logits = g.add(g.matmul(flat, g.parameter(model.head_w)), g.parameter(model.head_b));
  return g.reshape(g.sigmoid(logits), Shape{batch, steps, 1});
}

std::vector<double> tcn_forward(const TcnModel& model, const Tensor& series, const std::vector<Tensor>* masks) {
  Tensor input = series;
  if (input.rank() == 2) input = input.reshaped(Shape{1, series.dim(0), series.dim(1)});
  if (input.rank() != 3) throw ShapeError("sequence must be [T x F] or [B x T x F], got " + shape_string(series.shape()));
  Graph g;
  // The graph only reads parameters on the forward pass.
  const NodeId out = tcn_graph_forward(g, const_cast<TcnModel&>(model), g.constant(std::move(input)), masks);
  const auto v = g.value(out).data();
  return {v.begin(), v.end()};
}

NodeId tcn_training_loss(Graph& g, TcnModel& model, const SequenceBatch& batch, const std::vector<Tensor>* masks) {
  const std::size_t n = batch.size(), steps = batch.steps();
  const NodeId probs = tcn_graph_forward(g, model, g.constant(batch.features), masks);
  Tensor targets(Shape{n, steps, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < steps; ++t) targets[i * steps + t] = batch.labels[i];
  return g.bce(probs, targets);
}

double tcn_evaluation_loss(const TcnModel& model, const SequenceBatch& batch) {
  const auto out = tcn_forward(model, batch.features);
  const std::size_t n = batch.size(), steps = batch.steps();
  std::vector<double> targets(n * steps);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(targets.begin() + i * steps, steps, batch.labels[i]);
  return bce_value(out, targets);
}

TcnTrainResult train_tcn(const TcnConfig& config, const SequenceBatch& train, const SequenceBatch& validation,
                         Rng& rng, const EpochCallback& on_epoch) {
  if (train.size() == 0) throw DataError("training split is empty");
  Rng init_rng = rng.split(0);
  Rng mask_rng = rng.split(1);
  Rng order_rng = rng.split(2);
  TcnTrainResult result{build_tcn(config, init_rng), {}};
  TcnModel& model = result.model;
  model.info.seed = rng.seed();
  AdamState adam(config.adam);
  const auto params = model.parameters();
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const SequenceBatch mb =
          select_rows(train, std::span<const std::size_t>(order.data() + start, end - start));
      const auto masks = sample_tcn_masks(model, mb.size(), mb.steps(), mask_rng);
      Graph g;
      const NodeId loss_node = tcn_training_loss(g, model, mb, &masks);
      const double loss = g.value(loss_node)[0];
      if (!std::isfinite(loss)) {
        throw TrainingError(config.name + ": non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch starting at " + std::to_string(start));
      }
      g.backward(loss_node);
      adam_step(adam, params);
      weighted += loss * static_cast<double>(mb.size());
    }
    const double loss = weighted / static_cast<double>(train.size());
    const double val = validation.size() ? tcn_evaluation_loss(model, validation)
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

}  // namespace earlycast
