#include "earlycast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "earlycast/error.hpp"
#include "earlycast/kernels.hpp"
#include "earlycast/loss.hpp"

namespace earlycast {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kConcat: return "concat";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kTimeSlice: return "time_slice";
    case OpKind::kStackTime: return "stack_time";
    case OpKind::kReshape: return "reshape";
    case OpKind::kDropout: return "dropout";
    case OpKind::kCausalConv: return "causal_conv";
    case OpKind::kLstmCell: return "lstm_cell";
    case OpKind::kSum: return "sum";
    case OpKind::kBce: return "bce";
    case OpKind::kMse: return "mse";
  }
  return "unknown";
}

namespace {

[[noreturn]] void fail(std::size_t next_id, OpKind kind, const std::string& expected, const Shape& actual) {
  throw ShapeError("node " + std::to_string(next_id) + " (" + std::string(op_name(kind)) + "): expected " +
                   expected + ", got " + shape_string(actual));
}

void require_rank(std::size_t next_id, OpKind kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) fail(next_id, kind, "rank " + std::to_string(rank), t.shape());
}

template <typename F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.shape());
  const double* src = in.raw();
  double* dst = out.raw();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

const Graph::Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size()) throw Error("graph has no node " + std::to_string(id));
  return nodes_[id];
}

NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value) {
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) {
      throw Error("node " + std::to_string(nodes_.size()) + " (" + std::string(op_name(kind)) +
                  ") references missing node " + std::to_string(in));
    }
  }
  Node n{kind, std::move(inputs), std::move(value), {}, nullptr, {}, {}};
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) { return push(OpKind::kConstant, {}, std::move(value)); }

NodeId Graph::parameter(Tensor& param) {
  for (const auto& [ptr, id] : bound_params_) {
    if (ptr == &param) return id;
  }
  const NodeId id = push(OpKind::kParameter, {}, param);
  nodes_[id].value.set_requires_grad(false);
  nodes_[id].param = &param;
  bound_params_.emplace_back(&param, id);
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kMatMul, va, 2);
  require_rank(id, OpKind::kMatMul, vb, 2);
  if (va.dim(1) != vb.dim(0)) {
    fail(id, OpKind::kMatMul, "right operand with " + std::to_string(va.dim(1)) + " rows", vb.shape());
  }
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out(Shape{m, n});
  kernels::gemm_acc(m, n, k, va.raw(), k, vb.raw(), n, out.raw(), n);
  return push(OpKind::kMatMul, {a, b}, std::move(out));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  Tensor out = va;
  if (va.shape() == vb.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  } else if (vb.rank() == 1 && va.rank() >= 1 && va.shape().back() == vb.dim(0)) {
    const std::size_t cols = vb.dim(0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i % cols];
  } else {
    fail(nodes_.size(), OpKind::kAdd, shape_string(va.shape()) + " or a trailing vector", vb.shape());
  }
  return push(OpKind::kAdd, {a, b}, std::move(out));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  if (va.shape() != vb.shape()) fail(nodes_.size(), OpKind::kMul, shape_string(va.shape()), vb.shape());
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  return push(OpKind::kMul, {a, b}, std::move(out));
}

NodeId Graph::sigmoid(NodeId a) {
  return push(OpKind::kSigmoid, {a}, map_values(node(a).value, kernels::sigmoid));
}

NodeId Graph::tanh(NodeId a) {
  return push(OpKind::kTanh, {a}, map_values(node(a).value, [](double x) { return std::tanh(x); }));
}

NodeId Graph::relu(NodeId a) {
  return push(OpKind::kRelu, {a}, map_values(node(a).value, [](double x) { return x < 0.0 ? 0.0 : x; }));
}

NodeId Graph::concat(NodeId a, NodeId b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kConcat, va, 2);
  require_rank(id, OpKind::kConcat, vb, 2);
  if (va.dim(0) != vb.dim(0)) fail(id, OpKind::kConcat, std::to_string(va.dim(0)) + " rows", vb.shape());
  const std::size_t rows = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
  Tensor out(Shape{rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(va.raw() + r * ca, ca, out.raw() + r * (ca + cb));
    std::copy_n(vb.raw() + r * cb, cb, out.raw() + r * (ca + cb) + ca);
  }
  return push(OpKind::kConcat, {a, b}, std::move(out));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
  const Tensor& va = node(a).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kSliceCols, va, 2);
  if (begin >= end || end > va.dim(1)) {
    fail(id, OpKind::kSliceCols, "columns [" + std::to_string(begin) + ", " + std::to_string(end) + ") in range",
         va.shape());
  }
  const std::size_t rows = va.dim(0), cols = va.dim(1), w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(va.raw() + r * cols + begin, w, out.raw() + r * w);
  const NodeId out_id = push(OpKind::kSliceCols, {a}, std::move(out));
  nodes_[out_id].attrs = {begin, end};
  return out_id;
}

NodeId Graph::time_slice(NodeId sequence, std::size_t t) {
  const Tensor& vs = node(sequence).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kTimeSlice, vs, 3);
  if (t >= vs.dim(1)) fail(id, OpKind::kTimeSlice, "more than " + std::to_string(t) + " steps", vs.shape());
  const std::size_t batch = vs.dim(0), steps = vs.dim(1), feat = vs.dim(2);
  Tensor out(Shape{batch, feat});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(vs.raw() + (b * steps + t) * feat, feat, out.raw() + b * feat);
  const NodeId out_id = push(OpKind::kTimeSlice, {sequence}, std::move(out));
  nodes_[out_id].attrs = {t};
  return out_id;
}

NodeId Graph::stack_time(std::span<const NodeId> steps) {
  const auto id = nodes_.size();
  if (steps.empty()) throw ShapeError("node " + std::to_string(id) + " (stack_time): no steps given");
  const Tensor& first = node(steps[0]).value;
  require_rank(id, OpKind::kStackTime, first, 2);
  const std::size_t batch = first.dim(0), feat = first.dim(1), count = steps.size();
  Tensor out(Shape{batch, count, feat});
  for (std::size_t t = 0; t < count; ++t) {
    const Tensor& v = node(steps[t]).value;
    if (v.shape() != first.shape()) fail(id, OpKind::kStackTime, shape_string(first.shape()), v.shape());
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(v.raw() + b * feat, feat, out.raw() + (b * count + t) * feat);
  }
  return push(OpKind::kStackTime, std::vector<NodeId>(steps.begin(), steps.end()), std::move(out));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
  const Tensor& va = node(a).value;
  if (shape_size(shape) != va.size()) fail(nodes_.size(), OpKind::kReshape, shape_string(shape), va.shape());
  return push(OpKind::kReshape, {a}, va.reshaped(std::move(shape)));
}

NodeId Graph::dropout(NodeId a, Tensor mask) {
  const Tensor& va = node(a).value;
  if (mask.shape() != va.shape()) fail(nodes_.size(), OpKind::kDropout, shape_string(va.shape()), mask.shape());
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const NodeId id = push(OpKind::kDropout, {a}, std::move(out));
  nodes_[id].saved.push_back(std::move(mask));
  return id;
}

NodeId Graph::causal_conv(NodeId input, NodeId kernel, NodeId bias, std::size_t dilation) {
  const Tensor& vin = node(input).value;
  const Tensor& vk = node(kernel).value;
  const Tensor& vb = node(bias).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kCausalConv, vin, 3);
  require_rank(id, OpKind::kCausalConv, vk, 3);
  if (dilation == 0) throw ShapeError("node " + std::to_string(id) + " (causal_conv): dilation must be >= 1");
  const std::size_t batch = vin.dim(0), steps = vin.dim(1), cin = vin.dim(2);
  const std::size_t ksize = vk.dim(1), cout = vk.dim(2);
  if (vk.dim(0) != cin) fail(id, OpKind::kCausalConv, "kernel with " + std::to_string(cin) + " input channels", vk.shape());
  if (vb.rank() != 1 || vb.dim(0) != cout) fail(id, OpKind::kCausalConv, "bias [" + std::to_string(cout) + "]", vb.shape());

  Tensor out(Shape{batch, steps, cout});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) std::copy_n(vb.raw(), cout, out.raw() + (b * steps + t) * cout);
  for (std::size_t j = 0; j < ksize; ++j) {
    const std::size_t shift = j * dilation;
    if (shift >= steps) break;
    const double* tap = vk.raw() + (ksize - 1 - j) * cout;
    for (std::size_t b = 0; b < batch; ++b) {
      kernels::gemm_acc(steps - shift, cout, cin, vin.raw() + b * steps * cin, cin, tap, ksize * cout,
                        out.raw() + (b * steps + shift) * cout, cout);
    }
  }
  const NodeId out_id = push(OpKind::kCausalConv, {input, kernel, bias}, std::move(out));
  nodes_[out_id].attrs = {dilation};
  return out_id;
}

NodeId Graph::lstm_cell(NodeId x, NodeId state, NodeId w, NodeId u, NodeId b, const Tensor* rec_mask) {
  const Tensor& vx = node(x).value;
  const Tensor& vs = node(state).value;
  const Tensor& vw = node(w).value;
  const Tensor& vu = node(u).value;
  const Tensor& vb = node(b).value;
  const auto id = nodes_.size();
  require_rank(id, OpKind::kLstmCell, vx, 2);
  require_rank(id, OpKind::kLstmCell, vw, 2);
  require_rank(id, OpKind::kLstmCell, vu, 2);
  const std::size_t hid = vu.dim(0);
  const kernels::LstmDims dims{vx.dim(0), vx.dim(1), hid};
  if (vw.shape() != Shape{dims.input, 4 * hid}) {
    fail(id, OpKind::kLstmCell, "input weights " + shape_string({dims.input, 4 * hid}), vw.shape());
  }
  if (vu.shape() != Shape{hid, 4 * hid}) fail(id, OpKind::kLstmCell, shape_string({hid, 4 * hid}), vu.shape());
  if (vb.shape() != Shape{4 * hid}) fail(id, OpKind::kLstmCell, shape_string({4 * hid}), vb.shape());
  if (vs.shape() != Shape{dims.batch, 2 * hid}) fail(id, OpKind::kLstmCell, shape_string({dims.batch, 2 * hid}), vs.shape());
  if (rec_mask && rec_mask->shape() != Shape{dims.batch, 4 * hid}) {
    fail(id, OpKind::kLstmCell, "recurrent mask " + shape_string({dims.batch, 4 * hid}), rec_mask->shape());
  }

  const std::size_t n = dims.batch;
  std::vector<double> h_prev(n * hid), c_prev(n * hid);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(vs.raw() + r * 2 * hid, hid, h_prev.data() + r * hid);
    std::copy_n(vs.raw() + r * 2 * hid + hid, hid, c_prev.data() + r * hid);
  }
  Tensor gates(Shape{n, 4 * hid});
  Tensor tanh_c(Shape{n, hid});
  std::vector<double> c_new(n * hid), h_new(n * hid);
  kernels::lstm_forward(dims, vx.raw(), h_prev.data(), c_prev.data(), vw.raw(), vu.raw(), vb.raw(),
                        rec_mask ? rec_mask->raw() : nullptr, gates.raw(), c_new.data(), tanh_c.raw(), h_new.data());
  Tensor out(Shape{n, 2 * hid});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(h_new.data() + r * hid, hid, out.raw() + r * 2 * hid);
    std::copy_n(c_new.data() + r * hid, hid, out.raw() + r * 2 * hid + hid);
  }
  const NodeId out_id = push(OpKind::kLstmCell, {x, state, w, u, b}, std::move(out));
  auto& saved = nodes_[out_id].saved;
  saved.push_back(std::move(gates));
  saved.push_back(std::move(tanh_c));
  if (rec_mask) saved.push_back(*rec_mask);
  return out_id;
}

NodeId Graph::sum(NodeId a) {
  const Tensor& va = node(a).value;
  double total = 0.0;
  for (double v : va.data()) total += v;
  return push(OpKind::kSum, {a}, Tensor::scalar(total));
}

NodeId Graph::bce(NodeId predictions, const Tensor& targets) {
  const Tensor& vp = node(predictions).value;
  if (vp.shape() != targets.shape()) fail(nodes_.size(), OpKind::kBce, shape_string(vp.shape()), targets.shape());
  const NodeId id = push(OpKind::kBce, {predictions}, Tensor::scalar(bce_value(vp.data(), targets.data())));
  nodes_[id].saved.push_back(targets);
  return id;
}

NodeId Graph::mse(NodeId predictions, const Tensor& targets) {
  const Tensor& vp = node(predictions).value;
  if (vp.shape() != targets.shape()) fail(nodes_.size(), OpKind::kMse, shape_string(vp.shape()), targets.shape());
  const NodeId id = push(OpKind::kMse, {predictions}, Tensor::scalar(mse_value(vp.data(), targets.data())));
  nodes_[id].saved.push_back(targets);
  return id;
}

std::vector<double>& Graph::grad_buffer(NodeId id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

void Graph::backward(NodeId loss) {
  const Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw ShapeError("backward: loss node " + std::to_string(loss) + " must be scalar, got " +
                     shape_string(ln.value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  for (const auto& [ptr, id] : bound_params_) nodes_[id].param->zero_grad();

  // Nodes that depend on a parameter; gradients elsewhere are never needed.
  live_.assign(nodes_.size(), 0);
  for (NodeId i = 0; i <= loss; ++i) {
    if (nodes_[i].kind == OpKind::kParameter) {
      live_[i] = 1;
      continue;
    }
    for (NodeId in : nodes_[i].inputs) {
      if (live_[in]) {
        live_[i] = 1;
        break;
      }
    }
  }

  grad_buffer(loss)[0] = 1.0;
  for (NodeId i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !live_[i]) continue;
    if (n.kind == OpKind::kParameter) {
      auto pg = n.param->grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      continue;
    }
    if (n.kind == OpKind::kConstant) continue;
    propagate(i);
    std::vector<double>().swap(n.grad);
  }
}

void Graph::propagate(NodeId id) {
  Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  const auto& in = n.inputs;

  auto live = [&](std::size_t slot) { return live_[in[slot]] != 0; };

  switch (n.kind) {
    case OpKind::kConstant:
    case OpKind::kParameter:
      break;
    case OpKind::kMatMul: {
      const Tensor& a = nodes_[in[0]].value;
      const Tensor& b = nodes_[in[1]].value;
      const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
      if (live(0)) kernels::gemm_nt_acc(m, k, cols, g.data(), cols, b.raw(), cols, grad_buffer(in[0]).data(), k);
      if (live(1)) kernels::gemm_tn_acc(k, cols, m, a.raw(), k, g.data(), cols, grad_buffer(in[1]).data(), cols);
      break;
    }
    case OpKind::kAdd: {
      if (live(0)) {
        auto& ga = grad_buffer(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (live(1)) {
        auto& gb = grad_buffer(in[1]);
        if (gb.size() == g.size()) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % gb.size()] += g[i];
        }
      }
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = nodes_[in[0]].value;
      const Tensor& b = nodes_[in[1]].value;
      if (live(0)) {
        auto& ga = grad_buffer(in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (live(1)) {
        auto& gb = grad_buffer(in[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      break;
    }
    case OpKind::kSigmoid: {
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::kTanh: {
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.value[i];
        ga[i] += g[i] * (1.0 - y * y);
      }
      break;
    }
    case OpKind::kRelu: {
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (n.value[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t rows = n.value.dim(0);
      const std::size_t ca = nodes_[in[0]].value.dim(1), cb = nodes_[in[1]].value.dim(1);
      if (live(0)) {
        auto& ga = grad_buffer(in[0]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
      }
      if (live(1)) {
        auto& gb = grad_buffer(in[1]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
      }
      break;
    }
    case OpKind::kSliceCols: {
      const std::size_t begin = n.attrs[0], w = n.attrs[1] - n.attrs[0];
      const std::size_t rows = n.value.dim(0), cols = nodes_[in[0]].value.dim(1);
      auto& ga = grad_buffer(in[0]);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
      break;
    }
    case OpKind::kTimeSlice: {
      const Tensor& src = nodes_[in[0]].value;
      const std::size_t t = n.attrs[0], batch = src.dim(0), steps = src.dim(1), feat = src.dim(2);
      auto& ga = grad_buffer(in[0]);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t f = 0; f < feat; ++f) ga[(b * steps + t) * feat + f] += g[b * feat + f];
      break;
    }
    case OpKind::kStackTime: {
      const std::size_t batch = n.value.dim(0), count = n.value.dim(1), feat = n.value.dim(2);
      for (std::size_t t = 0; t < count; ++t) {
        if (!live(t)) continue;
        auto& gs = grad_buffer(in[t]);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t f = 0; f < feat; ++f) gs[b * feat + f] += g[(b * count + t) * feat + f];
      }
      break;
    }
    case OpKind::kReshape: {
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case OpKind::kDropout: {
      const Tensor& mask = n.saved[0];
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
      break;
    }
    case OpKind::kCausalConv: {
      const Tensor& vin = nodes_[in[0]].value;
      const Tensor& vk = nodes_[in[1]].value;
      const std::size_t dilation = n.attrs[0];
      const std::size_t batch = vin.dim(0), steps = vin.dim(1), cin = vin.dim(2);
      const std::size_t ksize = vk.dim(1), cout = vk.dim(2);
      if (live(2)) {
        auto& gb = grad_buffer(in[2]);
        for (std::size_t r = 0; r < batch * steps; ++r)
          for (std::size_t c = 0; c < cout; ++c) gb[c] += g[r * cout + c];
      }
      double* gk = live(1) ? grad_buffer(in[1]).data() : nullptr;
      double* gin = live(0) ? grad_buffer(in[0]).data() : nullptr;
      for (std::size_t j = 0; j < ksize; ++j) {
        const std::size_t shift = j * dilation;
        if (shift >= steps) break;
        const std::size_t tap = (ksize - 1 - j) * cout;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gout = g.data() + (b * steps + shift) * cout;
          if (gk) {
            kernels::gemm_tn_acc(cin, cout, steps - shift, vin.raw() + b * steps * cin, cin, gout, cout, gk + tap,
                                 ksize * cout);
          }
          if (gin) {
            kernels::gemm_nt_acc(steps - shift, cin, cout, gout, cout, vk.raw() + tap, ksize * cout,
                                 gin + b * steps * cin, cin);
          }
        }
      }
      break;
    }
    case OpKind::kLstmCell: {
      const Tensor& vx = nodes_[in[0]].value;
      const Tensor& vs = nodes_[in[1]].value;
      const Tensor& vw = nodes_[in[2]].value;
      const Tensor& vu = nodes_[in[3]].value;
      const std::size_t hid = vu.dim(0);
      const kernels::LstmDims dims{vx.dim(0), vx.dim(1), hid};
      const std::size_t rows = dims.batch;
      std::vector<double> h_prev(rows * hid), c_prev(rows * hid), dh(rows * hid), dc(rows * hid);
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(vs.raw() + r * 2 * hid, hid, h_prev.data() + r * hid);
        std::copy_n(vs.raw() + r * 2 * hid + hid, hid, c_prev.data() + r * hid);
        std::copy_n(g.data() + r * 2 * hid, hid, dh.data() + r * hid);
        std::copy_n(g.data() + r * 2 * hid + hid, hid, dc.data() + r * hid);
      }
      const bool state_grad = live(1);
      const bool x_grad = live(0);
      std::vector<double> dh_prev(state_grad ? rows * hid : 0), dc_prev(state_grad ? rows * hid : 0);
      const Tensor* mask = n.saved.size() > 2 ? &n.saved[2] : nullptr;
      kernels::lstm_backward(dims, vx.raw(), h_prev.data(), c_prev.data(), vw.raw(), vu.raw(),
                             mask ? mask->raw() : nullptr, n.saved[0].raw(), n.saved[1].raw(), dh.data(), dc.data(),
                             x_grad ? grad_buffer(in[0]).data() : nullptr, state_grad ? dh_prev.data() : nullptr,
                             state_grad ? dc_prev.data() : nullptr, live(2) ? grad_buffer(in[2]).data() : nullptr,
                             live(3) ? grad_buffer(in[3]).data() : nullptr,
                             live(4) ? grad_buffer(in[4]).data() : nullptr);
      if (state_grad) {
        auto& gs = grad_buffer(in[1]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < hid; ++j) {
            gs[r * 2 * hid + j] += dh_prev[r * hid + j];
            gs[r * 2 * hid + hid + j] += dc_prev[r * hid + j];
          }
        }
      }
      break;
    }
    case OpKind::kSum: {
      auto& ga = grad_buffer(in[0]);
      for (double& v : ga) v += g[0];
      break;
    }
    case OpKind::kBce: {
      const Tensor& p = nodes_[in[0]].value;
      const Tensor& t = n.saved[0];
      const double scale = g[0] / static_cast<double>(p.size());
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < kBceClamp || p[i] > 1.0 - kBceClamp) continue;
        ga[i] += scale * (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i]));
      }
      break;
    }
    case OpKind::kMse: {
      const Tensor& p = nodes_[in[0]].value;
      const Tensor& t = n.saved[0];
      const double scale = 2.0 * g[0] / static_cast<double>(p.size());
      auto& ga = grad_buffer(in[0]);
      for (std::size_t i = 0; i < p.size(); ++i) ga[i] += scale * (p[i] - t[i]);
      break;
    }
  }
}

}  // namespace earlycast
