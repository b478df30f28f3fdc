#include "earlycast/init.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "earlycast/error.hpp"

namespace earlycast {

Tensor init_xavier_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw ShapeError("xavier init needs positive fans");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor out(Shape{fan_in, fan_out});
  for (double& v : out.data()) v = rng.uniform(-limit, limit);
  return out;
}

Tensor init_orthogonal(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ShapeError("orthogonal init needs positive dimensions");
  const std::size_t tall = std::max(rows, cols);
  const std::size_t narrow = std::min(rows, cols);

  Eigen::MatrixXd a(tall, narrow);
  for (std::size_t r = 0; r < tall; ++r)
    for (std::size_t c = 0; c < narrow; ++c) a(r, c) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(narrow, narrow);
  for (std::size_t c = 0; c < narrow; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }

  Tensor out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = rows >= cols ? q(i, j) : q(j, i);
  }
  return out;
}

Tensor init_he_normal(Rng& rng, std::size_t fan_in, const Shape& shape) {
  if (fan_in == 0) throw ShapeError("he init needs a positive fan_in");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Tensor out(shape);
  for (double& v : out.data()) v = rng.normal(0.0, stddev);
  return out;
}

Tensor dropout_mask(Rng& rng, Shape shape, double rate) {
  Tensor mask(std::move(shape));
  const double keep = 1.0 - rate;
  const double scale = 1.0 / keep;
  for (double& v : mask.data()) v = rng.uniform() < keep ? scale : 0.0;
  return mask;
}

}  // namespace earlycast
