#pragma once

#include <cstddef>

#include "earlycast/rng.hpp"
#include "earlycast/tensor.hpp"

namespace earlycast {

/// [fan_in x fan_out] matrix, entries uniform on +-sqrt(6 / (fan_in + fan_out)).
Tensor init_xavier_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// [rows x cols] matrix with orthonormal columns (rows >= cols) or rows
/// (rows < cols). Built from the QR decomposition of a standard-normal
/// matrix with Q's columns multiplied by the signs of R's diagonal.
Tensor init_orthogonal(Rng& rng, std::size_t rows, std::size_t cols);

/// Entries drawn from N(0, 2 / fan_in).
Tensor init_he_normal(Rng& rng, std::size_t fan_in, const Shape& shape);

/// Inverted dropout mask: 1 / (1 - rate) where kept, 0 where dropped.
Tensor dropout_mask(Rng& rng, Shape shape, double rate);

}  // namespace earlycast
