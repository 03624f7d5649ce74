#pragma once

#include <string>
#include <vector>

#include "gcdf/tensor.hpp"

namespace gcdf {

// Scatter plot of 2-D points in [-1,1]^2 as an 8-bit RGB PNG. One color per
// distinct label (golden-angle hues); hollow markers for unobserved rows when
// `observed` is non-empty. Coordinates outside the box are clamped to it.
void write_scatter_png(const std::string& path, const TensorT<double>& points,
                       const std::vector<i64>& labels,
                       const std::vector<std::uint8_t>& observed = {}, int size = 640);

}  // namespace gcdf
