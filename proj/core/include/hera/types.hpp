#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace hera {

/// Token-major feature matrix: one row per patch token, one column per channel.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Patch-grid geometry. Token n sits at row n / width, column n % width.
struct Grid {
  int height = 0;
  int width = 0;

  int size() const noexcept { return height * width; }
  int row(int index) const noexcept { return index / width; }
  int col(int index) const noexcept { return index % width; }
  int index(int r, int c) const noexcept { return r * width + c; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Binary mask on a grid, values in {0,1}.
struct BinaryMask {
  Grid grid;
  std::vector<std::uint8_t> values;

  int count() const noexcept {
    int n = 0;
    for (auto v : values) n += v;
    return n;
  }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Soft mask on a grid, values in [0,1].
struct SoftMask {
  Grid grid;
  Vector values;
};

} // namespace hera
