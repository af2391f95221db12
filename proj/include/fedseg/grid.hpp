#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedseg {

// Voxel spacing in millimetres; slice_mm is the through-plane thickness
// used for mL volume conversion of single-slice grids.
struct Spacing {
  double x_mm = 1.0;
  double y_mm = 1.0;
  double slice_mm = 1.0;

  bool operator==(const Spacing&) const = default;
};

// Row-major 2-D grid.
template <typename T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  T& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  const T& operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Grid& other) const {
    return rows == other.rows && cols == other.cols;
  }
  bool operator==(const Grid&) const = default;
};

using Image = Grid<double>;
using Mask = Grid<std::uint8_t>;

inline std::size_t count_nonzero(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += (v != 0);
  return n;
}

}  // namespace fedseg
