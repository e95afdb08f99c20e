#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bodil {

// Uniform structured grids for space-time fields.
//
// Axes are ordered slowest to fastest as (t, z, y, x); the trailing axis is
// contiguous in memory (row-major). A periodic axis identifies node `nodes`
// with node 0, so its nodes cover [0, extent) and spacing = extent / nodes.
// A non-periodic axis carries nodes on both ends of [0, extent] and
// spacing = extent / (nodes - 1).

struct AxisSpec {
  std::string name; // conventionally one of "t", "z", "y", "x"
  double extent = 0.0;
  int nodes = 0;
  bool periodic = false;
};

struct Axis {
  std::string name;
  double extent = 0.0;
  int nodes = 0;
  bool periodic = false;
  double spacing = 0.0;
};

class Grid {
public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes);

  int dim() const { return int(axes_.size()); }
  const Axis& axis(int a) const { return axes_[size_t(a)]; }
  const std::vector<Axis>& axes() const { return axes_; }
  const std::vector<int>& shape() const { return shape_; }
  int64_t size() const { return size_; }

  // Flat row-major index of a node multi-index.
  int64_t index(std::span<const int> idx) const;
  // Physical coordinate of node `node` along axis `a`.
  double coord(int a, int node) const { return axes_[size_t(a)].spacing * node; }

  bool same_layout(const Grid& other) const;

private:
  std::vector<Axis> axes_;
  std::vector<int> shape_;
  std::vector<int64_t> strides_;
  int64_t size_ = 0;
};

// Validates the axis list (1 to 4 axes, at least 2 nodes each, positive
// extents) and computes spacings. Throws std::invalid_argument on misuse.
Grid make_grid(const std::vector<AxisSpec>& axes);

std::shared_ptr<const Grid> make_grid_ptr(const std::vector<AxisSpec>& axes);

// A scalar field sampled on the nodes of a grid, stored row-major.
struct Field {
  std::shared_ptr<const Grid> grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(std::shared_ptr<const Grid> g, double fill = 0.0);

  double& at(std::span<const int> idx) { return values[size_t(grid->index(idx))]; }
  double at(std::span<const int> idx) const { return values[size_t(grid->index(idx))]; }

  // Throws std::runtime_error if any value is NaN or infinite.
  void validate_finite(const std::string& what) const;
};

// Multilinear interpolation stencil: the flat indices of the 2^dim cell
// corners around a point together with their convex weights. Exposed so
// measurement operators can enter gradient tapes as sparse linear maps.
struct InterpStencil {
  std::vector<int64_t> idx;
  std::vector<double> w;
};

// Builds the stencil for a physical point (one coordinate per axis, in axis
// order). Periodic axes wrap; on non-periodic axes points outside
// [0, extent] (beyond a 1e-9*spacing tolerance) throw std::out_of_range
// naming the axis.
InterpStencil interp_stencil(const Grid& grid, std::span<const double> point);

double interpolate_linear(const Field& field, std::span<const double> point);

} // namespace bodil
