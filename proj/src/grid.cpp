#include "bodil/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace bodil {

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
  shape_.reserve(axes_.size());
  for (const Axis& a : axes_) shape_.push_back(a.nodes);
  strides_.assign(axes_.size(), 1);
  for (int a = int(axes_.size()) - 2; a >= 0; a--)
    strides_[size_t(a)] = strides_[size_t(a) + 1] * shape_[size_t(a) + 1];
  size_ = 1;
  for (int n : shape_) size_ *= n;
}

int64_t Grid::index(std::span<const int> idx) const {
  if (int(idx.size()) != dim()) throw std::invalid_argument("Grid::index: wrong arity");
  int64_t flat = 0;
  for (int a = 0; a < dim(); a++) {
    if (idx[size_t(a)] < 0 || idx[size_t(a)] >= shape_[size_t(a)])
      throw std::out_of_range("Grid::index: node index outside axis '" + axes_[size_t(a)].name + "'");
    flat += strides_[size_t(a)] * idx[size_t(a)];
  }
  return flat;
}

bool Grid::same_layout(const Grid& other) const {
  if (dim() != other.dim()) return false;
  for (int a = 0; a < dim(); a++) {
    const Axis& p = axes_[size_t(a)];
    const Axis& q = other.axes_[size_t(a)];
    if (p.nodes != q.nodes || p.periodic != q.periodic || p.extent != q.extent) return false;
  }
  return true;
}

Grid make_grid(const std::vector<AxisSpec>& axes) {
  if (axes.empty() || axes.size() > 4)
    throw std::invalid_argument("make_grid: expected between 1 and 4 axes, got " + std::to_string(axes.size()));
  std::vector<Axis> built;
  built.reserve(axes.size());
  for (const AxisSpec& s : axes) {
    if (s.nodes < 2)
      throw std::invalid_argument("make_grid: axis '" + s.name + "' needs at least 2 nodes");
    if (!(s.extent > 0.0) || !std::isfinite(s.extent))
      throw std::invalid_argument("make_grid: axis '" + s.name + "' needs a positive finite extent");
    Axis a;
    a.name = s.name;
    a.extent = s.extent;
    a.nodes = s.nodes;
    a.periodic = s.periodic;
    a.spacing = s.periodic ? s.extent / s.nodes : s.extent / (s.nodes - 1);
    built.push_back(std::move(a));
  }
  return Grid(std::move(built));
}

std::shared_ptr<const Grid> make_grid_ptr(const std::vector<AxisSpec>& axes) {
  return std::make_shared<const Grid>(make_grid(axes));
}

Field::Field(std::shared_ptr<const Grid> g, double fill)
    : grid(std::move(g)), values(size_t(grid->size()), fill) {}

void Field::validate_finite(const std::string& what) const {
  for (double v : values)
    if (!std::isfinite(v)) throw std::runtime_error(what + ": field holds a non-finite value");
}

InterpStencil interp_stencil(const Grid& grid, std::span<const double> point) {
  const int d = grid.dim();
  if (int(point.size()) != d) throw std::invalid_argument("interp_stencil: wrong point arity");

  // Per axis: the lower node, its +1 neighbour (wrapped on periodic axes),
  // and the fractional position within the cell.
  int lo[4], hi[4];
  double frac[4];
  for (int a = 0; a < d; a++) {
    const Axis& ax = grid.axis(a);
    double x = point[size_t(a)];
    if (ax.periodic) {
      x = std::fmod(x, ax.extent);
      if (x < 0) x += ax.extent;
      double u = x / ax.spacing;
      int i = int(std::floor(u));
      if (i >= ax.nodes) i = ax.nodes - 1; // guards fmod landing exactly on extent
      lo[a] = i;
      hi[a] = (i + 1) % ax.nodes;
      frac[a] = u - i;
    } else {
      const double tol = 1e-9 * ax.spacing;
      if (x < -tol || x > ax.extent + tol)
        throw std::out_of_range("interp_stencil: point outside axis '" + ax.name + "'");
      double u = x / ax.spacing;
      int i = int(std::floor(u));
      if (i < 0) i = 0;
      if (i > ax.nodes - 2) i = ax.nodes - 2;
      lo[a] = i;
      hi[a] = i + 1;
      frac[a] = u - i;
      if (frac[a] < 0) frac[a] = 0;
      if (frac[a] > 1) frac[a] = 1;
    }
  }

  InterpStencil st;
  const int corners = 1 << d;
  st.idx.resize(size_t(corners));
  st.w.resize(size_t(corners));
  int nodes[4];
  for (int c = 0; c < corners; c++) {
    double w = 1.0;
    for (int a = 0; a < d; a++) {
      const bool upper = (c >> (d - 1 - a)) & 1;
      nodes[a] = upper ? hi[a] : lo[a];
      w *= upper ? frac[a] : 1.0 - frac[a];
    }
    st.idx[size_t(c)] = grid.index(std::span<const int>(nodes, size_t(d)));
    st.w[size_t(c)] = w;
  }
  return st;
}

double interpolate_linear(const Field& field, std::span<const double> point) {
  InterpStencil st = interp_stencil(*field.grid, point);
  double acc = 0.0;
  for (size_t c = 0; c < st.idx.size(); c++) acc += st.w[c] * field.values[size_t(st.idx[c])];
  return acc;
}

} // namespace bodil
