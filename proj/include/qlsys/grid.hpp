#pragma once

// Rectangle discretization with implicit zero Dirichlet padding.
//
// Interior nodes (i, j), 0 <= i < nx, 0 <= j < ny, sit at
// x = (i + 1) hx, y = (j + 1) hy and are stored row-major (i fastest).
// The (nx + 1) x (ny + 1) cells each carry the bilinear interpolant of their
// four corner values; every integral is the midpoint rule over these cells.

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qlsys/error.hpp"

namespace qlsys {

struct GridSpec {
  int nx = 0;
  int ny = 0;
  double lx = 1.0;
  double ly = 1.0;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline void validate(const GridSpec& s) {
  if (s.nx < 2 || s.ny < 2)
    throw InvalidSpec("grid needs at least 2 interior nodes per direction, got " +
                      std::to_string(s.nx) + "x" + std::to_string(s.ny));
  if (!(s.lx > 0.0) || !(s.ly > 0.0) || !std::isfinite(s.lx) || !std::isfinite(s.ly))
    throw InvalidSpec("domain extents must be positive and finite");
}

/// Corner node indices of a cell in SW, SE, NW, NE order; -1 marks a boundary node.
struct Cell {
  std::array<int, 4> node;
};

/// Cell-center value and bilinear gradient of a nodal field.
struct CellSample {
  double value;
  double gx;
  double gy;
};

class Grid {
 public:
  explicit Grid(const GridSpec& spec) : spec_(spec) {
    validate(spec);
    hx_ = spec.lx / (spec.nx + 1);
    hy_ = spec.ly / (spec.ny + 1);
    x_.resize(spec.nx);
    y_.resize(spec.ny);
    for (int i = 0; i < spec.nx; ++i) x_[i] = (i + 1) * hx_;
    for (int j = 0; j < spec.ny; ++j) y_[j] = (j + 1) * hy_;
    cells_.reserve(static_cast<std::size_t>(spec.nx + 1) * (spec.ny + 1));
    auto node = [&](int i, int j) {
      return (i < 0 || j < 0 || i >= spec.nx || j >= spec.ny) ? -1 : j * spec.nx + i;
    };
    for (int cj = 0; cj <= spec.ny; ++cj)
      for (int ci = 0; ci <= spec.nx; ++ci)
        cells_.push_back(Cell{{node(ci - 1, cj - 1), node(ci, cj - 1), node(ci - 1, cj),
                               node(ci, cj)}});
  }

  const GridSpec& spec() const noexcept { return spec_; }
  int nx() const noexcept { return spec_.nx; }
  int ny() const noexcept { return spec_.ny; }
  double lx() const noexcept { return spec_.lx; }
  double ly() const noexcept { return spec_.ly; }
  double hx() const noexcept { return hx_; }
  double hy() const noexcept { return hy_; }
  double cell_volume() const noexcept { return hx_ * hy_; }
  std::size_t node_count() const noexcept {
    return static_cast<std::size_t>(spec_.nx) * spec_.ny;
  }
  std::size_t cell_count() const noexcept { return cells_.size(); }
  int index(int i, int j) const noexcept { return j * spec_.nx + i; }
  double x(int i) const noexcept { return x_[i]; }
  double y(int j) const noexcept { return y_[j]; }
  std::span<const Cell> cells() const noexcept { return cells_; }

  CellSample sample(std::span<const double> u, const Cell& c) const noexcept {
    const double sw = c.node[0] < 0 ? 0.0 : u[c.node[0]];
    const double se = c.node[1] < 0 ? 0.0 : u[c.node[1]];
    const double nw = c.node[2] < 0 ? 0.0 : u[c.node[2]];
    const double ne = c.node[3] < 0 ? 0.0 : u[c.node[3]];
    return {0.25 * (sw + se + nw + ne), ((se + ne) - (sw + nw)) / (2.0 * hx_),
            ((nw + ne) - (sw + se)) / (2.0 * hy_)};
  }

  /// Adds the pullback of (d/dvalue, d/dgx, d/dgy) at one cell onto nodal storage.
  void scatter(std::span<double> out, const Cell& c, double d_value, double d_gx,
               double d_gy) const noexcept {
    const double a = 0.25 * d_value;
    const double bx = d_gx / (2.0 * hx_);
    const double by = d_gy / (2.0 * hy_);
    if (c.node[0] >= 0) out[c.node[0]] += a - bx - by;
    if (c.node[1] >= 0) out[c.node[1]] += a + bx - by;
    if (c.node[2] >= 0) out[c.node[2]] += a - bx + by;
    if (c.node[3] >= 0) out[c.node[3]] += a + bx + by;
  }

  friend bool operator==(const Grid& a, const Grid& b) { return a.spec_ == b.spec_; }

 private:
  GridSpec spec_;
  double hx_ = 0.0;
  double hy_ = 0.0;
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<Cell> cells_;
};

inline Grid build_grid(const GridSpec& spec) { return Grid(spec); }

/// One scalar component as interior nodal values.
struct ScalarField {
  GridSpec grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(g.spec()), values(g.node_count(), 0.0) {}
  ScalarField(const Grid& g, std::vector<double> v) : grid(g.spec()), values(std::move(v)) {
    if (values.size() != g.node_count())
      throw InvalidSpec("field length " + std::to_string(values.size()) +
                        " does not match grid node count " + std::to_string(g.node_count()));
  }

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t k) noexcept { return values[k]; }
  double operator[](std::size_t k) const noexcept { return values[k]; }
  std::span<const double> view() const noexcept { return values; }
  std::span<double> view() noexcept { return values; }

  ScalarField& operator*=(double c) {
    for (double& v : values) v *= c;
    return *this;
  }
  ScalarField& operator+=(const ScalarField& o) {
    for (std::size_t k = 0; k < values.size(); ++k) values[k] += o.values[k];
    return *this;
  }
  friend ScalarField operator*(double c, ScalarField f) { return f *= c; }
  friend ScalarField operator-(const ScalarField& f) { return -1.0 * f; }
  friend bool operator==(const ScalarField&, const ScalarField&) = default;
};

struct StatePair {
  ScalarField u1;
  ScalarField u2;

  StatePair() = default;
  explicit StatePair(const Grid& g) : u1(g), u2(g) {}
  StatePair(ScalarField a, ScalarField b) : u1(std::move(a)), u2(std::move(b)) {
    if (!(u1.grid == u2.grid)) throw GridMismatch();
  }

  ScalarField& operator[](int i) noexcept { return i == 0 ? u1 : u2; }
  const ScalarField& operator[](int i) const noexcept { return i == 0 ? u1 : u2; }
  StatePair swapped() const { return StatePair(u2, u1); }
  friend bool operator==(const StatePair&, const StatePair&) = default;
};

inline void require_same_grid(const Grid& g, const ScalarField& f) {
  if (!(f.grid == g.spec()) || f.values.size() != g.node_count()) throw GridMismatch();
}
inline void require_same_grid(const Grid& g, const StatePair& u) {
  require_same_grid(g, u.u1);
  require_same_grid(g, u.u2);
}

/// Samples a function of (x, y) at the interior nodes.
template <class F>
ScalarField sample_nodes(const Grid& g, F&& f) {
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) out[g.index(i, j)] = f(g.x(i), g.y(j));
  return out;
}

/// Neumaier-compensated running sum. Energies are differenced at the 1e-12
/// level by finite-difference checks, so plain accumulation is not enough.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// A quantity sampled at cell centers (one value per cell, grid cell order).
using CellField = std::vector<double>;

/// Midpoint rule: sum over cells of f times the cell area.
inline double integrate(std::span<const double> f, const Grid& g) {
  double acc = 0.0;
  for (double v : f) acc += v;
  return acc * g.cell_volume();
}

inline CellField cell_values(const ScalarField& f, const Grid& g) {
  require_same_grid(g, f);
  CellField out(g.cell_count());
  auto cells = g.cells();
  for (std::size_t c = 0; c < cells.size(); ++c) out[c] = g.sample(f.values, cells[c]).value;
  return out;
}

/// Squared norm of the bilinear-interpolant gradient at each cell center.
inline CellField grad_sq(const ScalarField& f, const Grid& g) {
  require_same_grid(g, f);
  CellField out(g.cell_count());
  auto cells = g.cells();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto s = g.sample(f.values, cells[c]);
    out[c] = s.gx * s.gx + s.gy * s.gy;
  }
  return out;
}

inline double l2_inner(const ScalarField& f, const ScalarField& h, const Grid& g) {
  if (!(f.grid == h.grid)) throw GridMismatch();
  require_same_grid(g, f);
  double acc = 0.0;
  for (const Cell& c : g.cells()) acc += g.sample(f.values, c).value * g.sample(h.values, c).value;
  return acc * g.cell_volume();
}

/// Gradient seminorm squared, the norm used on the unit-sphere product.
inline double h1_norm_sq(std::span<const double> u, const Grid& g) {
  double acc = 0.0;
  for (const Cell& c : g.cells()) {
    const auto s = g.sample(u, c);
    acc += s.gx * s.gx + s.gy * s.gy;
  }
  return acc * g.cell_volume();
}

/// Discrete nodal L2 norm, sqrt(hx hy sum v^2).
inline double nodal_l2(std::span<const double> v, const Grid& g) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc * g.cell_volume());
}

// Field dump: header `FIELD nx ny lx ly`, then one `i j x y value` line per
// interior node in storage order, all reals with 17 significant digits.

inline std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_field(std::ostream& os, const ScalarField& f, const Grid& g) {
  require_same_grid(g, f);
  os << "FIELD " << g.nx() << ' ' << g.ny() << ' ' << format17(g.lx()) << ' '
     << format17(g.ly()) << '\n';
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      os << i << ' ' << j << ' ' << format17(g.x(i)) << ' ' << format17(g.y(j)) << ' '
         << format17(f[g.index(i, j)]) << '\n';
}

inline ScalarField read_field(std::istream& is) {
  std::string tag;
  GridSpec spec;
  if (!(is >> tag >> spec.nx >> spec.ny >> spec.lx >> spec.ly) || tag != "FIELD")
    throw InvalidSpec("malformed field header");
  Grid g(spec);
  ScalarField f(g);
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    int i = 0, j = 0;
    double x = 0, y = 0, v = 0;
    if (!(is >> i >> j >> x >> y >> v)) throw InvalidSpec("truncated field dump");
    if (i < 0 || j < 0 || i >= g.nx() || j >= g.ny())
      throw InvalidSpec("node index out of range in field dump");
    f[g.index(i, j)] = v;
  }
  return f;
}

}  // namespace qlsys
