#pragma once

// Rectangular grid of interior nodes with homogeneous Dirichlet boundary.
// Gradients live on faces (forward differences), divergence is the exact
// negative adjoint of the gradient, so discrete integration by parts holds to
// round-off.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "mspde/potential.hpp"

namespace mspde {

class Grid {
 public:
  Grid(std::vector<double> extent, std::vector<std::size_t> nodes);

  static std::shared_ptr<const Grid> line(double extent, std::size_t nodes);
  static std::shared_ptr<const Grid> rect(double extent_x, double extent_y, std::size_t nodes_x,
                                          std::size_t nodes_y);

  int dim() const noexcept { return static_cast<int>(nodes_.size()); }
  double extent(int axis) const { return extent_[axis]; }
  std::size_t nodes(int axis) const { return nodes_[axis]; }
  double h(int axis) const { return h_[axis]; }
  double h_min() const noexcept;
  double cell_volume() const noexcept { return cell_volume_; }

  /// Number of interior nodes.
  std::size_t size() const noexcept { return size_; }
  /// Number of faces normal to `axis`: (nodes_a + 1) * prod_{b != a} nodes_b.
  std::size_t face_count(int axis) const;

  /// Linear node index, x fastest.
  std::size_t index(std::size_t i, std::size_t j = 0) const noexcept { return i + nodes_[0] * j; }

  bool operator==(const Grid& other) const {
    return extent_ == other.extent_ && nodes_ == other.nodes_;
  }

  nlohmann::json to_json() const;
  static std::shared_ptr<const Grid> from_json(const nlohmann::json& block);

 private:
  std::vector<double> extent_;
  std::vector<std::size_t> nodes_;
  std::vector<double> h_;
  std::size_t size_ = 0;
  double cell_volume_ = 0.0;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Scalar values at the interior nodes; a snapshot u(t, .) in L^2(D).
class Field {
 public:
  explicit Field(GridPtr grid);
  Field(GridPtr grid, std::vector<double> values);

  const Grid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  Field& operator+=(const Field& other);
  Field& operator-=(const Field& other);
  Field& operator*=(double c);
  /// this += c * other
  Field& axpy(double c, const Field& other);

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double c, Field a) { return a *= c; }

  bool all_finite() const;

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

/// Face values per axis: the axis-a component sits on the faces normal to a.
class VectorField {
 public:
  explicit VectorField(GridPtr grid);

  const Grid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  std::span<double> axis(int a) { return components_[a]; }
  std::span<const double> axis(int a) const { return components_[a]; }

  VectorField& operator+=(const VectorField& other);
  VectorField& operator-=(const VectorField& other);
  VectorField& operator*=(double c);
  VectorField& axpy(double c, const VectorField& other);

  friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
  friend VectorField operator*(double c, VectorField a) { return a *= c; }

 private:
  GridPtr grid_;
  std::vector<std::vector<double>> components_;
};

/// Discrete L^2 inner products (weighted by the cell volume).
double inner(const Field& a, const Field& b);
double inner(const VectorField& a, const VectorField& b);

VectorField gradient(const Field& f);
Field divergence(const VectorField& z);
Field laplacian(const Field& f);

/// Full gradient vector at face `face` of axis `axis`: the own component is
/// exact, transverse components average the four adjacent transverse faces.
Vec face_vector(const VectorField& grad, int axis, std::size_t face);

/// Quadrature of a pointwise integrand of the gradient over D, averaging the
/// face families of all axes: (1/n) sum_a sum_faces integrand(g) * cellvol.
double face_quadrature(const VectorField& grad, const std::function<double(const Vec&)>& integrand);

struct CgOptions {
  double rtol = 1e-12;
  /// Final residual above accept_rtol * |rhs| raises LinearSolveFailure.
  double accept_rtol = 1e-10;
  int max_iter = 0;  // 0: 10 * size + 100
};

/// Jacobi-preconditioned conjugate gradients for an SPD operator on fields.
Field conjugate_gradient(const std::function<void(const Field&, Field&)>& apply, const Field& rhs,
                         const Field& diagonal, const CgOptions& opts = {},
                         const Field* guess = nullptr);

/// Solves (I - shift * Laplacian) g = rhs.
Field solve_shifted(const Field& rhs, double shift, const CgOptions& opts = {});

/// (I - delta * Laplacian)^{-m} f.
Field resolvent_smoother(const Field& f, double delta, int m);

struct Norms {
  double l2 = 0.0;
  double w11 = 0.0;
  double h10 = 0.0;
  double linf = 0.0;
};

Norms norms(const Field& f);

/// Smallest smoothing exponent with m > 1/2 + n/4.
int default_smoothing_exponent(int dim);

}  // namespace mspde
