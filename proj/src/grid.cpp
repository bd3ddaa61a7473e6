#include "mspde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mspde/errors.hpp"

namespace mspde {

namespace {

void require_same_grid(const Grid& a, const Grid& b) {
  if (&a != &b && !(a == b)) throw ConfigError("fields live on different grids");
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid

Grid::Grid(std::vector<double> extent, std::vector<std::size_t> nodes)
    : extent_(std::move(extent)), nodes_(std::move(nodes)) {
  if (nodes_.empty() || nodes_.size() > 2) throw ConfigError("grid dimension must be 1 or 2");
  if (extent_.size() != nodes_.size()) throw ConfigError("grid needs one extent per axis");
  size_ = 1;
  cell_volume_ = 1.0;
  for (std::size_t a = 0; a < nodes_.size(); ++a) {
    if (nodes_[a] < 2) throw ConfigError("grid needs at least 2 interior nodes per axis");
    if (!(extent_[a] > 0.0) || !std::isfinite(extent_[a]))
      throw ConfigError("grid extent must be positive and finite");
    h_.push_back(extent_[a] / static_cast<double>(nodes_[a] + 1));
    size_ *= nodes_[a];
    cell_volume_ *= h_.back();
  }
}

std::shared_ptr<const Grid> Grid::line(double extent, std::size_t nodes) {
  return std::make_shared<const Grid>(std::vector<double>{extent}, std::vector<std::size_t>{nodes});
}

std::shared_ptr<const Grid> Grid::rect(double extent_x, double extent_y, std::size_t nodes_x,
                                       std::size_t nodes_y) {
  return std::make_shared<const Grid>(std::vector<double>{extent_x, extent_y},
                                      std::vector<std::size_t>{nodes_x, nodes_y});
}

double Grid::h_min() const noexcept { return *std::min_element(h_.begin(), h_.end()); }

std::size_t Grid::face_count(int axis) const {
  std::size_t count = nodes_[axis] + 1;
  for (int b = 0; b < dim(); ++b)
    if (b != axis) count *= nodes_[b];
  return count;
}

nlohmann::json Grid::to_json() const {
  return {{"dim", dim()}, {"extent", extent_}, {"nodes", nodes_}};
}

std::shared_ptr<const Grid> Grid::from_json(const nlohmann::json& block) {
  try {
    auto extent = block.at("extent").get<std::vector<double>>();
    auto nodes = block.at("nodes").get<std::vector<std::size_t>>();
    if (block.contains("dim") && block.at("dim").get<std::size_t>() != nodes.size())
      throw ConfigError("grid 'dim' disagrees with the 'nodes' list");
    return std::make_shared<const Grid>(std::move(extent), std::move(nodes));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("grid block: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Field / VectorField

Field::Field(GridPtr grid) : grid_(std::move(grid)), values_(grid_->size(), 0.0) {}

Field::Field(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_->size()) throw ConfigError("field length does not match the grid");
}

Field& Field::operator+=(const Field& other) { return axpy(1.0, other); }
Field& Field::operator-=(const Field& other) { return axpy(-1.0, other); }

Field& Field::operator*=(double c) {
  for (double& v : values_) v *= c;
  return *this;
}

Field& Field::axpy(double c, const Field& other) {
  require_same_grid(*grid_, *other.grid_);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += c * other.values_[i];
  return *this;
}

bool Field::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

VectorField::VectorField(GridPtr grid) : grid_(std::move(grid)) {
  for (int a = 0; a < grid_->dim(); ++a) components_.emplace_back(grid_->face_count(a), 0.0);
}

VectorField& VectorField::operator+=(const VectorField& other) { return axpy(1.0, other); }
VectorField& VectorField::operator-=(const VectorField& other) { return axpy(-1.0, other); }

VectorField& VectorField::operator*=(double c) {
  for (auto& comp : components_)
    for (double& v : comp) v *= c;
  return *this;
}

VectorField& VectorField::axpy(double c, const VectorField& other) {
  require_same_grid(*grid_, *other.grid_);
  for (std::size_t a = 0; a < components_.size(); ++a)
    for (std::size_t i = 0; i < components_[a].size(); ++i)
      components_[a][i] += c * other.components_[a][i];
  return *this;
}

double inner(const Field& a, const Field& b) {
  require_same_grid(a.grid(), b.grid());
  const auto x = a.values();
  const auto y = b.values();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0) * a.grid().cell_volume();
}

double inner(const VectorField& a, const VectorField& b) {
  require_same_grid(a.grid(), b.grid());
  double sum = 0.0;
  for (int ax = 0; ax < a.grid().dim(); ++ax) {
    const auto x = a.axis(ax);
    const auto y = b.axis(ax);
    sum += std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  }
  return sum * a.grid().cell_volume();
}

// ---------------------------------------------------------------------------
// Difference operators

VectorField gradient(const Field& f) {
  const Grid& g = f.grid();
  VectorField out(f.grid_ptr());
  const std::size_t nx = g.nodes(0);
  const double ihx = 1.0 / g.h(0);
  if (g.dim() == 1) {
    auto gx = out.axis(0);
    double left = 0.0;
    for (std::size_t i = 0; i <= nx; ++i) {
      const double right = i < nx ? f[i] : 0.0;
      gx[i] = (right - left) * ihx;
      left = right;
    }
    return out;
  }
  const std::size_t ny = g.nodes(1);
  const double ihy = 1.0 / g.h(1);
  auto gx = out.axis(0);
  for (std::size_t j = 0; j < ny; ++j) {
    double left = 0.0;
    for (std::size_t i = 0; i <= nx; ++i) {
      const double right = i < nx ? f[g.index(i, j)] : 0.0;
      gx[i + (nx + 1) * j] = (right - left) * ihx;
      left = right;
    }
  }
  auto gy = out.axis(1);
  for (std::size_t i = 0; i < nx; ++i) {
    double below = 0.0;
    for (std::size_t j = 0; j <= ny; ++j) {
      const double above = j < ny ? f[g.index(i, j)] : 0.0;
      gy[i + nx * j] = (above - below) * ihy;
      below = above;
    }
  }
  return out;
}

Field divergence(const VectorField& z) {
  const Grid& g = z.grid();
  Field out(z.grid_ptr());
  const std::size_t nx = g.nodes(0);
  const double ihx = 1.0 / g.h(0);
  const auto zx = z.axis(0);
  if (g.dim() == 1) {
    for (std::size_t i = 0; i < nx; ++i) out[i] = (zx[i + 1] - zx[i]) * ihx;
    return out;
  }
  const std::size_t ny = g.nodes(1);
  const double ihy = 1.0 / g.h(1);
  const auto zy = z.axis(1);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t fx = i + (nx + 1) * j;
      const std::size_t fy = i + nx * j;
      out[g.index(i, j)] = (zx[fx + 1] - zx[fx]) * ihx + (zy[fy + nx] - zy[fy]) * ihy;
    }
  return out;
}

Field laplacian(const Field& f) {
  const Grid& g = f.grid();
  Field out(f.grid_ptr());
  const std::size_t nx = g.nodes(0);
  const double cx = 1.0 / (g.h(0) * g.h(0));
  if (g.dim() == 1) {
    for (std::size_t i = 0; i < nx; ++i) {
      const double l = i > 0 ? f[i - 1] : 0.0;
      const double r = i + 1 < nx ? f[i + 1] : 0.0;
      out[i] = (l - 2.0 * f[i] + r) * cx;
    }
    return out;
  }
  const std::size_t ny = g.nodes(1);
  const double cy = 1.0 / (g.h(1) * g.h(1));
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double c = f[g.index(i, j)];
      const double l = i > 0 ? f[g.index(i - 1, j)] : 0.0;
      const double r = i + 1 < nx ? f[g.index(i + 1, j)] : 0.0;
      const double b = j > 0 ? f[g.index(i, j - 1)] : 0.0;
      const double t = j + 1 < ny ? f[g.index(i, j + 1)] : 0.0;
      out[g.index(i, j)] = (l - 2.0 * c + r) * cx + (b - 2.0 * c + t) * cy;
    }
  return out;
}

Vec face_vector(const VectorField& grad, int axis, std::size_t face) {
  const Grid& g = grad.grid();
  Vec v(g.dim());
  v[axis] = grad.axis(axis)[face];
  if (g.dim() == 1) return v;

  const std::size_t nx = g.nodes(0);
  const std::size_t ny = g.nodes(1);
  double sum = 0.0;
  if (axis == 0) {
    // x-face i sits between nodes (i-1, j) and (i, j); y-face (i, j) sits
    // below node (i, j). Faces of ghost columns carry zero gradient.
    const std::size_t i = face % (nx + 1);
    const std::size_t j = face / (nx + 1);
    const auto gy = grad.axis(1);
    for (std::size_t col : {i - 1, i}) {
      if (i == 0 && col == i - 1) continue;
      if (col >= nx) continue;
      sum += gy[col + nx * j] + gy[col + nx * (j + 1)];
    }
    v[1] = 0.25 * sum;
  } else {
    const std::size_t i = face % nx;
    const std::size_t j = face / nx;
    const auto gx = grad.axis(0);
    for (std::size_t row : {j - 1, j}) {
      if (j == 0 && row == j - 1) continue;
      if (row >= ny) continue;
      sum += gx[i + (nx + 1) * row] + gx[i + 1 + (nx + 1) * row];
    }
    v[0] = 0.25 * sum;
  }
  return v;
}

double face_quadrature(const VectorField& grad, const std::function<double(const Vec&)>& integrand) {
  const Grid& g = grad.grid();
  double sum = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const std::size_t faces = g.face_count(a);
    for (std::size_t f = 0; f < faces; ++f) sum += integrand(face_vector(grad, a, f));
  }
  return sum * g.cell_volume() / g.dim();
}

// ---------------------------------------------------------------------------
// Linear solves

Field conjugate_gradient(const std::function<void(const Field&, Field&)>& apply, const Field& rhs,
                         const Field& diagonal, const CgOptions& opts, const Field* guess) {
  const std::size_t n = rhs.size();
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : static_cast<int>(10 * n + 100);
  const auto dot = [](const Field& a, const Field& b) {
    const auto x = a.values();
    const auto y = b.values();
    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  };
  const double rhs_norm = std::sqrt(dot(rhs, rhs));
  Field x = guess ? *guess : Field(rhs.grid_ptr());
  if (rhs_norm == 0.0 && !guess) return x;

  Field ax(rhs.grid_ptr());
  apply(x, ax);
  Field r = rhs - ax;
  Field z(rhs.grid_ptr());
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diagonal[i];
  Field p = z;
  double rz = dot(r, z);
  double res = std::sqrt(dot(r, r));
  const double target = opts.rtol * rhs_norm;

  for (int it = 0; it < max_iter && res > target; ++it) {
    apply(p, ax);
    const double pap = dot(p, ax);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    x.axpy(alpha, p);
    r.axpy(-alpha, ax);
    res = std::sqrt(dot(r, r));
    if (res <= target) break;
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diagonal[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  if (!(res <= opts.accept_rtol * rhs_norm) || !x.all_finite())
    throw LinearSolveFailure("conjugate gradient did not reach tolerance", res);
  return x;
}

Field solve_shifted(const Field& rhs, double shift, const CgOptions& opts) {
  const Grid& g = rhs.grid();
  double diag = 1.0;
  for (int a = 0; a < g.dim(); ++a) diag += 2.0 * shift / (g.h(a) * g.h(a));
  Field diagonal(rhs.grid_ptr(), std::vector<double>(rhs.size(), diag));
  auto apply = [shift](const Field& v, Field& out) {
    out = laplacian(v);
    out *= -shift;
    out += v;
  };
  return conjugate_gradient(apply, rhs, diagonal, opts);
}

Field resolvent_smoother(const Field& f, double delta, int m) {
  if (!(delta > 0.0)) throw ConfigError("smoother needs delta > 0");
  if (m < 1) throw ConfigError("smoother needs m >= 1");
  Field g = f;
  for (int i = 0; i < m; ++i) g = solve_shifted(g, delta);
  return g;
}

Norms norms(const Field& f) {
  Norms out;
  const Grid& g = f.grid();
  const VectorField grad = gradient(f);
  double abs_sum = 0.0;
  for (double v : f.values()) {
    abs_sum += std::abs(v);
    out.linf = std::max(out.linf, std::abs(v));
  }
  out.l2 = std::sqrt(inner(f, f));
  out.h10 = std::sqrt(inner(grad, grad));
  out.w11 = abs_sum * g.cell_volume() + face_quadrature(grad, [](const Vec& v) { return v.norm(); });
  return out;
}

int default_smoothing_exponent(int dim) {
  // m > 1/2 + n/4
  return static_cast<int>(std::floor(0.5 + 0.25 * dim)) + 1;
}

}  // namespace mspde
