#include "richop/fem.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include "richop/error.hpp"

namespace richop {

namespace {

std::vector<FemSpace::QuadPoint> build_quadrature(const Mesh& mesh, int degree) {
  const TriangleRule& rule = triangle_rule(degree);
  std::vector<FemSpace::QuadPoint> out;
  out.reserve(mesh.num_triangles() * rule.points.size());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto v = mesh.vertices(t);
    const double area = mesh.area(t);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Point x{l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x,
                    l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y};
      out.push_back({x, rule.weights[q] * area, static_cast<std::int32_t>(t)});
    }
  }
  return out;
}

}  // namespace

FemSpace::FemSpace(std::shared_ptr<const Mesh> mesh, int degree, int quad_degree)
    : lagrange_(std::make_shared<const LagrangeSpace>(std::move(mesh), degree)),
      quad_degree_(quad_degree) {
  const Mesh& m = lagrange_->mesh();
  const auto& layout = lagrange_->layout();
  std::vector<bool> constrained(layout.num_dofs(), false);
  for (auto b : m.boundary_nodes) constrained[b] = true;
  if (degree == 2) {
    const auto edges = m.edges();
    for (const auto& e : m.boundary_edges) {
      const auto it = std::lower_bound(edges.begin(), edges.end(), e);
      constrained[m.num_nodes() + (it - edges.begin())] = true;
    }
  }
  free_index_.assign(layout.num_dofs(), -1);
  for (std::size_t d = 0; d < layout.num_dofs(); ++d) {
    if (constrained[d]) {
      constrained_dofs_.push_back(static_cast<std::int32_t>(d));
    } else {
      free_index_[d] = static_cast<std::int32_t>(free_dofs_.size());
      free_dofs_.push_back(static_cast<std::int32_t>(d));
    }
  }

  const int nloc = layout.dofs_per_element();
  std::vector<CsrMatrix::Triplet> trip;
  for (const auto& ed : layout.element_dofs)
    for (int i = 0; i < nloc; ++i)
      for (int j = 0; j < nloc; ++j) {
        const auto fi = free_index_[ed[i]], fj = free_index_[ed[j]];
        if (fi >= 0 && fj >= 0) trip.push_back({fi, fj, 0.0});
      }
  pattern_ = CsrMatrix::from_triplets(free_dofs_.size(), std::move(trip));
  slots_.resize(layout.element_dofs.size());
  for (std::size_t t = 0; t < layout.element_dofs.size(); ++t) {
    auto& s = slots_[t];
    s.fill(-1);
    const auto& ed = layout.element_dofs[t];
    for (int i = 0; i < nloc; ++i)
      for (int j = 0; j < nloc; ++j) {
        const auto fi = free_index_[ed[i]], fj = free_index_[ed[j]];
        if (fi < 0 || fj < 0) continue;
        const auto b = pattern_.cols.begin() + pattern_.row_ptr[fi];
        const auto e = pattern_.cols.begin() + pattern_.row_ptr[fi + 1];
        s[i * 6 + j] = static_cast<std::int32_t>(std::lower_bound(b, e, fj) - pattern_.cols.begin());
      }
  }

  qps_ = build_quadrature(m, quad_degree);
  const TriangleRule& rule = triangle_rule(quad_degree);
  qgrads_.reserve(qps_.size());
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const auto g = barycentric_gradients(m.vertices(t));
    const auto& ed = layout.element_dofs[t];
    for (const auto& l : rule.points) {
      QuadGradients qg;
      qg.local = nloc;
      lagrange_gradients(degree, l, g, std::span<Point>(qg.grad.data(), nloc));
      for (int i = 0; i < nloc; ++i) qg.free[i] = free_index_[ed[i]];
      qgrads_.push_back(qg);
    }
  }
}

std::vector<FemSpace::QuadPoint> FemSpace::quadrature(int degree) const {
  return build_quadrature(mesh(), degree);
}

std::vector<double> FemSpace::lift(const FemVector& v) const {
  if (static_cast<std::size_t>(v.size()) != num_free()) throw InvalidArgument("lift: size mismatch");
  std::vector<double> full(num_dofs(), 0.0);
  for (std::size_t k = 0; k < free_dofs_.size(); ++k) full[free_dofs_[k]] = v[k];
  return full;
}

FemVector FemSpace::restrict_to_free(std::span<const double> full) const {
  FemVector v(static_cast<Eigen::Index>(num_free()));
  for (std::size_t k = 0; k < free_dofs_.size(); ++k) v[k] = full[free_dofs_[k]];
  return v;
}

FemVector FemSpace::interpolate(const std::function<double(Point)>& g) const {
  FemVector v(static_cast<Eigen::Index>(num_free()));
  for (std::size_t k = 0; k < free_dofs_.size(); ++k) v[k] = g(dof_coords()[free_dofs_[k]]);
  return v;
}

double FemSpace::evaluate(const FemVector& v, Point p) const {
  return lagrange_->evaluate(lift(v), p);
}

std::vector<double> sample_at_quadrature(const FemSpace& space, const CoefficientField& a) {
  const auto& qps = space.quadrature();
  std::vector<double> vals(qps.size());
  for (std::size_t q = 0; q < qps.size(); ++q) {
    vals[q] = a(qps[q].x);
    if (!std::isfinite(vals[q])) throw NumericalError("coefficient is not finite at a quadrature point");
  }
  return vals;
}

CsrMatrix assemble_stiffness(const FemSpace& space, std::span<const double> a_at_qp) {
  const auto& qps = space.quadrature();
  const auto& qg = space.quadrature_gradients();
  if (a_at_qp.size() != qps.size()) throw InvalidArgument("assemble_stiffness: sample count mismatch");
  CsrMatrix k = space.pattern();
  const auto& slots = space.element_slots();
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const double wa = qps[q].weight * a_at_qp[q];
    const auto& s = slots[qps[q].triangle];
    const auto& g = qg[q];
    for (int i = 0; i < g.local; ++i) {
      if (g.free[i] < 0) continue;
      for (int j = 0; j < g.local; ++j) {
        const auto slot = s[i * 6 + j];
        if (slot >= 0) k.vals[slot] += wa * (g.grad[i].x * g.grad[j].x + g.grad[i].y * g.grad[j].y);
      }
    }
  }
  return k;
}

CsrMatrix assemble_stiffness(const FemSpace& space, const CoefficientField& a) {
  return assemble_stiffness(space, sample_at_quadrature(space, a));
}

FemVector assemble_load(const FemSpace& space, const CoefficientField& f, int quad_degree) {
  const auto& layout = space.lagrange()->layout();
  const int nloc = layout.dofs_per_element();
  const TriangleRule& rule = triangle_rule(quad_degree);
  FemVector b = FemVector::Zero(static_cast<Eigen::Index>(space.num_free()));
  std::array<double, 6> phi{};
  const Mesh& m = space.mesh();
  for (std::size_t t = 0; t < m.num_triangles(); ++t) {
    const auto v = m.vertices(t);
    const double area = m.area(t);
    const auto& ed = layout.element_dofs[t];
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& l = rule.points[q];
      const Point x{l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x,
                    l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y};
      const double fx = f(x);
      if (!std::isfinite(fx)) throw NumericalError("source is not finite at a quadrature point");
      lagrange_values(space.degree(), l, std::span<double>(phi.data(), nloc));
      for (int i = 0; i < nloc; ++i) {
        const auto fi = space.free_index(ed[i]);
        if (fi >= 0) b[fi] += rule.weights[q] * area * fx * phi[i];
      }
    }
  }
  return b;
}

FemVector assemble_load(const FemSpace& space, const CoefficientField& f) {
  return assemble_load(space, f, space.quad_degree());
}

FemProblem::FemProblem(std::shared_ptr<const FemSpace> space, ProblemConfig config)
    : space_(std::move(space)), config_(std::move(config)) {
  if (!space_) throw InvalidArgument("null finite element space");
  if (!(config_.alpha > 0.0) || !(config_.beta > 0.0) || !(config_.beta < config_.alpha))
    throw InvalidArgument("problem bounds need 0 < beta < alpha");
  if (space_->num_free() == 0) throw InvalidArgument("space has no free dofs");
  const auto a0 = sample_at_quadrature(*space_, config_.a0);
  if (*std::min_element(a0.begin(), a0.end()) <= 0.0)
    throw InvalidArgument("nominal coefficient must be positive");
  k0_ = assemble_stiffness(*space_, a0);
  load_ = assemble_load(*space_, config_.f);
  const FemVector r = solve_spd(k0_, load_, config_.anchor_tol);
  dual_norm_ = std::sqrt(std::max(0.0, load_.dot(r)));
  psi0_ = r / config_.alpha;
}

double FemProblem::energy_inner(const FemVector& u, const FemVector& v) const {
  return k0_.quadratic_form(u, v);
}

double FemProblem::energy_norm(const FemVector& v) const {
  return std::sqrt(std::max(0.0, energy_inner(v, v)));
}

FemVector FemProblem::riesz(const FemVector& load) const {
  return solve_spd(k0_, load, config_.solver_tol);
}

double FemProblem::dual_norm(const FemVector& load) const {
  return std::sqrt(std::max(0.0, load.dot(riesz(load))));
}

FemVector FemProblem::solve_with(const CsrMatrix& stiffness) const {
  return solve_spd(stiffness, load_, config_.solver_tol);
}

FemVector FemProblem::galerkin_solve(const CoefficientField& a) const {
  const auto vals = sample_at_quadrature(*space_, a);
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  if (*lo < config_.alpha - config_.beta - 1e-12 || *hi > config_.alpha + config_.beta + 1e-12)
    throw InvalidArgument("coefficient outside the admissible set");
  return solve_with(assemble_stiffness(*space_, vals));
}

void write_vector_csv(std::ostream& os, const FemVector& v) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << v[i] << '\n';
}

FemVector read_vector_csv(std::istream& is) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(line, &used);
    } catch (const std::exception&) {
      throw ConfigError("vector csv: malformed line '" + line + "'");
    }
    if (line.find_first_not_of(" \t\r", used) != std::string::npos)
      throw ConfigError("vector csv: trailing characters in '" + line + "'");
    vals.push_back(x);
  }
  return Eigen::Map<FemVector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace richop
