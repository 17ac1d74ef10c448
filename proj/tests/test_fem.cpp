#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "doctest.h"
#include "richop/error.hpp"
#include "richop/fem.hpp"
#include "richop/rng.hpp"

using namespace richop;

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const FemSpace> square_space(double h, int degree = 1) {
  return std::make_shared<const FemSpace>(
      std::make_shared<const Mesh>(triangulate(Polygon::unit_square(), h)), degree);
}

std::shared_ptr<const FemSpace> refined_square(int levels, int degree = 1) {
  Mesh m = triangulate(Polygon::unit_square(), 1.5);
  for (int i = 0; i < levels; ++i) m = refine_uniform(m);
  return std::make_shared<const FemSpace>(std::make_shared<const Mesh>(std::move(m)), degree);
}

FemVector random_free(Rng& rng, std::size_t n) {
  FemVector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1, 1);
  return v;
}

CoefficientField random_admissible(Rng& rng, double alpha, double beta) {
  std::vector<double> y(8);
  for (double& v : y) v = rng.uniform(-1, 1);
  return DataFamily::parametric(alpha, beta, ordered_modes(8), 0.999).member(y);
}

// Series value of the squared H^{-1} norm of f = 1 on the unit square.
double dual_norm_series() {
  double s = 0.0;
  for (int m = 1; m < 4000; m += 2)
    for (int n = 1; n < 4000; n += 2)
      s += 64.0 / (std::pow(kPi, 6) * m * m * double(n) * n * (double(m) * m + double(n) * n));
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("sparse triplet assembly sums duplicates and detects asymmetry") {
  auto m = CsrMatrix::from_triplets(3, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 2, 4.0}, {2, 1, 4.0}});
  CHECK(m.at(0, 0) == 3.0);
  CHECK(m.at(1, 2) == 4.0);
  CHECK(m.at(2, 2) == 0.0);
  CHECK(m.symmetry_defect() == 0.0);
  auto n = CsrMatrix::from_triplets(2, {{0, 1, 1.0}});
  CHECK(n.symmetry_defect() == 1.0);
  CHECK_THROWS_AS(CsrMatrix::from_triplets(2, {{0, 2, 1.0}}), InvalidArgument);
}

TEST_CASE("solve_spd with the identity returns the rhs") {
  Rng rng(1);
  const FemVector b = random_free(rng, 17);
  CHECK((solve_spd(CsrMatrix::identity(17), b) - b).norm() == 0.0);
}

TEST_CASE("solve_spd matches a dense Cholesky solve") {
  Rng rng(2024);
  Eigen::MatrixXd g(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) g(i, j) = rng.uniform(-1, 1);
  const Eigen::MatrixXd a = g * g.transpose() + 0.5 * Eigen::MatrixXd::Identity(10, 10);
  std::vector<CsrMatrix::Triplet> t;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) t.push_back({i, j, a(i, j)});
  const auto csr = CsrMatrix::from_triplets(10, t);
  const FemVector b = random_free(rng, 10);
  SolveReport rep;
  const FemVector x = solve_spd(csr, b, 1e-12, &rep);
  const FemVector oracle = a.llt().solve(b);
  CHECK((x - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(rep.relative_residual <= 1e-12);
}

TEST_CASE("solve_spd rejects indefinite systems") {
  const auto m = CsrMatrix::from_triplets(2, {{0, 0, 1.0}, {1, 1, -1.0}});
  FemVector b(2);
  b << 1, 1;
  CHECK_THROWS_AS(solve_spd(m, b), NumericalError);
}

TEST_CASE("free dofs exclude exactly the boundary") {
  const auto s1 = square_space(0.25, 1);
  const auto s2 = square_space(0.25, 2);
  CHECK(s1->num_dofs() == s1->mesh().num_nodes());
  CHECK(s2->num_dofs() == s2->mesh().num_nodes() + s2->mesh().edges().size());
  for (const auto* s : {s1.get(), s2.get()}) {
    for (auto d : s->constrained_dofs()) {
      const Point p = s->dof_coords()[d];
      CHECK((p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0));
    }
    for (auto d : s->free_dofs()) {
      const Point p = s->dof_coords()[d];
      CHECK((p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0));
    }
  }
}

TEST_CASE("stiffness of the once-refined square has the 5-point center entry") {
  const auto s = refined_square(1);
  REQUIRE(s->num_free() == 1);
  const auto k = assemble_stiffness(*s, CoefficientField::constant(1.0));
  CHECK(k.at(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("stiffness is linear in the coefficient and symmetric") {
  for (int degree : {1, 2}) {
    const auto s = square_space(0.2, degree);
    const auto one = assemble_stiffness(*s, CoefficientField::constant(1.0));
    const auto three = assemble_stiffness(*s, CoefficientField::constant(3.0));
    const auto a1 = CoefficientField::analytic([](Point p) { return 1 + p.x * p.y; });
    const auto a2 = CoefficientField::analytic([](Point p) { return 0.5 + std::sin(p.x); });
    const auto k1 = assemble_stiffness(*s, a1), k2 = assemble_stiffness(*s, a2);
    const auto k12 = assemble_stiffness(*s, a1 + a2);
    // Relative to the matrix scale: some entries cancel to zero analytically.
    double scale = 0.0, scale3 = 0.0;
    for (double v : k12.vals) scale = std::max(scale, std::abs(v));
    for (double v : three.vals) scale3 = std::max(scale3, std::abs(v));
    for (std::size_t i = 0; i < one.nnz(); ++i) {
      CHECK(std::abs(three.vals[i] - 3.0 * one.vals[i]) <= 1e-13 * scale3);
      CHECK(std::abs(k12.vals[i] - k1.vals[i] - k2.vals[i]) <= 1e-13 * scale);
    }
    CHECK(k1.symmetry_defect() <= 1e-13);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(one.to_dense()).info() == Eigen::Success);
  }
}

TEST_CASE("load vectors") {
  const auto s = square_space(0.2, 1);
  CHECK(assemble_load(*s, CoefficientField::constant(0.0)).norm() == 0.0);
  // f = 1: each entry is a third of the node's patch area.
  const auto b = assemble_load(*s, CoefficientField::constant(1.0));
  std::vector<double> patch(s->num_dofs(), 0.0);
  for (std::size_t t = 0; t < s->mesh().num_triangles(); ++t)
    for (auto v : s->mesh().triangles[t]) patch[v] += s->mesh().area(t);
  for (std::size_t k = 0; k < s->num_free(); ++k)
    CHECK(std::abs(b[k] - patch[s->free_dofs()[k]] / 3) < 1e-15);
  // Linear f is integrated exactly from degree 2 on.
  const auto lin = CoefficientField::analytic([](Point p) { return 1 + 2 * p.x - p.y; });
  for (int degree : {1, 2}) {
    const auto sd = square_space(0.25, degree);
    const auto lo = assemble_load(*sd, lin, 2), hi = assemble_load(*sd, lin, 8);
    CHECK((lo - hi).lpNorm<Eigen::Infinity>() < 1e-15);
  }
}

TEST_CASE("solution of the symmetric square problem is symmetric") {
  const auto s = square_space(0.1, 1);
  FemProblem prob(s, ProblemConfig{});
  const FemVector u = prob.galerkin_solve(CoefficientField::constant(1.0));
  const auto full = s->lift(u);
  const auto& nodes = s->mesh().nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Point p = nodes[i];
    for (const Point q : {Point{1 - p.x, p.y}, Point{p.x, 1 - p.y}, Point{p.y, p.x}}) {
      const double v = s->lagrange()->evaluate(full, q);
      CHECK(std::abs(v - full[i]) < 1e-10);
    }
  }
}

TEST_CASE("nominal solve returns psi0 with the energy bound") {
  const auto s = square_space(0.1, 1);
  ProblemConfig cfg;
  cfg.alpha = 1.3;
  cfg.beta = 0.4;
  FemProblem prob(s, cfg);
  const FemVector u = prob.galerkin_solve(CoefficientField::constant(1.3));
  CHECK((u - prob.psi0()).norm() <= 1e-12 * prob.psi0().norm());
  CHECK(prob.energy_norm(u) <= prob.dual_norm() / cfg.alpha + 1e-12);
}

TEST_CASE("inadmissible coefficients are rejected") {
  FemProblem prob(square_space(0.25), ProblemConfig{});
  CHECK_THROWS_AS(prob.galerkin_solve(CoefficientField::constant(1.6)), InvalidArgument);
}

TEST_CASE("manufactured solution converges at rate h in energy") {
  const auto u_exact = [](Point p) { return std::sin(kPi * p.x) * std::sin(kPi * p.y); };
  const auto grad_exact = [](Point p) {
    return Point{kPi * std::cos(kPi * p.x) * std::sin(kPi * p.y),
                 kPi * std::sin(kPi * p.x) * std::cos(kPi * p.y)};
  };
  (void)u_exact;
  ProblemConfig cfg;
  cfg.f = CoefficientField::analytic(
      [](Point p) { return 2 * kPi * kPi * std::sin(kPi * p.x) * std::sin(kPi * p.y); });
  std::vector<double> err, hs;
  for (int level = 2; level <= 5; ++level) {
    const auto s = refined_square(level);
    FemProblem prob(s, cfg);
    const auto full = s->lift(prob.galerkin_solve(CoefficientField::constant(1.0)));
    // Elementwise gradient error with a high-order rule.
    const auto& rule = triangle_rule(8);
    double e2 = 0.0;
    const Mesh& m = s->mesh();
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
      const auto v = m.vertices(t);
      const auto g = barycentric_gradients(v);
      Point gh{0, 0};
      for (int k = 0; k < 3; ++k) gh = gh + full[m.triangles[t][k]] * g[k];
      for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const auto& l = rule.points[q];
        const Point x{l[0] * v[0].x + l[1] * v[1].x + l[2] * v[2].x,
                      l[0] * v[0].y + l[1] * v[1].y + l[2] * v[2].y};
        const Point d = grad_exact(x) - gh;
        e2 += rule.weights[q] * m.area(t) * (d.x * d.x + d.y * d.y);
      }
    }
    err.push_back(std::sqrt(e2));
    hs.push_back(m.max_diameter());
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double slope = std::log(err[i] / err[i - 1]) / std::log(hs[i] / hs[i - 1]);
    CHECK(slope == doctest::Approx(1.0).epsilon(0.15));
  }
}

TEST_CASE("solution map is Lipschitz with an h-independent constant") {
  Rng rng(31);
  const auto a1 = random_admissible(rng, 1.0, 0.5), a2 = random_admissible(rng, 1.0, 0.5);
  const double dist = field_range(a1 + (-1.0) * a2, Polygon::unit_square(), 200, true).max;
  const double dist_lo = -field_range(a1 + (-1.0) * a2, Polygon::unit_square(), 200, true).min;
  const double linf = std::max(dist, dist_lo);
  std::vector<double> ratio;
  for (int level = 2; level <= 4; ++level) {
    FemProblem prob(refined_square(level), ProblemConfig{});
    const FemVector d = prob.galerkin_solve(a1) - prob.galerkin_solve(a2);
    ratio.push_back(prob.energy_norm(d) / linf);
    // C_L = ||f|| / (alpha - beta)^2
    CHECK(ratio.back() <= prob.dual_norm() / 0.25 + 1e-10);
  }
  CHECK(std::abs(ratio[2] - ratio[1]) <= 0.1 * ratio[2]);
}

TEST_CASE("energy norm") {
  const auto s = square_space(0.2, 2);
  FemProblem prob(s, ProblemConfig{});
  Rng rng(5);
  const FemVector v = random_free(rng, s->num_free());
  CHECK(prob.energy_norm(FemVector::Zero(v.size())) == 0.0);
  CHECK(std::abs(prob.energy_norm(-2.5 * v) - 2.5 * prob.energy_norm(v)) <=
        1e-13 * prob.energy_norm(v));
  // H^1 seminorm by elementwise gradient quadrature.
  const auto full = s->lift(v);
  const auto& layout = s->lagrange()->layout();
  const auto& rule = triangle_rule(4);
  double h1 = 0.0;
  for (std::size_t t = 0; t < s->mesh().num_triangles(); ++t) {
    const auto g = barycentric_gradients(s->mesh().vertices(t));
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      std::array<Point, 6> grads;
      lagrange_gradients(2, rule.points[q], g, grads);
      Point gu{0, 0};
      for (int k = 0; k < 6; ++k) gu = gu + full[layout.element_dofs[t][k]] * grads[k];
      h1 += rule.weights[q] * s->mesh().area(t) * (gu.x * gu.x + gu.y * gu.y);
    }
  }
  CHECK(prob.energy_norm(v) == doctest::Approx(std::sqrt(h1)).epsilon(1e-12));
}

TEST_CASE("dual norm") {
  const auto s = square_space(0.2, 1);
  FemProblem prob(s, ProblemConfig{});
  CHECK(prob.dual_norm(FemVector::Zero(s->num_free())) == 0.0);
  Rng rng(6);
  const FemVector g = random_free(rng, s->num_free());
  const FemVector induced = prob.nominal_stiffness() * g;
  CHECK(prob.dual_norm(induced) == doctest::Approx(prob.energy_norm(g)).epsilon(1e-10));
}

TEST_CASE("dual norm of f = 1 converges to the Fourier series value") {
  const double oracle = dual_norm_series();
  CHECK(oracle == doctest::Approx(0.18747).epsilon(1e-4));
  double prev = 0.0;
  for (int level = 3; level <= 6; ++level) {
    FemProblem prob(refined_square(level), ProblemConfig{});
    const double d = prob.dual_norm();
    CHECK(d > prev);
    CHECK(d <= oracle + 1e-12);
    prev = d;
  }
  CHECK(std::abs(prev - oracle) < 2e-3 * oracle);
  FemProblem p2(refined_square(4, 2), ProblemConfig{});
  CHECK(std::abs(p2.dual_norm() - oracle) < 1e-3 * oracle);
}

TEST_CASE("admissible coefficients satisfy the coercivity and continuity bounds") {
  const auto s = square_space(0.2, 1);
  FemProblem prob(s, ProblemConfig{});
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_admissible(rng, 1.0, 0.5);
    const auto k = assemble_stiffness(*s, a);
    const auto kd = assemble_stiffness(*s, a + (-1.0) * CoefficientField::constant(1.0));
    for (int i = 0; i < 10; ++i) {
      const FemVector w = random_free(rng, s->num_free()), v = random_free(rng, s->num_free());
      const double e = prob.energy_norm(w) * prob.energy_norm(w);
      const double kw = k.quadratic_form(w, w);
      CHECK(0.5 * e <= kw * (1 + 1e-10));
      CHECK(kw <= 1.5 * e * (1 + 1e-10));
      CHECK(std::abs(kd.quadratic_form(w, v)) <=
            0.5 * prob.energy_norm(w) * prob.energy_norm(v) * (1 + 1e-10));
    }
  }
}

TEST_CASE("Galerkin orthogonality between nested spaces") {
  const auto coarse = refined_square(2), fine = refined_square(3);
  const auto a = CoefficientField::analytic([](Point p) { return 1 + 0.3 * p.x - 0.2 * p.y; });
  FemProblem pc(coarse, ProblemConfig{}), pf(fine, ProblemConfig{});
  const auto uc = coarse->lift(pc.galerkin_solve(a));
  const FemVector uf = pf.galerkin_solve(a);
  const FemVector uc_on_fine = fine->interpolate([&](Point p) { return coarse->lagrange()->evaluate(uc, p); });
  const auto kf = assemble_stiffness(*fine, a);
  for (std::size_t k = 0; k < coarse->num_free(); ++k) {
    FemVector e = FemVector::Zero(coarse->num_free());
    e[k] = 1.0;
    const auto wc = coarse->lift(e);
    const FemVector w = fine->interpolate([&](Point p) { return coarse->lagrange()->evaluate(wc, p); });
    CHECK(std::abs(kf.quadratic_form(FemVector(uc_on_fine - uf), w)) < 1e-12);
  }
}

TEST_CASE("sampled solutions obey the stability bound") {
  const auto s = square_space(0.15, 2);
  FemProblem prob(s, ProblemConfig{});
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto u = prob.galerkin_solve(random_admissible(rng, 1.0, 0.5));
    CHECK(prob.energy_norm(u) <= prob.dual_norm() / 0.5 + 1e-8);
  }
}

TEST_CASE("vector csv round-trips exactly") {
  Rng rng(9);
  const FemVector v = random_free(rng, 40) * 1e-7;
  std::stringstream ss;
  write_vector_csv(ss, v);
  CHECK(read_vector_csv(ss) == v);
  std::stringstream bad("1.0\nabc\n");
  CHECK_THROWS_AS(read_vector_csv(bad), ConfigError);
}

TEST_CASE("stalled conjugate gradients fall back to a factorization") {
  for (std::size_t n : {500u, 2500u}) {
    std::vector<CsrMatrix::Triplet> t;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back({int(i), int(i), 2.0});
      if (i + 1 < n) {
        t.push_back({int(i), int(i + 1), -1.0});
        t.push_back({int(i + 1), int(i), -1.0});
      }
    }
    const auto a = CsrMatrix::from_triplets(n, t);
    const FemVector b = FemVector::Ones(static_cast<Eigen::Index>(n));
    SolveReport rep;
    const FemVector x = solve_spd(a, b, 1e-16, &rep);
    CHECK(rep.factorized);
    CHECK(rep.backward_error <= 1e-14);
    // Exact solution of the discrete 1D Poisson problem: x_i = (i+1)(n-i)/2.
    for (std::size_t i = 0; i < n; i += 97) CHECK(x[i] == doctest::Approx((i + 1.0) * (n - i) / 2).epsilon(1e-9));
  }
}
