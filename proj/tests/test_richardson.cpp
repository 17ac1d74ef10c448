#include <cmath>
#include <sstream>

#include "doctest.h"
#include "richop/error.hpp"
#include "richop/richardson.hpp"
#include "richop/rng.hpp"

using namespace richop;

namespace {

CoefficientField random_admissible(Rng& rng, double alpha, double beta) {
  std::vector<double> y(8);
  for (double& v : y) v = rng.uniform(-1, 1);
  return DataFamily::parametric(alpha, beta, ordered_modes(8), 0.999).member(y);
}

struct Setup {
  std::shared_ptr<const FemSpace> space = std::make_shared<const FemSpace>(
      std::make_shared<const Mesh>(triangulate(Polygon::unit_square(), 1.0 / 16)), 1);
  FemProblem problem{space, ProblemConfig{}};
  SnapshotSet snaps = generate_snapshots(DataFamily::parametric(1.0, 0.5, ordered_modes(6), 0.9), 40,
                                         17, problem, Polygon::unit_square());
  ReducedBasis basis = weak_greedy(problem, snaps, 10).basis;
};

Setup& setup() {
  static Setup s;
  return s;
}

Eigen::VectorXd e1(Eigen::Index m) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  e[0] = 1.0;
  return e;
}

}  // namespace

TEST_CASE("nominal coefficient in the orthonormal frame gives the identity") {
  auto& s = setup();
  REQUIRE(s.basis.n() == 10);
  ReducedAssembler as(s.problem, s.basis, Frame::orthonormal);
  const Eigen::MatrixXd b = as.assemble(CoefficientField::constant(1.0));
  CHECK((b - Eigen::MatrixXd::Identity(11, 11)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("reduced load maps to the first unit vector") {
  auto& s = setup();
  for (Frame f : {Frame::scaled, Frame::orthonormal}) {
    ReducedAssembler as(s.problem, s.basis, f);
    const auto sys = as.system(CoefficientField::constant(1.0));
    const double scale = f == Frame::orthonormal ? s.basis.psi0_norm() : 1.0;
    CHECK((sys.g - scale * e1(11)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  // In the raw snapshot frame the error is the psi0 solve residual amplified by
  // cond(B_a0); a prefix keeps that condition moderate.
  const auto pre = s.basis.prefix(6);
  REQUIRE(pre.gram_condition() < 1e6);
  ReducedAssembler as(s.problem, pre, Frame::snapshots);
  CHECK((as.system(CoefficientField::constant(1.0)).g - e1(7)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("quadrature assembly matches the sparse Galerkin route") {
  auto& s = setup();
  Rng rng(8);
  for (Frame f : {Frame::scaled, Frame::snapshots}) {
    ReducedAssembler as(s.problem, s.basis, f);
    for (int t = 0; t < 5; ++t) {
      const auto v = random_admissible(rng, 1.0, 0.5);
      const Eigen::MatrixXd a = as.assemble(v), b = as.assemble_galerkin(v);
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * b.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("hand quadrature of b(v; psi_i, psi_j) for piecewise constant v") {
  // 4 x 4 node grid on the unit square, four interior nodes, P1.
  std::vector<Point> nodes;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) nodes.push_back({i / 3.0, j / 3.0});
  std::vector<Triangle> tris;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      const int a = j * 4 + i;
      tris.push_back({a, a + 1, a + 5});
      tris.push_back({a, a + 5, a + 4});
    }
  auto mesh = std::make_shared<const Mesh>(Mesh::from_triangles(nodes, tris));
  auto space = std::make_shared<const FemSpace>(mesh, 1);
  FemProblem pr(space, ProblemConfig{});
  const auto snaps = generate_snapshots({CoefficientField::constant(0.7), CoefficientField::analytic(
                                             [](Point p) { return 1.0 + 0.4 * p.x * p.y; }, "xy")},
                                        pr);
  const auto basis = weak_greedy(pr, snaps, 1).basis;
  REQUIRE(basis.n() == 1);

  auto tri_of = [&](Point p) {
    for (std::size_t t = 0; t < mesh->num_triangles(); ++t) {
      const auto l = barycentric(mesh->vertices(t), p);
      if (l[0] > 1e-12 && l[1] > 1e-12 && l[2] > 1e-12) return static_cast<int>(t);
    }
    return -1;
  };
  auto value = [](int t) { return 0.6 + 0.05 * (t % 7); };
  const auto v = CoefficientField::analytic([&](Point p) { return value(tri_of(p)); }, "pw");

  ReducedAssembler as(pr, basis, Frame::snapshots);
  const Eigen::MatrixXd b = as.assemble(v);

  // Hand route: nodal values, per-triangle gradient from the 2 x 2 edge system.
  std::vector<std::vector<double>> nodal;
  for (const auto& p : basis.psi()) nodal.push_back(space->lift(p));
  Eigen::Matrix2d oracle = Eigen::Matrix2d::Zero();
  for (std::size_t t = 0; t < mesh->num_triangles(); ++t) {
    const auto& tri = mesh->triangles[t];
    const Point x0 = nodes[tri[0]], x1 = nodes[tri[1]], x2 = nodes[tri[2]];
    Eigen::Matrix2d e;
    e << x1.x - x0.x, x1.y - x0.y, x2.x - x0.x, x2.y - x0.y;
    const double area = 0.5 * std::abs(e.determinant());
    Eigen::Vector2d g[2];
    for (int k = 0; k < 2; ++k)
      g[k] = e.inverse() * Eigen::Vector2d(nodal[k][tri[1]] - nodal[k][tri[0]],
                                           nodal[k][tri[2]] - nodal[k][tri[0]]);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) oracle(i, j) += value(static_cast<int>(t)) * area * g[i].dot(g[j]);
  }
  CHECK((b - oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("contraction norm: zero at alpha a0, bounded by beta/alpha in the admissible set") {
  auto& s = setup();
  ReducedAssembler as(s.problem, s.basis);
  CHECK(contraction_norm(as.system(CoefficientField::constant(1.0))) <= 1e-10);
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto sys = as.system(random_admissible(rng, 1.0, 0.5));
    CHECK(contraction_norm(sys) <= 0.5 + 1e-10);
  }
}

TEST_CASE("snapshot frame contracts in the B_a0 norm") {
  auto& s = setup();
  ReducedAssembler as(s.problem, s.basis, Frame::snapshots);
  const Eigen::LLT<Eigen::MatrixXd> l(as.b_a0());
  const Eigen::MatrixXd u = l.matrixU();
  Rng rng(22);
  for (int t = 0; t < 5; ++t) {
    const auto sys = as.system(random_admissible(rng, 1.0, 0.5));
    const Eigen::MatrixXd similar = u * sys.a_v * u.inverse();
    CHECK(contraction_norm(similar) <= 0.5 + 1e-8);
  }
}

TEST_CASE("power iteration agrees with a dense SVD") {
  Eigen::Matrix3d a;
  a << 0.3, -0.1, 0.2, 0.05, 0.4, -0.25, 0.1, 0.15, -0.35;
  const double svd = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()[0];
  CHECK(contraction_norm(Eigen::MatrixXd(a)) == doctest::Approx(svd).epsilon(1e-10));
  CHECK(contraction_norm(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd m(6, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
    const double ref = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()[0];
    CHECK(std::abs(contraction_norm(m) - ref) <= 1e-10 * ref);
  }
}

TEST_CASE("alpha a0 reaches the fixed point e1 in one step") {
  auto& s = setup();
  ReducedAssembler as(s.problem, s.basis);
  const auto st = iterate(as.system(CoefficientField::constant(1.0)), 1);
  CHECK((st.c - e1(11)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(iterate(as.system(CoefficientField::constant(1.0)), 0).norms[0] == 1.0);
}

TEST_CASE("geometric convergence, error bound and coefficient bound") {
  auto& s = setup();
  ReducedAssembler as(s.problem, s.basis);
  const double alpha = 1.0, beta = 0.5, q = beta / alpha;
  const double fnorm = s.problem.dual_norm();
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const auto sys = as.system(random_admissible(rng, alpha, beta));
    const Eigen::VectorXd cstar = direct_solve(sys);
    const auto st = iterate(sys, 50, true);
    CHECK(st.norms[0] == 1.0);
    double prev = reduced_energy_error(sys, st.trajectory[0], cstar);
    for (int k = 0; k <= 50; ++k) {
      const double err = reduced_energy_error(sys, st.trajectory[k], cstar);
      if (k > 0 && k <= 30 && prev > 1e-13) CHECK(err <= (q + 1e-8) * prev);
      CHECK(err <= std::pow(q, k + 1) * fnorm / (alpha - beta) + 1e-8);
      CHECK(st.norms[k] <= std::pow(q, k) + alpha / (alpha - beta) + 1e-8);
      prev = err;
    }
    const auto far = iterate(sys, 200);
    CHECK((far.c - cstar).norm() <= 1e-10);
  }
}

TEST_CASE("choose_K") {
  CHECK(choose_K(1.0, 0.5, 1.0, 1e-3) == 12);
  int prev = 1 << 30;
  for (double eps : {1e-8, 1e-6, 1e-4, 1e-2, 0.5}) {
    const int k = choose_K(1.0, 0.5, 1.0, eps);
    CHECK(k <= prev);
    prev = k;
  }
  const double eps = 1e-4;
  CHECK(choose_K(2.0, 0.5, 1.5, eps) ==
        static_cast<int>(std::ceil(std::abs(std::log(eps / 2)) / std::abs(std::log(0.25)))));
  CHECK(choose_K(1.0, 0.0, 1.0, 1e-3) == 1);
  CHECK_THROWS_AS(choose_K(1.0, 1.0, 1.0, 1e-3), InvalidArgument);
  CHECK_THROWS_AS(choose_K(1.0, 0.5, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(choose_K(1.0, 0.5, 0.0, 1e-3), InvalidArgument);
}

TEST_CASE("reduced energy error matches the full-space energy norm") {
  auto& s = setup();
  Rng rng(24);
  Eigen::VectorXd c(11), d(11);
  for (Frame f : {Frame::scaled, Frame::snapshots, Frame::orthonormal}) {
    ReducedAssembler as(s.problem, s.basis, f);
    const auto sys = as.system(CoefficientField::constant(1.0));
    for (int t = 0; t < 5; ++t) {
      for (Eigen::Index i = 0; i < 11; ++i) {
        c[i] = rng.uniform(-1, 1);
        d[i] = rng.uniform(-1, 1);
      }
      CHECK(reduced_energy_error(sys, c, c) == 0.0);
      const double full = s.problem.energy_norm(s.basis.synthesize(c, f) - s.basis.synthesize(d, f));
      CHECK(reduced_energy_error(sys, c, d) == doctest::Approx(full).epsilon(1e-10));
      if (f == Frame::orthonormal)
        CHECK(std::abs(reduced_energy_error(sys, c, d) - (c - d).norm()) <= 1e-12);
    }
  }
}

TEST_CASE("iteration CSV layout") {
  auto& s = setup();
  ReducedAssembler as(s.problem, s.basis);
  const auto sys = as.system(CoefficientField::constant(1.2));
  const auto st = iterate(sys, 4, true);
  std::ostringstream os;
  write_iteration_csv(os, sys, st, direct_solve(sys));
  const std::string out = os.str();
  CHECK(out.rfind("k,coeff_norm,energy_error,ratio\n", 0) == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 6);
  CHECK_THROWS_AS(write_iteration_csv(os, sys, iterate(sys, 2), direct_solve(sys)), InvalidArgument);
  CHECK_THROWS_AS(iterate(sys, -1), InvalidArgument);
}
