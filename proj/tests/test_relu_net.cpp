#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "richop/error.hpp"
#include "richop/relu_net.hpp"
#include "richop/rng.hpp"

using namespace richop;

namespace {

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
}

Eigen::VectorXd random_vector(Rng& rng, int n, double lo = -1, double hi = 1) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

NeuralNet random_net(Rng& rng, int in, int out) {
  const int depth = 1 + static_cast<int>(rng.uniform(0, 4));
  std::vector<NetLayer> layers;
  int cols = in;
  for (int l = 0; l < depth; ++l) {
    const int rows = l + 1 == depth ? out : 1 + static_cast<int>(rng.uniform(0, 6));
    std::vector<NetLayer::Entry> e;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (rng.uniform(0, 1) < 0.5) e.push_back({r, c, rng.uniform(-2, 2)});
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    for (int r = 0; r < rows; ++r)
      if (rng.uniform(0, 1) < 0.5) b[r] = rng.uniform(-1, 1);
    layers.push_back(NetLayer::from_entries(rows, cols, std::move(e), b, "random"));
    cols = rows;
  }
  return NeuralNet(std::move(layers));
}

// Direct layer-by-layer evaluation with dense matrices.
Eigen::VectorXd dense_realize(const NeuralNet& net, Eigen::VectorXd x) {
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& nl = net.layers()[l];
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nl.rows, nl.cols);
    for (int r = 0; r < nl.rows; ++r)
      for (auto k = nl.row_ptr[r]; k < nl.row_ptr[r + 1]; ++k) a(r, nl.col[k]) = nl.val[k];
    x = a * x + nl.bias;
    if (l + 1 < net.layers().size()) x = x.cwiseMax(0.0);
  }
  return x;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& a) {
  return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
}

CoefficientField random_member(Rng& rng, double alpha, double beta) {
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
  ReducedAssembler assembler{problem, basis, Frame::scaled};
  Encoder encoder = build_nodal_encoder(std::make_shared<const LagrangeSpace>(
      std::make_shared<const Mesh>(triangulate(Polygon::unit_square(), 0.2)), 1));

  std::vector<double> samples(const CoefficientField& a) const {
    const auto y = encoder.encode(a);
    std::vector<double> s;
    for (const auto& q : space->quadrature()) s.push_back(encoder.reconstruct_at(y, q.x));
    return s;
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

}  // namespace

TEST_CASE("affine and identity nets realize exactly") {
  Rng rng(1);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 4);
  const Eigen::VectorXd b = Eigen::VectorXd::Random(3);
  const auto net = affine_net(a, b);
  CHECK(net.depth() == 1);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_vector(rng, 4);
    CHECK((net.realize(x) - dense_realize(net, x)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  for (int depth = 1; depth <= 5; ++depth) {
    const auto id = identity_net(7, depth);
    CHECK(id.depth() == depth);
    for (int t = 0; t < 100; ++t) {
      const auto x = random_vector(rng, 7, -1e3, 1e3);
      CHECK(id.realize(x) == x);
    }
  }
  CHECK_THROWS_AS(net.realize(Eigen::VectorXd::Zero(3)), InvalidArgument);
  CHECK_THROWS_AS(identity_net(0, 2), InvalidArgument);
}

TEST_CASE("two-layer max network") {
  // max(x1, x2) = x2 + ReLU(x1 - x2), with x2 carried as ReLU(x2) - ReLU(-x2).
  std::vector<NetLayer> layers;
  layers.push_back(NetLayer::from_entries(3, 2, {{0, 0, 1}, {0, 1, -1}, {1, 1, 1}, {2, 1, -1}},
                                          Eigen::VectorXd::Zero(3), "max"));
  layers.push_back(NetLayer::from_entries(1, 3, {{0, 0, 1}, {0, 1, 1}, {0, 2, -1}}, Eigen::VectorXd::Zero(1),
                                          "max"));
  const NeuralNet net(std::move(layers));
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_vector(rng, 2, -5, 5);
    CHECK(std::abs(net.realize(x)[0] - std::max(x[0], x[1])) <= 1e-15 * (std::abs(x[0]) + std::abs(x[1])));
  }
}

TEST_CASE("layer construction sums duplicates and drops zeros") {
  const auto l = NetLayer::from_entries(2, 2, {{1, 0, 2.0}, {0, 1, 1.0}, {1, 0, -2.0}, {0, 1, 0.5}},
                                        Eigen::Vector2d(0.0, 3.0), "t");
  CHECK(l.weight_nonzeros() == 1);
  CHECK(l.bias_nonzeros() == 1);
  CHECK(l.val[0] == 1.5);
  CHECK_THROWS_AS(NetLayer::from_entries(2, 2, {{2, 0, 1.0}}, Eigen::Vector2d::Zero(), "t"), InvalidArgument);
  CHECK_THROWS_AS(NeuralNet({l, NetLayer::from_entries(1, 3, {}, Eigen::VectorXd::Zero(1), "t")}),
                  InvalidArgument);
}

TEST_CASE("sparse concatenation bounds and exact composition") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const int in = 1 + static_cast<int>(rng.uniform(0, 5)), mid = 1 + static_cast<int>(rng.uniform(0, 5));
    const auto inner = random_net(rng, in, mid);
    const auto outer = random_net(rng, mid, 1 + static_cast<int>(rng.uniform(0, 4)));
    const auto c = sparse_concat(outer, inner);
    CHECK(c.depth() <= outer.depth() + inner.depth());
    CHECK(c.size() <= 2 * (outer.size() + inner.size()));
    for (int s = 0; s < 10; ++s) {
      const auto x = random_vector(rng, in, -3, 3);
      CHECK(c.realize(x) == outer.realize(inner.realize(x)));
      const auto ref = dense_realize(outer, dense_realize(inner, x));
      CHECK((c.realize(x) - ref).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + ref.cwiseAbs().maxCoeff()));
    }
  }
  const auto inner = random_net(rng, 3, 4);
  const auto c = sparse_concat(identity_net(4, 3), inner);
  for (int s = 0; s < 100; ++s) {
    const auto x = random_vector(rng, 3);
    CHECK(c.realize(x) == inner.realize(x));
  }
  CHECK_THROWS_AS(sparse_concat(identity_net(3, 1), inner), InvalidArgument);
}

TEST_CASE("parallel nets share the input and stack the outputs") {
  Rng rng(4);
  const auto a = random_net(rng, 3, 2);
  std::vector<NeuralNet> parts{a, identity_net(3, a.depth())};
  const auto p = parallel_shared(parts);
  for (int s = 0; s < 20; ++s) {
    const auto x = random_vector(rng, 3);
    const auto y = p.realize(x);
    CHECK(y.head(2) == a.realize(x));
    CHECK(y.tail(3) == x);
  }
  CHECK_THROWS_AS(parallel_shared({a, identity_net(3, a.depth() + 1)}), InvalidArgument);
}

TEST_CASE("product net: zero factors are exact") {
  Rng rng(5);
  for (double z : {1.0, 3.0, 10.0}) {
    const auto p = product_net(1e-6, z);
    for (int t = 0; t < 100; ++t) {
      const double x = rng.uniform(-z, z);
      CHECK(p.realize(Eigen::Vector2d(x, 0.0))[0] == 0.0);
      CHECK(p.realize(Eigen::Vector2d(0.0, x))[0] == 0.0);
    }
  }
  const auto p = product_net(1e-6, 1.0);
  CHECK(std::abs(p.realize(Eigen::Vector2d(0.5, 0.25))[0] - 0.125) <= 1e-6);
  CHECK_THROWS_AS(product_net(0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(product_net(1e-3, 0.5), InvalidArgument);
}

TEST_CASE("product net: grid error below tolerance, depth affine in log(1/eps)") {
  std::vector<double> logs, depths;
  for (int e = 2; e <= 8; ++e) {
    const double eps = std::pow(10.0, -e);
    for (double z : {1.0, 2.5}) {
      const auto p = product_net(eps, z);
      double worst = 0.0;
      for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 200; ++j) {
          const double x = -z + 2 * z * i / 199.0, y = -z + 2 * z * j / 199.0;
          worst = std::max(worst, std::abs(p.realize(Eigen::Vector2d(x, y))[0] - x * y));
        }
      CHECK(worst <= eps);
      if (z == 1.0) {
        logs.push_back(std::log(1.0 / eps));
        depths.push_back(p.depth());
      }
    }
  }
  CHECK(r_squared(logs, depths) >= 0.98);
}

TEST_CASE("matrix-vector net") {
  Rng rng(6);
  const int n = 4;
  const auto net = matvec_net(n, 1e-4, 2.0);
  CHECK(net.input_dim() == n * n + n);
  CHECK(net.output_dim() == n);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd x = random_vector(rng, n);
    x *= rng.uniform(0, 2) / x.norm();
    Eigen::VectorXd in(n * n + n);

    in << Eigen::VectorXd::Zero(n * n), x;
    CHECK(net.realize(in).cwiseAbs().maxCoeff() == 0.0);

    in << vec(Eigen::MatrixXd::Identity(n, n)), x;
    CHECK((net.realize(in) - x).norm() <= 1e-4);

    Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n);
    a *= 0.5 / a.jacobiSvd().singularValues()[0];
    in << vec(a), x;
    CHECK((net.realize(in) - a * x).norm() <= 1e-4);
  }
}

TEST_CASE("input net reproduces reduced assembly") {
  auto& s = setup();
  const auto& as = s.assembler;
  const auto net = build_phi_input(as, s.encoder);
  const int n = static_cast<int>(as.size()), m = static_cast<int>(s.encoder.size());
  REQUIRE(n == 11);
  REQUIRE(m <= 100);
  CHECK(net.depth() == 1);
  CHECK(net.size() <= static_cast<std::size_t>(n * n * m + n * n));

  CHECK(net.realize(Eigen::VectorXd::Zero(m)) == vec(Eigen::MatrixXd::Identity(n, n)));
  const auto y0 = s.encoder.encode(CoefficientField::constant(as.alpha()));
  CHECK(net.realize(y0).cwiseAbs().maxCoeff() <= 1e-10);

  Rng rng(7);
  std::vector<Eigen::VectorXd> ys;
  for (int t = 0; t < 10; ++t) {
    const auto v = random_member(rng, 1.0, 0.5);
    ys.push_back(s.encoder.encode(v));
    const Eigen::MatrixXd a_v = as.system(s.samples(v)).a_v;
    CHECK((net.realize(ys.back()) - vec(a_v)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const auto bias = vec(Eigen::MatrixXd::Identity(n, n));
  for (int t = 0; t + 1 < 10; ++t) {
    const Eigen::VectorXd lhs = net.realize(ys[t] + ys[t + 1]);
    const Eigen::VectorXd rhs = net.realize(ys[t]) + net.realize(ys[t + 1]) - bias;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }

  const auto d = channel_tensors(as, s.encoder);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (const auto& dk : d) sum += dk;
  // The channel functions sum to one.
  CHECK((sum - as.assemble(CoefficientField::constant(1.0))).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("step net meets its tolerance") {
  auto& s = setup();
  const auto& as = s.assembler;
  const int n = static_cast<int>(as.size());
  const double alpha = 1.0, beta = 0.5, z = 2.0 + alpha / (alpha - beta), eps = 1e-3;
  const auto step = build_phi_step(n, z, eps, as.g());
  const auto carry = build_phi_step(n, z, eps, as.g(), true);
  CHECK(carry.output_dim() == n * n + n);
  Rng rng(8);
  auto input = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& x) {
    Eigen::VectorXd in(n * n + n);
    in << vec(a), x;
    return in;
  };

  const auto nominal = as.system(CoefficientField::constant(alpha));
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x = random_vector(rng, n);
    x *= rng.uniform(0, z) / x.norm();
    CHECK((step.realize(input(nominal.a_v, x)) - as.g()).norm() <= eps);
  }
  for (int t = 0; t < 20; ++t) {
    const auto sys = as.system(random_member(rng, alpha, beta));
    const Eigen::VectorXd c_star = direct_solve(sys);
    REQUIRE(c_star.norm() <= z);
    CHECK((step.realize(input(sys.a_v, c_star)) - c_star).norm() <= eps);

    Eigen::VectorXd x = random_vector(rng, n);
    x *= rng.uniform(0, z) / x.norm();
    const auto in = input(sys.a_v, x);
    CHECK((step.realize(in) - (sys.a_v * x + sys.g)).norm() <= eps);
    const auto out = carry.realize(in);
    CHECK(out.head(n * n) == in.head(n * n));
    CHECK(out.tail(n) == step.realize(in));
  }
}

TEST_CASE("iteration net tracks the Richardson iterates") {
  auto& s = setup();
  const auto& as = s.assembler;
  const int n = static_cast<int>(as.size());
  const double alpha = 1.0, beta = 0.5;
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(n);
  e1[0] = 1.0;

  const auto zero = build_phi_it(n, 0, 1e-3, alpha, beta, as.g());
  CHECK(zero.net.realize(Eigen::VectorXd::Random(n * n)) == e1);

  const auto nominal = as.system(CoefficientField::constant(alpha));
  const auto three = build_phi_it(n, 3, 1e-3, alpha, beta, as.g());
  CHECK((three.net.realize(vec(nominal.a_v)) - e1).norm() <= 1e-3);

  const double eps = 1e-3;
  const int k = choose_K(alpha, beta, s.problem.dual_norm(), eps);
  const auto it = build_phi_it(n, k, eps, alpha, beta, as.g());
  CHECK(it.k == k);
  CHECK(it.z_tilde == 4.0);
  CHECK(it.eps_it == 0.5 * eps);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto sys = as.system(random_member(rng, alpha, beta));
    const auto va = vec(sys.a_v);
    const Eigen::VectorXd out = it.net.realize(va);
    CHECK((out - iterate(sys, k).c).norm() <= eps);
    CHECK((it.realize_recurrent(va) - out).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(it.realize_recurrent(va) == out);
  }
  CHECK_THROWS_AS(build_phi_it(n, 2, 1e-3, 1.0, 1.0, as.g()), InvalidArgument);
}

TEST_CASE("approximation net certificate") {
  auto& s = setup();
  const auto& as = s.assembler;
  const double eps = 1e-2, beta = 0.5;
  const auto app = build_phi_app(as, s.encoder, beta, s.problem.dual_norm(), eps);
  CHECK(app.net.input_dim() == static_cast<int>(s.encoder.size()));
  CHECK(app.net.output_dim() == static_cast<int>(as.size()));
  CHECK(app.report.k == choose_K(as.alpha(), beta, s.problem.dual_norm(), eps));
  CHECK(app.report.epsilon == eps);

  const auto rc = recount(app.net);
  CHECK(rc.depth == app.report.depth);
  CHECK(rc.size == app.report.size);
  std::size_t parts = 0;
  for (const auto& p : app.report.attribution) parts += p.nonzeros;
  CHECK(parts == app.report.size);
  CHECK(app.report.attribution.front().tag == "input");

  const auto c_nom = app.net.realize(s.encoder.encode(CoefficientField::constant(as.alpha())));
  const FemVector psi = s.basis.synthesize(c_nom, Frame::scaled);
  CHECK(s.problem.energy_norm(psi - s.basis.psi().front()) <= eps);

  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    const auto v = random_member(rng, 1.0, 0.5);
    const auto y = s.encoder.encode(v);
    const auto sys = as.system(s.samples(v));
    const Eigen::VectorXd c = app.net.realize(y);
    CHECK(reduced_energy_error(sys, c, direct_solve(sys)) <= eps);
    CHECK(c == app.it.net.realize(app.input.realize(y)));
  }
  ReducedAssembler raw(s.problem, s.basis, Frame::snapshots);
  CHECK_THROWS_AS(build_phi_app(raw, s.encoder, beta, s.problem.dual_norm(), eps), InvalidArgument);
}

TEST_CASE("approximation net cost grows with accuracy") {
  auto& s = setup();
  std::vector<double> x, depth;
  std::size_t prev_size = 0;
  int prev_depth = 0;
  for (int e = 1; e <= 5; ++e) {
    const double eps = std::pow(10.0, -e);
    const auto app = build_phi_app(s.assembler, s.encoder, 0.5, s.problem.dual_norm(), eps);
    CHECK(app.report.size >= prev_size);
    CHECK(app.report.depth >= prev_depth);
    prev_size = app.report.size;
    prev_depth = app.report.depth;
    const double l = std::log(1.0 / eps);
    x.push_back(l * l + l);
    depth.push_back(app.report.depth);
  }
  CHECK(r_squared(x, depth) >= 0.95);
}

TEST_CASE("network json round trip") {
  auto& s = setup();
  const auto app = build_phi_app(s.assembler, s.encoder, 0.5, s.problem.dual_norm(), 1e-1);
  std::stringstream ss;
  write_net_json(ss, app.net, &app.report);
  NetBuildReport r;
  const auto back = read_net_json(ss, &r);
  REQUIRE(back.depth() == app.net.depth());
  for (int l = 0; l < back.depth(); ++l) {
    const auto &a = back.layers()[l], &b = app.net.layers()[l];
    CHECK(a.row_ptr == b.row_ptr);
    CHECK(a.col == b.col);
    CHECK(a.val == b.val);
    CHECK(a.bias == b.bias);
    CHECK(a.tag == b.tag);
  }
  CHECK(r.size == app.report.size);
  CHECK(r.eps_it == app.report.eps_it);
  CHECK(r.z_bound == app.report.z_bound);
  CHECK(r.attribution.size() == app.report.attribution.size());

  std::stringstream bad("{\"format\": \"something\"}");
  CHECK_THROWS_AS(read_net_json(bad), ConfigError);
  std::stringstream broken("{\"format\": ");
  CHECK_THROWS_AS(read_net_json(broken), ConfigError);
}
