#include "richop/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "richop/error.hpp"

namespace richop {

std::vector<double> gll_nodes(int p) {
  if (p < 1) throw InvalidArgument("GLL degree must be at least 1");
  std::vector<double> x(p + 1);
  x[0] = -1.0;
  x[p] = 1.0;
  // Interior nodes: roots of P_p', by Newton from Chebyshev-Lobatto guesses.
  for (int j = 1; j < p; ++j) {
    double t = -std::cos(std::numbers::pi * j / p);
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= p; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // P_p' and P_p'' from the Legendre recurrences.
      const double dp = p * (p0 - t * p1) / (1 - t * t);
      const double ddp = (2 * t * dp - p * (p + 1) * p1) / (1 - t * t);
      const double step = dp / ddp;
      t -= step;
      if (std::abs(step) < 1e-14) break;
    }
    x[j] = t;
  }
  // Exact symmetry.
  for (int j = 0; j <= p / 2; ++j) {
    const double s = 0.5 * (x[p - j] - x[j]);
    x[j] = -s;
    x[p - j] = s;
  }
  if (p % 2 == 0) x[p / 2] = 0.0;
  return x;
}

struct Encoder::Impl {
  virtual ~Impl() = default;
  Kind kind;
  int order;
  std::shared_ptr<const Mesh> mesh;
  std::vector<Point> points;
  virtual void basis_at(Point p, std::vector<std::int32_t>& ch, std::vector<double>& val) const = 0;
};

namespace {

struct NodalImpl final : Encoder::Impl {
  std::shared_ptr<const LagrangeSpace> space;
  void basis_at(Point p, std::vector<std::int32_t>& ch, std::vector<double>& val) const override {
    std::array<std::int32_t, 6> d;
    std::array<double, 6> v;
    const int n = space->basis_at(p, d, v);
    ch.assign(d.begin(), d.begin() + n);
    val.assign(v.begin(), v.begin() + n);
  }
};

struct GllImpl final : Encoder::Impl {
  QuadSplit split;
  std::vector<double> nodes;
  // Channel of local node (a, b) on quad q: channels[q * (p+1)^2 + b * (p+1) + a].
  std::vector<std::int32_t> channels;
  std::unique_ptr<MeshLocator> locator;

  void lagrange_1d(double t, std::vector<double>& out) const {
    const int n = static_cast<int>(nodes.size());
    out.assign(n, 1.0);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (b != a) out[a] *= (t - nodes[b]) / (nodes[a] - nodes[b]);
  }

  void basis_at(Point p, std::vector<std::int32_t>& ch, std::vector<double>& val) const override {
    const auto hit = locator->locate(p);
    if (!hit) throw NumericalError("point outside the encoder mesh");
    const auto& l = hit->bary;
    const int i = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
    const std::size_t q = 3 * static_cast<std::size_t>(hit->triangle) + i;
    const auto ref = split.quads[q].inverse(p);
    if (!ref) throw NumericalError("bilinear inverse did not converge");
    const double xi = std::clamp((*ref)[0], -1.0, 1.0), eta = std::clamp((*ref)[1], -1.0, 1.0);
    std::vector<double> lx, ly;
    lagrange_1d(xi, lx);
    lagrange_1d(eta, ly);
    const int n = static_cast<int>(nodes.size());
    ch.resize(n * n);
    val.resize(n * n);
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        ch[b * n + a] = channels[q * n * n + b * n + a];
        val[b * n + a] = lx[a] * ly[b];
      }
  }
};

class ReconstructionField final : public CoefficientField::Impl {
 public:
  ReconstructionField(Encoder e, Eigen::VectorXd y) : e_(std::move(e)), y_(std::move(y)) {}
  double eval(Point p) const override { return e_.reconstruct_at(y_, p); }
  std::string kind() const override { return "reconstruction"; }

 private:
  Encoder e_;
  Eigen::VectorXd y_;
};

}  // namespace

Encoder::Kind Encoder::kind() const { return impl_->kind; }
int Encoder::order() const { return impl_->order; }
std::size_t Encoder::size() const { return impl_->points.size(); }
const std::vector<Point>& Encoder::query_points() const { return impl_->points; }
const Mesh& Encoder::mesh() const { return *impl_->mesh; }

Eigen::VectorXd Encoder::encode(const CoefficientField& a) const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(size()));
  for (std::size_t k = 0; k < size(); ++k) y[k] = a(impl_->points[k]);
  return y;
}

void Encoder::basis_at(Point p, std::vector<std::int32_t>& channels,
                       std::vector<double>& values) const {
  impl_->basis_at(p, channels, values);
}

double Encoder::reconstruct_at(const Eigen::VectorXd& y, Point p) const {
  if (static_cast<std::size_t>(y.size()) != size()) throw InvalidArgument("reconstruct: size mismatch");
  std::vector<std::int32_t> ch;
  std::vector<double> v;
  impl_->basis_at(p, ch, v);
  double s = 0.0;
  for (std::size_t k = 0; k < ch.size(); ++k) s += v[k] * y[ch[k]];
  return s;
}

CoefficientField Encoder::reconstruct(const Eigen::VectorXd& y) const {
  if (static_cast<std::size_t>(y.size()) != size()) throw InvalidArgument("reconstruct: size mismatch");
  return CoefficientField(std::make_shared<ReconstructionField>(*this, y));
}

CoefficientField Encoder::basis_field(std::size_t j) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
  e[static_cast<Eigen::Index>(j)] = 1.0;
  return reconstruct(e);
}

Encoder build_nodal_encoder(std::shared_ptr<const LagrangeSpace> space) {
  if (!space) throw InvalidArgument("null space");
  auto impl = std::make_shared<NodalImpl>();
  impl->kind = Encoder::Kind::nodal;
  impl->order = space->degree();
  impl->mesh = space->mesh_ptr();
  impl->points = space->layout().dof_coords;
  impl->space = std::move(space);
  return Encoder(std::move(impl));
}

Encoder build_nodal_encoder(const FemSpace& space) { return build_nodal_encoder(space.lagrange()); }

Encoder build_gll_encoder(std::shared_ptr<const Mesh> mesh, int p) {
  if (!mesh) throw InvalidArgument("null mesh");
  auto impl = std::make_shared<GllImpl>();
  impl->kind = Encoder::Kind::gll;
  impl->order = p;
  impl->nodes = gll_nodes(p);
  impl->mesh = mesh;
  impl->split = quad_split(*mesh);
  impl->locator = std::make_unique<MeshLocator>(*mesh);
  const int n = p + 1;
  double extent = 0.0;
  for (const auto& x : mesh->nodes) extent = std::max({extent, std::abs(x.x), std::abs(x.y)});
  const double scale = 1e10 / std::max(extent, 1.0);
  std::map<std::pair<long long, long long>, std::int32_t> seen;
  impl->channels.reserve(impl->split.quads.size() * n * n);
  for (const auto& quad : impl->split.quads) {
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        const double xi = impl->nodes[a], eta = impl->nodes[b];
        if (!(quad.jacobian_det(xi, eta) > 0.0))
          throw NumericalError("bilinear quad map is not bijective");
        const Point x = quad.map(xi, eta);
        const std::pair<long long, long long> key{std::llround(x.x * scale), std::llround(x.y * scale)};
        const auto [it, inserted] = seen.emplace(key, static_cast<std::int32_t>(impl->points.size()));
        if (inserted) impl->points.push_back(x);
        impl->channels.push_back(it->second);
      }
  }
  return Encoder(std::move(impl));
}

double encoder_error(const Encoder& e, const CoefficientField& a, const Polygon& domain,
                     int grid_n) {
  const Eigen::VectorXd y = e.encode(a);
  double err = 0.0;
  for (const auto& p : sample_grid(domain, grid_n))
    err = std::max(err, std::abs(a(p) - e.reconstruct_at(y, p)));
  return err;
}

Envelope reconstruction_envelope(const Encoder& e, const Eigen::VectorXd& y, double alpha,
                                 const Polygon& domain, int grid_n) {
  Envelope env;
  env.alpha = alpha;
  env.range = field_range(e.reconstruct(y), domain, grid_n);
  env.beta_tilde = std::max(env.range.max - alpha, alpha - env.range.min);
  return env;
}

}  // namespace richop
