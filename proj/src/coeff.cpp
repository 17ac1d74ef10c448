#include "richop/coeff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "richop/error.hpp"
#include "richop/rng.hpp"

namespace richop {

namespace {

constexpr double kPi = std::numbers::pi;

class ConstantField final : public CoefficientField::Impl {
 public:
  explicit ConstantField(double c) : c_(c) {}
  double eval(Point) const override { return c_; }
  std::string kind() const override { return "constant"; }

 private:
  double c_;
};

class FunctionField final : public CoefficientField::Impl {
 public:
  FunctionField(std::function<double(Point)> f, std::string description)
      : f_(std::move(f)), description_(std::move(description)) {}
  double eval(Point p) const override { return f_(p); }
  std::string kind() const override { return "analytic"; }

 private:
  std::function<double(Point)> f_;
  std::string description_;
};

class AffineField final : public CoefficientField::Impl {
 public:
  AffineField(double offset, std::vector<CoefficientField> basis, std::vector<double> y)
      : offset_(offset), basis_(std::move(basis)), y_(std::move(y)) {}
  double eval(Point p) const override {
    double s = offset_;
    for (std::size_t k = 0; k < basis_.size(); ++k) s += y_[k] * basis_[k](p);
    return s;
  }
  std::string kind() const override { return "affine"; }

 private:
  double offset_;
  std::vector<CoefficientField> basis_;
  std::vector<double> y_;
};

class AbsShiftField final : public CoefficientField::Impl {
 public:
  AbsShiftField(CoefficientField a, double a_min) : a_(std::move(a)), a_min_(a_min) {}
  double eval(Point p) const override { return a_min_ + std::abs(a_(p)); }
  std::string kind() const override { return "abs_shift"; }

 private:
  CoefficientField a_;
  double a_min_;
};

double mode_factor(int k, bool use_sin, double t) {
  return use_sin ? std::sin(k * kPi * t) : std::cos(k * kPi * t);
}

}  // namespace

double TrigMode::operator()(Point p) const {
  return mode_factor(kx, sin_x, p.x) * mode_factor(ky, sin_y, p.y);
}

double TrigMode::derivative_bound(int order) const {
  if (order == 0) return 1.0;
  return std::pow(kPi * std::max(kx, ky), order);
}

CoefficientField::CoefficientField() : impl_(std::make_shared<ConstantField>(1.0)) {}

CoefficientField CoefficientField::constant(double c) {
  return CoefficientField(std::make_shared<ConstantField>(c));
}

CoefficientField CoefficientField::analytic(std::function<double(Point)> f,
                                            std::string description) {
  if (!f) throw InvalidArgument("empty field function");
  return CoefficientField(std::make_shared<FunctionField>(std::move(f), std::move(description)));
}

CoefficientField CoefficientField::trig_series(double offset, std::vector<TrigMode> modes,
                                               std::vector<double> coefficients) {
  return CoefficientField(
      std::make_shared<TrigSeriesField>(offset, std::move(modes), std::move(coefficients)));
}

CoefficientField CoefficientField::piecewise(std::shared_ptr<const LagrangeSpace> space,
                                             std::vector<double> dof_values) {
  return CoefficientField(std::make_shared<PiecewiseField>(std::move(space), std::move(dof_values)));
}

CoefficientField CoefficientField::affine(double offset, std::vector<CoefficientField> basis,
                                          std::vector<double> y) {
  if (basis.size() != y.size()) throw InvalidArgument("affine field: size mismatch");
  return CoefficientField(std::make_shared<AffineField>(offset, std::move(basis), std::move(y)));
}

TrigSeriesField::TrigSeriesField(double offset, std::vector<TrigMode> modes,
                                 std::vector<double> coefficients)
    : offset_(offset), modes_(std::move(modes)), coefficients_(std::move(coefficients)) {
  if (modes_.size() != coefficients_.size())
    throw InvalidArgument("trig series: modes/coefficients size mismatch");
}

double TrigSeriesField::eval(Point p) const {
  double s = offset_;
  for (std::size_t k = 0; k < modes_.size(); ++k) s += coefficients_[k] * modes_[k](p);
  return s;
}

double TrigSeriesField::seminorm_bound(int order) const {
  double s = order == 0 ? std::abs(offset_) : 0.0;
  for (std::size_t k = 0; k < modes_.size(); ++k)
    s += std::abs(coefficients_[k]) * modes_[k].derivative_bound(order);
  return s;
}

PiecewiseField::PiecewiseField(std::shared_ptr<const LagrangeSpace> space, std::vector<double> dofs)
    : space_(std::move(space)), dofs_(std::move(dofs)) {
  if (!space_) throw InvalidArgument("piecewise field: null space");
  if (dofs_.size() != space_->num_dofs())
    throw InvalidArgument("piecewise field: dof count mismatch");
}

double PiecewiseField::hessian_bound() const {
  if (space_->degree() == 1) return 0.0;
  const auto& mesh = space_->mesh();
  const auto& layout = space_->layout();
  double worst = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto g = barycentric_gradients(mesh.vertices(t));
    const auto& d = layout.element_dofs[t];
    double hxx = 0.0, hxy = 0.0, hyy = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double c = 4.0 * dofs_[d[k]];
      hxx += c * g[k].x * g[k].x;
      hxy += c * g[k].x * g[k].y;
      hyy += c * g[k].y * g[k].y;
    }
    for (int k = 0; k < 3; ++k) {
      const Point ga = g[k], gb = g[(k + 1) % 3];
      const double c = 4.0 * dofs_[d[3 + k]];
      hxx += c * 2.0 * ga.x * gb.x;
      hxy += c * (ga.x * gb.y + ga.y * gb.x);
      hyy += c * 2.0 * ga.y * gb.y;
    }
    worst = std::max({worst, std::abs(hxx), std::abs(hxy), std::abs(hyy)});
  }
  return worst;
}

CoefficientField abs_shift(const CoefficientField& a, double a_min) {
  if (!(a_min > 0.0)) throw InvalidArgument("abs_shift: a_min must be positive");
  return CoefficientField(std::make_shared<AbsShiftField>(a, a_min));
}

CoefficientField operator*(double s, const CoefficientField& a) {
  return CoefficientField::affine(0.0, {a}, {s});
}

CoefficientField operator+(const CoefficientField& a, const CoefficientField& b) {
  return CoefficientField::affine(0.0, {a, b}, {1.0, 1.0});
}

std::vector<Point> sample_grid(const Polygon& domain, int grid_n) {
  if (grid_n < 2) throw InvalidArgument("grid_n must be at least 2");
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  for (const auto& v : domain.vertices()) {
    x0 = std::min(x0, v.x);
    x1 = std::max(x1, v.x);
    y0 = std::min(y0, v.y);
    y1 = std::max(y1, v.y);
  }
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(grid_n) * grid_n);
  for (int j = 0; j < grid_n; ++j)
    for (int i = 0; i < grid_n; ++i) {
      const Point p{x0 + (x1 - x0) * i / (grid_n - 1), y0 + (y1 - y0) * j / (grid_n - 1)};
      if (domain.contains(p)) pts.push_back(p);
    }
  return pts;
}

namespace {

// Local rescans around a witness; sign = +1 polishes a maximum, -1 a minimum.
void polish(const CoefficientField& a, const Polygon& domain, double step, double sign,
            Point& where, double& value) {
  const double stop = step * 1e-10;
  while (step > stop) {
    const Point c = where;
    for (int j = -5; j <= 5; ++j)
      for (int i = -5; i <= 5; ++i) {
        const Point p{c.x + step * i / 5.0, c.y + step * j / 5.0};
        if (!domain.contains(p)) continue;
        const double v = a(p);
        if (sign * v > sign * value) {
          value = v;
          where = p;
        }
      }
    step /= 2.5;
  }
}

}  // namespace

FieldRange field_range(const CoefficientField& a, const Polygon& domain, int grid_n,
                       bool refine) {
  const auto pts = sample_grid(domain, grid_n);
  if (pts.empty()) throw InvalidArgument("empty sampling grid");
  FieldRange r;
  r.min = std::numeric_limits<double>::infinity();
  r.max = -r.min;
  for (const auto& p : pts) {
    const double v = a(p);
    if (!std::isfinite(v)) throw NumericalError("field evaluates to a non-finite value");
    if (v < r.min) {
      r.min = v;
      r.argmin = p;
    }
    if (v > r.max) {
      r.max = v;
      r.argmax = p;
    }
  }
  if (refine) {
    double w = 0.0;
    for (const auto& v : domain.vertices())
      for (const auto& u : domain.vertices()) w = std::max(w, distance(u, v));
    const double step = w / (grid_n - 1);
    polish(a, domain, step, -1.0, r.argmin, r.min);
    polish(a, domain, step, 1.0, r.argmax, r.max);
  }
  return r;
}

Membership membership(const CoefficientField& a, double alpha, double beta,
                      const Polygon& domain, int grid_n, bool refine) {
  Membership m;
  m.range = field_range(a, domain, grid_n, refine);
  m.ok = m.range.min >= alpha - beta - 1e-12 && m.range.max <= alpha + beta + 1e-12;
  return m;
}

std::vector<TrigMode> ordered_modes(std::size_t count) {
  std::vector<TrigMode> modes;
  for (int total = 1; modes.size() < count; ++total)
    for (int kx = 0; kx <= total && modes.size() < count; ++kx)
      modes.push_back({kx, total - kx, false, false});
  return modes;
}

namespace {

void check_bounds(double alpha, double beta, double margin) {
  if (!(alpha > 0.0) || !(beta >= 0.0) || !(beta < alpha))
    throw InvalidArgument("family bounds need 0 <= beta < alpha");
  if (!(margin > 0.0) || margin > 1.0) throw InvalidArgument("margin must lie in (0, 1]");
}

void normalize(std::vector<double>& w) {
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
}

}  // namespace

DataFamily DataFamily::parametric(double alpha, double beta, std::vector<TrigMode> modes,
                                  double margin) {
  check_bounds(alpha, beta, margin);
  if (modes.empty()) throw InvalidArgument("parametric family needs at least one mode");
  DataFamily f;
  f.kind = Kind::parametric;
  f.alpha = alpha;
  f.beta = beta;
  f.margin = margin;
  f.amplitude = margin * beta;
  f.weights.assign(modes.size(), 1.0);
  normalize(f.weights);
  f.modes = std::move(modes);
  return f;
}

DataFamily DataFamily::analytic(double alpha, double beta, int d, double rho, double margin) {
  check_bounds(alpha, beta, margin);
  if (d < 1 || !(rho > 0.0) || rho >= 1.0) throw InvalidArgument("analytic family: need d >= 1, 0 < rho < 1");
  DataFamily f;
  f.kind = Kind::analytic;
  f.alpha = alpha;
  f.beta = beta;
  f.margin = margin;
  f.amplitude = margin * beta;
  f.rho = rho;
  f.modes = ordered_modes(static_cast<std::size_t>(d));
  for (const auto& m : f.modes) f.weights.push_back(std::pow(rho, m.kx + m.ky));
  normalize(f.weights);
  double factorial = 1.0;
  for (int m = 0; m <= 4; ++m) {
    if (m > 0) factorial *= m;
    double norm = alpha + f.amplitude;
    for (int j = 1; j <= m; ++j) norm = std::max(norm, f.seminorm_bound(j));
    f.A = std::max(f.A, std::pow(norm / factorial, 1.0 / (m + 1)));
  }
  return f;
}

DataFamily DataFamily::sobolev_ball(double alpha, double beta, int m, double R, int d,
                                    double margin) {
  check_bounds(alpha, beta, margin);
  if (m < 1 || !(R > 0.0) || d < 1) throw InvalidArgument("sobolev family: need m >= 1, R > 0, d >= 1");
  DataFamily f;
  f.kind = Kind::sobolev_ball;
  f.alpha = alpha;
  f.beta = beta;
  f.margin = margin;
  f.m = m;
  f.R = R;
  f.modes = ordered_modes(static_cast<std::size_t>(d));
  for (const auto& md : f.modes) f.weights.push_back(std::pow(1.0 + md.kx + md.ky, -(m + 2.5)));
  normalize(f.weights);
  f.amplitude = 1.0;
  double worst = 0.0;
  for (int j = 1; j <= m; ++j) worst = std::max(worst, f.seminorm_bound(j));
  f.amplitude = std::min(margin * beta, R / worst);
  return f;
}

DataFamily DataFamily::sobolev_ball_p2(double alpha, double beta, double R,
                                       std::shared_ptr<const LagrangeSpace> space, double margin) {
  check_bounds(alpha, beta, margin);
  if (!space || space->degree() != 2) throw InvalidArgument("sobolev P2 family needs a P2 space");
  if (!(R > 0.0)) throw InvalidArgument("sobolev family: R must be positive");
  DataFamily f;
  f.kind = Kind::sobolev_ball;
  f.alpha = alpha;
  f.beta = beta;
  f.margin = margin;
  f.amplitude = margin * beta;
  f.m = 2;
  f.R = R;
  f.p2_space = std::move(space);
  return f;
}

std::size_t DataFamily::dimension() const {
  return p2_space ? p2_space->num_dofs() : modes.size();
}

CoefficientField DataFamily::member(std::span<const double> y) const {
  if (y.size() != dimension()) throw InvalidArgument("family member: parameter size mismatch");
  for (double v : y)
    if (!(std::abs(v) <= 1.0)) throw InvalidArgument("family member: parameter outside [-1,1]");
  if (p2_space) {
    // The P2 Lebesgue constant on a triangle is 5/3.
    std::vector<double> unit(y.begin(), y.end());
    const PiecewiseField probe(p2_space, unit);
    const double hess = probe.hessian_bound();
    double scale = amplitude * 0.6;
    if (hess > 0.0) scale = std::min(scale, R / hess);
    std::vector<double> dofs(unit.size());
    for (std::size_t k = 0; k < unit.size(); ++k) dofs[k] = alpha + scale * unit[k];
    return CoefficientField::piecewise(p2_space, std::move(dofs));
  }
  std::vector<double> c(modes.size());
  for (std::size_t k = 0; k < modes.size(); ++k) c[k] = amplitude * weights[k] * y[k];
  return CoefficientField::trig_series(alpha, modes, std::move(c));
}

std::vector<std::vector<double>> DataFamily::sample_parameters(std::size_t count,
                                                               std::uint64_t seed) const {
  std::vector<std::vector<double>> out(count, std::vector<double>(dimension()));
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::substream(seed, i));
    for (double& v : out[i]) v = rng.uniform(-1.0, 1.0);
  }
  return out;
}

double DataFamily::seminorm_bound(int order) const {
  if (p2_space) throw InvalidArgument("seminorm bound is only available for trig realizations");
  double s = 0.0;
  for (std::size_t k = 0; k < modes.size(); ++k)
    s += amplitude * weights[k] * modes[k].derivative_bound(order);
  return s;
}

std::string to_string(DataFamily::Kind kind) {
  switch (kind) {
    case DataFamily::Kind::parametric: return "parametric";
    case DataFamily::Kind::analytic: return "analytic";
    case DataFamily::Kind::sobolev_ball: return "sobolev_ball";
  }
  return "unknown";
}

std::vector<CoefficientField> sample_family(const DataFamily& family, std::size_t count,
                                            std::uint64_t seed, const Polygon& domain,
                                            int grid_n) {
  if (count < 1) throw InvalidArgument("sample_family: count must be positive");
  std::vector<CoefficientField> out;
  out.reserve(count);
  for (const auto& y : family.sample_parameters(count, seed)) {
    auto a = family.member(y);
    if (!membership(a, family.alpha, family.beta, domain, grid_n).ok)
      throw InvalidArgument("sampled member violates the family bounds");
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace richop
