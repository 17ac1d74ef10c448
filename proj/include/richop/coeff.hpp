#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "richop/lagrange.hpp"
#include "richop/mesh.hpp"

namespace richop {

// Product mode c(kx*pi*x) * c(ky*pi*y), c in {cos, sin}; sup norm <= 1.
struct TrigMode {
  int kx = 0;
  int ky = 0;
  bool sin_x = false;
  bool sin_y = false;

  double operator()(Point p) const;
  // Upper bound for max_{|mu| = order} sup |d^mu mode|.
  double derivative_bound(int order) const;
};

// Immutable scalar field on the plane; cheap to copy (shared representation).
class CoefficientField {
 public:
  class Impl {
   public:
    virtual ~Impl() = default;
    virtual double eval(Point p) const = 0;
    virtual std::string kind() const = 0;
  };

  CoefficientField();  // the constant 1
  explicit CoefficientField(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  static CoefficientField constant(double c);
  static CoefficientField analytic(std::function<double(Point)> f, std::string description = {});
  // offset + sum_k coefficients[k] * modes[k]
  static CoefficientField trig_series(double offset, std::vector<TrigMode> modes,
                                      std::vector<double> coefficients);
  static CoefficientField piecewise(std::shared_ptr<const LagrangeSpace> space,
                                    std::vector<double> dof_values);
  // offset + sum_k y[k] * basis[k]
  static CoefficientField affine(double offset, std::vector<CoefficientField> basis,
                                 std::vector<double> y);

  double operator()(Point p) const { return impl_->eval(p); }
  std::string kind() const { return impl_->kind(); }
  const Impl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

class TrigSeriesField final : public CoefficientField::Impl {
 public:
  TrigSeriesField(double offset, std::vector<TrigMode> modes, std::vector<double> coefficients);
  double eval(Point p) const override;
  std::string kind() const override { return "trig_series"; }

  double offset() const { return offset_; }
  const std::vector<TrigMode>& modes() const { return modes_; }
  const std::vector<double>& coefficients() const { return coefficients_; }
  // Bound for the W^{m,inf} seminorm of order m (max over multi-indices).
  double seminorm_bound(int order) const;

 private:
  double offset_;
  std::vector<TrigMode> modes_;
  std::vector<double> coefficients_;
};

class PiecewiseField final : public CoefficientField::Impl {
 public:
  PiecewiseField(std::shared_ptr<const LagrangeSpace> space, std::vector<double> dofs);
  double eval(Point p) const override { return space_->evaluate(dofs_, p); }
  std::string kind() const override { return "piecewise"; }

  const LagrangeSpace& space() const { return *space_; }
  const std::vector<double>& dof_values() const { return dofs_; }
  // Max over triangles of the largest |second partial derivative| (P2), 0 for P1.
  double hessian_bound() const;

 private:
  std::shared_ptr<const LagrangeSpace> space_;
  std::vector<double> dofs_;
};

// x -> a_min + |a(x)|
CoefficientField abs_shift(const CoefficientField& a, double a_min);
CoefficientField operator*(double s, const CoefficientField& a);
CoefficientField operator+(const CoefficientField& a, const CoefficientField& b);

// Sample points of a grid_n x grid_n lattice over the bounding box of the
// domain that lie in the (closed) domain, row-major in y then x.
std::vector<Point> sample_grid(const Polygon& domain, int grid_n);

struct FieldRange {
  double min = 0.0;
  double max = 0.0;
  Point argmin;
  Point argmax;
};
// Min/max over sample_grid(domain, grid_n). With refine, each witness is
// polished by local 11x11 rescans around it with shrinking spacing.
FieldRange field_range(const CoefficientField& a, const Polygon& domain, int grid_n,
                       bool refine = false);

struct Membership {
  bool ok = false;
  FieldRange range;
};
// a in D_{alpha,beta}: alpha - beta <= a <= alpha + beta on the samples (1e-12 slack).
Membership membership(const CoefficientField& a, double alpha, double beta,
                      const Polygon& domain, int grid_n, bool refine = false);

// Parametric coefficient families
//   a(y) = alpha + amplitude * sum_k y_k w_k xi_k,  y in [-1,1]^d, sum_k w_k = 1,
// with trig modes xi_k (sup <= 1) and amplitude <= margin * beta, so that every
// member lies in D_{alpha, margin*beta}.
struct DataFamily {
  enum class Kind { parametric, analytic, sobolev_ball };

  Kind kind = Kind::parametric;
  double alpha = 1.0;
  double beta = 0.5;
  double margin = 0.9;
  double amplitude = 0.45;
  std::vector<TrigMode> modes;
  std::vector<double> weights;  // normalized: sum = 1
  // analytic: decay rate rho of the weights and the metadata constant A with
  // ||a - alpha||_{W^{m,inf}} <= A^{m+1} m! checked for m <= 4.
  double rho = 0.0;
  double A = 0.0;
  // sobolev_ball: smoothness order m and radius R of the W^{m,inf} ball.
  int m = 0;
  double R = 0.0;
  // sobolev_ball realized as random P2 fields on this space instead of trig series.
  std::shared_ptr<const LagrangeSpace> p2_space;

  static DataFamily parametric(double alpha, double beta, std::vector<TrigMode> modes,
                               double margin = 0.9);
  // d modes, ordered by total frequency, weights rho^(kx+ky).
  static DataFamily analytic(double alpha, double beta, int d, double rho, double margin = 0.9);
  // d modes with weights (1+kx+ky)^-(m+2.5); the amplitude is capped so that
  // every seminorm of order 1..m is <= R.
  static DataFamily sobolev_ball(double alpha, double beta, int m, double R, int d,
                                 double margin = 0.9);
  // Random P2 nodal values on the given (coarse) space, scaled into
  // [alpha - margin*beta, alpha + margin*beta] with elementwise Hessian <= R.
  static DataFamily sobolev_ball_p2(double alpha, double beta, double R,
                                    std::shared_ptr<const LagrangeSpace> space,
                                    double margin = 0.9);

  std::size_t dimension() const;
  CoefficientField member(std::span<const double> y) const;
  std::vector<std::vector<double>> sample_parameters(std::size_t count, std::uint64_t seed) const;
  // Upper bound of sup |d^mu (a - alpha)| over |mu| = order (trig realizations only).
  double seminorm_bound(int order) const;
};

std::string to_string(DataFamily::Kind kind);

// Deterministic draws; every member is checked with membership(alpha, beta)
// over the domain and a failure throws InvalidArgument.
std::vector<CoefficientField> sample_family(const DataFamily& family, std::size_t count,
                                            std::uint64_t seed, const Polygon& domain,
                                            int grid_n = 64);

// Modes (kx, ky) with kx + ky >= 1 ordered by kx + ky, then kx; cos/cos only.
std::vector<TrigMode> ordered_modes(std::size_t count);

}  // namespace richop
