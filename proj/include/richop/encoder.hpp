#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "richop/coeff.hpp"
#include "richop/fem.hpp"
#include "richop/lagrange.hpp"
#include "richop/mesh.hpp"

namespace richop {

// Gauss-Legendre-Lobatto nodes on [-1, 1] (ascending), p + 1 of them.
std::vector<double> gll_nodes(int p);

// Linear point-query encoder a -> (a(x_1), ..., a(x_M)) with an interpolatory
// reconstruction system xi_1..xi_M (xi_j(x_k) = delta_jk).
class Encoder {
 public:
  enum class Kind { nodal, gll };

  Kind kind() const;
  // Lagrange degree (nodal) or tensor degree p (gll).
  int order() const;
  std::size_t size() const;  // M
  const std::vector<Point>& query_points() const;
  const Mesh& mesh() const;

  Eigen::VectorXd encode(const CoefficientField& a) const;
  // Channels whose basis function may be nonzero at p, with their values.
  void basis_at(Point p, std::vector<std::int32_t>& channels, std::vector<double>& values) const;
  double reconstruct_at(const Eigen::VectorXd& y, Point p) const;
  CoefficientField reconstruct(const Eigen::VectorXd& y) const;
  CoefficientField basis_field(std::size_t j) const;

  struct Impl;
  explicit Encoder(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<const Impl> impl_;
};

Encoder build_nodal_encoder(std::shared_ptr<const LagrangeSpace> space);
Encoder build_nodal_encoder(const FemSpace& space);
// Tensor GLL interpolation of degree p on every quad of quad_split(mesh);
// interface nodes are shared channels. Throws InvalidArgument for p < 1 and
// NumericalError if a bilinear map is not bijective.
Encoder build_gll_encoder(std::shared_ptr<const Mesh> mesh, int p);

// sup over sample_grid(domain, grid_n) of |a - reconstruct(encode(a))|; a lower
// bound for the L^inf error.
double encoder_error(const Encoder& e, const CoefficientField& a, const Polygon& domain,
                     int grid_n = 400);

// Admissibility envelope of a reconstruction: beta_tilde = sup |rec - alpha|.
struct Envelope {
  double alpha = 0.0;
  double beta_tilde = 0.0;
  FieldRange range;
  bool well_posed() const { return beta_tilde < alpha; }
};
Envelope reconstruction_envelope(const Encoder& e, const Eigen::VectorXd& y, double alpha,
                                 const Polygon& domain, int grid_n = 200);

}  // namespace richop
