#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "richop/mesh.hpp"

namespace richop {

// Continuous P1/P2 Lagrange dof numbering on a triangulation. P1 dofs are the
// mesh nodes; P2 appends one dof per edge (at the edge midpoint), numbered in
// sorted edge order. Local dof order per triangle: the three vertices, then the
// edges (0,1), (1,2), (2,0).
struct LagrangeLayout {
  int degree = 1;
  std::vector<std::array<std::int32_t, 6>> element_dofs;
  std::vector<Point> dof_coords;

  static LagrangeLayout build(const Mesh& mesh, int degree);

  std::size_t num_dofs() const { return dof_coords.size(); }
  int dofs_per_element() const { return degree == 1 ? 3 : 6; }
};

// Reference shape functions in terms of barycentric coordinates.
void lagrange_values(int degree, const std::array<double, 3>& bary, std::span<double> out);
// Gradients, given the barycentric gradients of the physical triangle.
void lagrange_gradients(int degree, const std::array<double, 3>& bary,
                        const std::array<Point, 3>& grad_bary, std::span<Point> out);
// Gradients of the barycentric coordinates on a physical triangle.
std::array<Point, 3> barycentric_gradients(const std::array<Point, 3>& tri);

// Symmetric quadrature on triangles: barycentric points and weights summing to 1.
struct TriangleRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
};
// Exact for polynomials of the given total degree (supported: 1, 2, 4, 6, 8).
const TriangleRule& triangle_rule(int degree);

}  // namespace richop

namespace richop {

// Mesh + dof layout + point locator; the shared evaluation substrate for
// piecewise-polynomial coefficient fields and finite element spaces.
class LagrangeSpace {
 public:
  LagrangeSpace(std::shared_ptr<const Mesh> mesh, int degree);

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const LagrangeLayout& layout() const { return layout_; }
  int degree() const { return layout_.degree; }
  std::size_t num_dofs() const { return layout_.num_dofs(); }

  // Basis functions that may be nonzero at p: returns their count (3 or 6);
  // throws NumericalError if p lies outside the mesh.
  int basis_at(Point p, std::array<std::int32_t, 6>& dofs, std::array<double, 6>& values) const;
  double evaluate(std::span<const double> dof_values, Point p) const;
  bool contains(Point p) const { return locator_.locate(p).has_value(); }

 private:
  std::shared_ptr<const Mesh> mesh_;
  LagrangeLayout layout_;
  MeshLocator locator_;
};

}  // namespace richop
