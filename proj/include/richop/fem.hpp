#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "richop/coeff.hpp"
#include "richop/lagrange.hpp"
#include "richop/mesh.hpp"
#include "richop/sparse.hpp"

namespace richop {

// Lagrange space with homogeneous Dirichlet conditions on the whole boundary.
// Vectors (FemVector) live on the free dofs only.
class FemSpace {
 public:
  FemSpace(std::shared_ptr<const Mesh> mesh, int degree, int quad_degree = 4);

  const Mesh& mesh() const { return lagrange_->mesh(); }
  std::shared_ptr<const Mesh> mesh_ptr() const { return lagrange_->mesh_ptr(); }
  std::shared_ptr<const LagrangeSpace> lagrange() const { return lagrange_; }
  int degree() const { return lagrange_->degree(); }
  const std::vector<Point>& dof_coords() const { return lagrange_->layout().dof_coords; }
  std::size_t num_dofs() const { return lagrange_->num_dofs(); }
  std::size_t num_free() const { return free_dofs_.size(); }
  const std::vector<std::int32_t>& free_dofs() const { return free_dofs_; }
  const std::vector<std::int32_t>& constrained_dofs() const { return constrained_dofs_; }
  // Free index of a dof, or -1 for constrained dofs.
  std::int32_t free_index(std::int32_t dof) const { return free_index_[dof]; }

  // Full dof vector with zeros on the boundary.
  std::vector<double> lift(const FemVector& v) const;
  FemVector restrict_to_free(std::span<const double> full) const;
  // Nodal interpolant of g (restricted to the free dofs).
  FemVector interpolate(const std::function<double(Point)>& g) const;
  double evaluate(const FemVector& v, Point p) const;

  // Quadrature points with their weights (area included), element-major.
  struct QuadPoint {
    Point x;
    double weight;
    std::int32_t triangle;
  };
  int quad_degree() const { return quad_degree_; }
  const std::vector<QuadPoint>& quadrature() const { return qps_; }
  std::vector<QuadPoint> quadrature(int degree) const;
  // Per quadrature point: free indices (-1 if constrained) and shape gradients.
  struct QuadGradients {
    int local = 3;
    std::array<std::int32_t, 6> free{};
    std::array<Point, 6> grad{};
  };
  const std::vector<QuadGradients>& quadrature_gradients() const { return qgrads_; }
  // Sparsity pattern of the free-free stiffness block and, for each element,
  // the positions of its local (i, j) entries in vals (-1 when either dof is constrained).
  const CsrMatrix& pattern() const { return pattern_; }
  const std::vector<std::array<std::int32_t, 36>>& element_slots() const { return slots_; }

 private:
  std::shared_ptr<const LagrangeSpace> lagrange_;
  std::vector<std::int32_t> free_dofs_, constrained_dofs_, free_index_;
  CsrMatrix pattern_;
  std::vector<std::array<std::int32_t, 36>> slots_;
  int quad_degree_;
  std::vector<QuadPoint> qps_;
  std::vector<QuadGradients> qgrads_;
};

// a in D_{alpha,beta}; a0 with ||a0||_X = 1; source f.
struct ProblemConfig {
  double alpha = 1.0;
  double beta = 0.5;
  CoefficientField a0 = CoefficientField::constant(1.0);
  CoefficientField f = CoefficientField::constant(1.0);
  double solver_tol = 1e-12;
  // psi0 and the Riesz representer of f anchor g = e1 in the reduced
  // iteration; they are solved to this tighter tolerance.
  double anchor_tol = 1e-15;
};

// Entry (i, j) = int a grad(phi_j) . grad(phi_i) over free dofs, with the
// space's quadrature.
CsrMatrix assemble_stiffness(const FemSpace& space, const CoefficientField& a);
// Same, from coefficient samples at space.quadrature().
CsrMatrix assemble_stiffness(const FemSpace& space, std::span<const double> a_at_qp);
std::vector<double> sample_at_quadrature(const FemSpace& space, const CoefficientField& a);
FemVector assemble_load(const FemSpace& space, const CoefficientField& f);
FemVector assemble_load(const FemSpace& space, const CoefficientField& f, int quad_degree);

// Coefficient-to-solution map with the a0-energy norm and the discrete dual
// norm on one fixed space.
class FemProblem {
 public:
  FemProblem(std::shared_ptr<const FemSpace> space, ProblemConfig config);

  const FemSpace& space() const { return *space_; }
  std::shared_ptr<const FemSpace> space_ptr() const { return space_; }
  const ProblemConfig& config() const { return config_; }
  const CsrMatrix& nominal_stiffness() const { return k0_; }
  const FemVector& load() const { return load_; }

  double energy_inner(const FemVector& u, const FemVector& v) const;
  double energy_norm(const FemVector& v) const;
  // Discrete Riesz representer r of a load vector: K(a0) r = load.
  FemVector riesz(const FemVector& load) const;
  double dual_norm(const FemVector& load) const;
  double dual_norm() const { return dual_norm_; }  // of config.f

  // Throws InvalidArgument if a leaves D_{alpha,beta} at a quadrature point.
  FemVector galerkin_solve(const CoefficientField& a) const;
  FemVector solve_with(const CsrMatrix& stiffness) const;
  // psi0 = S(alpha a0)
  const FemVector& psi0() const { return psi0_; }

 private:
  std::shared_ptr<const FemSpace> space_;
  ProblemConfig config_;
  CsrMatrix k0_;
  FemVector load_;
  FemVector psi0_;
  double dual_norm_ = 0.0;
};

// One value per line, 17 significant digits.
void write_vector_csv(std::ostream& os, const FemVector& v);
FemVector read_vector_csv(std::istream& is);

}  // namespace richop
