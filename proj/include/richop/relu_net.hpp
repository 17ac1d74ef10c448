#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "richop/encoder.hpp"
#include "richop/richardson.hpp"

namespace richop {

// x -> A x + b with A stored row-wise (CSR, columns ascending within a row).
struct NetLayer {
  int rows = 0, cols = 0;
  std::vector<std::int32_t> row_ptr{0};
  std::vector<std::int32_t> col;
  std::vector<double> val;
  Eigen::VectorXd bias;
  std::string tag;  // construction that produced the layer

  struct Entry {
    std::int32_t row, col;
    double val;
  };
  // Duplicates are summed; exact zeros are dropped.
  static NetLayer from_entries(int rows, int cols, std::vector<Entry> entries, Eigen::VectorXd bias,
                               std::string tag);
  std::size_t weight_nonzeros() const;
  std::size_t bias_nonzeros() const;
  void apply(std::span<const double> x, std::span<double> y) const;
};

// Feedforward ReLU network (A_l, b_l), l = 1..L; ReLU after every layer but the last.
class NeuralNet {
 public:
  NeuralNet() = default;
  explicit NeuralNet(std::vector<NetLayer> layers);

  const std::vector<NetLayer>& layers() const { return layers_; }
  int input_dim() const { return layers_.front().cols; }
  int output_dim() const { return layers_.back().rows; }
  int depth() const { return static_cast<int>(layers_.size()); }
  std::size_t size() const;  // nonzero weights and biases

  Eigen::VectorXd realize(const Eigen::VectorXd& x) const;
  std::vector<Eigen::VectorXd> realize_batch(const std::vector<Eigen::VectorXd>& xs) const;

 private:
  std::vector<NetLayer> layers_;
};

// Depth-1 net x -> A x + b.
NeuralNet affine_net(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::string& tag = "affine");
// Identity on R^n with depth L, through the channels (ReLU(x), ReLU(-x)).
NeuralNet identity_net(int n, int depth);
// Realization of outer composed with inner; the inner output layer and the outer
// input layer are spliced through identity channels.
NeuralNet sparse_concat(const NeuralNet& outer, const NeuralNet& inner);
// Nets of equal depth reading the same input; outputs are stacked.
NeuralNet parallel_shared(const std::vector<NeuralNet>& nets);

// |realize(x, y) - x y| <= eps for |x|, |y| <= Z. Symmetrized: Z^2 (sq(|x+y|/2Z) -
// sq(|x-y|/2Z)) with both squares from the same sawtooth network, so the
// output is exactly 0 when x = 0 or y = 0.
NeuralNet product_net(double eps, double z);
int product_levels(double eps, double z);

// Inputs (vec(A), x) with vec column-major, A of size n x n; output ~ A x with
// ||error||_2 <= eps when |A_ij| <= 1 and ||x||_2 <= Z. Each entry product has
// tolerance eps / n^{3/2}.
NeuralNet matvec_net(int n, double eps, double z);

// (vec(A), x) -> A x + g, error <= eps_it for ||x|| <= z_tilde. With carry the
// output is (vec(A), A x + g).
NeuralNet build_phi_step(int n, double z_tilde, double eps_it, const Eigen::VectorXd& g,
                         bool carry = false);

// y -> vec(Id - (alpha B_a0)^-1 B_v) with v = sum_k y_k xi_k; one affine layer.
NeuralNet build_phi_input(const ReducedAssembler& assembler, const Encoder& encoder);
// Reduced tensors D_k = b(xi_k; phi_j, phi_i) at the assembler's quadrature.
std::vector<Eigen::MatrixXd> channel_tensors(const ReducedAssembler& assembler, const Encoder& encoder);

struct NetBuildReport {
  int depth = 0;
  std::size_t size = 0;
  struct Part {
    std::string tag;
    int layers = 0;
    std::size_t nonzeros = 0;
  };
  std::vector<Part> attribution;
  double epsilon = 0.0;   // certified tolerance of the net's output
  double z_bound = 0.0;   // validity box of the product networks
  int n = 0, m = 0, k = 0;
  double eps_it = 0.0;    // step tolerance inside the iteration net
  double beta = 0.0;      // contraction bound used for K and the budgets
};
NetBuildReport recount(const NeuralNet& net);

// Unrolled K-step iteration net vec(A_v) -> c^(K) together with its recurrent
// form: init, K - 1 applications of the carrying step and a final step.
struct PhiIt {
  NeuralNet net;
  NeuralNet init, step_carry, step_final;
  int k = 0;
  double eps_it = 0.0;
  double z_tilde = 0.0;
  Eigen::VectorXd realize_recurrent(const Eigen::VectorXd& vec_a) const;
};
// ||realize - c^(K)||_2 <= eps for vec(A_v) with ||A_v||_2 <= beta / alpha.
// Steps use eps_it = (1 - beta/alpha) eps and Z = 2 + alpha / (alpha - beta).
PhiIt build_phi_it(int n, int k, double eps, double alpha, double beta, const Eigen::VectorXd& g);

struct PhiApp {
  NeuralNet net;
  PhiIt it;
  NeuralNet input;
  NetBuildReport report;
};
// Phi_it (K = choose_K, target (alpha - beta) eps / (2 sqrt(N+1) ||f||)) after
// Phi_input. Certified: ||realize(y) . Psi - S^{Y_N}(y . Xi)||_Y <= eps for
// encoded coefficients in D_{alpha, beta}, in the scaled frame.
PhiApp build_phi_app(const ReducedAssembler& assembler, const Encoder& encoder, double beta,
                     double f_dual_norm, double eps);

// JSON with coordinate-sparse layers, biases and an optional report; doubles
// round-trip exactly.
void write_net_json(std::ostream& os, const NeuralNet& net, const NetBuildReport* report = nullptr);
NeuralNet read_net_json(std::istream& is, NetBuildReport* report = nullptr);

}  // namespace richop
