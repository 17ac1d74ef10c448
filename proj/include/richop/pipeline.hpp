#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "richop/encoder.hpp"
#include "richop/relu_net.hpp"

namespace richop {

struct EncoderSpec {
  Encoder::Kind kind = Encoder::Kind::nodal;
  int order = 1;   // Lagrange degree (nodal) or tensor degree (gll)
  double h = 0.2;  // encoder mesh size
};
Encoder build_encoder(const EncoderSpec& spec, const Polygon& domain);

// How beta_tilde (the admissibility bound of encoded reconstructions) is set.
//   config    the problem's beta; valid when reconstructions cannot overshoot
//             (nodal P1 interpolation of members of D_{alpha, beta}).
//   envelope  max(beta, sup |rec - alpha|) over the training encodings.
enum class BetaMode { config, envelope };
const char* to_string(BetaMode m);
BetaMode beta_mode_from_string(const std::string& s);

struct OperatorSpec {
  Polygon domain = Polygon::unit_square();
  std::size_t training_count = 40;
  int n = 8;
  double gamma = 1.0;
  EncoderSpec encoder;
  double epsilon = 1e-2;
  std::uint64_t seed = 1;
  BetaMode beta_mode = BetaMode::envelope;
  int envelope_grid = 100;
};

struct Certificates {
  double epsilon = 0.0;
  double alpha = 0.0, beta = 0.0;
  double beta_tilde = 0.0;  // used for K and the step budgets
  double envelope = 0.0;    // measured sup |rec - alpha| over training encodings
  double dual_norm = 0.0;   // ||f||_{Y'}
  int n = 0, m = 0, k = 0;
  double eps_it = 0.0, z_bound = 0.0;
  int depth = 0;
  std::size_t size = 0;
  std::optional<double> a_min;  // set for the nonsmooth composition
};

// G = R o A o E: point encoder, Phi_app, exact synthesis in the scaled frame.
class NeuralOperator {
 public:
  NeuralOperator(std::shared_ptr<const FemProblem> problem, ReducedBasis basis, Encoder encoder,
                 NeuralNet net, Certificates certificates);

  const FemProblem& problem() const { return *problem_; }
  std::shared_ptr<const FemProblem> problem_ptr() const { return problem_; }
  const ReducedBasis& basis() const { return basis_; }
  const Encoder& encoder() const { return encoder_; }
  const NeuralNet& net() const { return net_; }
  const Certificates& certificates() const { return certs_; }
  const ReducedAssembler& assembler() const { return *assembler_; }

  Eigen::VectorXd encode(const CoefficientField& a) const;
  Eigen::VectorXd coefficients(const Eigen::VectorXd& y) const;
  FemVector decode(const Eigen::VectorXd& c) const;
  FemVector evaluate(const CoefficientField& a) const;
  // The coefficient whose solution the operator approximates: a itself, or
  // a_min + |a| for the nonsmooth composition.
  CoefficientField effective(const CoefficientField& a) const;

 private:
  std::shared_ptr<const FemProblem> problem_;
  ReducedBasis basis_;
  Encoder encoder_;
  NeuralNet net_;
  Certificates certs_;
  std::shared_ptr<const ReducedAssembler> assembler_;
};

struct OperatorBuild {
  NeuralOperator op;
  GreedyTrace trace;
  NetBuildReport report;
};

// Snapshots of the family, weak greedy to spec.n, Phi_app at spec.epsilon.
// Throws BuildError when beta_tilde >= alpha.
OperatorBuild build_operator(std::shared_ptr<const FemProblem> problem, const DataFamily& family,
                             const OperatorSpec& spec);
OperatorBuild build_operator(std::shared_ptr<const FemProblem> problem, const SnapshotSet& snapshots,
                             const OperatorSpec& spec);

// Channelwise y -> a_min + |y| = a_min + ReLU(y) + ReLU(-y) in front of Phi_app.
NeuralNet abs_shift_net(int m, double a_min);
NeuralOperator nonsmooth_operator(const NeuralOperator& op, double a_min);

// Energy-norm terms for one test coefficient a (after op.effective):
//   rb        (I)   ||S_h(a) - S_N(a)||
//   encoder   (II)  ||S_N(a) - S_N(E(a) . Xi)||
//   approx    (III) ||S_N(E(a) . Xi) - G(a)||
//   decoder   (IV)  ||R(c) - synthesize(analyze(R(c)))||, zero for the exact decoder
//   best      ||S_h(a) - P_N S_h(a)||
struct ErrorTerms {
  double total = 0.0;
  double rb = 0.0, encoder = 0.0, approx = 0.0, decoder = 0.0;
  double best = 0.0;
  double bound() const { return rb + encoder + approx + decoder; }
};
ErrorTerms error_terms(const NeuralOperator& op, const CoefficientField& a);
std::vector<ErrorTerms> error_decomposition(const NeuralOperator& op,
                                            const std::vector<CoefficientField>& tests);
// index,total,rb,encoder,approx,decoder,best,bound,triangle_ok
void write_error_csv(std::ostream& os, const std::vector<ErrorTerms>& rows);

// Bundle directory: mesh.txt, basis.csv (psi then q columns), encoder_mesh.txt,
// encoder.json, net.json, certificates.json. Loading needs the problem the
// operator was built for; its space must match the stored mesh.
void save_operator(const NeuralOperator& op, const std::filesystem::path& dir);
NeuralOperator load_operator(const std::filesystem::path& dir, std::shared_ptr<const FemProblem> problem);

}  // namespace richop
