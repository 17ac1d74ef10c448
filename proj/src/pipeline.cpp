#include "richop/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "richop/error.hpp"
#include "richop/parallel.hpp"

namespace richop {

Encoder build_encoder(const EncoderSpec& spec, const Polygon& domain) {
  if (!(spec.h > 0.0)) throw InvalidArgument("encoder mesh size must be positive");
  auto mesh = std::make_shared<const Mesh>(triangulate(domain, spec.h));
  if (spec.kind == Encoder::Kind::gll) return build_gll_encoder(mesh, spec.order);
  if (spec.order != 1 && spec.order != 2) throw InvalidArgument("nodal encoder degree must be 1 or 2");
  return build_nodal_encoder(std::make_shared<const LagrangeSpace>(mesh, spec.order));
}

const char* to_string(BetaMode m) { return m == BetaMode::config ? "config" : "envelope"; }

BetaMode beta_mode_from_string(const std::string& s) {
  if (s == "config") return BetaMode::config;
  if (s == "envelope") return BetaMode::envelope;
  throw ConfigError("unknown beta mode '" + s + "' (expected config or envelope)");
}

NeuralOperator::NeuralOperator(std::shared_ptr<const FemProblem> problem, ReducedBasis basis,
                               Encoder encoder, NeuralNet net, Certificates certificates)
    : problem_(std::move(problem)), basis_(std::move(basis)), encoder_(std::move(encoder)),
      net_(std::move(net)), certs_(std::move(certificates)) {
  if (net_.input_dim() != static_cast<int>(encoder_.size()))
    throw InvalidArgument("operator: network input width differs from the encoder size");
  if (net_.output_dim() != static_cast<int>(basis_.size()))
    throw InvalidArgument("operator: network output width differs from the basis size");
  assembler_ = std::make_shared<const ReducedAssembler>(*problem_, basis_, Frame::scaled);
}

Eigen::VectorXd NeuralOperator::encode(const CoefficientField& a) const { return encoder_.encode(a); }

Eigen::VectorXd NeuralOperator::coefficients(const Eigen::VectorXd& y) const { return net_.realize(y); }

FemVector NeuralOperator::decode(const Eigen::VectorXd& c) const { return basis_.synthesize(c, Frame::scaled); }

FemVector NeuralOperator::evaluate(const CoefficientField& a) const { return decode(coefficients(encode(a))); }

CoefficientField NeuralOperator::effective(const CoefficientField& a) const {
  if (!certs_.a_min) return a;
  const double a_min = *certs_.a_min;
  return CoefficientField::analytic([a, a_min](Point p) { return a_min + std::abs(a(p)); },
                                    "a_min + |a|");
}

namespace {

std::vector<double> reconstruction_samples(const Encoder& e, const Eigen::VectorXd& y, const FemSpace& space) {
  const auto& qps = space.quadrature();
  std::vector<double> s(qps.size());
  for (std::size_t q = 0; q < qps.size(); ++q) s[q] = e.reconstruct_at(y, qps[q].x);
  return s;
}

}  // namespace

OperatorBuild build_operator(std::shared_ptr<const FemProblem> problem, const DataFamily& family,
                             const OperatorSpec& spec) {
  const auto snaps = generate_snapshots(family, spec.training_count, spec.seed, *problem, spec.domain);
  return build_operator(std::move(problem), snaps, spec);
}

OperatorBuild build_operator(std::shared_ptr<const FemProblem> problem, const SnapshotSet& snapshots,
                             const OperatorSpec& spec) {
  if (spec.n < 0 || static_cast<std::size_t>(spec.n) > snapshots.solutions.size())
    throw InvalidArgument("operator: need 0 <= N <= training count");
  if (!(spec.epsilon > 0.0 && spec.epsilon < 1.0)) throw InvalidArgument("operator: epsilon must lie in (0, 1)");
  const auto& cfg = problem->config();
  auto greedy = weak_greedy(*problem, snapshots, spec.n, spec.gamma);
  Encoder encoder = build_encoder(spec.encoder, spec.domain);

  std::vector<double> env(snapshots.coefficients.size(), 0.0);
  parallel_for(env.size(), [&](std::size_t j) {
    const auto y = encoder.encode(snapshots.coefficients[j]);
    env[j] = reconstruction_envelope(encoder, y, cfg.alpha, spec.domain, spec.envelope_grid).beta_tilde;
  });
  double envelope = 0.0;
  for (double e : env) envelope = std::max(envelope, e);
  if (envelope >= cfg.alpha) {
    std::ostringstream msg;
    msg << "encoded reconstructions leave the admissible set: beta_tilde = " << envelope
        << " >= alpha = " << cfg.alpha << "; refine the encoder";
    throw BuildError(msg.str());
  }
  const double beta_tilde = spec.beta_mode == BetaMode::config ? cfg.beta : std::max(cfg.beta, envelope);
  if (beta_tilde >= cfg.alpha) throw BuildError("beta_tilde >= alpha: no contraction certificate");

  ReducedAssembler assembler(*problem, greedy.basis, Frame::scaled);
  PhiApp app = build_phi_app(assembler, encoder, beta_tilde, problem->dual_norm(), spec.epsilon);

  Certificates c;
  c.epsilon = spec.epsilon;
  c.alpha = cfg.alpha;
  c.beta = cfg.beta;
  c.beta_tilde = beta_tilde;
  c.envelope = envelope;
  c.dual_norm = problem->dual_norm();
  c.n = static_cast<int>(greedy.basis.n());
  c.m = static_cast<int>(encoder.size());
  c.k = app.report.k;
  c.eps_it = app.report.eps_it;
  c.z_bound = app.report.z_bound;
  c.depth = app.report.depth;
  c.size = app.report.size;
  NeuralOperator op(std::move(problem), std::move(greedy.basis), std::move(encoder), std::move(app.net), c);
  return {std::move(op), std::move(greedy.trace), std::move(app.report)};
}

NeuralNet abs_shift_net(int m, double a_min) {
  if (m < 1) throw InvalidArgument("abs net needs m >= 1");
  std::vector<NetLayer::Entry> split, merge;
  for (int k = 0; k < m; ++k) {
    split.push_back({2 * k, k, 1.0});
    split.push_back({2 * k + 1, k, -1.0});
    merge.push_back({k, 2 * k, 1.0});
    merge.push_back({k, 2 * k + 1, 1.0});
  }
  return NeuralNet({NetLayer::from_entries(2 * m, m, split, Eigen::VectorXd::Zero(2 * m), "abs"),
                    NetLayer::from_entries(m, 2 * m, merge, Eigen::VectorXd::Constant(m, a_min), "abs")});
}

NeuralOperator nonsmooth_operator(const NeuralOperator& op, double a_min) {
  if (op.certificates().a_min) throw InvalidArgument("operator already has a nonsmooth front end");
  if (!(a_min >= 0.0)) throw InvalidArgument("a_min must be nonnegative");
  NeuralNet net = sparse_concat(op.net(), abs_shift_net(static_cast<int>(op.encoder().size()), a_min));
  Certificates c = op.certificates();
  c.a_min = a_min;
  c.depth = net.depth();
  c.size = net.size();
  return NeuralOperator(op.problem_ptr(), op.basis(), op.encoder(), std::move(net), c);
}

ErrorTerms error_terms(const NeuralOperator& op, const CoefficientField& a) {
  const auto& problem = op.problem();
  const auto& as = op.assembler();
  const CoefficientField eff = op.effective(a);

  const FemVector uh = problem.galerkin_solve(eff);
  const FemVector u_n = op.decode(direct_solve(as.system(eff)));
  const Eigen::VectorXd y_eff = op.encoder().encode(eff);
  const FemVector u_rec =
      op.decode(direct_solve(as.system(reconstruction_samples(op.encoder(), y_eff, problem.space()))));
  const FemVector g = op.evaluate(a);
  const FemVector g_round = op.basis().synthesize(op.basis().analyze(g, Frame::scaled), Frame::scaled);

  ErrorTerms t;
  t.total = problem.energy_norm(uh - g);
  t.rb = problem.energy_norm(uh - u_n);
  t.encoder = problem.energy_norm(u_n - u_rec);
  t.approx = problem.energy_norm(u_rec - g);
  t.decoder = problem.energy_norm(g - g_round);
  t.best = op.basis().projection_error(uh);
  return t;
}

std::vector<ErrorTerms> error_decomposition(const NeuralOperator& op,
                                            const std::vector<CoefficientField>& tests) {
  std::vector<ErrorTerms> rows(tests.size());
  parallel_for(tests.size(), [&](std::size_t i) { rows[i] = error_terms(op, tests[i]); });
  return rows;
}

void write_error_csv(std::ostream& os, const std::vector<ErrorTerms>& rows) {
  os << "index,total,rb,encoder,approx,decoder,best,bound,triangle_ok\n" << std::setprecision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << r.total << ',' << r.rb << ',' << r.encoder << ',' << r.approx << ',' << r.decoder << ','
       << r.best << ',' << r.bound() << ',' << (r.total <= r.bound() + 1e-8 ? 1 : 0) << '\n';
  }
}

namespace {

using nlohmann::json;

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw InvalidArgument("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot read " + p.string());
  return is;
}

bool same_mesh(const Mesh& a, const Mesh& b) { return a.nodes == b.nodes && a.triangles == b.triangles; }

}  // namespace

void save_operator(const NeuralOperator& op, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "mesh.txt");
    write_mesh(os, op.problem().space().mesh());
  }
  {
    auto os = open_out(dir / "basis.csv");
    const auto& psi = op.basis().psi();
    const auto& q = op.basis().ortho();
    const std::size_t m = psi.size();
    for (std::size_t j = 0; j < m; ++j) os << (j ? "," : "") << "psi_" << j;
    for (std::size_t j = 0; j < m; ++j) os << ",q_" << j;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < psi.front().size(); ++i) {
      for (std::size_t j = 0; j < m; ++j) os << (j ? "," : "") << psi[j][i];
      for (std::size_t j = 0; j < m; ++j) os << ',' << q[j][i];
      os << '\n';
    }
  }
  {
    auto os = open_out(dir / "encoder_mesh.txt");
    write_mesh(os, op.encoder().mesh());
  }
  {
    json pts = json::array();
    for (const auto& p : op.encoder().query_points()) pts.push_back({p.x, p.y});
    const json e{{"kind", op.encoder().kind() == Encoder::Kind::gll ? "gll" : "nodal"},
                 {"order", op.encoder().order()},
                 {"size", op.encoder().size()},
                 {"query_points", pts}};
    auto os = open_out(dir / "encoder.json");
    os << e.dump(1) << '\n';
  }
  {
    auto os = open_out(dir / "net.json");
    write_net_json(os, op.net());
  }
  {
    const auto& c = op.certificates();
    json j{{"epsilon", c.epsilon},   {"alpha", c.alpha},   {"beta", c.beta},
           {"beta_tilde", c.beta_tilde}, {"envelope", c.envelope}, {"dual_norm", c.dual_norm},
           {"n", c.n},               {"m", c.m},           {"k", c.k},
           {"eps_it", c.eps_it},     {"z_bound", c.z_bound}, {"depth", c.depth},
           {"size", c.size},         {"fe_degree", op.problem().space().degree()},
           {"selection", op.basis().selection()}};
    j["a_min"] = c.a_min ? json(*c.a_min) : json(nullptr);
    auto os = open_out(dir / "certificates.json");
    os << j.dump(1) << '\n';
  }
}

NeuralOperator load_operator(const std::filesystem::path& dir, std::shared_ptr<const FemProblem> problem) {
  try {
    {
      auto is = open_in(dir / "mesh.txt");
      if (!same_mesh(read_mesh(is), problem->space().mesh()))
        throw ConfigError("bundle mesh differs from the problem's mesh");
    }
    json cj;
    {
      auto is = open_in(dir / "certificates.json");
      cj = json::parse(is);
    }
    if (cj.at("fe_degree").get<int>() != problem->space().degree())
      throw ConfigError("bundle FE degree differs from the problem's");
    Certificates c;
    c.epsilon = cj.at("epsilon");
    c.alpha = cj.at("alpha");
    c.beta = cj.at("beta");
    c.beta_tilde = cj.at("beta_tilde");
    c.envelope = cj.at("envelope");
    c.dual_norm = cj.at("dual_norm");
    c.n = cj.at("n");
    c.m = cj.at("m");
    c.k = cj.at("k");
    c.eps_it = cj.at("eps_it");
    c.z_bound = cj.at("z_bound");
    c.depth = cj.at("depth");
    c.size = cj.at("size");
    if (!cj.at("a_min").is_null()) c.a_min = cj.at("a_min").get<double>();
    if (c.alpha != problem->config().alpha || c.beta != problem->config().beta)
      throw ConfigError("bundle (alpha, beta) differ from the problem's");

    std::vector<FemVector> psi, ortho;
    {
      auto is = open_in(dir / "basis.csv");
      std::string line;
      std::getline(is, line);
      const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') + 1);
      if (cols % 2 != 0) throw ConfigError("basis.csv: odd column count");
      const std::size_t m = cols / 2, rows = problem->space().num_free();
      psi.assign(m, FemVector(static_cast<Eigen::Index>(rows)));
      ortho.assign(m, FemVector(static_cast<Eigen::Index>(rows)));
      for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) throw ConfigError("basis.csv: too few rows");
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (std::size_t j = 0; j < cols; ++j) {
          double v = 0.0;
          auto [next, ec] = std::from_chars(p, end, v);
          if (ec != std::errc()) throw ConfigError("basis.csv: bad number in row " + std::to_string(i + 2));
          (j < m ? psi[j] : ortho[j - m])[static_cast<Eigen::Index>(i)] = v;
          p = next;
          if (j + 1 < cols) {
            if (p == end || *p != ',') throw ConfigError("basis.csv: short row " + std::to_string(i + 2));
            ++p;
          }
        }
      }
    }
    ReducedBasis basis(*problem, std::move(psi), std::move(ortho), cj.at("selection").get<std::vector<int>>());

    json ej;
    {
      auto is = open_in(dir / "encoder.json");
      ej = json::parse(is);
    }
    std::shared_ptr<const Mesh> emesh;
    {
      auto is = open_in(dir / "encoder_mesh.txt");
      emesh = std::make_shared<const Mesh>(read_mesh(is));
    }
    const std::string kind = ej.at("kind");
    const int order = ej.at("order");
    Encoder encoder = kind == "gll" ? build_gll_encoder(emesh, order)
                      : kind == "nodal"
                          ? build_nodal_encoder(std::make_shared<const LagrangeSpace>(emesh, order))
                          : throw ConfigError("unknown encoder kind '" + kind + "'");
    const auto& pts = ej.at("query_points");
    if (pts.size() != encoder.size()) throw ConfigError("encoder.json: query point count mismatch");
    for (std::size_t k = 0; k < pts.size(); ++k)
      if (encoder.query_points()[k] != Point{pts[k].at(0).get<double>(), pts[k].at(1).get<double>()})
        throw ConfigError("encoder.json: query points differ from the rebuilt encoder");

    NeuralNet net;
    {
      auto is = open_in(dir / "net.json");
      net = read_net_json(is);
    }
    return NeuralOperator(std::move(problem), std::move(basis), std::move(encoder), std::move(net), c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("operator bundle: ") + e.what());
  }
}

}  // namespace richop
