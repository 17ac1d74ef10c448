#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "richop/error.hpp"
#include "richop/parallel.hpp"
#include "richop/rng.hpp"

namespace richop::cli {

using nlohmann::json;

namespace {

// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return as<T>(j_.at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError("missing key " + join(key));
    return as<T>(j_.at(key), key);
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, join(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown key " + join(it.key()));
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <class T>
  T as(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (v.get<std::int64_t>() < 0) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(join(key) + " has the wrong type (got " + v.dump() + ")");
    }
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Polygon parse_domain(const json& j, std::string& name) {
  if (j.is_string()) {
    name = j.get<std::string>();
    if (name == "square") return Polygon::unit_square();
    if (name == "lshape") return Polygon::l_shape();
    throw ConfigError("domain must be \"square\", \"lshape\" or {\"polygon\": [[x, y], ...]}");
  }
  Section s(j, "domain");
  const json& v = s.raw("polygon");
  s.finish();
  check(v.is_array() && v.size() >= 3, "domain.polygon needs at least three [x, y] vertices");
  std::vector<Point> pts;
  for (const auto& p : v) {
    check(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(),
          "domain.polygon vertices must be [x, y] pairs");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  name = "polygon";
  try {
    return Polygon(std::move(pts));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("domain.polygon: ") + e.what());
  }
}

CoefficientField parse_field(const json& j, const std::string& key) {
  if (j.is_number()) return CoefficientField::constant(j.get<double>());
  Section s(j, key);
  const auto offset = s.get<double>("offset", 0.0);
  const auto modes = s.require<int>("modes");
  const auto coef = s.require<std::vector<double>>("coefficients");
  s.finish();
  check(modes >= 1 && coef.size() == static_cast<std::size_t>(modes),
        key + ": need modes >= 1 and one coefficient per mode");
  return CoefficientField::trig_series(offset, ordered_modes(static_cast<std::size_t>(modes)), coef);
}

DataFamily parse_family(Section s, double alpha, double beta, const Polygon& domain) {
  const auto type = s.get<std::string>("type", "parametric");
  const double margin = s.get<double>("margin", 0.9);
  try {
    DataFamily f;
    if (type == "parametric") {
      f = DataFamily::parametric(alpha, beta, ordered_modes(s.get<std::size_t>("modes", 6)), margin);
    } else if (type == "analytic") {
      f = DataFamily::analytic(alpha, beta, s.get<int>("d", 2), s.get<double>("rho", 0.5), margin);
    } else if (type == "sobolev_ball") {
      f = DataFamily::sobolev_ball(alpha, beta, s.get<int>("m", 2), s.get<double>("R", 1.0), s.get<int>("d", 32),
                                   margin);
    } else if (type == "sobolev_ball_p2") {
      const double h = s.get<double>("h", 0.25);
      check(h > 0.0, s.join("h") + " must be positive");
      auto mesh = std::make_shared<const Mesh>(triangulate(domain, h));
      f = DataFamily::sobolev_ball_p2(alpha, beta, s.get<double>("R", 1.0),
                                      std::make_shared<const LagrangeSpace>(mesh, 2), margin);
    } else {
      throw ConfigError("family.type must be parametric, analytic, sobolev_ball or sobolev_ball_p2");
    }
    s.finish();
    return f;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("family: ") + e.what());
  }
}

}  // namespace

OperatorSpec ExperimentConfig::operator_spec() const {
  OperatorSpec s;
  s.domain = domain;
  s.training_count = training_count;
  s.n = n;
  s.gamma = gamma;
  s.encoder = encoder;
  s.epsilon = epsilon;
  s.seed = seed;
  s.beta_mode = beta_mode;
  s.envelope_grid = envelope_grid;
  return s;
}

ExperimentConfig parse_config(json doc, std::optional<std::uint64_t> seed_override) {
  if (seed_override) doc["seed"] = *seed_override;
  ExperimentConfig c;
  c.raw = doc;
  c.hash = fnv1a_hex(doc.dump());
  Section top(doc, "");
  c.name = top.get<std::string>("name", "experiment");
  c.seed = top.get<std::uint64_t>("seed", 1);

  c.domain = top.has("domain") ? parse_domain(top.raw("domain"), c.domain_name) : Polygon::unit_square();

  {
    auto s = top.sub("mesh");
    c.mesh.h = s.get<double>("h", 0.0625);
    c.mesh.degree = s.get<int>("degree", 1);
    if (s.has("grading")) {
      auto g = s.sub("grading");
      c.mesh.grading = g.get<double>("exponent", 0.5);
      c.mesh.levels = g.get<int>("levels", 1);
      g.finish();
      check(*c.mesh.grading > 0.0 && *c.mesh.grading <= 1.0, "mesh.grading.exponent must lie in (0, 1]");
      check(c.mesh.levels >= 0, "mesh.grading.levels must be >= 0");
    }
    s.finish();
    check(c.mesh.h > 0.0, "mesh.h must be positive");
    check(c.mesh.degree == 1 || c.mesh.degree == 2, "mesh.degree must be 1 or 2");
  }
  {
    auto s = top.sub("problem");
    c.problem.alpha = s.get<double>("alpha", 1.0);
    c.problem.beta = s.get<double>("beta", 0.5);
    if (s.has("a0")) c.problem.a0 = parse_field(s.raw("a0"), "problem.a0");
    if (s.has("f")) c.problem.f = parse_field(s.raw("f"), "problem.f");
    c.problem.solver_tol = s.get<double>("solver_tol", c.problem.solver_tol);
    s.finish();
    check(c.problem.alpha > 0.0, "problem.alpha must be positive (got " + num(c.problem.alpha) + ")");
    check(c.problem.beta > 0.0 && c.problem.beta < c.problem.alpha,
          "problem.beta must satisfy 0 < beta < alpha (got beta = " + num(c.problem.beta) +
              ", alpha = " + num(c.problem.alpha) + ")");
    check(c.problem.solver_tol > 0.0 && c.problem.solver_tol < 1e-6, "problem.solver_tol must lie in (0, 1e-6)");
  }
  c.family = parse_family(top.sub("family"), c.problem.alpha, c.problem.beta, c.domain);
  {
    auto s = top.sub("training");
    c.training_count = s.get<std::size_t>("count", 40);
    c.n = s.get<int>("n", 10);
    c.gamma = s.get<double>("gamma", 1.0);
    s.finish();
    check(c.training_count >= 1, "training.count must be >= 1");
    check(c.n >= 0 && static_cast<std::size_t>(c.n) <= c.training_count, "training.n must lie in [0, training.count]");
    check(c.gamma > 0.0 && c.gamma <= 1.0, "training.gamma must lie in (0, 1]");
  }
  {
    auto s = top.sub("encoder");
    const auto kind = s.get<std::string>("kind", "nodal");
    check(kind == "nodal" || kind == "gll", "encoder.kind must be nodal or gll");
    c.encoder.kind = kind == "gll" ? Encoder::Kind::gll : Encoder::Kind::nodal;
    c.encoder.order = s.get<int>("order", 1);
    c.encoder.h = s.get<double>("h", 0.2);
    s.finish();
    check(c.encoder.h > 0.0, "encoder.h must be positive");
    check(kind == "gll" ? c.encoder.order >= 1 : (c.encoder.order == 1 || c.encoder.order == 2),
          "encoder.order must be 1 or 2 (nodal) or >= 1 (gll)");
  }
  c.epsilon = top.get<double>("epsilon", 1e-2);
  check(c.epsilon > 0.0 && c.epsilon < 1.0, "epsilon must lie in (0, 1)");
  c.beta_mode = beta_mode_from_string(top.get<std::string>("beta_mode", "envelope"));
  c.envelope_grid = top.get<int>("envelope_grid", 100);
  check(c.envelope_grid >= 2, "envelope_grid must be >= 2");
  {
    auto s = top.sub("test");
    c.test_count = s.get<std::size_t>("count", 20);
    c.test_seed = s.get<std::uint64_t>("seed", c.seed + 1);
    s.finish();
  }
  {
    auto s = top.sub("iteration");
    c.iteration_steps = s.get<int>("steps", 30);
    c.iteration_samples = s.get<std::size_t>("samples", 20);
    s.finish();
    check(c.iteration_steps >= 0, "iteration.steps must be >= 0");
  }
  {
    auto s = top.sub("sweep");
    c.sweep_epsilon = s.get<std::vector<double>>("epsilon", {});
    c.sweep_n = s.get<std::vector<int>>("n", {});
    s.finish();
    for (double e : c.sweep_epsilon) check(e > 0.0 && e < 1.0, "sweep.epsilon entries must lie in (0, 1)");
    for (int n : c.sweep_n)
      check(n >= 0 && static_cast<std::size_t>(n) <= c.training_count, "sweep.n entries must lie in [0, training.count]");
  }
  {
    auto s = top.sub("nncheck");
    c.nncheck_samples = s.get<std::size_t>("samples", 200);
    c.nncheck_seed = s.get<std::uint64_t>("seed", c.seed + 2);
    s.finish();
  }
  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(std::move(doc), seed_override);
}

namespace {

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// CSV with a timestamp comment line, then the header; every row starts with the config hash.
class Csv {
 public:
  Csv(const std::filesystem::path& path, const std::string& command, const ExperimentConfig& cfg,
      const std::string& header)
      : os_(path), hash_(cfg.hash) {
    if (!os_) throw InvalidArgument("cannot write " + path.string());
    os_ << "# richop " << command << " " << cfg.name << " generated " << utc_timestamp() << '\n';
    os_ << "config_hash," << header << '\n' << std::setprecision(17);
  }
  std::ostream& row() { return os_ << hash_ << ','; }
  // Body of a library CSV writer: its header is dropped, rows are prefixed.
  void append_body(const std::string& body) {
    std::istringstream is(body);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) row() << line << '\n';
  }

 private:
  std::ofstream os_;
  std::string hash_;
};

std::string library_header(const std::string& body) { return body.substr(0, body.find('\n')); }

void log(const std::string& msg) { std::cerr << "[richop] " << msg << '\n'; }

class Context {
 public:
  Context(const ExperimentConfig& cfg, RunOptions opt) : cfg_(cfg), opt_(std::move(opt)) {
    std::filesystem::create_directories(opt_.out);
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const RunOptions& opt() const { return opt_; }
  std::filesystem::path out(const std::string& f) const { return opt_.out / f; }

  std::shared_ptr<const Mesh> mesh() {
    if (!mesh_) {
      Mesh m = triangulate(cfg_.domain, cfg_.mesh.h);
      const auto corners = cfg_.domain.reentrant_corners();
      if (cfg_.mesh.grading && !corners.empty())
        m = refine_corner_graded(m, corners, *cfg_.mesh.grading, cfg_.mesh.levels);
      else
        for (int l = 0; l < cfg_.mesh.levels; ++l) m = refine_uniform(m);
      mesh_ = std::make_shared<const Mesh>(std::move(m));
    }
    return mesh_;
  }

  std::shared_ptr<const FemProblem> problem() {
    if (!problem_) {
      auto space = std::make_shared<const FemSpace>(mesh(), cfg_.mesh.degree);
      problem_ = std::make_shared<const FemProblem>(space, cfg_.problem);
    }
    return problem_;
  }

  const SnapshotSet& snapshots() {
    if (!snapshots_)
      snapshots_ = generate_snapshots(cfg_.family, cfg_.training_count, cfg_.seed, *problem(), cfg_.domain);
    return *snapshots_;
  }

  const std::vector<CoefficientField>& tests() {
    if (!tests_) tests_ = sample_family(cfg_.family, cfg_.test_count, cfg_.test_seed, cfg_.domain);
    return *tests_;
  }

  const std::vector<FemVector>& test_solutions() {
    if (!test_solutions_) {
      const auto& t = tests();
      std::vector<FemVector> u(t.size());
      auto p = problem();
      parallel_for(t.size(), [&](std::size_t i) { u[i] = p->galerkin_solve(t[i]); });
      test_solutions_ = std::move(u);
    }
    return *test_solutions_;
  }

  const GreedyResult& greedy() {
    if (!greedy_) {
      if (build_)
        greedy_ = GreedyResult{build_->op.basis(), build_->trace};
      else
        greedy_ = weak_greedy(*problem(), snapshots(), cfg_.n, cfg_.gamma);
    }
    return *greedy_;
  }

  const OperatorBuild& build() {
    if (!build_) {
      build_ = build_operator(problem(), snapshots(), cfg_.operator_spec());
      const auto& c = build_->op.certificates();
      log("operator: N=" + std::to_string(c.n) + " M=" + std::to_string(c.m) + " K=" + std::to_string(c.k) +
          " depth=" + std::to_string(c.depth) + " size=" + std::to_string(c.size));
    }
    return *build_;
  }

  // Bundle from --bundle when given, else the built operator.
  const NeuralOperator& op() {
    if (opt_.bundle) {
      if (!loaded_) loaded_ = load_operator(*opt_.bundle, problem());
      return *loaded_;
    }
    return build().op;
  }

 private:
  const ExperimentConfig& cfg_;
  RunOptions opt_;
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const FemProblem> problem_;
  std::optional<SnapshotSet> snapshots_;
  std::optional<std::vector<CoefficientField>> tests_;
  std::optional<std::vector<FemVector>> test_solutions_;
  std::optional<GreedyResult> greedy_;
  std::optional<OperatorBuild> build_;
  std::optional<NeuralOperator> loaded_;
};

void cmd_mesh(Context& ctx) {
  const auto mesh = ctx.mesh();
  {
    std::ofstream os(ctx.out("mesh.txt"));
    write_mesh(os, *mesh);
  }
  Csv csv(ctx.out("mesh.csv"), "mesh", ctx.cfg(), "domain,nodes,triangles,free_dofs,h_max,h_min,area");
  csv.row() << ctx.cfg().domain_name << ',' << mesh->num_nodes() << ',' << mesh->num_triangles() << ','
            << ctx.problem()->space().num_free() << ',' << mesh->max_diameter() << ',' << mesh->min_diameter()
            << ',' << mesh->total_area() << '\n';
}

void cmd_snapshots(Context& ctx) {
  const auto& s = ctx.snapshots();
  const auto p = ctx.problem();
  const double bound = p->dual_norm() / (p->config().alpha - p->config().beta);
  Csv csv(ctx.out("snapshots.csv"), "snapshots", ctx.cfg(), "index,energy_norm,snorm_bound,coeff_min,coeff_max");
  for (std::size_t i = 0; i < s.solutions.size(); ++i) {
    const auto samples = sample_at_quadrature(p->space(), s.coefficients[i]);
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    csv.row() << i << ',' << p->energy_norm(s.solutions[i]) << ',' << bound << ',' << *lo << ',' << *hi << '\n';
  }
}

void cmd_greedy(Context& ctx) {
  const auto& g = ctx.greedy();
  std::ostringstream trace;
  write_greedy_csv(trace, g.trace, ctx.opt().timing);
  Csv csv(ctx.out("greedy.csv"), "greedy", ctx.cfg(), library_header(trace.str()));
  csv.append_body(trace.str());

  std::ostringstream curve;
  write_delta_csv(curve, delta_curve(g.basis, ctx.test_solutions()));
  Csv d(ctx.out("delta.csv"), "greedy", ctx.cfg(), library_header(curve.str()));
  d.append_body(curve.str());
}

void cmd_build(Context& ctx) {
  const auto& b = ctx.build();
  const auto& op = b.op;
  const auto& c = op.certificates();
  save_operator(op, ctx.out("operator"));
  {
    Csv csv(ctx.out("build.csv"), "build", ctx.cfg(),
            "N,M,K,epsilon,eps_it,z_bound,beta,beta_tilde,envelope,dual_norm,depth,size");
    csv.row() << c.n << ',' << c.m << ',' << c.k << ',' << c.epsilon << ',' << c.eps_it << ',' << c.z_bound << ','
              << c.beta << ',' << c.beta_tilde << ',' << c.envelope << ',' << c.dual_norm << ',' << c.depth << ','
              << c.size << '\n';
  }
  {
    Csv csv(ctx.out("attribution.csv"), "build", ctx.cfg(), "part,tag,layers,nonzeros");
    for (std::size_t i = 0; i < b.report.attribution.size(); ++i) {
      const auto& p = b.report.attribution[i];
      csv.row() << i << ',' << p.tag << ',' << p.layers << ',' << p.nonzeros << '\n';
    }
  }

  // Reduced Richardson iteration on fresh family members.
  const auto& cfg = ctx.cfg();
  const auto samples = sample_family(cfg.family, cfg.iteration_samples, cfg.seed + 3, cfg.domain);
  const double alpha = cfg.problem.alpha, beta = cfg.problem.beta, rate = beta / alpha;
  std::vector<double> contraction(samples.size());
  std::vector<IterationState> states(samples.size());
  std::vector<ReducedSystem> systems(samples.size());
  std::vector<Eigen::VectorXd> refs(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    systems[i] = op.assembler().system(samples[i]);
    contraction[i] = contraction_norm(systems[i]);
    refs[i] = direct_solve(systems[i]);
    states[i] = iterate(systems[i], cfg.iteration_steps, true);
  });
  std::size_t violations = 0;
  {
    Csv csv(ctx.out("contraction.csv"), "build", cfg, "sample,contraction,bound,ok");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const bool ok = contraction[i] <= rate + 1e-10;
      violations += !ok;
      csv.row() << i << ',' << contraction[i] << ',' << rate << ',' << ok << '\n';
    }
  }
  {
    Csv csv(ctx.out("convergence.csv"), "build", cfg, "sample,k,coeff_norm,energy_error,error_bound,ratio");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      double prev = 0.0;
      for (std::size_t k = 0; k < states[i].trajectory.size(); ++k) {
        const double e = reduced_energy_error(systems[i], states[i].trajectory[k], refs[i]);
        const double bound = std::pow(rate, double(k) + 1.0) * ctx.problem()->dual_norm() / (alpha - beta);
        auto& row = csv.row() << i << ',' << k << ',' << states[i].norms[k] << ',' << e << ',' << bound << ',';
        if (k > 0 && prev > 0.0) row << e / prev;
        row << '\n';
        prev = e;
      }
    }
  }
  if (violations)
    throw CertificateViolation(std::to_string(violations) + " samples exceed the contraction bound beta/alpha");
}


void cmd_eval(Context& ctx) {
  const auto& op = ctx.op();
  const auto& tests = ctx.tests();
  const auto& truth = ctx.test_solutions();
  std::vector<double> err(tests.size()), norm(tests.size());
  parallel_for(tests.size(), [&](std::size_t i) {
    err[i] = op.problem().energy_norm(truth[i] - op.evaluate(tests[i]));
    norm[i] = op.problem().energy_norm(truth[i]);
  });
  Csv csv(ctx.out("eval.csv"), "eval", ctx.cfg(), "index,energy_error,fine_norm,relative_error");
  for (std::size_t i = 0; i < tests.size(); ++i)
    csv.row() << i << ',' << err[i] << ',' << norm[i] << ',' << err[i] / norm[i] << '\n';
}

void cmd_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg();
  if (cfg.sweep_epsilon.empty() && cfg.sweep_n.empty())
    throw ConfigError("sweep needs sweep.epsilon or sweep.n");
  if (!cfg.sweep_epsilon.empty()) {
    const auto& op = ctx.build().op;
    const auto& c = op.certificates();
    Csv csv(ctx.out("sweep_epsilon.csv"), "sweep", cfg, "epsilon,K,eps_it,z_bound,depth,size");
    for (double eps : cfg.sweep_epsilon) {
      const auto app = build_phi_app(op.assembler(), op.encoder(), c.beta_tilde, c.dual_norm, eps);
      csv.row() << eps << ',' << app.report.k << ',' << app.report.eps_it << ',' << app.report.z_bound << ','
                << app.report.depth << ',' << app.report.size << '\n';
    }
  }
  if (!cfg.sweep_n.empty()) {
    Csv csv(ctx.out("sweep_n.csv"), "sweep", cfg, "N,delta,mean_rb,max_total,max_approx,depth,size");
    for (int n : cfg.sweep_n) {
      auto spec = cfg.operator_spec();
      spec.n = n;
      const auto b = build_operator(ctx.problem(), ctx.snapshots(), spec);
      const auto rows = error_decomposition(b.op, ctx.tests());
      double delta = 0.0, mean_rb = 0.0, max_total = 0.0, max_approx = 0.0;
      for (const auto& r : rows) {
        delta = std::max(delta, r.best);
        mean_rb += r.rb / static_cast<double>(rows.size());
        max_total = std::max(max_total, r.total);
        max_approx = std::max(max_approx, r.approx);
      }
      csv.row() << b.op.certificates().n << ',' << delta << ',' << mean_rb << ',' << max_total << ','
                << max_approx << ',' << b.op.certificates().depth << ',' << b.op.certificates().size << '\n';
    }
  }
}

void cmd_nncheck(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const auto& op = ctx.op();
  const double eps = op.certificates().epsilon;
  const auto inputs = sample_family(cfg.family, cfg.nncheck_samples, cfg.nncheck_seed, cfg.domain);
  const auto& qps = op.problem().space().quadrature();
  std::vector<double> err(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    const Eigen::VectorXd y = op.encode(inputs[i]);
    std::vector<double> s(qps.size());
    for (std::size_t q = 0; q < qps.size(); ++q) s[q] = op.encoder().reconstruct_at(y, qps[q].x);
    const auto sys = op.assembler().system(s);
    err[i] = reduced_energy_error(sys, op.coefficients(y), direct_solve(sys));
  });
  std::size_t violations = 0;
  Csv csv(ctx.out("nncheck.csv"), "nncheck", cfg, "index,error,epsilon,ok");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const bool ok = err[i] <= eps;
    violations += !ok;
    csv.row() << i << ',' << err[i] << ',' << eps << ',' << ok << '\n';
  }
  if (violations)
    throw CertificateViolation(std::to_string(violations) + " of " + std::to_string(inputs.size()) +
                               " network outputs exceed epsilon = " + num(eps));
}

void cmd_decompose(Context& ctx) {
  const auto& op = ctx.op();
  const auto rows = error_decomposition(op, ctx.tests());
  std::ostringstream body;
  write_error_csv(body, rows);
  Csv csv(ctx.out("decompose.csv"), "decompose", ctx.cfg(), library_header(body.str()));
  csv.append_body(body.str());
  const double eps = op.certificates().epsilon;
  std::size_t violations = 0;
  for (const auto& r : rows) violations += r.total > r.bound() + 1e-8 || r.approx > eps;
  if (violations)
    throw CertificateViolation(std::to_string(violations) + " test coefficients violate the error decomposition");
}

using Command = void (*)(Context&);

const std::vector<std::pair<std::string, Command>>& commands() {
  static const std::vector<std::pair<std::string, Command>> list{
      {"mesh", cmd_mesh},   {"snapshots", cmd_snapshots}, {"greedy", cmd_greedy},   {"build", cmd_build},
      {"eval", cmd_eval},   {"sweep", cmd_sweep},         {"nncheck", cmd_nncheck}, {"decompose", cmd_decompose}};
  return list;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& c : commands()) n.push_back(c.first);
    n.push_back("run");
    return n;
  }();
  return names;
}

void run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options) {
  Context ctx(config, options);
  if (command != "run") {
    for (const auto& [name, fn] : commands())
      if (name == command) return fn(ctx);
    throw ConfigError("unknown command '" + command + "'");
  }
  // Every stage runs; certificate violations are reported after all artifacts exist.
  std::vector<std::string> violations;
  for (const char* stage : {"mesh", "snapshots", "build", "greedy", "eval", "nncheck", "decompose", "sweep"}) {
    if (std::string(stage) == "sweep" && config.sweep_epsilon.empty() && config.sweep_n.empty()) continue;
    log(std::string("stage ") + stage);
    try {
      for (const auto& [name, fn] : commands())
        if (name == stage) fn(ctx);
    } catch (const CertificateViolation& e) {
      violations.push_back(std::string(stage) + ": " + e.what());
    }
  }
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
    throw CertificateViolation(msg);
  }
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 1;
  if (dynamic_cast<const CertificateViolation*>(&e)) return 3;
  return 2;
}

}  // namespace richop::cli
