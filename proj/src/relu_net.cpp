#include "richop/relu_net.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "richop/error.hpp"
#include "richop/parallel.hpp"

namespace richop {

NetLayer NetLayer::from_entries(int rows, int cols, std::vector<Entry> entries, Eigen::VectorXd bias,
                                std::string tag) {
  if (rows < 1 || cols < 1) throw InvalidArgument("net layer needs positive widths");
  if (bias.size() != rows) throw InvalidArgument("net layer: bias length mismatch");
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  NetLayer l;
  l.rows = rows;
  l.cols = cols;
  l.bias = std::move(bias);
  l.tag = std::move(tag);
  l.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  for (std::size_t k = 0; k < entries.size();) {
    const auto& e = entries[k];
    if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols)
      throw InvalidArgument("net layer: entry out of range");
    double v = 0.0;
    std::size_t j = k;
    for (; j < entries.size() && entries[j].row == e.row && entries[j].col == e.col; ++j) v += entries[j].val;
    if (v != 0.0) {
      l.col.push_back(e.col);
      l.val.push_back(v);
      ++l.row_ptr[static_cast<std::size_t>(e.row) + 1];
    }
    k = j;
  }
  for (int r = 0; r < rows; ++r) l.row_ptr[r + 1] += l.row_ptr[r];
  return l;
}

std::size_t NetLayer::weight_nonzeros() const { return val.size(); }

std::size_t NetLayer::bias_nonzeros() const {
  return static_cast<std::size_t>((bias.array() != 0.0).count());
}

void NetLayer::apply(std::span<const double> x, std::span<double> y) const {
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
    y[r] = acc + bias[r];
  }
}

NeuralNet::NeuralNet(std::vector<NetLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
  for (std::size_t l = 1; l < layers_.size(); ++l)
    if (layers_[l].cols != layers_[l - 1].rows) throw InvalidArgument("network: width chain mismatch");
}

std::size_t NeuralNet::size() const {
  std::size_t s = 0;
  for (const auto& l : layers_) s += l.weight_nonzeros() + l.bias_nonzeros();
  return s;
}

Eigen::VectorXd NeuralNet::realize(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim()) throw InvalidArgument("realize: input width mismatch");
  std::vector<double> cur(x.data(), x.data() + x.size()), next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    next.resize(static_cast<std::size_t>(layers_[l].rows));
    layers_[l].apply(cur, next);
    if (l + 1 < layers_.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur.swap(next);
  }
  return Eigen::Map<Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

std::vector<Eigen::VectorXd> NeuralNet::realize_batch(const std::vector<Eigen::VectorXd>& xs) const {
  std::vector<Eigen::VectorXd> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { out[i] = realize(xs[i]); });
  return out;
}

namespace {

std::vector<NetLayer::Entry> entries_of(const NetLayer& l, int row_offset = 0, int col_offset = 0) {
  std::vector<NetLayer::Entry> e;
  e.reserve(l.val.size());
  for (int r = 0; r < l.rows; ++r)
    for (auto k = l.row_ptr[r]; k < l.row_ptr[r + 1]; ++k)
      e.push_back({r + row_offset, l.col[k] + col_offset, l.val[k]});
  return e;
}

NeuralNet retag(NeuralNet net, const std::string& tag) {
  auto layers = net.layers();
  for (auto& l : layers) l.tag = tag;
  return NeuralNet(std::move(layers));
}

}  // namespace

NeuralNet affine_net(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::string& tag) {
  std::vector<NetLayer::Entry> e;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if (a(r, c) != 0.0) e.push_back({static_cast<std::int32_t>(r), static_cast<std::int32_t>(c), a(r, c)});
  return NeuralNet({NetLayer::from_entries(static_cast<int>(a.rows()), static_cast<int>(a.cols()),
                                           std::move(e), b, tag)});
}

NeuralNet identity_net(int n, int depth) {
  if (n < 1 || depth < 1) throw InvalidArgument("identity net needs n >= 1 and depth >= 1");
  if (depth == 1) {
    std::vector<NetLayer::Entry> e;
    for (int j = 0; j < n; ++j) e.push_back({j, j, 1.0});
    return NeuralNet({NetLayer::from_entries(n, n, std::move(e), Eigen::VectorXd::Zero(n), "identity")});
  }
  std::vector<NetLayer> layers;
  std::vector<NetLayer::Entry> first, last;
  for (int j = 0; j < n; ++j) {
    first.push_back({2 * j, j, 1.0});
    first.push_back({2 * j + 1, j, -1.0});
    last.push_back({j, 2 * j, 1.0});
    last.push_back({j, 2 * j + 1, -1.0});
  }
  layers.push_back(NetLayer::from_entries(2 * n, n, first, Eigen::VectorXd::Zero(2 * n), "identity"));
  for (int l = 0; l < depth - 2; ++l) {
    std::vector<NetLayer::Entry> mid;
    for (int j = 0; j < 2 * n; ++j) mid.push_back({j, j, 1.0});
    layers.push_back(NetLayer::from_entries(2 * n, 2 * n, mid, Eigen::VectorXd::Zero(2 * n), "identity"));
  }
  layers.push_back(NetLayer::from_entries(n, 2 * n, last, Eigen::VectorXd::Zero(n), "identity"));
  return NeuralNet(std::move(layers));
}

NeuralNet sparse_concat(const NeuralNet& outer, const NeuralNet& inner) {
  if (inner.output_dim() != outer.input_dim()) throw InvalidArgument("sparse_concat: width mismatch");
  const int d = inner.output_dim();
  std::vector<NetLayer> layers(inner.layers().begin(), inner.layers().end() - 1);

  const NetLayer& il = inner.layers().back();
  std::vector<NetLayer::Entry> split;
  for (const auto& e : entries_of(il)) {
    split.push_back({2 * e.row, e.col, e.val});
    split.push_back({2 * e.row + 1, e.col, -e.val});
  }
  Eigen::VectorXd sb(2 * d);
  for (int j = 0; j < d; ++j) {
    sb[2 * j] = il.bias[j];
    sb[2 * j + 1] = -il.bias[j];
  }
  layers.push_back(NetLayer::from_entries(2 * d, il.cols, std::move(split), sb, il.tag));

  const NetLayer& ol = outer.layers().front();
  std::vector<NetLayer::Entry> merge;
  for (const auto& e : entries_of(ol)) {
    merge.push_back({e.row, 2 * e.col, e.val});
    merge.push_back({e.row, 2 * e.col + 1, -e.val});
  }
  layers.push_back(NetLayer::from_entries(ol.rows, 2 * d, std::move(merge), ol.bias, ol.tag));
  layers.insert(layers.end(), outer.layers().begin() + 1, outer.layers().end());
  return NeuralNet(std::move(layers));
}

NeuralNet parallel_shared(const std::vector<NeuralNet>& nets) {
  if (nets.empty()) throw InvalidArgument("parallel_shared needs at least one net");
  const int depth = nets.front().depth(), in = nets.front().input_dim();
  for (const auto& n : nets)
    if (n.depth() != depth || n.input_dim() != in)
      throw InvalidArgument("parallel_shared: nets differ in depth or input width");
  std::vector<NetLayer> layers;
  for (int l = 0; l < depth; ++l) {
    std::vector<NetLayer::Entry> e;
    int rows = 0, cols = 0;
    for (const auto& n : nets) {
      const auto& nl = n.layers()[l];
      rows += nl.rows;
      if (l > 0) cols += nl.cols;
    }
    if (l == 0) cols = in;
    Eigen::VectorXd b(rows);
    int ro = 0, co = 0;
    for (const auto& n : nets) {
      const auto& nl = n.layers()[l];
      const auto part = entries_of(nl, ro, l == 0 ? 0 : co);
      e.insert(e.end(), part.begin(), part.end());
      b.segment(ro, nl.rows) = nl.bias;
      ro += nl.rows;
      co += nl.cols;
    }
    layers.push_back(NetLayer::from_entries(rows, cols, std::move(e), b, nets.front().layers()[l].tag));
  }
  return NeuralNet(std::move(layers));
}

int product_levels(double eps, double z) {
  if (!(eps > 0.0 && eps < 1.0) || !(z >= 1.0)) throw InvalidArgument("product net needs eps in (0,1), Z >= 1");
  // Z^2 4^{-m-1} <= eps / 2
  const double m = std::log(2.0 * z * z / eps) / std::log(4.0) - 1.0;
  return std::max(1, static_cast<int>(std::ceil(m)));
}

NeuralNet product_net(double eps, double z) {
  const int m = product_levels(eps, z);
  const double c = 1.0 / (2.0 * z);
  // Hidden unit of type t (T, S, h1, h2, h3) in branch b (0: x+y, 1: x-y).
  auto u = [](int t, int b) { return 2 * t + b; };
  enum { T = 0, S = 1, H1 = 2, H2 = 3, H3 = 4 };
  std::vector<NetLayer> layers;

  std::vector<NetLayer::Entry> e1;
  for (int b = 0; b < 2; ++b) {
    const double s = b == 0 ? 1.0 : -1.0;
    e1.push_back({2 * b, 0, c});
    e1.push_back({2 * b, 1, s * c});
    e1.push_back({2 * b + 1, 0, -c});
    e1.push_back({2 * b + 1, 1, -s * c});
  }
  layers.push_back(NetLayer::from_entries(4, 2, e1, Eigen::VectorXd::Zero(4), "product"));

  Eigen::VectorXd hb = Eigen::VectorXd::Zero(10);
  for (int b = 0; b < 2; ++b) {
    hb[u(H2, b)] = -0.5;
    hb[u(H3, b)] = -1.0;
  }
  std::vector<NetLayer::Entry> e2;
  for (int b = 0; b < 2; ++b)
    for (int t : {T, H1, H2, H3}) {
      e2.push_back({u(t, b), 2 * b, 1.0});
      e2.push_back({u(t, b), 2 * b + 1, 1.0});
    }
  layers.push_back(NetLayer::from_entries(10, 4, e2, hb, "product"));

  // Layer j + 1 from layer j: g = 2 h1 - 4 h2 + 2 h3 is the next sawtooth level.
  double scale = 0.25;
  for (int j = 2; j <= m; ++j) {
    std::vector<NetLayer::Entry> e;
    for (int b = 0; b < 2; ++b) {
      e.push_back({u(T, b), u(T, b), 1.0});
      e.push_back({u(S, b), u(S, b), 1.0});
      e.push_back({u(S, b), u(H1, b), 2.0 * scale});
      e.push_back({u(S, b), u(H2, b), -4.0 * scale});
      e.push_back({u(S, b), u(H3, b), 2.0 * scale});
      for (int t : {H1, H2, H3}) {
        e.push_back({u(t, b), u(H1, b), 2.0});
        e.push_back({u(t, b), u(H2, b), -4.0});
        e.push_back({u(t, b), u(H3, b), 2.0});
      }
    }
    layers.push_back(NetLayer::from_entries(10, 10, e, hb, "product"));
    scale *= 0.25;
  }

  // xy ~ Z^2 (f+ - f-), f = T - S - g_m / 4^m; columns alternate between branches.
  const double z2 = z * z;
  std::vector<NetLayer::Entry> eo;
  for (int b = 0; b < 2; ++b) {
    const double s = b == 0 ? z2 : -z2;
    eo.push_back({0, u(T, b), s});
    eo.push_back({0, u(S, b), -s});
    eo.push_back({0, u(H1, b), -2.0 * scale * s});
    eo.push_back({0, u(H2, b), 4.0 * scale * s});
    eo.push_back({0, u(H3, b), -2.0 * scale * s});
  }
  layers.push_back(NetLayer::from_entries(1, 10, eo, Eigen::VectorXd::Zero(1), "product"));
  return NeuralNet(std::move(layers));
}

NeuralNet matvec_net(int n, double eps, double z) {
  if (n < 1) throw InvalidArgument("matvec net needs n >= 1");
  const NeuralNet p = product_net(eps / std::pow(double(n), 1.5), z);
  const int nn = n * n, in = nn + n, copies = nn;
  std::vector<NetLayer> layers;
  for (int l = 0; l < p.depth(); ++l) {
    const NetLayer& pl = p.layers()[l];
    const bool first = l == 0, last = l + 1 == p.depth();
    const int rows = last ? n : copies * pl.rows;
    const int cols = first ? in : copies * pl.cols;
    std::vector<NetLayer::Entry> e;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    // Copy (i, j) multiplies A_ij = input[i + j n] by x_j = input[n^2 + j].
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int c = i + j * n;
        for (const auto& pe : entries_of(pl)) {
          const int row = last ? i : c * pl.rows + pe.row;
          const int col = first ? (pe.col == 0 ? c : nn + j) : c * pl.cols + pe.col;
          e.push_back({row, col, pe.val});
        }
        if (last)
          b[i] += pl.bias[0];
        else
          b.segment(c * pl.rows, pl.rows) = pl.bias;
      }
    layers.push_back(NetLayer::from_entries(rows, cols, std::move(e), b, "matvec"));
  }
  return NeuralNet(std::move(layers));
}

NeuralNet build_phi_step(int n, double z_tilde, double eps_it, const Eigen::VectorXd& g, bool carry) {
  if (g.size() != n) throw InvalidArgument("phi_step: bias length mismatch");
  NeuralNet mv = matvec_net(n, eps_it, z_tilde);
  auto layers = mv.layers();
  layers.back().bias += g;
  NeuralNet step(std::move(layers));
  if (!carry) return retag(std::move(step), "step");
  // Identity channels for vec(A) next to the step.
  const int nn = n * n;
  auto id = identity_net(nn, step.depth()).layers();
  id.front().cols = nn + n;
  return retag(parallel_shared({NeuralNet(std::move(id)), step}), "step");
}

std::vector<Eigen::MatrixXd> channel_tensors(const ReducedAssembler& assembler, const Encoder& encoder) {
  const auto& qps = assembler.quadrature();
  std::vector<std::vector<std::pair<std::size_t, double>>> per(encoder.size());
  std::vector<std::int32_t> ch;
  std::vector<double> val;
  for (std::size_t q = 0; q < qps.size(); ++q) {
    encoder.basis_at(qps[q].x, ch, val);
    for (std::size_t k = 0; k < ch.size(); ++k)
      if (val[k] != 0.0) per[static_cast<std::size_t>(ch[k])].emplace_back(q, val[k]);
  }
  std::vector<Eigen::MatrixXd> d(encoder.size());
  parallel_for(encoder.size(), [&](std::size_t k) { d[k] = assembler.assemble_sparse(per[k]); });
  return d;
}

NeuralNet build_phi_input(const ReducedAssembler& assembler, const Encoder& encoder) {
  const auto d = channel_tensors(assembler, encoder);
  const int n = static_cast<int>(assembler.size()), nn = n * n;
  const int mm = static_cast<int>(encoder.size());
  std::vector<NetLayer::Entry> e;
  for (int k = 0; k < mm; ++k) {
    const Eigen::MatrixXd w = -assembler.chol_b_a0().solve(d[k]) / assembler.alpha();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (w(i, j) != 0.0) e.push_back({i + j * n, k, w(i, j)});
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nn);
  for (int i = 0; i < n; ++i) b[i + i * n] = 1.0;
  return NeuralNet({NetLayer::from_entries(nn, mm, std::move(e), b, "input")});
}

NetBuildReport recount(const NeuralNet& net) {
  NetBuildReport r;
  r.depth = net.depth();
  r.size = net.size();
  for (const auto& l : net.layers()) {
    if (r.attribution.empty() || r.attribution.back().tag != l.tag) r.attribution.push_back({l.tag, 0, 0});
    ++r.attribution.back().layers;
    r.attribution.back().nonzeros += l.weight_nonzeros() + l.bias_nonzeros();
  }
  return r;
}

Eigen::VectorXd PhiIt::realize_recurrent(const Eigen::VectorXd& vec_a) const {
  if (k == 0) return init.realize(vec_a);
  Eigen::VectorXd x = init.realize(vec_a);
  for (int j = 0; j + 1 < k; ++j) x = step_carry.realize(x);
  return step_final.realize(x);
}

PhiIt build_phi_it(int n, int k, double eps, double alpha, double beta, const Eigen::VectorXd& g) {
  if (n < 1 || k < 0) throw InvalidArgument("phi_it needs n >= 1 and K >= 0");
  if (!(alpha > 0.0) || !(beta >= 0.0) || !(beta < alpha)) throw InvalidArgument("phi_it needs 0 <= beta < alpha");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("phi_it needs eps in (0, 1)");
  PhiIt it;
  it.k = k;
  it.z_tilde = 2.0 + alpha / (alpha - beta);
  it.eps_it = (1.0 - beta / alpha) * eps;
  const int nn = n * n;
  if (k == 0) {
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(n);
    e1[0] = 1.0;
    it.init = affine_net(Eigen::MatrixXd::Zero(n, nn), e1, "init");
    it.net = it.init;
    return it;
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nn + n, nn);
  a.topRows(nn).setIdentity();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nn + n);
  b[nn] = 1.0;
  it.init = affine_net(a, b, "init");
  it.step_carry = build_phi_step(n, it.z_tilde, it.eps_it, g, true);
  it.step_final = build_phi_step(n, it.z_tilde, it.eps_it, g, false);
  it.net = it.init;
  for (int j = 1; j <= k; ++j)
    it.net = sparse_concat(retag(j < k ? it.step_carry : it.step_final, "step " + std::to_string(j)), it.net);
  return it;
}

PhiApp build_phi_app(const ReducedAssembler& assembler, const Encoder& encoder, double beta,
                     double f_dual_norm, double eps) {
  if (assembler.frame() != Frame::scaled)
    throw InvalidArgument("phi_app is certified in the scaled frame only");
  const double alpha = assembler.alpha();
  const int n = static_cast<int>(assembler.size());
  const int k = choose_K(alpha, beta, f_dual_norm, eps);
  const double eps_target = (alpha - beta) * eps / (2.0 * std::sqrt(double(n)) * f_dual_norm);
  PhiApp app;
  app.it = build_phi_it(n, k, std::min(eps_target, 0.5), alpha, beta, assembler.g());
  app.input = build_phi_input(assembler, encoder);
  app.net = sparse_concat(app.it.net, app.input);
  app.report = recount(app.net);
  app.report.epsilon = eps;
  app.report.z_bound = app.it.z_tilde;
  app.report.n = n;
  app.report.m = static_cast<int>(encoder.size());
  app.report.k = k;
  app.report.eps_it = app.it.eps_it;
  app.report.beta = beta;
  return app;
}

namespace {

using nlohmann::json;

json report_json(const NetBuildReport& r) {
  json parts = json::array();
  for (const auto& p : r.attribution) parts.push_back({{"tag", p.tag}, {"layers", p.layers}, {"nonzeros", p.nonzeros}});
  return {{"depth", r.depth}, {"size", r.size},       {"attribution", parts}, {"epsilon", r.epsilon},
          {"z_bound", r.z_bound}, {"n", r.n},          {"m", r.m},             {"k", r.k},
          {"eps_it", r.eps_it}, {"beta", r.beta}};
}

NetBuildReport report_from(const json& j) {
  NetBuildReport r;
  r.depth = j.at("depth").get<int>();
  r.size = j.at("size").get<std::size_t>();
  for (const auto& p : j.at("attribution"))
    r.attribution.push_back({p.at("tag").get<std::string>(), p.at("layers").get<int>(),
                             p.at("nonzeros").get<std::size_t>()});
  r.epsilon = j.at("epsilon").get<double>();
  r.z_bound = j.at("z_bound").get<double>();
  r.n = j.at("n").get<int>();
  r.m = j.at("m").get<int>();
  r.k = j.at("k").get<int>();
  r.eps_it = j.at("eps_it").get<double>();
  r.beta = j.at("beta").get<double>();
  return r;
}

}  // namespace

void write_net_json(std::ostream& os, const NeuralNet& net, const NetBuildReport* report) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& nl = net.layers()[l];
    json w = json::array(), b = json::array();
    for (const auto& e : entries_of(nl)) w.push_back({e.row, e.col, e.val});
    for (int i = 0; i < nl.rows; ++i)
      if (nl.bias[i] != 0.0) b.push_back({i, nl.bias[i]});
    layers.push_back({{"rows", nl.rows},
                      {"cols", nl.cols},
                      {"tag", nl.tag},
                      {"activation", l + 1 < net.layers().size() ? "relu" : "none"},
                      {"weights", w},
                      {"bias", b}});
  }
  json doc{{"format", "richop-relu-net"}, {"layers", layers}};
  if (report) doc["report"] = report_json(*report);
  os << doc.dump() << '\n';
}

NeuralNet read_net_json(std::istream& is, NetBuildReport* report) {
  json doc;
  try {
    doc = json::parse(is);
    if (doc.at("format") != "richop-relu-net") throw ConfigError("not a network file");
    std::vector<NetLayer> layers;
    const auto& ls = doc.at("layers");
    for (std::size_t l = 0; l < ls.size(); ++l) {
      const auto& j = ls[l];
      const std::string act = j.at("activation").get<std::string>();
      if (act != (l + 1 < ls.size() ? "relu" : "none")) throw ConfigError("unsupported activation '" + act + "'");
      const int rows = j.at("rows").get<int>(), cols = j.at("cols").get<int>();
      std::vector<NetLayer::Entry> e;
      for (const auto& w : j.at("weights"))
        e.push_back({w.at(0).get<std::int32_t>(), w.at(1).get<std::int32_t>(), w.at(2).get<double>()});
      Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
      for (const auto& bi : j.at("bias")) {
        const int i = bi.at(0).get<int>();
        if (i < 0 || i >= rows) throw ConfigError("bias index out of range");
        b[i] = bi.at(1).get<double>();
      }
      layers.push_back(NetLayer::from_entries(rows, cols, std::move(e), b, j.at("tag").get<std::string>()));
    }
    if (report && doc.contains("report")) *report = report_from(doc.at("report"));
    return NeuralNet(std::move(layers));
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("network json: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("network json: ") + ex.what());
  }
}

}  // namespace richop
