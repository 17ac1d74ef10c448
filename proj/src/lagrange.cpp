#include "richop/lagrange.hpp"

#include <algorithm>
#include <map>

#include "richop/error.hpp"

namespace richop {

LagrangeLayout LagrangeLayout::build(const Mesh& mesh, int degree) {
  if (degree != 1 && degree != 2) throw InvalidArgument("Lagrange degree must be 1 or 2");
  LagrangeLayout L;
  L.degree = degree;
  L.dof_coords = mesh.nodes;
  L.element_dofs.resize(mesh.triangles.size());
  std::map<Edge, std::int32_t> edge_id;
  if (degree == 2) {
    const auto edges = mesh.edges();
    for (const auto& e : edges) {
      edge_id.emplace(e, static_cast<std::int32_t>(L.dof_coords.size()));
      L.dof_coords.push_back(midpoint(mesh.nodes[e[0]], mesh.nodes[e[1]]));
    }
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    auto& d = L.element_dofs[t];
    d.fill(-1);
    for (int k = 0; k < 3; ++k) d[k] = tri[k];
    if (degree == 2)
      for (int k = 0; k < 3; ++k) {
        const auto a = tri[k], b = tri[(k + 1) % 3];
        d[3 + k] = edge_id.at({std::min(a, b), std::max(a, b)});
      }
  }
  return L;
}

void lagrange_values(int degree, const std::array<double, 3>& l, std::span<double> out) {
  if (degree == 1) {
    out[0] = l[0];
    out[1] = l[1];
    out[2] = l[2];
    return;
  }
  for (int k = 0; k < 3; ++k) out[k] = l[k] * (2.0 * l[k] - 1.0);
  out[3] = 4.0 * l[0] * l[1];
  out[4] = 4.0 * l[1] * l[2];
  out[5] = 4.0 * l[2] * l[0];
}

void lagrange_gradients(int degree, const std::array<double, 3>& l,
                        const std::array<Point, 3>& g, std::span<Point> out) {
  if (degree == 1) {
    out[0] = g[0];
    out[1] = g[1];
    out[2] = g[2];
    return;
  }
  for (int k = 0; k < 3; ++k) out[k] = (4.0 * l[k] - 1.0) * g[k];
  out[3] = 4.0 * (l[0] * g[1] + l[1] * g[0]);
  out[4] = 4.0 * (l[1] * g[2] + l[2] * g[1]);
  out[5] = 4.0 * (l[2] * g[0] + l[0] * g[2]);
}

std::array<Point, 3> barycentric_gradients(const std::array<Point, 3>& t) {
  const double det = orient2d(t[0], t[1], t[2]);
  // grad(lambda_i) = rot90(t_{i+2} - t_{i+1}) / det
  std::array<Point, 3> g;
  for (int i = 0; i < 3; ++i) {
    const Point e = t[(i + 2) % 3] - t[(i + 1) % 3];
    g[i] = {-e.y / det, e.x / det};
  }
  return g;
}

namespace {

void add_sym3(TriangleRule& r, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  r.points.push_back({a, a, b});
  r.points.push_back({a, b, a});
  r.points.push_back({b, a, a});
  r.weights.insert(r.weights.end(), 3, w);
}

void add_sym6(TriangleRule& r, double a, double b, double w) {
  const double c = 1.0 - a - b;
  r.points.push_back({a, b, c});
  r.points.push_back({a, c, b});
  r.points.push_back({b, a, c});
  r.points.push_back({b, c, a});
  r.points.push_back({c, a, b});
  r.points.push_back({c, b, a});
  r.weights.insert(r.weights.end(), 6, w);
}

// Dunavant's symmetric rules, renormalised so the weights sum to one exactly.
TriangleRule make_rule(int degree) {
  TriangleRule r;
  switch (degree) {
    case 1:
      r.points.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weights.push_back(1.0);
      break;
    case 2:
      add_sym3(r, 1.0 / 6, 1.0 / 3);
      break;
    case 4:
      add_sym3(r, 0.445948490915965, 0.223381589678011);
      add_sym3(r, 0.091576213509771, 0.109951743655322);
      break;
    case 6:
      add_sym3(r, 0.249286745170910, 0.116786275726379);
      add_sym3(r, 0.063089014491502, 0.050844906370207);
      add_sym6(r, 0.053145049844817, 0.310352451033784, 0.082851075618374);
      break;
    case 8:
      r.points.push_back({1.0 / 3, 1.0 / 3, 1.0 / 3});
      r.weights.push_back(0.144315607677787);
      add_sym3(r, 0.459292588292723, 0.095091634267285);
      add_sym3(r, 0.170569307751760, 0.103217370534718);
      add_sym3(r, 0.050547228317031, 0.032458497623198);
      add_sym6(r, 0.008394777409958, 0.263112829634638, 0.027230314174435);
      break;
    default:
      throw InvalidArgument("unsupported triangle quadrature degree");
  }
  double s = 0.0;
  for (double w : r.weights) s += w;
  for (double& w : r.weights) w /= s;
  return r;
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
  static const TriangleRule r1 = make_rule(1), r2 = make_rule(2), r4 = make_rule(4),
                            r6 = make_rule(6), r8 = make_rule(8);
  switch (degree) {
    case 1: return r1;
    case 2: return r2;
    case 4: return r4;
    case 6: return r6;
    case 8: return r8;
    default: throw InvalidArgument("unsupported triangle quadrature degree");
  }
}

}  // namespace richop

namespace richop {

LagrangeSpace::LagrangeSpace(std::shared_ptr<const Mesh> mesh, int degree)
    : mesh_(std::move(mesh)), layout_(LagrangeLayout::build(*mesh_, degree)), locator_(*mesh_) {}

int LagrangeSpace::basis_at(Point p, std::array<std::int32_t, 6>& dofs,
                            std::array<double, 6>& values) const {
  const auto hit = locator_.locate(p);
  if (!hit) throw NumericalError("point outside the mesh");
  const int n = layout_.dofs_per_element();
  const auto& ed = layout_.element_dofs[hit->triangle];
  for (int k = 0; k < n; ++k) dofs[k] = ed[k];
  lagrange_values(layout_.degree, hit->bary, std::span<double>(values.data(), n));
  return n;
}

double LagrangeSpace::evaluate(std::span<const double> dof_values, Point p) const {
  std::array<std::int32_t, 6> dofs;
  std::array<double, 6> vals;
  const int n = basis_at(p, dofs, vals);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += vals[k] * dof_values[dofs[k]];
  return s;
}

}  // namespace richop
