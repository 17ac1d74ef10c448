#include "richop/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "richop/error.hpp"

namespace richop {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double orient2d(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

namespace {

bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = orient2d(q1, q2, p1);
  const double d2 = orient2d(q1, q2, p2);
  const double d3 = orient2d(p1, p2, q1);
  const double d4 = orient2d(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  auto on_seg = [](Point a, Point b, Point p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
  };
  if (d1 == 0 && on_seg(q1, q2, p1)) return true;
  if (d2 == 0 && on_seg(q1, q2, p2)) return true;
  if (d3 == 0 && on_seg(p1, p2, q1)) return true;
  if (d4 == 0 && on_seg(p1, p2, q2)) return true;
  return false;
}

double point_segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = len2 > 0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + t * ab);
}

double point_triangle_distance(Point p, const std::array<Point, 3>& t) {
  const auto b = barycentric(t, p);
  if (b[0] >= 0 && b[1] >= 0 && b[2] >= 0) return 0.0;
  return std::min({point_segment_distance(p, t[0], t[1]), point_segment_distance(p, t[1], t[2]),
                   point_segment_distance(p, t[2], t[0])});
}

}  // namespace

// --- Polygon ---------------------------------------------------------------

Polygon::Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw InvalidArgument("polygon needs at least 3 vertices");
  for (const auto& v : vertices_)
    if (!std::isfinite(v.x) || !std::isfinite(v.y))
      throw InvalidArgument("polygon vertex is not finite");
  double a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = vertices_[i], q = vertices_[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  if (!(std::abs(a) > 0.0)) throw InvalidArgument("degenerate polygon (zero area)");
  if (a < 0) std::reverse(vertices_.begin(), vertices_.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Point p1 = vertices_[i], p2 = vertices_[(i + 1) % n];
      const Point q1 = vertices_[j], q2 = vertices_[(j + 1) % n];
      if (adjacent) {
        // adjacent edges may only share their common endpoint
        const Point shared = (j == i + 1) ? p2 : p1;
        const Point other_p = (j == i + 1) ? p1 : p2;
        const Point other_q = (j == i + 1) ? q2 : q1;
        if (orient2d(other_p, shared, other_q) == 0.0) {
          const Point d1 = other_p - shared, d2 = other_q - shared;
          if (d1.x * d2.x + d1.y * d2.y > 0) throw InvalidArgument("polygon folds back on itself");
        }
        continue;
      }
      if (segments_intersect(p1, p2, q1, q2))
        throw InvalidArgument("polygon is not simple (edges intersect)");
    }
  }
}

Polygon Polygon::rectangle(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

Polygon Polygon::l_shape() {
  return Polygon({{-1, -1}, {0, -1}, {0, 0}, {1, 0}, {1, 1}, {-1, 1}});
}

double Polygon::area() const {
  double a = 0.0;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = vertices_[i], q = vertices_[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

bool Polygon::contains(Point p) const {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i)
    if (point_segment_distance(p, vertices_[i], vertices_[(i + 1) % n]) <= 1e-14) return true;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = vertices_[i], b = vertices_[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
      inside = !inside;
  }
  return inside;
}

bool Polygon::is_rectilinear() const {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point p = vertices_[i], q = vertices_[(i + 1) % n];
    if (p.x != q.x && p.y != q.y) return false;
  }
  return true;
}

std::vector<Point> Polygon::reentrant_corners() const {
  std::vector<Point> out;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point prev = vertices_[(i + n - 1) % n], cur = vertices_[i], next = vertices_[(i + 1) % n];
    if (orient2d(prev, cur, next) < 0) out.push_back(cur);
  }
  return out;
}

// --- Mesh ------------------------------------------------------------------

Mesh Mesh::from_triangles(std::vector<Point> nodes, std::vector<Triangle> triangles) {
  Mesh m;
  m.nodes = std::move(nodes);
  m.triangles = std::move(triangles);
  const auto nn = static_cast<std::int32_t>(m.nodes.size());
  std::map<Edge, int> edge_count;
  for (auto& t : m.triangles) {
    for (auto i : t)
      if (i < 0 || i >= nn) throw InvalidArgument("triangle references missing node");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw InvalidArgument("triangle with repeated vertex");
    const double o = orient2d(m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]);
    if (o == 0.0) throw InvalidArgument("degenerate triangle");
    if (o < 0) std::swap(t[1], t[2]);
    for (int k = 0; k < 3; ++k) {
      const std::int32_t a = t[k], b = t[(k + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<bool> on_boundary(m.nodes.size(), false);
  for (const auto& [e, c] : edge_count) {
    if (c > 2) throw InvalidArgument("edge shared by more than two triangles");
    if (c == 1) {
      m.boundary_edges.push_back(e);
      on_boundary[e[0]] = on_boundary[e[1]] = true;
    }
  }
  for (std::int32_t i = 0; i < nn; ++i)
    if (on_boundary[i]) m.boundary_nodes.push_back(i);
  return m;
}

std::vector<bool> Mesh::boundary_mask() const {
  std::vector<bool> mask(nodes.size(), false);
  for (auto i : boundary_nodes) mask[i] = true;
  return mask;
}

double Mesh::area(std::size_t t) const {
  const auto v = vertices(t);
  return 0.5 * orient2d(v[0], v[1], v[2]);
}

double Mesh::diameter(std::size_t t) const {
  const auto v = vertices(t);
  return std::max({distance(v[0], v[1]), distance(v[1], v[2]), distance(v[2], v[0])});
}

double Mesh::max_diameter() const {
  double h = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) h = std::max(h, diameter(t));
  return h;
}

double Mesh::min_diameter() const {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < triangles.size(); ++t) h = std::min(h, diameter(t));
  return h;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += area(t);
  return a;
}

std::vector<Edge> Mesh::edges() const {
  std::vector<Edge> out;
  out.reserve(triangles.size() * 3);
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k) {
      const std::int32_t a = t[k], b = t[(k + 1) % 3];
      out.push_back({std::min(a, b), std::max(a, b)});
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::array<double, 3> barycentric(const std::array<Point, 3>& tri, Point p) {
  const double det = orient2d(tri[0], tri[1], tri[2]);
  const double l1 = orient2d(p, tri[1], tri[2]) / det;
  const double l2 = orient2d(tri[0], p, tri[2]) / det;
  return {l1, l2, 1.0 - l1 - l2};
}

// --- Triangulation ---------------------------------------------------------

namespace {

std::vector<double> subdivide(std::vector<double> coords, double step) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < coords.size(); ++i) {
    const double a = coords[i], b = coords[i + 1];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / step - 1e-12)));
    for (int k = 0; k < n; ++k) out.push_back(k == 0 ? a : a + (b - a) * k / n);
  }
  out.push_back(coords.back());
  return out;
}

// Tensor grid over the polygon's vertex coordinates; cells inside the polygon
// are split along one diagonal.
Mesh triangulate_rectilinear(const Polygon& polygon, double h) {
  std::vector<double> xs, ys;
  for (const auto& v : polygon.vertices()) {
    xs.push_back(v.x);
    ys.push_back(v.y);
  }
  // a cell of size s x s split along its diagonal has diameter s*sqrt(2)
  const double step = h / std::sqrt(2.0);
  const auto gx = subdivide(xs, step);
  const auto gy = subdivide(ys, step);
  const std::size_t nx = gx.size(), ny = gy.size();
  std::vector<std::int32_t> id(nx * ny, -1);
  std::vector<Point> nodes;
  std::vector<Triangle> tris;
  auto node = [&](std::size_t i, std::size_t j) {
    auto& slot = id[j * nx + i];
    if (slot < 0) {
      slot = static_cast<std::int32_t>(nodes.size());
      nodes.push_back({gx[i], gy[j]});
    }
    return slot;
  };
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const Point c{0.5 * (gx[i] + gx[i + 1]), 0.5 * (gy[j] + gy[j + 1])};
      if (!polygon.contains(c)) continue;
      const auto a = node(i, j), b = node(i + 1, j), cc = node(i + 1, j + 1), d = node(i, j + 1);
      tris.push_back({a, b, cc});
      tris.push_back({a, cc, d});
    }
  return Mesh::from_triangles(std::move(nodes), std::move(tris));
}

Mesh ear_clip(const Polygon& polygon) {
  const auto& v = polygon.vertices();
  std::vector<std::int32_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = static_cast<std::int32_t>(i);
  std::vector<Triangle> tris;
  while (idx.size() > 3) {
    bool clipped = false;
    const std::size_t n = idx.size();
    for (std::size_t i = 0; i < n && !clipped; ++i) {
      const auto a = idx[(i + n - 1) % n], b = idx[i], c = idx[(i + 1) % n];
      if (orient2d(v[a], v[b], v[c]) <= 0) continue;
      bool ear = true;
      for (auto k : idx) {
        if (k == a || k == b || k == c) continue;
        const auto bc = barycentric({v[a], v[b], v[c]}, v[k]);
        if (bc[0] >= -1e-14 && bc[1] >= -1e-14 && bc[2] >= -1e-14) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({a, b, c});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
    }
    if (!clipped) throw InvalidArgument("ear clipping failed: polygon not simple");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return Mesh::from_triangles(v, std::move(tris));
}

}  // namespace

Mesh triangulate(const Polygon& polygon, double h_target) {
  if (!(h_target > 0.0) || !std::isfinite(h_target))
    throw InvalidArgument("triangulate: h_target must be positive");
  if (polygon.is_rectilinear()) return triangulate_rectilinear(polygon, h_target);
  Mesh m = ear_clip(polygon);
  while (m.max_diameter() > h_target) m = refine_uniform(m);
  return m;
}

Mesh refine_uniform(const Mesh& mesh) {
  std::vector<Point> nodes = mesh.nodes;
  std::map<Edge, std::int32_t> mid;
  auto midpoint_node = [&](std::int32_t a, std::int32_t b) {
    const Edge e{std::min(a, b), std::max(a, b)};
    auto [it, inserted] = mid.try_emplace(e, static_cast<std::int32_t>(nodes.size()));
    if (inserted) nodes.push_back(midpoint(mesh.nodes[e[0]], mesh.nodes[e[1]]));
    return it->second;
  };
  std::vector<Triangle> tris;
  tris.reserve(mesh.triangles.size() * 4);
  for (const auto& t : mesh.triangles) {
    const auto ab = midpoint_node(t[0], t[1]);
    const auto bc = midpoint_node(t[1], t[2]);
    const auto ca = midpoint_node(t[2], t[0]);
    tris.push_back({t[0], ab, ca});
    tris.push_back({ab, t[1], bc});
    tris.push_back({ca, bc, t[2]});
    tris.push_back({ab, bc, ca});
  }
  return Mesh::from_triangles(std::move(nodes), std::move(tris));
}

namespace {

// Index (0..2) of the local edge (k, k+1) with the largest length; ties go to
// the edge with the lexicographically smallest sorted node pair so that both
// neighbours of an edge agree.
int longest_edge(const Mesh& m, const Triangle& t) {
  int best = 0;
  double best_len = -1.0;
  Edge best_key{};
  for (int k = 0; k < 3; ++k) {
    const auto a = t[k], b = t[(k + 1) % 3];
    const double len = distance(m.nodes[a], m.nodes[b]);
    const Edge key{std::min(a, b), std::max(a, b)};
    if (len > best_len * (1 + 1e-13) || (len >= best_len * (1 - 1e-13) && key < best_key)) {
      best = k;
      best_len = len;
      best_key = key;
    }
  }
  return best;
}

Edge key_of(const Triangle& t, int k) {
  const auto a = t[k], b = t[(k + 1) % 3];
  return {std::min(a, b), std::max(a, b)};
}

}  // namespace

Mesh bisect_marked(const Mesh& mesh, const std::vector<bool>& marked) {
  if (marked.size() != mesh.triangles.size())
    throw InvalidArgument("bisect_marked: mask size mismatch");
  std::map<Edge, std::int32_t> split;  // edge -> midpoint node (-1 until created)
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    if (marked[t]) split.emplace(key_of(mesh.triangles[t], longest_edge(mesh, mesh.triangles[t])), -1);
  // closure: a triangle with any split edge must also split its longest edge
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& t : mesh.triangles) {
      bool any = false;
      for (int k = 0; k < 3; ++k) any = any || split.count(key_of(t, k)) > 0;
      if (!any) continue;
      if (split.emplace(key_of(t, longest_edge(mesh, t)), -1).second) changed = true;
    }
  }
  std::vector<Point> nodes = mesh.nodes;
  for (auto& [e, id] : split) {
    id = static_cast<std::int32_t>(nodes.size());
    nodes.push_back(midpoint(mesh.nodes[e[0]], mesh.nodes[e[1]]));
  }
  auto mid_of = [&](std::int32_t a, std::int32_t b) -> std::int32_t {
    auto it = split.find({std::min(a, b), std::max(a, b)});
    return it == split.end() ? -1 : it->second;
  };
  std::vector<Triangle> tris;
  for (const auto& t : mesh.triangles) {
    const int k = longest_edge(mesh, t);
    const std::int32_t a = t[k], b = t[(k + 1) % 3], c = t[(k + 2) % 3];
    const std::int32_t m = mid_of(a, b);
    if (m < 0) {
      tris.push_back(t);
      continue;
    }
    const std::int32_t mbc = mid_of(b, c), mca = mid_of(c, a);
    if (mca >= 0) {
      tris.push_back({a, m, mca});
      tris.push_back({mca, m, c});
    } else {
      tris.push_back({a, m, c});
    }
    if (mbc >= 0) {
      tris.push_back({m, b, mbc});
      tris.push_back({m, mbc, c});
    } else {
      tris.push_back({m, b, c});
    }
  }
  return Mesh::from_triangles(std::move(nodes), std::move(tris));
}

Mesh refine_corner_graded(const Mesh& mesh, std::span<const Point> corners, double grading,
                          int levels) {
  if (!(grading > 0.0 && grading < 1.0))
    throw InvalidArgument("refine_corner_graded: grading must lie in (0,1)");
  if (levels < 0) throw InvalidArgument("refine_corner_graded: levels must be >= 0");
  Mesh m = mesh;
  for (int l = 0; l < levels; ++l) m = refine_uniform(m);
  if (corners.empty()) return m;

  const double h = m.max_diameter();
  double xmin = m.nodes[0].x, xmax = xmin, ymin = m.nodes[0].y, ymax = ymin;
  for (const auto& p : m.nodes) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double extent = std::hypot(xmax - xmin, ymax - ymin);
  // below r = h the target width stops shrinking
  auto target = [&](double r) { return h * std::pow(std::max(r, h) / extent, 1.0 - grading); };

  for (int iter = 0; iter < 64; ++iter) {
    std::vector<bool> mark(m.triangles.size(), false);
    bool any = false;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
      const auto v = m.vertices(t);
      double r = std::numeric_limits<double>::infinity();
      for (const auto& c : corners) r = std::min(r, point_triangle_distance(c, v));
      if (m.diameter(t) > target(r) * (1 + 1e-12)) {
        mark[t] = true;
        any = true;
      }
    }
    if (!any) break;
    m = bisect_marked(m, mark);
  }
  return m;
}

// --- Conformity ------------------------------------------------------------

namespace {

bool separated(const std::array<Point, 3>& a, const std::array<Point, 3>& b, double tol) {
  auto test = [&](const std::array<Point, 3>& p, const std::array<Point, 3>& q) {
    for (int k = 0; k < 3; ++k) {
      const Point e = p[(k + 1) % 3] - p[k];
      const Point n{-e.y, e.x};
      double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
      for (const auto& v : p) {
        const double s = n.x * v.x + n.y * v.y;
        pmin = std::min(pmin, s);
        pmax = std::max(pmax, s);
      }
      for (const auto& v : q) {
        const double s = n.x * v.x + n.y * v.y;
        qmin = std::min(qmin, s);
        qmax = std::max(qmax, s);
      }
      const double scale = std::hypot(n.x, n.y);
      if (pmax <= qmin + tol * scale || qmax <= pmin + tol * scale) return true;
    }
    return false;
  };
  return test(a, b) || test(b, a);
}

}  // namespace

ConformityReport check_conformity(const Mesh& mesh) {
  const std::size_t nt = mesh.triangles.size();
  for (std::size_t t = 0; t < nt; ++t)
    if (!(mesh.area(t) > 0.0))
      return {false, "triangle " + std::to_string(t) + " has nonpositive area"};
  const double tol = 1e-12 * std::max(1.0, mesh.max_diameter());
  // sweep over x-sorted bounding boxes to avoid the full quadratic scan
  std::vector<std::array<double, 4>> box(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto v = mesh.vertices(t);
    box[t] = {std::min({v[0].x, v[1].x, v[2].x}), std::max({v[0].x, v[1].x, v[2].x}),
              std::min({v[0].y, v[1].y, v[2].y}), std::max({v[0].y, v[1].y, v[2].y})};
  }
  std::vector<std::size_t> order(nt);
  for (std::size_t i = 0; i < nt; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return box[a][0] < box[b][0]; });
  for (std::size_t ii = 0; ii < nt; ++ii) {
    const std::size_t s = order[ii];
    for (std::size_t jj = ii + 1; jj < nt; ++jj) {
      const std::size_t t = order[jj];
      if (box[t][0] > box[s][1] + tol) break;
      if (box[t][2] > box[s][3] + tol || box[s][2] > box[t][3] + tol) continue;
      const auto& ts = mesh.triangles[s];
      const auto& tt = mesh.triangles[t];
      const auto vs = mesh.vertices(s), vt = mesh.vertices(t);
      auto why = [&](const std::string& what) {
        return ConformityReport{false, "triangles " + std::to_string(s) + " and " +
                                           std::to_string(t) + ": " + what};
      };
      if (!separated(vs, vt, tol)) return why("interiors overlap");
      auto shared = [](const Triangle& a, std::int32_t i) {
        return a[0] == i || a[1] == i || a[2] == i;
      };
      for (int k = 0; k < 3; ++k) {
        if (!shared(tt, ts[k]) && point_triangle_distance(vs[k], vt) <= tol)
          return why("vertex touches the other triangle away from a common vertex");
        if (!shared(ts, tt[k]) && point_triangle_distance(vt[k], vs) <= tol)
          return why("vertex touches the other triangle away from a common vertex");
      }
    }
  }
  return {};
}

// --- Quad split ------------------------------------------------------------

Point Quad::map(double xi, double eta) const {
  const double n0 = 0.25 * (1 - xi) * (1 - eta), n1 = 0.25 * (1 + xi) * (1 - eta);
  const double n2 = 0.25 * (1 + xi) * (1 + eta), n3 = 0.25 * (1 - xi) * (1 + eta);
  return {n0 * corners[0].x + n1 * corners[1].x + n2 * corners[2].x + n3 * corners[3].x,
          n0 * corners[0].y + n1 * corners[1].y + n2 * corners[2].y + n3 * corners[3].y};
}

std::array<double, 4> Quad::jacobian(double xi, double eta) const {
  const double dxi[4] = {-0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta)};
  const double deta[4] = {-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)};
  std::array<double, 4> j{};
  for (int k = 0; k < 4; ++k) {
    j[0] += dxi[k] * corners[k].x;
    j[1] += deta[k] * corners[k].x;
    j[2] += dxi[k] * corners[k].y;
    j[3] += deta[k] * corners[k].y;
  }
  return j;
}

double Quad::jacobian_det(double xi, double eta) const {
  const auto j = jacobian(xi, eta);
  return j[0] * j[3] - j[1] * j[2];
}

std::optional<std::array<double, 2>> Quad::inverse(Point p, double tol) const {
  double xi = 0.0, eta = 0.0;
  const double scale = std::max(distance(corners[0], corners[2]), distance(corners[1], corners[3]));
  for (int it = 0; it < 50; ++it) {
    const Point g = map(xi, eta);
    const double rx = g.x - p.x, ry = g.y - p.y;
    const auto j = jacobian(xi, eta);
    const double det = j[0] * j[3] - j[1] * j[2];
    if (det == 0.0) return std::nullopt;
    const double dxi = (j[3] * rx - j[1] * ry) / det;
    const double deta = (-j[2] * rx + j[0] * ry) / det;
    xi -= dxi;
    eta -= deta;
    if (std::hypot(rx, ry) <= tol * scale && std::abs(dxi) + std::abs(deta) <= 1e-13)
      return std::array<double, 2>{xi, eta};
    if (std::abs(dxi) + std::abs(deta) <= 1e-15) return std::array<double, 2>{xi, eta};
  }
  const Point g = map(xi, eta);
  if (distance(g, p) <= 1e-10 * scale) return std::array<double, 2>{xi, eta};
  return std::nullopt;
}

double Quad::area() const {
  double a = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Point p = corners[k], q = corners[(k + 1) % 4];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

QuadSplit quad_split(const Mesh& mesh) {
  QuadSplit out;
  out.quads.reserve(mesh.triangles.size() * 3);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto v = mesh.vertices(t);
    const Point bary{(v[0].x + v[1].x + v[2].x) / 3.0, (v[0].y + v[1].y + v[2].y) / 3.0};
    for (int i = 0; i < 3; ++i) {
      Quad q;
      q.corners = {v[i], midpoint(v[i], v[(i + 1) % 3]), bary, midpoint(v[i], v[(i + 2) % 3])};
      q.triangle = static_cast<std::int32_t>(t);
      q.local_vertex = i;
      out.quads.push_back(q);
    }
  }
  return out;
}

// --- Locator ---------------------------------------------------------------

MeshLocator::MeshLocator(const Mesh& mesh) : mesh_(&mesh) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& p : mesh.nodes) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.triangles.size()) / 2.0)));
  nx_ = ny_ = side;
  const double padx = 1e-9 * std::max(1.0, xmax - xmin), pady = 1e-9 * std::max(1.0, ymax - ymin);
  x0_ = xmin - padx;
  y0_ = ymin - pady;
  dx_ = (xmax - xmin + 2 * padx) / nx_;
  dy_ = (ymax - ymin + 2 * pady) / ny_;
  buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto v = mesh.vertices(t);
    const double bx0 = std::min({v[0].x, v[1].x, v[2].x}), bx1 = std::max({v[0].x, v[1].x, v[2].x});
    const double by0 = std::min({v[0].y, v[1].y, v[2].y}), by1 = std::max({v[0].y, v[1].y, v[2].y});
    const int i0 = std::clamp(static_cast<int>((bx0 - x0_) / dx_), 0, nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((bx1 - x0_) / dx_), 0, nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((by0 - y0_) / dy_), 0, ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((by1 - y0_) / dy_), 0, ny_ - 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<std::int32_t>(t));
  }
}

std::optional<MeshLocator::Hit> MeshLocator::locate(Point p) const {
  const int i = static_cast<int>(std::floor((p.x - x0_) / dx_));
  const int j = static_cast<int>(std::floor((p.y - y0_) / dy_));
  if (i < 0 || j < 0 || i >= nx_ || j >= ny_) return std::nullopt;
  Hit best;
  double best_min = -std::numeric_limits<double>::infinity();
  for (auto t : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto b = barycentric(mesh_->vertices(t), p);
    const double mn = std::min({b[0], b[1], b[2]});
    if (mn > best_min) {
      best_min = mn;
      best.triangle = t;
      best.bary = b;
      if (mn >= 0) break;
    }
  }
  if (best.triangle < 0 || best_min < -1e-10) return std::nullopt;
  return best;
}

// --- I/O -------------------------------------------------------------------

void write_mesh(std::ostream& os, const Mesh& mesh) {
  const auto mask = mesh.boundary_mask();
  os << "NODES " << mesh.nodes.size() << " TRIANGLES " << mesh.triangles.size() << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    os << mesh.nodes[i].x << ' ' << mesh.nodes[i].y << ' ' << (mask[i] ? 1 : 0) << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

Mesh read_mesh(std::istream& is) {
  std::string tag1, tag2;
  std::size_t n = 0, t = 0;
  if (!(is >> tag1 >> n >> tag2 >> t) || tag1 != "NODES" || tag2 != "TRIANGLES")
    throw ConfigError("mesh file: bad header");
  std::vector<Point> nodes(n);
  std::vector<int> flags(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!(is >> nodes[i].x >> nodes[i].y >> flags[i])) throw ConfigError("mesh file: bad node line");
  std::vector<Triangle> tris(t);
  for (std::size_t k = 0; k < t; ++k)
    if (!(is >> tris[k][0] >> tris[k][1] >> tris[k][2]))
      throw ConfigError("mesh file: bad triangle line");
  Mesh m = Mesh::from_triangles(std::move(nodes), std::move(tris));
  const auto mask = m.boundary_mask();
  for (std::size_t i = 0; i < n; ++i)
    if ((flags[i] != 0) != mask[i]) throw ConfigError("mesh file: boundary flags inconsistent");
  return m;
}

}  // namespace richop
