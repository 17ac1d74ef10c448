#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace richop {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point a, Point b) = default;
};

double distance(Point a, Point b);
// Twice the signed area of (a, b, c); positive when counterclockwise.
double orient2d(Point a, Point b, Point c);
inline Point midpoint(Point a, Point b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

// Simple polygon given by its vertices in counterclockwise order.
class Polygon {
 public:
  explicit Polygon(std::vector<Point> vertices);

  static Polygon rectangle(double x0, double y0, double x1, double y1);
  static Polygon unit_square() { return rectangle(0.0, 0.0, 1.0, 1.0); }
  // (-1,1)^2 minus [0,1) x (-1,0]; reentrant corner at the origin.
  static Polygon l_shape();

  const std::vector<Point>& vertices() const { return vertices_; }
  double area() const;
  bool contains(Point p) const;  // closed polygon
  bool is_rectilinear() const;
  // Vertices with interior angle > pi.
  std::vector<Point> reentrant_corners() const;

 private:
  std::vector<Point> vertices_;
};

using Triangle = std::array<std::int32_t, 3>;
using Edge = std::array<std::int32_t, 2>;

// Conforming triangulation of a polygon. Triangles are stored counterclockwise.
struct Mesh {
  std::vector<Point> nodes;
  std::vector<Triangle> triangles;
  std::vector<std::int32_t> boundary_nodes;  // sorted
  std::vector<Edge> boundary_edges;          // (i, j) with i < j, sorted

  // Orients triangles, derives boundary edges/nodes and validates.
  static Mesh from_triangles(std::vector<Point> nodes, std::vector<Triangle> triangles);

  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_triangles() const { return triangles.size(); }
  std::vector<bool> boundary_mask() const;

  std::array<Point, 3> vertices(std::size_t t) const {
    const auto& tri = triangles[t];
    return {nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]};
  }
  double area(std::size_t t) const;
  double diameter(std::size_t t) const;
  double max_diameter() const;
  double min_diameter() const;
  double total_area() const;
  // All distinct edges (i < j), sorted.
  std::vector<Edge> edges() const;
};

Mesh triangulate(const Polygon& polygon, double h_target);
Mesh refine_uniform(const Mesh& mesh);
// Uniform refinement `levels` times followed by longest-edge bisection of
// triangles whose diameter exceeds h * (r / R)^(1 - grading), where r is the
// distance to the nearest listed corner and R the mesh extent.
Mesh refine_corner_graded(const Mesh& mesh, std::span<const Point> corners, double grading,
                          int levels);
// Longest-edge bisection of the marked triangles with conforming closure.
Mesh bisect_marked(const Mesh& mesh, const std::vector<bool>& marked);

struct ConformityReport {
  bool ok = true;
  std::string reason;
};
// Pairwise classification of closed-triangle intersections: every pair must
// meet in nothing, a common vertex or a common edge.
ConformityReport check_conformity(const Mesh& mesh);

// Quadrilateral Q_{T,i} = G_{T,i}([-1,1]^2). Corner order matches the reference
// square corners (-1,-1), (1,-1), (1,1), (-1,1): vertex, next edge midpoint
// (counterclockwise), barycenter, previous edge midpoint.
struct Quad {
  std::array<Point, 4> corners;
  std::int32_t triangle = -1;
  std::int32_t local_vertex = -1;

  Point map(double xi, double eta) const;
  // Jacobian matrix [[dx/dxi, dx/deta], [dy/dxi, dy/deta]].
  std::array<double, 4> jacobian(double xi, double eta) const;
  double jacobian_det(double xi, double eta) const;
  // Inverse map by Newton iteration; nullopt if it does not converge.
  std::optional<std::array<double, 2>> inverse(Point p, double tol = 1e-14) const;
  double area() const;
};

struct QuadSplit {
  std::vector<Quad> quads;  // 3 per triangle, triangle-major
};

QuadSplit quad_split(const Mesh& mesh);

// Bucket grid for point location.
class MeshLocator {
 public:
  explicit MeshLocator(const Mesh& mesh);

  struct Hit {
    std::int32_t triangle = -1;
    std::array<double, 3> bary{};
  };
  // Triangle containing p (closed, with a small tolerance for points on the
  // boundary); nullopt when p lies outside the mesh.
  std::optional<Hit> locate(Point p) const;

 private:
  const Mesh* mesh_;
  double x0_, y0_, dx_, dy_;
  int nx_, ny_;
  std::vector<std::vector<std::int32_t>> buckets_;
};

std::array<double, 3> barycentric(const std::array<Point, 3>& tri, Point p);

// Text format: "NODES n TRIANGLES t", n lines "x y boundary_flag", t lines
// "i j k" (0-based), 17 significant digits.
void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

}  // namespace richop
