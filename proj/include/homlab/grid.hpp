#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/common.hpp"

namespace homlab {

enum class Topology { Box, HalfSpace, Torus };
/// Exterior nodes lie outside the computational domain: they are never
/// updated and are invisible to neighbor lookups.
enum class NodeKind : std::uint8_t { Interior, Dirichlet, Outflow, Exterior };

/// Uniform Cartesian node grid. Node i sits at origin + h * multi_index(i).
/// Box boundaries are Outflow unless marked Dirichlet; tori have no boundary.
class Grid {
 public:
  static constexpr std::ptrdiff_t npos = -1;

  static Grid box(int dim, double h, std::array<int, 3> n, Vec origin);
  static Grid torus(int dim, double h, std::array<int, 3> n, Vec origin);
  /// Box whose Dirichlet nodes are exactly those with x.e <= offset.
  static Grid half_space(int dim, double h, std::array<int, 3> n, Vec origin, Vec e, double offset);

  int dim() const { return dim_; }
  double h() const { return h_; }
  const std::array<int, 3>& extents() const { return n_; }
  const Vec& origin() const { return origin_; }
  std::size_t size() const { return size_; }
  Topology topology() const { return topology_; }
  bool periodic() const { return topology_ == Topology::Torus; }
  /// Side length of a periodic axis (n * h).
  double side(int axis) const { return n_[axis] * h_; }
  const Vec& halfspace_normal() const { return hs_e_; }
  double halfspace_offset() const { return hs_offset_; }

  std::array<int, 3> multi(std::size_t idx) const {
    return {static_cast<int>(idx % n_[0]), static_cast<int>((idx / n_[0]) % n_[1]),
            static_cast<int>(idx / (static_cast<std::size_t>(n_[0]) * n_[1]))};
  }
  std::size_t index(const std::array<int, 3>& m) const {
    return static_cast<std::size_t>(m[0]) + static_cast<std::size_t>(n_[0]) * (m[1] + static_cast<std::size_t>(n_[1]) * m[2]);
  }
  Vec coords(std::size_t idx) const;

  /// Neighbor at integer offset `off`; npos if it leaves a box.
  std::ptrdiff_t offset_neighbor(std::size_t idx, const std::array<int, 3>& off) const;
  std::ptrdiff_t neighbor(std::size_t idx, int axis, int dir) const {
    std::array<int, 3> off{0, 0, 0};
    off[axis] = dir;
    return offset_neighbor(idx, off);
  }

  NodeKind kind(std::size_t idx) const { return mask_[idx]; }
  /// True for nodes whose value is an unknown of the discrete problem.
  bool unknown(std::size_t idx) const { return mask_[idx] == NodeKind::Interior || mask_[idx] == NodeKind::Outflow; }
  std::span<const NodeKind> mask() const { return mask_; }
  void set_kind(std::size_t idx, NodeKind k) {
    mask_[idx] = k;
    if (k == NodeKind::Exterior) has_exterior_ = true;
  }
  std::size_t count(NodeKind k) const;

  /// Nearest node to x (clamped to the grid).
  std::size_t nearest(const Vec& x) const;

  nlohmann::json header() const;

 private:
  Grid() = default;
  void init_mask();

  int dim_ = 1;
  double h_ = 1.0;
  std::array<int, 3> n_{1, 1, 1};
  Vec origin_{};
  std::size_t size_ = 1;
  Topology topology_ = Topology::Box;
  Vec hs_e_{};
  double hs_offset_ = 0.0;
  std::vector<NodeKind> mask_;
  bool has_exterior_ = false;
};

/// Node-indexed scalar field on a shared grid.
struct GridFunction {
  std::shared_ptr<const Grid> grid;
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(std::shared_ptr<const Grid> g, double fill = 0.0)
      : grid(std::move(g)), values(grid->size(), fill) {}

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
  bool all_finite() const;
};

/// Multilinear interpolation; wraps on tori, throws if x leaves a box grid.
double interpolate(const GridFunction& u, const Vec& x);

/// Writes <stem>.bin (little-endian float64, node order), <stem>.mask (one
/// byte per node) and <stem>.json (header).
void write_dump(const GridFunction& u, const std::filesystem::path& stem,
                const nlohmann::json& extra = nlohmann::json::object());
/// Reads a dump back, including the node mask when <stem>.mask exists.
GridFunction read_dump(const std::filesystem::path& stem);

/// Exact Euclidean distance (in length units) from every node to the set of
/// nodes flagged in `in_set`; +inf if the set is empty. Box topology only.
std::vector<double> distance_transform(const Grid& grid, std::span<const std::uint8_t> in_set);

/// Symmetric Hausdorff distance between two node sets of the same grid.
double hausdorff_distance(const Grid& grid, std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace homlab
