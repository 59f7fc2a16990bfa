#include "homlab/grid.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace homlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string topology_name(Topology t) {
  switch (t) {
    case Topology::Box: return "box";
    case Topology::HalfSpace: return "half-space";
    case Topology::Torus: return "torus";
  }
  return "box";
}

// Felzenszwalb-Huttenlocher lower envelope of parabolas, squared distances in
// index units. Empty-set entries carry kFar instead of infinity.
constexpr double kFar = 1e30;

void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

void Grid::init_mask() {
  size_ = static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
  mask_.assign(size_, NodeKind::Interior);
  if (topology_ == Topology::Torus) return;
  for (std::size_t i = 0; i < size_; ++i) {
    const auto m = multi(i);
    for (int a = 0; a < dim_; ++a)
      if (m[a] == 0 || m[a] == n_[a] - 1) mask_[i] = NodeKind::Outflow;
  }
}

Grid Grid::box(int dim, double h, std::array<int, 3> n, Vec origin) {
  require(dim >= 1 && dim <= 3, "grid dimension must be 1, 2 or 3");
  require(h > 0.0, "grid spacing must be positive");
  Grid g;
  g.dim_ = dim;
  g.h_ = h;
  for (int a = 0; a < 3; ++a) g.n_[a] = a < dim ? n[a] : 1;
  for (int a = 0; a < dim; ++a) require(g.n_[a] >= 3, "every grid axis needs at least 3 nodes");
  g.origin_ = origin;
  g.topology_ = Topology::Box;
  g.init_mask();
  return g;
}

Grid Grid::torus(int dim, double h, std::array<int, 3> n, Vec origin) {
  Grid g = box(dim, h, n, origin);
  g.topology_ = Topology::Torus;
  g.init_mask();
  return g;
}

Grid Grid::half_space(int dim, double h, std::array<int, 3> n, Vec origin, Vec e, double offset) {
  Grid g = box(dim, h, n, origin);
  g.topology_ = Topology::HalfSpace;
  g.hs_e_ = normalized(e, dim);
  g.hs_offset_ = offset;
  for (std::size_t i = 0; i < g.size_; ++i)
    if (dot(g.coords(i), g.hs_e_, dim) <= offset + 1e-12 * h) g.mask_[i] = NodeKind::Dirichlet;
  return g;
}

Vec Grid::coords(std::size_t idx) const {
  const auto m = multi(idx);
  Vec x{};
  for (int a = 0; a < dim_; ++a) x[a] = origin_[a] + h_ * m[a];
  return x;
}

std::ptrdiff_t Grid::offset_neighbor(std::size_t idx, const std::array<int, 3>& off) const {
  auto m = multi(idx);
  for (int a = 0; a < dim_; ++a) {
    int v = m[a] + off[a];
    if (v < 0 || v >= n_[a]) {
      if (topology_ != Topology::Torus) return npos;
      v = (v % n_[a] + n_[a]) % n_[a];
    }
    m[a] = v;
  }
  const std::size_t j = index(m);
  if (has_exterior_ && mask_[j] == NodeKind::Exterior) return npos;
  return static_cast<std::ptrdiff_t>(j);
}

std::size_t Grid::count(NodeKind k) const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), k)); }

std::size_t Grid::nearest(const Vec& x) const {
  std::array<int, 3> m{0, 0, 0};
  for (int a = 0; a < dim_; ++a) {
    const long v = std::lround((x[a] - origin_[a]) / h_);
    m[a] = static_cast<int>(std::clamp<long>(v, 0, n_[a] - 1));
  }
  return index(m);
}

nlohmann::json Grid::header() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["h_len"] = h_;
  j["extents"] = std::vector<int>(n_.begin(), n_.begin() + dim_);
  j["origin_len"] = std::vector<double>(origin_.begin(), origin_.begin() + dim_);
  j["topology"] = topology_name(topology_);
  if (topology_ == Topology::HalfSpace) {
    j["halfspace_normal"] = std::vector<double>(hs_e_.begin(), hs_e_.begin() + dim_);
    j["halfspace_offset_len"] = hs_offset_;
  }
  j["mask"] = {{"interior", count(NodeKind::Interior)},
               {"dirichlet", count(NodeKind::Dirichlet)},
               {"outflow", count(NodeKind::Outflow)},
               {"exterior", count(NodeKind::Exterior)}};
  return j;
}

bool GridFunction::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double interpolate(const GridFunction& u, const Vec& x) {
  const Grid& g = *u.grid;
  const int d = g.dim();
  std::array<int, 3> base{0, 0, 0};
  Vec frac{};
  for (int a = 0; a < d; ++a) {
    const double s = (x[a] - g.origin()[a]) / g.h();
    double fl = std::floor(s);
    if (!g.periodic()) {
      if (s < -1e-9 || s > g.extents()[a] - 1 + 1e-9) fail(ErrorCode::InvalidArgument, "interpolation point outside the grid");
      fl = std::clamp(fl, 0.0, double(g.extents()[a] - 2));
    }
    base[a] = static_cast<int>(fl);
    frac[a] = std::clamp(s - fl, 0.0, 1.0);
  }
  double acc = 0.0;
  const int corners = 1 << d;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    std::array<int, 3> m = base;
    for (int a = 0; a < d; ++a) {
      const int bit = (c >> a) & 1;
      w *= bit ? frac[a] : 1.0 - frac[a];
      m[a] += bit;
      if (g.periodic()) m[a] = (m[a] % g.extents()[a] + g.extents()[a]) % g.extents()[a];
    }
    if (w != 0.0) acc += w * u.values[g.index(m)];
  }
  return acc;
}

void write_dump(const GridFunction& u, const std::filesystem::path& stem, const nlohmann::json& extra) {
  std::filesystem::path bin = stem, hdr = stem;
  bin += ".bin";
  hdr += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + bin.string());
  for (double v : u.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  std::filesystem::path msk = stem;
  msk += ".mask";
  std::ofstream mo(msk, std::ios::binary);
  if (!mo) fail(ErrorCode::Io, "cannot write " + msk.string());
  for (auto k : u.grid->mask()) mo.put(static_cast<char>(k));
  nlohmann::json j = u.grid->header();
  j["format"] = "float64-le";
  j["count"] = u.values.size();
  if (!extra.empty()) j["sidecar"] = extra;
  std::ofstream h(hdr);
  if (!h) fail(ErrorCode::Io, "cannot write " + hdr.string());
  h << j.dump(2) << "\n";
}

GridFunction read_dump(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem, hdr = stem;
  bin += ".bin";
  hdr += ".json";
  std::ifstream h(hdr);
  if (!h) fail(ErrorCode::Io, "cannot read " + hdr.string());
  nlohmann::json j;
  try {
    h >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, std::string("corrupt dump header: ") + e.what());
  }
  const int dim = j.at("dim").get<int>();
  std::array<int, 3> n{1, 1, 1};
  Vec origin{};
  for (int a = 0; a < dim; ++a) {
    n[a] = j.at("extents")[a].get<int>();
    origin[a] = j.at("origin_len")[a].get<double>();
  }
  const std::string topo = j.at("topology").get<std::string>();
  const double hh = j.at("h_len").get<double>();
  Grid g = Grid::box(dim, hh, n, origin);
  if (topo == "torus") {
    g = Grid::torus(dim, hh, n, origin);
  } else if (topo == "half-space") {
    Vec e{};
    for (int a = 0; a < dim; ++a) e[a] = j.at("halfspace_normal")[a].get<double>();
    g = Grid::half_space(dim, hh, n, origin, e, j.at("halfspace_offset_len").get<double>());
  }
  std::filesystem::path msk = stem;
  msk += ".mask";
  if (std::ifstream mi{msk, std::ios::binary}) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      char c;
      if (!mi.get(c)) fail(ErrorCode::Io, "truncated mask " + msk.string());
      const auto k = static_cast<NodeKind>(static_cast<unsigned char>(c));
      if (static_cast<unsigned char>(c) > 3) fail(ErrorCode::Io, "corrupt mask " + msk.string());
      g.set_kind(i, k);
    }
  }
  GridFunction u(std::make_shared<const Grid>(std::move(g)));
  std::ifstream in(bin, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + bin.string());
  for (auto& v : u.values) {
    char bytes[8];
    if (!in.read(bytes, 8)) fail(ErrorCode::Io, "truncated dump " + bin.string());
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(&v, &bits, 8);
  }
  return u;
}

std::vector<double> distance_transform(const Grid& grid, std::span<const std::uint8_t> in_set) {
  require(!grid.periodic(), "distance transform requires a box grid");
  const auto& n = grid.extents();
  std::vector<double> dist(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) dist[i] = in_set[i] ? 0.0 : kFar;
  const int nmax = std::max({n[0], n[1], n[2]});
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);
  for (int axis = 0; axis < grid.dim(); ++axis) {
    const int len = n[axis];
    std::array<int, 3> m{0, 0, 0};
    // Iterate over all lines parallel to `axis`.
    const int o1 = (axis + 1) % 3, o2 = (axis + 2) % 3;
    for (int i1 = 0; i1 < n[o1]; ++i1)
      for (int i2 = 0; i2 < n[o2]; ++i2) {
        m[o1] = i1;
        m[o2] = i2;
        for (int q = 0; q < len; ++q) {
          m[axis] = q;
          f[q] = dist[grid.index(m)];
        }
        edt_1d(f, d, v, z, len);
        for (int q = 0; q < len; ++q) {
          m[axis] = q;
          dist[grid.index(m)] = d[q];
        }
      }
  }
  for (auto& x : dist) x = x >= 0.5 * kFar ? kInf : std::sqrt(x) * grid.h();
  return dist;
}

double hausdorff_distance(const Grid& grid, std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const auto da = distance_transform(grid, a);
  const auto db = distance_transform(grid, b);
  double h = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (b[i]) h = std::max(h, da[i]);
    if (a[i]) h = std::max(h, db[i]);
  }
  return h;
}

}  // namespace homlab
