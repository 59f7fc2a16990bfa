#include "homlab/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace homlab {

namespace {

constexpr double kBumpRadius = 0.5;
constexpr int kMaxPointsPerCell = 64;

double bump(double s) {
  if (s >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

// Quintic smoothstep clamped to [0,1].
double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
}

std::int64_t floor_i(double v) { return static_cast<std::int64_t>(std::floor(v)); }

// Centered residue so that cells near the origin keep their own index when a
// torus is doubled.
std::int64_t centered_mod(std::int64_t k, std::int64_t n) {
  const std::int64_t half = n / 2;
  std::int64_t r = (k + half) % n;
  if (r < 0) r += n;
  return r - half;
}

int knuth_poisson(double lambda, SplitMix& rng) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  int k = 0;
  double prod = rng.uniform();
  while (prod > limit && k < kMaxPointsPerCell) {
    ++k;
    prod *= rng.uniform();
  }
  return k;
}

const std::vector<std::pair<FieldKind, std::string>>& kind_names() {
  static const std::vector<std::pair<FieldKind, std::string>> v{
      {FieldKind::Constant, "constant"},
      {FieldKind::PeriodicTrig, "periodic-trig"},
      {FieldKind::PoissonBump, "poisson-bump"},
      {FieldKind::CheckerboardSmoothed, "checkerboard-smoothed"}};
  return v;
}

const std::vector<std::pair<DiffusionKind, std::string>>& diffusion_names() {
  static const std::vector<std::pair<DiffusionKind, std::string>> v{
      {DiffusionKind::None, "none"},
      {DiffusionKind::Isotropic, "isotropic"},
      {DiffusionKind::CurvatureProjection, "curvature-projection"},
      {DiffusionKind::AnisotropicTable, "anisotropic-table"}};
  return v;
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) fail(ErrorCode::Config, std::string(what) + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) fail(ErrorCode::Config, std::string("unknown key '") + key + "' in " + what);
}

Vec vec_from_json(const nlohmann::json& j) {
  Vec v{};
  if (!j.is_array() || j.size() > 3) fail(ErrorCode::Config, "expected an array of at most 3 numbers");
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

nlohmann::json vec_to_json(const Vec& v, int dim) {
  auto arr = nlohmann::json::array();
  for (int i = 0; i < dim; ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

std::string to_string(FieldKind k) {
  for (const auto& [kind, name] : kind_names())
    if (kind == k) return name;
  return "unknown";
}

std::string to_string(DiffusionKind k) {
  for (const auto& [kind, name] : diffusion_names())
    if (kind == k) return name;
  return "unknown";
}

nlohmann::json to_json(const FieldDescriptor& d) {
  nlohmann::json j;
  j["kind"] = to_string(d.kind);
  j["dim"] = d.dim;
  j["p"] = d.p;
  j["seed"] = d.seed;
  j["base"] = d.base;
  j["amplitude"] = d.amplitude;
  j["intensity"] = d.intensity;
  j["period_len"] = d.period;
  j["cell_len"] = d.cell_len;
  auto terms = nlohmann::json::array();
  for (const auto& t : d.terms) {
    terms.push_back({{"amplitude", t.amplitude},
                     {"wave", {t.wave[0], t.wave[1], t.wave[2]}},
                     {"phase", t.phase}});
  }
  j["terms"] = terms;
  j["diffusion"] = to_string(d.diffusion);
  j["diffusion_strength"] = d.diffusion_strength;
  j["diffusion_table"] = vec_to_json(d.diffusion_table, 3);
  if (d.keep_box) {
    j["keep_box_len"] = {{"lo", vec_to_json(d.keep_box->lo, d.dim)},
                         {"hi", vec_to_json(d.keep_box->hi, d.dim)}};
    j["resample_seed"] = d.resample_seed;
  }
  return j;
}

FieldDescriptor field_descriptor_from_json(const nlohmann::json& j) {
  check_keys(j,
             {"kind", "dim", "p", "seed", "base", "amplitude", "intensity", "period_len", "cell_len",
              "terms", "diffusion", "diffusion_strength", "diffusion_table", "keep_box_len",
              "resample_seed"},
             "field");
  FieldDescriptor d;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    bool found = false;
    for (const auto& [k, name] : kind_names())
      if (name == kind) d.kind = k, found = true;
    if (!found) fail(ErrorCode::Config, "unknown field kind '" + kind + "'");
    d.dim = j.value("dim", 1);
    d.p = j.value("p", 1.0);
    d.seed = j.value("seed", std::uint64_t{0});
    d.base = j.value("base", 1.0);
    d.amplitude = j.value("amplitude", 0.0);
    d.intensity = j.value("intensity", 0.0);
    d.period = j.value("period_len", 1.0);
    d.cell_len = j.value("cell_len", 1.0);
    if (j.contains("terms")) {
      for (const auto& t : j.at("terms")) {
        check_keys(t, {"amplitude", "wave", "phase"}, "trig term");
        TrigTerm term;
        term.amplitude = t.value("amplitude", 0.0);
        term.phase = t.value("phase", 0.0);
        if (t.contains("wave")) {
          const auto& w = t.at("wave");
          term.wave = {0, 0, 0};
          for (std::size_t i = 0; i < w.size() && i < 3; ++i) term.wave[i] = w[i].get<int>();
        }
        d.terms.push_back(term);
      }
    }
    if (j.contains("diffusion")) {
      const std::string diff = j.at("diffusion").get<std::string>();
      bool ok = false;
      for (const auto& [k, name] : diffusion_names())
        if (name == diff) d.diffusion = k, ok = true;
      if (!ok) fail(ErrorCode::Config, "unknown diffusion kind '" + diff + "'");
    }
    d.diffusion_strength = j.value("diffusion_strength", 0.0);
    if (j.contains("diffusion_table")) d.diffusion_table = vec_from_json(j.at("diffusion_table"));
    if (j.contains("keep_box_len")) {
      Box b;
      b.lo = vec_from_json(j.at("keep_box_len").at("lo"));
      b.hi = vec_from_json(j.at("keep_box_len").at("hi"));
      d.keep_box = b;
      d.resample_seed = j.value("resample_seed", std::uint64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("malformed field descriptor: ") + e.what());
  }
  return d;
}

CoefficientField::CoefficientField(FieldDescriptor desc) : desc_(std::move(desc)) {
  const auto& d = desc_;
  require(d.dim >= 1 && d.dim <= kMaxDim, "field dimension must be 1, 2 or 3");
  require(d.p >= 1.0 && std::isfinite(d.p), "homogeneity exponent p must be >= 1");
  require(d.diffusion_strength >= 0.0, "diffusion strength must be nonnegative");
  double range = 1.0;
  switch (d.kind) {
    case FieldKind::Constant:
      require(d.base > 0.0, "constant field value must be positive");
      a_min_ = a_max_ = d.base;
      break;
    case FieldKind::PeriodicTrig: {
      require(d.period > 0.0, "period must be positive");
      double spread = 0.0;
      for (const auto& t : d.terms) spread += std::abs(t.amplitude);
      a_min_ = d.base - spread;
      a_max_ = d.base + spread;
      if (a_min_ <= 0.0) {
        // The crude bound is not conclusive; scan one period.
        const int n = d.dim == 1 ? 4096 : (d.dim == 2 ? 256 : 48);
        double lo = std::numeric_limits<double>::infinity();
        std::array<int, 3> idx{0, 0, 0};
        const int total = d.dim == 1 ? n : (d.dim == 2 ? n * n : n * n * n);
        for (int c = 0; c < total; ++c) {
          idx = {c % n, (c / n) % n, c / (n * n)};
          Vec x{};
          for (int i = 0; i < d.dim; ++i) x[i] = d.period * idx[i] / n;
          lo = std::min(lo, a(x));
        }
        if (lo <= 0.0) fail(ErrorCode::InvalidArgument, "periodic profile is not strictly positive");
        a_min_ = lo * (1.0 - 1e-3);
      }
      range = d.period;
      break;
    }
    case FieldKind::PoissonBump:
      require(d.intensity >= 0.0, "Poisson intensity must be nonnegative");
      require(d.intensity <= 16.0, "Poisson intensity above 16 points per cell is not supported");
      require(d.base > 0.0, "Poisson base value must be positive");
      require(d.base + d.amplitude > 0.0, "bump height too negative: inf a would not be positive");
      a_min_ = std::min(d.base, d.base + d.amplitude);
      a_max_ = std::max(d.base, d.base + d.amplitude);
      if (d.intensity == 0.0) a_min_ = a_max_ = d.base;
      range = 2.0 * kBumpRadius;
      break;
    case FieldKind::CheckerboardSmoothed:
      require(d.base > 0.0, "checkerboard lower value must be positive");
      require(d.amplitude >= 0.0, "checkerboard spread must be nonnegative");
      require(d.cell_len > 0.0, "checkerboard cell size must be positive");
      a_min_ = d.base;
      a_max_ = d.base + d.amplitude;
      range = d.cell_len * std::sqrt(static_cast<double>(d.dim)) + 0.5 * d.cell_len;
      break;
  }
  if (d.diffusion == DiffusionKind::AnisotropicTable)
    for (int i = 0; i < d.dim; ++i) require(d.diffusion_table[i] >= 0.0, "diffusion table must be nonnegative");
  bounds_.p = d.p;
  bounds_.dim = d.dim;
  bounds_.range = range;
  bounds_.c0 = a_min_;
  bounds_.C0 = std::max(a_max_, std::sqrt(2.0 * max_eigenvalue()));
}

bool CoefficientField::is_random() const {
  return desc_.kind == FieldKind::PoissonBump || desc_.kind == FieldKind::CheckerboardSmoothed;
}

double CoefficientField::max_trace() const {
  if (!has_diffusion()) return 0.0;
  const double s = desc_.diffusion_strength;
  const int d = desc_.dim;
  switch (desc_.diffusion) {
    case DiffusionKind::Isotropic: return s * d;
    case DiffusionKind::CurvatureProjection: return s * (d - 1);
    case DiffusionKind::AnisotropicTable: {
      if (d == 1) return 0.0;
      double sum = 0.0, mn = std::numeric_limits<double>::infinity();
      for (int i = 0; i < d; ++i) sum += desc_.diffusion_table[i], mn = std::min(mn, desc_.diffusion_table[i]);
      return s * (sum - mn);
    }
    case DiffusionKind::None: break;
  }
  return 0.0;
}

double CoefficientField::max_eigenvalue() const {
  if (!has_diffusion()) return 0.0;
  const double s = desc_.diffusion_strength;
  const int d = desc_.dim;
  switch (desc_.diffusion) {
    case DiffusionKind::Isotropic: return s;
    case DiffusionKind::CurvatureProjection: return d > 1 ? s : 0.0;
    case DiffusionKind::AnisotropicTable: {
      if (d == 1) return 0.0;
      double mx = 0.0;
      for (int i = 0; i < d; ++i) mx = std::max(mx, desc_.diffusion_table[i]);
      return s * mx;
    }
    case DiffusionKind::None: break;
  }
  return 0.0;
}

std::uint64_t CoefficientField::cell_key(const std::array<std::int64_t, 3>& cell) const {
  std::uint64_t seed = desc_.seed;
  if (desc_.keep_box) {
    // Keep the cell if its closed box comes within one bump/smoothing radius of keep_box.
    const double c = desc_.kind == FieldKind::PoissonBump ? 1.0 : desc_.cell_len;
    const double pad = desc_.kind == FieldKind::PoissonBump ? kBumpRadius : 0.25 * desc_.cell_len;
    bool touches = true;
    for (int i = 0; i < desc_.dim; ++i) {
      const double lo = cell[i] * c, hi = (cell[i] + 1) * c;
      if (hi < desc_.keep_box->lo[i] - pad || lo > desc_.keep_box->hi[i] + pad) touches = false;
    }
    if (!touches) seed = desc_.resample_seed;
  }
  std::uint64_t h = mix64(seed ^ 0x5eed5eed5eed5eedULL);
  for (int i = 0; i < desc_.dim; ++i) h = hash_combine(h, static_cast<std::uint64_t>(cell[i]));
  return h;
}

double CoefficientField::poisson_a(const Vec& x, std::int64_t wrap_cells) const {
  const int d = desc_.dim;
  std::array<std::int64_t, 3> lo{0, 0, 0}, cnt{1, 1, 1};
  for (int i = 0; i < d; ++i) {
    lo[i] = floor_i(x[i] - kBumpRadius);
    cnt[i] = floor_i(x[i] + kBumpRadius) - lo[i] + 1;
  }
  double sum = 0.0;
  for (std::int64_t a0 = 0; a0 < cnt[0]; ++a0)
    for (std::int64_t a1 = 0; a1 < cnt[1]; ++a1)
      for (std::int64_t a2 = 0; a2 < cnt[2]; ++a2) {
        const std::array<std::int64_t, 3> cell{lo[0] + a0, lo[1] + a1, lo[2] + a2};
        std::array<std::int64_t, 3> keyed = cell;
        if (wrap_cells > 0)
          for (int i = 0; i < d; ++i) keyed[i] = centered_mod(cell[i], wrap_cells);
        SplitMix rng(cell_key(keyed));
        const int n = knuth_poisson(desc_.intensity, rng);
        for (int k = 0; k < n; ++k) {
          double r2 = 0.0;
          for (int i = 0; i < d; ++i) {
            const double pi = static_cast<double>(cell[i]) + rng.uniform();
            r2 += (x[i] - pi) * (x[i] - pi);
          }
          // Draws for unused axes keep the stream layout dimension-independent.
          for (int i = d; i < 3; ++i) (void)rng.uniform();
          sum += bump(std::sqrt(r2) / kBumpRadius);
        }
      }
  return desc_.base + desc_.amplitude * (1.0 - std::exp(-sum));
}

double CoefficientField::checker_a(const Vec& x, std::int64_t wrap_cells) const {
  const int d = desc_.dim;
  const double c = desc_.cell_len;
  const double r = 0.25 * c;
  std::array<std::array<double, 3>, 3> w{};
  std::array<std::array<std::int64_t, 3>, 3> idx{};
  std::array<int, 3> cnt{1, 1, 1};
  for (int i = 0; i < d; ++i) {
    const std::int64_t k0 = floor_i(x[i] / c);
    cnt[i] = 0;
    for (std::int64_t k = k0 - 1; k <= k0 + 1; ++k) {
      const double t = x[i] - k * c;
      const double wt = smoothstep((t + r) / (2 * r)) - smoothstep((t - c + r) / (2 * r));
      if (wt > 0.0) {
        w[i][cnt[i]] = wt;
        idx[i][cnt[i]] = k;
        ++cnt[i];
      }
    }
  }
  for (int i = d; i < 3; ++i) w[i][0] = 1.0, idx[i][0] = 0;
  double value = 0.0;
  for (int a0 = 0; a0 < cnt[0]; ++a0)
    for (int a1 = 0; a1 < cnt[1]; ++a1)
      for (int a2 = 0; a2 < cnt[2]; ++a2) {
        std::array<std::int64_t, 3> cell{idx[0][a0], idx[1][a1], idx[2][a2]};
        if (wrap_cells > 0)
          for (int i = 0; i < d; ++i) cell[i] = centered_mod(cell[i], wrap_cells);
        SplitMix rng(cell_key(cell));
        value += w[0][a0] * w[1][a1] * w[2][a2] * (desc_.base + desc_.amplitude * rng.uniform());
      }
  return value;
}

double CoefficientField::a(const Vec& x) const {
  switch (desc_.kind) {
    case FieldKind::Constant: return desc_.base;
    case FieldKind::PeriodicTrig: {
      double v = desc_.base;
      for (const auto& t : desc_.terms) {
        double phase = t.phase;
        for (int i = 0; i < desc_.dim; ++i) phase += 2.0 * std::numbers::pi * t.wave[i] * x[i] / desc_.period;
        v += t.amplitude * std::sin(phase);
      }
      return v;
    }
    case FieldKind::PoissonBump: return poisson_a(x, 0);
    case FieldKind::CheckerboardSmoothed: return checker_a(x, 0);
  }
  return desc_.base;
}

double CoefficientField::a_wrapped(const Vec& x, double side) const {
  switch (desc_.kind) {
    case FieldKind::Constant:
    case FieldKind::PeriodicTrig: return a(x);
    case FieldKind::PoissonBump: return poisson_a(x, std::llround(side));
    case FieldKind::CheckerboardSmoothed: return checker_a(x, std::llround(side / desc_.cell_len));
  }
  return a(x);
}

double CoefficientField::compatible_torus_side(double side) const {
  double unit = 0.0;
  switch (desc_.kind) {
    case FieldKind::Constant: return side;
    case FieldKind::PeriodicTrig: unit = desc_.period; break;
    case FieldKind::PoissonBump: unit = 2.0; break;  // even number of unit cells
    case FieldKind::CheckerboardSmoothed: unit = 2.0 * desc_.cell_len; break;
  }
  return unit * std::ceil(side / unit - 1e-9);
}

Vec CoefficientField::grad_a(const Vec& x) const {
  const double step = 1e-4 * range();
  Vec g{};
  for (int i = 0; i < desc_.dim; ++i) {
    Vec xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    g[i] = (a(xp) - a(xm)) / (2 * step);
  }
  return g;
}

double CoefficientField::hamiltonian(const Vec& xi, const Vec& x) const {
  const double n = norm(xi, desc_.dim);
  if (n == 0.0) return 0.0;
  const double mag = desc_.p == 1.0 ? n : std::pow(n, desc_.p);
  return a(x) * mag;
}

Mat CoefficientField::sigma(const Vec& e, const Vec& /*x*/) const {
  Mat s{};
  if (!has_diffusion()) return s;
  const int d = desc_.dim;
  const double scale = std::sqrt(2.0 * desc_.diffusion_strength);
  if (desc_.diffusion == DiffusionKind::Isotropic) {
    for (int i = 0; i < d; ++i) s[i][i] = scale;
    return s;
  }
  const double n = norm(e, d);
  if (n == 0.0) return s;
  const Vec u = normalized(e, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double proj = (i == j ? 1.0 : 0.0) - u[i] * u[j];
      const double col = desc_.diffusion == DiffusionKind::AnisotropicTable ? std::sqrt(desc_.diffusion_table[j]) : 1.0;
      s[i][j] = scale * proj * col;
    }
  return s;
}

Mat CoefficientField::diffusion(const Vec& e, const Vec& x) const {
  const Mat s = sigma(e, x);
  Mat a{};
  const int d = desc_.dim;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double v = 0.0;
      for (int k = 0; k < d; ++k) v += s[i][k] * s[j][k];
      a[i][j] = 0.5 * v;
    }
  return a;
}

Mat CoefficientField::diffusion(const Vec& e) const { return diffusion(e, Vec{}); }

CoefficientField sample_poisson_bump_field(std::uint64_t seed, double intensity, double bump_height,
                                           double base, int dim, DiffusionKind diffusion,
                                           double diffusion_strength, double p) {
  FieldDescriptor d;
  d.kind = FieldKind::PoissonBump;
  d.dim = dim;
  d.p = p;
  d.seed = seed;
  d.intensity = intensity;
  d.amplitude = bump_height;
  d.base = base;
  d.diffusion = diffusion;
  d.diffusion_strength = diffusion_strength;
  return CoefficientField(d);
}

CoefficientField make_periodic_field(double base, std::vector<TrigTerm> terms, double period, int dim,
                                     DiffusionKind diffusion, double diffusion_strength, double p) {
  FieldDescriptor d;
  d.kind = FieldKind::PeriodicTrig;
  d.dim = dim;
  d.p = p;
  d.base = base;
  d.terms = std::move(terms);
  d.period = period;
  d.diffusion = diffusion;
  d.diffusion_strength = diffusion_strength;
  return CoefficientField(d);
}

CoefficientField make_constant_field(double a0, int dim, double p, DiffusionKind diffusion,
                                     double diffusion_strength) {
  FieldDescriptor d;
  d.kind = FieldKind::Constant;
  d.dim = dim;
  d.p = p;
  d.base = a0;
  d.diffusion = diffusion;
  d.diffusion_strength = diffusion_strength;
  return CoefficientField(d);
}

namespace {

double frob2(const Mat& m, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) s += m[i][j] * m[i][j];
  return s;
}

}  // namespace

CoercivityReport check_ls_coercivity(const CoefficientField& field, const LSParams& params, double R_test,
                                     const std::vector<Vec>& xi_grid, const std::vector<Vec>& x_grid) {
  require(params.theta > 0.0 && params.theta < 0.5, "theta must lie in (0, 1/2)");
  require(params.kappa > 0.0, "kappa must be positive");
  require(!xi_grid.empty() && !x_grid.empty(), "coercivity grids must be nonempty");
  const int d = field.dim();
  for (const auto& xi : xi_grid) require(norm(xi, d) >= R_test, "every sampled |xi| must be >= R_test");

  const double th = params.theta, ka = params.kappa;
  const double fd_x = 1e-4 * field.range();

  // 9^d net of offsets in the cube, restricted to the closed kappa-ball.
  std::vector<Vec> net;
  const int per = 9;
  const int total = d == 1 ? per : (d == 2 ? per * per : per * per * per);
  for (int c = 0; c < total; ++c) {
    const std::array<int, 3> k{c % per, (c / per) % per, c / (per * per)};
    Vec off{};
    for (int i = 0; i < d; ++i) off[i] = ka * (k[i] / 4.0 - 1.0);
    if (norm(off, d) <= ka * (1.0 + 1e-12)) net.push_back(off);
  }

  CoercivityReport rep;
  rep.theta = th;
  rep.kappa = ka;
  rep.rho_floor = params.rho_floor;
  rep.R_test = R_test;
  rep.inf_value = std::numeric_limits<double>::infinity();

  for (const auto& x : x_grid) {
    for (const auto& xi : xi_grid) {
      const double xin = norm(xi, d);
      double inner = std::numeric_limits<double>::infinity();
      for (const auto& off : net) {
        Vec eta{};
        for (int i = 0; i < d; ++i) eta[i] = xi[i] + off[i];
        const double etan = norm(eta, d);
        if (etan < 1e-12) continue;
        const double H = field.hamiltonian(eta, x);
        const Mat sig = field.sigma(eta, x);
        const double sig2 = frob2(sig, d);
        if (!std::isfinite(H) || !std::isfinite(sig2)) fail(ErrorCode::NonFinite, "non-finite field evaluation");
        double dsig2 = 0.0, dxH2 = 0.0, dxiH2 = 0.0;
        for (int k = 0; k < d; ++k) {
          Vec xp = x, xm = x;
          xp[k] += fd_x;
          xm[k] -= fd_x;
          const Mat sp = field.sigma(eta, xp), sm = field.sigma(eta, xm);
          for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
              const double v = (sp[i][j] - sm[i][j]) / (2 * fd_x);
              dsig2 += v * v;
            }
          const double hx = (field.hamiltonian(eta, xp) - field.hamiltonian(eta, xm)) / (2 * fd_x);
          dxH2 += hx * hx;
          const double fd_xi = 1e-6 * std::max(1.0, etan);
          Vec ep = eta, em = eta;
          ep[k] += fd_xi;
          em[k] -= fd_xi;
          const double hxi = (field.hamiltonian(ep, x) - field.hamiltonian(em, x)) / (2 * fd_xi);
          dxiH2 += hxi * hxi;
        }
        const double val = th * (1 - 2 * th) * H * H -
                           std::pow(1 + ka, 3) * sig2 * dsig2 * xin * xin -
                           th * (1 + ka) * (1 + ka) * sig2 * xin * (std::sqrt(dxH2) + ka * std::sqrt(dxiH2));
        inner = std::min(inner, val);
      }
      ++rep.samples;
      if (inner < rep.inf_value) {
        rep.inf_value = inner;
        rep.xi_at = xi;
        rep.x_at = x;
      }
    }
  }
  rep.passed = rep.inf_value >= params.rho_floor;
  return rep;
}

double check_mcm_condition(const CoefficientField& field, std::optional<Box> region) {
  const auto& desc = field.descriptor();
  require(desc.diffusion == DiffusionKind::CurvatureProjection,
          "MCM condition applies only to curvature-projection diffusion");
  require(desc.p == 1.0, "MCM condition applies only to p = 1");
  const int d = field.dim();
  Box box;
  if (region) {
    box = *region;
  } else {
    const double side = desc.kind == FieldKind::PeriodicTrig ? desc.period : 8.0;
    for (int i = 0; i < d; ++i) box.lo[i] = 0.0, box.hi[i] = side;
  }
  const int n = d == 1 ? 4096 : (d == 2 ? 256 : 48);
  const int total = d == 1 ? n : (d == 2 ? n * n : n * n * n);
  double margin = std::numeric_limits<double>::infinity();
  for (int c = 0; c < total; ++c) {
    const std::array<int, 3> k{c % n, (c / n) % n, c / (n * n)};
    Vec x{};
    for (int i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * k[i] / n;
    const double av = field.a(x);
    margin = std::min(margin, av * av - (d - 1) * norm(field.grad_a(x), d));
  }
  return margin;
}

}  // namespace homlab
