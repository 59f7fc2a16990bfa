#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/common.hpp"

namespace homlab {

/// Structural constants of a coefficient field: H(xi,x) lies between
/// c0|xi|^p and C0|xi|^p and A = sigma sigma^T / 2 has eigenvalues in [0, C0^2/2].
struct StructuralBounds {
  double p = 1.0;
  double c0 = 1.0;
  double C0 = 1.0;
  double range = 1.0;
  int dim = 1;
};

/// Parameters of the coercivity functional (theta in (0,1/2), kappa > 0).
struct LSParams {
  double theta = 0.25;
  double kappa = 0.5;
  double rho_floor = 0.0;
};

enum class FieldKind { Constant, PeriodicTrig, PoissonBump, CheckerboardSmoothed };
enum class DiffusionKind { None, Isotropic, CurvatureProjection, AnisotropicTable };

struct TrigTerm {
  double amplitude = 0.0;
  std::array<int, 3> wave{1, 0, 0};
  double phase = 0.0;
  bool operator==(const TrigTerm&) const = default;
};

struct Box {
  Vec lo{};
  Vec hi{};
  bool contains(const Vec& x, int dim, double pad = 0.0) const {
    for (int i = 0; i < dim; ++i)
      if (x[i] < lo[i] - pad || x[i] > hi[i] + pad) return false;
    return true;
  }
  bool operator==(const Box&) const = default;
};

/// Serializable description of a field. a(x) depends on `kind`:
///   constant:   a = base
///   trig:       a = base + sum_k amplitude_k sin(2 pi wave_k.x / period + phase_k)
///   poisson:    a = base + amplitude (1 - exp(-sum_i bump(|x - x_i| / r))), r = 1/2
///   checker:    a = smoothed piecewise-constant, cell values uniform in [base, base + amplitude]
/// The diffusion A(e) = strength * P, with P = I (isotropic), I - e(x)e
/// (curvature) or (I - e(x)e) diag(table) (I - e(x)e) (anisotropic table).
struct FieldDescriptor {
  FieldKind kind = FieldKind::Constant;
  int dim = 1;
  double p = 1.0;
  std::uint64_t seed = 0;
  double base = 1.0;
  double amplitude = 0.0;
  double intensity = 0.0;
  double period = 1.0;
  double cell_len = 1.0;
  std::vector<TrigTerm> terms;
  DiffusionKind diffusion = DiffusionKind::None;
  double diffusion_strength = 0.0;
  Vec diffusion_table{1.0, 1.0, 1.0};
  // Random cells not touching keep_box (dilated by the field range) are drawn
  // from resample_seed instead of seed. Leaves a(x) unchanged on keep_box.
  std::optional<Box> keep_box;
  std::uint64_t resample_seed = 0;

  bool operator==(const FieldDescriptor&) const = default;
};

nlohmann::json to_json(const FieldDescriptor& d);
FieldDescriptor field_descriptor_from_json(const nlohmann::json& j);

std::string to_string(FieldKind k);
std::string to_string(DiffusionKind k);

class CoefficientField {
 public:
  explicit CoefficientField(FieldDescriptor desc);

  const FieldDescriptor& descriptor() const { return desc_; }
  int dim() const { return desc_.dim; }
  double p() const { return desc_.p; }
  const StructuralBounds& bounds() const { return bounds_; }
  double range() const { return bounds_.range; }
  double a_min() const { return a_min_; }
  double a_max() const { return a_max_; }
  bool is_random() const;
  bool has_diffusion() const {
    return desc_.diffusion != DiffusionKind::None && desc_.diffusion_strength > 0.0;
  }
  /// Sup over directions of tr A(e).
  double max_trace() const;
  /// Sup over directions of the largest eigenvalue of A(e).
  double max_eigenvalue() const;

  double a(const Vec& x) const;
  /// a evaluated on the torus of the given side centered at the origin
  /// (random cells wrap with the torus; trig fields need side % period == 0).
  double a_wrapped(const Vec& x, double side) const;
  Vec grad_a(const Vec& x) const;

  double hamiltonian(const Vec& xi, const Vec& x) const;
  /// sigma(e, x); e need not be normalized (0-homogeneous extension), e = 0 gives 0.
  Mat sigma(const Vec& e, const Vec& x) const;
  Mat diffusion(const Vec& e, const Vec& x) const;
  /// Same as diffusion(e, x) for the shipped kinds, which are x-independent.
  Mat diffusion(const Vec& e) const;

  /// Smallest integer multiple of the field's natural period that is >= side.
  /// Returns side unchanged for constant fields.
  double compatible_torus_side(double side) const;

 private:
  double poisson_a(const Vec& x, std::int64_t wrap_cells) const;
  double checker_a(const Vec& x, std::int64_t wrap_cells) const;
  std::uint64_t cell_key(const std::array<std::int64_t, 3>& cell) const;

  FieldDescriptor desc_;
  StructuralBounds bounds_;
  double a_min_ = 1.0;
  double a_max_ = 1.0;
};

/// Poisson bump field: a = base + height (1 - exp(-sum of unit-diameter bumps)).
CoefficientField sample_poisson_bump_field(std::uint64_t seed, double intensity, double bump_height,
                                           double base, int dim,
                                           DiffusionKind diffusion = DiffusionKind::None,
                                           double diffusion_strength = 0.0, double p = 1.0);

/// Periodic profile base + sum of sine terms; rejected unless strictly positive.
CoefficientField make_periodic_field(double base, std::vector<TrigTerm> terms, double period,
                                     int dim, DiffusionKind diffusion = DiffusionKind::None,
                                     double diffusion_strength = 0.0, double p = 1.0);

CoefficientField make_constant_field(double a0, int dim, double p = 1.0,
                                     DiffusionKind diffusion = DiffusionKind::None,
                                     double diffusion_strength = 0.0);

struct CoercivityReport {
  double inf_value = 0.0;
  Vec xi_at{};
  Vec x_at{};
  bool passed = false;
  double theta = 0.0;
  double kappa = 0.0;
  double rho_floor = 0.0;
  double R_test = 0.0;
  std::size_t samples = 0;
};

/// Sampled infimum of the coercivity functional over xi_grid x x_grid, with
/// the inner infimum over B_kappa(xi) taken on a 9^d net.
CoercivityReport check_ls_coercivity(const CoefficientField& field, const LSParams& params,
                                     double R_test, const std::vector<Vec>& xi_grid,
                                     const std::vector<Vec>& x_grid);

/// inf of a^2 - (d-1)|Da| over a dense grid of `region` (default: one period
/// for trig fields, [0,8]^d otherwise). Requires curvature diffusion and p = 1.
double check_mcm_condition(const CoefficientField& field, std::optional<Box> region = {});

}  // namespace homlab
