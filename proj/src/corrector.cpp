#include "homlab/corrector.hpp"

#include <cmath>
#include <fstream>

namespace homlab {

std::shared_ptr<const Grid> corrector_torus(const CoefficientField& field, double h, double min_side) {
  require(h > 0.0 && min_side > 0.0, "torus spacing and side must be positive");
  const double side = field.compatible_torus_side(min_side);
  const int n = std::max(3, static_cast<int>(std::ceil(side / h - 1e-9)));
  const double hh = side / n;
  const int d = field.dim();
  std::array<int, 3> ext{1, 1, 1};
  Vec origin{};
  for (int k = 0; k < d; ++k) {
    ext[k] = n;
    origin[k] = -(n / 2) * hh;
  }
  return std::make_shared<const Grid>(Grid::torus(d, hh, ext, origin));
}

CorrectorSolution solve_corrector(const CoefficientField& field, const Vec& xi, double delta,
                                  std::shared_ptr<const Grid> torus, const SolverConfig& cfg, double side_factor) {
  if (!(delta > 0.0 && delta <= 1.0)) fail(ErrorCode::InvalidArgument, "delta must lie in (0, 1]");
  require(torus && torus->periodic(), "the corrector problem needs a torus grid");
  require(torus->dim() == field.dim(), "field and grid dimensions differ");
  for (int k = 0; k < torus->dim(); ++k)
    require(torus->side(k) >= side_factor / delta * (1 - 1e-12),
            "torus side must be at least side_factor / delta");

  SchemeOptions opts;
  opts.eps_reg = cfg.eps_reg;
  opts.envelope = cfg.envelope;
  opts.shift = xi;
  opts.zeroth_order = delta;
  SchemeOperator op(field, torus, opts);

  // -c0|xi|^p/delta is a supersolution.
  const double xin = std::pow(norm(xi, field.dim()), field.p());
  std::vector<double> init(torus->size(), -field.bounds().c0 * xin / delta);
  auto res = solve_stationary(op, std::move(init), 0.0, cfg);

  CorrectorSolution sol;
  sol.v = GridFunction(torus);
  sol.v.values = std::move(res.values);
  sol.delta = delta;
  sol.xi = xi;
  sol.field = field.descriptor();
  sol.residual_norm = res.residual_norm;
  sol.iters = res.iters;
  sol.swept = res.swept;
  sol.dvd0 = -delta * sol.v[torus->nearest(Vec{})];
  return sol;
}

double corrector_xi_continuity(const CoefficientField& field, const Vec& xi1, const Vec& xi2, double delta,
                               std::shared_ptr<const Grid> torus, const SolverConfig& cfg) {
  require(norm(xi1, field.dim()) > 0.0 && norm(xi2, field.dim()) > 0.0, "both xi must be nonzero");
  const auto a = solve_corrector(field, xi1, delta, torus, cfg);
  const auto b = solve_corrector(field, xi2, delta, torus, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) worst = std::max(worst, std::abs(a.v[i] - b.v[i]));
  return worst;
}

double xi_holder_envelope(const Vec& xi1, const Vec& xi2, double delta, double p, double C, int dim) {
  const double lo = std::min(norm(xi1, dim), norm(xi2, dim));
  require(lo > 0.0, "both xi must be nonzero");
  Vec diff{};
  for (int k = 0; k < dim; ++k) diff[k] = xi1[k] - xi2[k];
  return C / delta * std::pow(lo, -2.0 * p / 7.0) * std::pow(norm(diff, dim), 2.0 / 7.0);
}

void save_corrector(const CorrectorSolution& sol, const std::filesystem::path& stem) {
  const int d = sol.v.grid->dim();
  nlohmann::json side;
  side["delta"] = sol.delta;
  side["xi"] = std::vector<double>(sol.xi.begin(), sol.xi.begin() + d);
  side["dvd0"] = sol.dvd0;
  side["field"] = to_json(sol.field);
  side["residual_norm"] = sol.residual_norm;
  side["iters"] = sol.iters;
  write_dump(sol.v, stem, side);
}

CorrectorSolution load_corrector(const std::filesystem::path& stem) {
  CorrectorSolution sol;
  sol.v = read_dump(stem);
  std::filesystem::path hdr = stem;
  hdr += ".json";
  std::ifstream in(hdr);
  nlohmann::json j;
  in >> j;
  const auto& side = j.at("sidecar");
  sol.delta = side.at("delta").get<double>();
  const auto xi = side.at("xi").get<std::vector<double>>();
  sol.xi = to_vec(xi);
  sol.dvd0 = side.at("dvd0").get<double>();
  sol.field = field_descriptor_from_json(side.at("field"));
  sol.residual_norm = side.at("residual_norm").get<double>();
  sol.iters = side.at("iters").get<std::size_t>();
  return sol;
}

}  // namespace homlab
