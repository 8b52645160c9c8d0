#ifndef POISSON_MALLIAVIN_CLI_COMMANDS_HPP
#define POISSON_MALLIAVIN_CLI_COMMANDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../finite_oracle.hpp"
#include "../malliavin.hpp"
#include "../models.hpp"
#include "../point_process.hpp"
#include "../rng.hpp"
#include "../stein_bounds.hpp"
#include "config.hpp"

namespace pm::cli {

enum exit_code : int { ok = 0, usage = 1, identity_failure = 2, numeric_failure = 3 };

/// Decimal with 17 significant digits; empty optional -> empty cell.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_cell(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

/// Everything a command needs to draw delta(G) for one parameter point.
struct ModelSetup {
  Integrand g;
  Window space;
  std::function<double(const Configuration&)> delta;
  std::optional<double> closed_sigma2;
  std::optional<models::ParetoClosedForms> closed;
};

inline models::CylinderSpec cylinder_spec(const EmbeddingParams& p) {
  models::CylinderSpec s;
  s.b_lo = p.b_lo;
  s.b_hi = p.b_hi;
  s.offset_lo = p.offset_lo;
  s.offset_hi = p.offset_hi;
  s.h_height = p.h_height;
  s.g = models::affine_capped(p.g_a, p.g_b, p.y_cap);
  s.y_cap = p.y_cap;
  s.u_constant = p.u;
  s.u_bound = std::abs(p.u);
  return s;
}

/// `nodes_rng` draws quadrature nodes when no exact compensator exists.
inline ModelSetup make_setup(const ExperimentConfig& c, Rng nodes_rng) {
  if (c.model == "pareto") {
    const models::ParetoModel m{c.d, c.t, {}};
    ModelSetup s{models::pareto_integrand(m), m.window(), {}, {}, {}};
    if (c.d <= 4) {
      s.closed_sigma2 = models::pareto_sigma2(c.d, c.t);
      s.closed = models::pareto_bound_closed(c.d, c.t);
    }
    if (s.g.compensator) {
      s.delta = [g = s.g](const Configuration& eta) { return ks_integral_exact(g, eta); };
    } else {
      auto nodes = integration_nodes(s.space, c.node_count, nodes_rng);
      s.delta = [g = s.g, nodes](const Configuration& eta) { return ks_integral(g, eta, nodes); };
    }
    return s;
  }
  if (c.model == "constant") {
    const Window w = Window::unit_cube(c.d, c.t);
    ModelSetup s{models::constant_integrand(c.constant_value, w), w, {}, {}, {}};
    s.delta = [g = s.g](const Configuration& eta) { return ks_integral_exact(g, eta); };
    s.closed_sigma2 = c.constant_value * c.constant_value * w.total_mass();
    return s;
  }
  const auto m = models::cylinder_model(cylinder_spec(c.embedding));
  ModelSetup s{models::embedding_integrand(m), m.sim_window, {}, {}, {}};
  if (s.g.compensator) {
    s.delta = [m](const Configuration& eta) { return models::embedding_delta(eta, m); };
  } else {
    auto nodes = integration_nodes(m.base, c.node_count, nodes_rng);
    s.delta = [m, nodes](const Configuration& eta) { return models::embedding_delta(eta, m, nodes); };
  }
  return s;
}

/// The config with the sweep parameter set to v.
inline ExperimentConfig at_sweep_value(ExperimentConfig c, const std::string& param, double v) {
  if (param == "t") {
    c.t = v;
  } else if (param == "d") {
    if (!(v >= 1.0) || v != std::floor(v)) {
      throw config_error("sweep values for d must be positive integers");
    }
    c.d = static_cast<std::size_t>(v);
  } else if (param == "b_volume") {
    if (!(v > 0.0)) {
      throw config_error("sweep values for b_volume must be positive");
    }
    auto& e = c.embedding;
    const double side = std::pow(v, 1.0 / static_cast<double>(e.b_lo.size()));
    e.b_hi = e.b_lo;
    for (auto& h : e.b_hi) {
      h += side;
    }
  }
  return c;
}

/// The row label of an unswept study: B volume or t.
inline double sweep_value(const ExperimentConfig& c) {
  if (c.model == "embedding") {
    double vol = 1.0;
    for (std::size_t i = 0; i < c.embedding.b_lo.size(); ++i) {
      vol *= c.embedding.b_hi[i] - c.embedding.b_lo[i];
    }
    return vol;
  }
  return c.t;
}

inline const std::vector<std::string>& study_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> v{"sweep_value", "sigma2_hat", "sigma2_se"};
    for (int i = 1; i <= 9; ++i) {
      v.push_back("T" + std::to_string(i));
      v.push_back("T" + std::to_string(i) + "_se");
    }
    for (const char* s : {"wasserstein_bound", "wasserstein_se", "kolmogorov_bound",
                          "kolmogorov_se", "empirical_d_W", "empirical_d_K", "n_samples",
                          "clamped_terms", "closed_sigma2", "closed_T3", "closed_T4_bound",
                          "closed_T5_bound", "closed_T6", "closed_T6_bound", "closed_T7",
                          "closed_T9", "closed_T9_bound"}) {
      v.emplace_back(s);
    }
    return v;
  }();
  return cols;
}

/// One CSV row for one parameter point.
inline std::vector<std::optional<double>> study_row(const ExperimentConfig& c, double value,
                                                    Rng rng) {
  const ModelSetup s = make_setup(c, rng.substream({1}));
  EstimatorSizes sizes{c.n_sigma, c.n_outer, c.n_space, c.workers};
  Rng report_rng = rng.substream({2});
  const BoundReport rep = bound_report(s.g, s.space, sizes, report_rng, c.cyclic);

  std::vector<std::optional<double>> row{value, rep.sigma2_hat, rep.sigma2_std_error};
  int clamped = 0;
  for (const auto& t : rep.terms) {
    row.emplace_back(t.mean);
    row.emplace_back(t.std_error);
    clamped += t.clamped ? 1 : 0;
  }
  row.emplace_back(rep.wasserstein_bound);
  row.emplace_back(rep.wasserstein_std_error);
  row.emplace_back(rep.kolmogorov_bound);
  row.emplace_back(rep.kolmogorov_std_error);
  if (c.n_samples > 0) {
    Rng sample_rng = rng.substream({3});
    auto xs = sample_functional(s.space, s.delta, c.n_samples, sample_rng, c.workers);
    const double sigma = std::sqrt(s.closed_sigma2.value_or(rep.sigma2_hat));
    for (auto& x : xs) {
      x /= sigma;
    }
    const auto dist = empirical_distances(xs);
    row.emplace_back(dist.d_W);
    row.emplace_back(dist.d_K);
  } else {
    row.emplace_back(std::nullopt);
    row.emplace_back(std::nullopt);
  }
  row.emplace_back(static_cast<double>(c.n_samples));
  row.emplace_back(static_cast<double>(clamped));
  row.emplace_back(s.closed_sigma2);
  if (s.closed) {
    // Terms were estimated on G / sigma_hat; a term homogeneous of degree k
    // scales by sigma_hat^-k.
    const double sh = std::sqrt(rep.sigma2_hat);
    const auto& k = *s.closed;
    row.emplace_back(k.t3 / std::pow(sh, 3));
    row.emplace_back(k.t4_bound / std::pow(sh, 3));
    row.emplace_back(k.t5_bound / std::pow(sh, 3));
    row.emplace_back(k.t6 / (sh * sh));
    row.emplace_back(k.t6_bound / (sh * sh));
    row.emplace_back(k.t7 / (sh * sh));
    row.emplace_back(k.t9 / (sh * sh));
    row.emplace_back(k.t9_bound / (sh * sh));
  } else {
    row.insert(row.end(), 8, std::nullopt);
  }
  for (const auto& v : row) {
    if (v && !std::isfinite(*v)) {
      throw numeric_error("study produced a non-finite cell");
    }
  }
  return row;
}

/// Writes the study CSV to `out`.
inline void write_study(const ExperimentConfig& c, std::ostream& out) {
  validate(c);
  const auto& cols = study_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out << (i ? "," : "") << cols[i];
  }
  out << '\n';
  std::vector<std::pair<ExperimentConfig, double>> points;
  if (c.sweep) {
    for (double v : c.sweep->values) {
      points.emplace_back(at_sweep_value(c, c.sweep->parameter, v), v);
    }
  } else {
    points.emplace_back(c, sweep_value(c));
  }
  const Rng root(*c.seed);
  for (std::size_t r = 0; r < points.size(); ++r) {
    const auto row = study_row(points[r].first, points[r].second, root.substream({r}));
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << format_cell(row[i]);
    }
    out << '\n';
  }
}

/// Writes n_samples raw delta(G) values, one per line.
inline void write_samples(const ExperimentConfig& c, std::ostream& out) {
  validate(c);
  const Rng root(*c.seed);
  const ModelSetup s = make_setup(c, root.substream({1}));
  Rng rng = root.substream({3});
  const auto xs = sample_functional(s.space, s.delta, c.n_samples, rng, c.workers);
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw numeric_error("non-finite KS-integral sample");
    }
    out << format_real(x) << '\n';
  }
}

struct OracleLine {
  std::string name;
  double residual = 0.0;
  double bound = 0.0;
  bool passed = false;
};

/// Runs the exact identity suite on the configured atomic space.
inline std::vector<OracleLine> run_oracle(const ExperimentConfig& c) {
  validate(c);
  const oracle::AtomSpace space(c.oracle.weights);
  const std::size_t m = space.size();
  const std::size_t n_max = c.oracle.n_max;
  std::vector<OracleLine> lines;
  auto push = [&](const oracle::Residual& r, const std::string& suffix) {
    lines.push_back({r.name + suffix, r.residual, r.tail_bound + r.tolerance, r.passed()});
  };

  // G == 1 first, then randomized bounded integrands.
  const oracle::BoundedIntegrand one{[](const oracle::Counts&, std::size_t) { return 1.0; },
                                     [](std::size_t) { return 1.0; }};
  const oracle::BoundedFunctional count{
      [](const oracle::Counts& n) { return std::cos(static_cast<double>(oracle::total_count(n))); },
      [](std::size_t) { return 1.0; }};
  push(oracle::verify_mecke(space, n_max, one), "[const]");
  push(oracle::verify_variance(space, n_max, one, one), "[const]");
  push(oracle::verify_ibp(space, n_max, one, count), "[const]");

  Rng rng = Rng(*c.seed).substream({7});
  for (std::size_t k = 0; k < c.oracle.integrands; ++k) {
    const auto g = oracle::random_integrand(m, rng);
    const auto g2 = oracle::random_integrand(m, rng);
    const auto h = oracle::random_functional(m, rng);
    const std::string tag = "[" + std::to_string(k) + "]";
    push(oracle::verify_mecke(space, n_max, g), tag);
    push(oracle::verify_variance(space, n_max, g, g2), tag);
    push(oracle::verify_ibp(space, n_max, g, h), tag);

    // Commutation on every enumerated configuration, relative to scale.
    const auto e = oracle::enumerate(space, n_max);
    double worst = 0.0;
    for (const auto& wc : e.configs) {
      for (std::size_t x = 0; x < m; ++x) {
        const double r = oracle::commutation_residual_exact(g.fn, space, wc.counts, x);
        const double scale =
            1.0 + std::abs(oracle::ks_exact(g.fn, space, oracle::plus_atom(wc.counts, x)));
        worst = std::max(worst, std::abs(r) / scale);
      }
    }
    lines.push_back({"commutation" + tag, worst, 1e-12, worst <= 1e-12});
  }
  for (std::size_t k = 0; k < c.oracle.kernels; ++k) {
    const auto h = oracle::random_kernel(m, rng);
    const auto b = oracle::verify_iterated_bound(space, n_max, h);
    lines.push_back({"iterated_bound[" + std::to_string(k) + "]", b.lhs, b.rhs + b.tail_bound,
                     b.holds()});
  }
  if (c.oracle.corrupt) {
    // Negative control: E sum_{x in eta} G_x(eta - delta_x) without the
    // compensator is lambda(X) for G == 1, not 0.
    const auto e = oracle::enumerate(space, n_max);
    const auto r = oracle::expect(e, [](const oracle::Counts& n) {
      return static_cast<double>(oracle::total_count(n));
    });
    lines.push_back({"mecke_without_compensator", std::abs(r.value), r.tail_bound + 1e-10,
                     std::abs(r.value) <= r.tail_bound + 1e-10});
  }
  return lines;
}

inline int cmd_oracle(const ExperimentConfig& c, std::ostream& out) {
  const auto lines = run_oracle(c);
  bool all = true;
  for (const auto& l : lines) {
    out << l.name << " residual=" << format_real(l.residual) << " bound=" << format_real(l.bound)
        << ' ' << (l.passed ? "PASS" : "FAIL") << '\n';
    all = all && l.passed;
  }
  return all ? ok : identity_failure;
}

inline void write_to(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    return;
  }
  std::ostringstream buf;
  body(buf);
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot open output file '" + path + "'");
  }
  f << buf.str();
  if (!f) {
    throw std::runtime_error("failed writing output file '" + path + "'");
  }
}

inline int cmd_study(const ExperimentConfig& c) {
  write_to(c.output, [&](std::ostream& os) { write_study(c, os); });
  return ok;
}

inline int cmd_sample(const ExperimentConfig& c) {
  write_to(c.output, [&](std::ostream& os) { write_samples(c, os); });
  return ok;
}

} // namespace pm::cli

#endif
