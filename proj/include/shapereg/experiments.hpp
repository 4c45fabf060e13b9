#pragma once

// Basket option study: unconstrained and gradient-box fits at several sample
// sizes, scored by mean squared error against Monte Carlo values at random
// test points.

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shapereg/constraint_grammar.hpp"
#include "shapereg/data.hpp"
#include "shapereg/estimator.hpp"
#include "shapereg/fit.hpp"
#include "shapereg/pricing.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

struct BasketExperiment {
  Index assets = 5;
  std::vector<Index> sizes{200, 400, 600};
  Index test_points = 200;
  Index paths = 100000;
  std::uint64_t seed = kDefaultSeed;
  FitOptions fit;  // solver and tolerances; constraint and standardize are set per model
};

struct BasketRow {
  std::string model;  // "UC" or "SC"
  Index size = 0;
  double mse = 0.0;
  double seconds = 0.0;
  SolverReport report;
};

struct BasketOutcome {
  Matrix test_points;  // assets x test_points
  Vector truth;
  double truth_seconds = 0.0;
  std::vector<BasketRow> rows;
};

/// Test points are uniform on (0, 5K)^M from stream 3 of the seed; the value
/// at point i uses Monte Carlo seed `seed + 1 + i`. Both models are fitted on
/// standardized data.
inline BasketOutcome run_basket_experiment(const BasketExperiment& e) {
  if (e.test_points < 1) throw InvalidArgument("basket experiment: need at least one test point");
  const BasketParams prm = BasketParams::defaults(e.assets);
  using clock = std::chrono::steady_clock;
  auto since = [](clock::time_point t) { return std::chrono::duration<double>(clock::now() - t).count(); };

  BasketOutcome out;
  out.test_points.resize(e.assets, e.test_points);
  auto rng = make_rng(e.seed, 3);
  std::uniform_real_distribution<double> unit(0.0, 5.0 * prm.strike);
  for (Index i = 0; i < e.test_points; ++i)
    for (Index k = 0; k < e.assets; ++k) {
      double s = 0.0;
      while (s <= 0.0) s = unit(rng);
      out.test_points(k, i) = s;
    }
  const auto t0 = clock::now();
  out.truth.resize(e.test_points);
  for (Index i = 0; i < e.test_points; ++i)
    out.truth[i] = mc_basket_value(out.test_points.col(i), prm, e.paths, e.seed + 1 + static_cast<std::uint64_t>(i)).mean;
  out.truth_seconds = since(t0);

  const std::string shape = format_constraint(basket_gradient_bounds(prm.weights));
  for (Index n : e.sizes) {
    const ProblemData data = sample_basket_data(prm, n, e.seed);
    for (const auto& [name, constraint] : {std::pair<std::string, std::string>{"UC", "free"}, {"SC", shape}}) {
      FitOptions opt = e.fit;
      opt.constraint = constraint;
      opt.standardize = true;
      const auto t1 = clock::now();
      const FitOutcome f = fit(data, opt);
      BasketRow row;
      row.seconds = since(t1);
      row.model = name;
      row.size = n;
      row.mse = (predict_batch(f.model, out.test_points) - out.truth).squaredNorm() / static_cast<double>(e.test_points);
      row.report = f.report;
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace shapereg
