#pragma once

// European call and basket option generators used as benchmark problems:
// Black-Scholes closed form, lognormal sampling of discounted payoffs and a
// Monte Carlo reference value for baskets.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/data.hpp"
#include "shapereg/error.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

/// Standard normal CDF through erfc, accurate to a few ulps in both tails.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Black-Scholes value of a European call with time to maturity tau.
inline double bs_call_price(double spot, double strike, double rate, double tau, double vol) {
  if (!(spot > 0.0) || !(strike > 0.0) || !(tau > 0.0) || !(vol > 0.0))
    throw InvalidArgument("bs_call_price: spot, strike, tau and vol must be positive");
  const double sd = vol * std::sqrt(tau);
  const double d1 = (std::log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / sd;
  const double d2 = d1 - sd;
  return spot * normal_cdf(d1) - strike * std::exp(-rate * tau) * normal_cdf(d2);
}

struct CallParams {
  double t = 0.1;
  double maturity = 0.4;
  double strike = 10.0;
  double rate = 0.0;
  double vol = 0.2;

  double horizon() const { return maturity - t; }
  double price(double spot) const { return bs_call_price(spot, strike, rate, horizon(), vol); }
};

/// n pairs (S_i, V_i): log S_i ~ N(log K + (r - vol^2/2) t, vol^2 t) and V_i
/// the discounted payoff of one terminal price drawn from S_i.
inline ProblemData sample_call_data(const CallParams& prm, Index n, std::uint64_t seed = kDefaultSeed) {
  if (n < 2) throw InvalidArgument("sample_call_data: need n >= 2");
  if (!(prm.horizon() > 0.0) || !(prm.t > 0.0) || !(prm.vol > 0.0) || !(prm.strike > 0.0))
    throw InvalidArgument("sample_call_data: invalid parameters");
  auto spots_rng = make_rng(seed, 1);
  auto paths_rng = make_rng(seed, 2);
  std::normal_distribution<double> normal;
  const double h = prm.horizon();
  const double disc = std::exp(-prm.rate * h);
  Matrix x(1, n);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const double s = std::exp(std::log(prm.strike) + (prm.rate - 0.5 * prm.vol * prm.vol) * prm.t +
                              prm.vol * std::sqrt(prm.t) * normal(spots_rng));
    const double st = s * std::exp((prm.rate - 0.5 * prm.vol * prm.vol) * h +
                                   prm.vol * std::sqrt(h) * normal(paths_rng));
    x(0, i) = s;
    y[i] = disc * std::max(st - prm.strike, 0.0);
  }
  return ProblemData(std::move(x), std::move(y));
}

struct BasketParams {
  Vector weights;
  Vector vols;
  double rho = 0.1;
  double strike = 10.0;
  double rate = 0.0;
  double t = 0.0;
  double maturity = 0.5;

  /// M assets with w_i = 1/M and vol_i = 0.2 + 0.025 (i - 1).
  static BasketParams defaults(Index m) {
    if (m < 1) throw InvalidArgument("BasketParams: need at least one asset");
    BasketParams p;
    p.weights = Vector::Constant(m, 1.0 / static_cast<double>(m));
    p.vols.resize(m);
    for (Index i = 0; i < m; ++i) p.vols[i] = 0.2 + 0.025 * static_cast<double>(i);
    return p;
  }

  Index assets() const { return weights.size(); }
  double horizon() const { return maturity - t; }

  void validate() const {
    if (weights.size() < 1 || vols.size() != weights.size())
      throw InvalidArgument("BasketParams: weights and vols must have the same positive length");
    if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12)
      throw InvalidArgument("BasketParams: weights must be nonnegative and sum to 1");
    if (!(vols.minCoeff() > 0.0)) throw InvalidArgument("BasketParams: vols must be positive");
    if (!(horizon() > 0.0)) throw InvalidArgument("BasketParams: maturity must exceed t");
    if (!(strike >= 0.0)) throw InvalidArgument("BasketParams: strike must be nonnegative");
  }

  /// Lower Cholesky factor of (T - t) [rho vol_i vol_j] (unit diagonal correlation).
  Matrix covariance_factor() const {
    const Index m = assets();
    Matrix cov(m, m);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) cov(i, j) = (i == j ? 1.0 : rho) * vols[i] * vols[j] * horizon();
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success)
      throw InvalidArgument("BasketParams: covariance is not positive definite");
    return llt.matrixL();
  }

  /// Log-drift (r - vol_i^2/2)(T - t).
  Vector drift() const { return ((rate - 0.5 * vols.array().square()) * horizon()).matrix(); }
};

/// Discounted basket payoff for one standard normal vector z.
inline double basket_payoff(const BasketParams& prm, const Eigen::Ref<const Vector>& spot,
                            const Matrix& factor, const Vector& drift, const Eigen::Ref<const Vector>& z) {
  const Vector terminal = (spot.array().log() + drift.array() + (factor * z).array()).exp().matrix();
  return std::exp(-prm.rate * prm.horizon()) * std::max(prm.weights.dot(terminal) - prm.strike, 0.0);
}

/// n observations with spots uniform on (0, spot_max)^M and responses equal to
/// the discounted payoff of one correlated terminal draw. spot_max <= 0 means
/// 5 K.
inline ProblemData sample_basket_data(const BasketParams& prm, Index n, std::uint64_t seed = kDefaultSeed,
                                      double spot_max = 0.0) {
  prm.validate();
  if (n < 2) throw InvalidArgument("sample_basket_data: need n >= 2");
  const double hi = spot_max > 0.0 ? spot_max : 5.0 * prm.strike;
  if (!(hi > 0.0)) throw InvalidArgument("sample_basket_data: spot range is empty");
  const Index m = prm.assets();
  const Matrix factor = prm.covariance_factor();
  const Vector drift = prm.drift();
  auto spots_rng = make_rng(seed, 1);
  auto paths_rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> unit(0.0, hi);
  std::normal_distribution<double> normal;
  Matrix x(m, n);
  Vector y(n);
  Vector z(m);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < m; ++k) {
      double s = 0.0;
      while (s <= 0.0) s = unit(spots_rng);
      x(k, i) = s;
    }
    for (Index k = 0; k < m; ++k) z[k] = normal(paths_rng);
    y[i] = basket_payoff(prm, x.col(i), factor, drift, z);
  }
  return ProblemData(std::move(x), std::move(y));
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo value of the basket at `spot`. Paths are drawn in chunks of
/// 8192 with one derived stream per chunk, so the result does not depend on
/// the thread count. With `antithetic` each normal vector is paired with its
/// negation and the pair average is one sample.
inline McEstimate mc_basket_value(const Eigen::Ref<const Vector>& spot, const BasketParams& prm, Index paths,
                                  std::uint64_t seed = kDefaultSeed, bool antithetic = false) {
  prm.validate();
  detail::require_dims(spot.size() == prm.assets(), "mc_basket_value: spot has wrong length");
  if (paths < 2) throw InvalidArgument("mc_basket_value: need at least two paths");
  if (!(spot.minCoeff() > 0.0)) throw InvalidArgument("mc_basket_value: spots must be positive");
  const Matrix factor = prm.covariance_factor();
  const Vector drift = prm.drift();
  constexpr Index kChunk = 8192;
  const Index chunks = (paths + kChunk - 1) / kChunk;
  std::vector<double> sums(static_cast<std::size_t>(chunks)), squares(static_cast<std::size_t>(chunks));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index c = 0; c < chunks; ++c) {
    auto rng = make_rng(seed, 1000 + static_cast<std::uint64_t>(c));
    std::normal_distribution<double> normal;
    Vector z(prm.assets());
    double s = 0.0, s2 = 0.0;
    const Index count = std::min(kChunk, paths - c * kChunk);
    for (Index k = 0; k < count; ++k) {
      for (Index a = 0; a < z.size(); ++a) z[a] = normal(rng);
      double v = basket_payoff(prm, spot, factor, drift, z);
      if (antithetic) v = 0.5 * (v + basket_payoff(prm, spot, factor, drift, -z));
      s += v;
      s2 += v * v;
    }
    sums[static_cast<std::size_t>(c)] = s;
    squares[static_cast<std::size_t>(c)] = s2;
  }
  double s = 0.0, s2 = 0.0;
  for (Index c = 0; c < chunks; ++c) {
    s += sums[static_cast<std::size_t>(c)];
    s2 += squares[static_cast<std::size_t>(c)];
  }
  const double np = static_cast<double>(paths);
  McEstimate out;
  out.mean = s / np;
  const double var = std::max(0.0, (s2 - np * out.mean * out.mean) / (np - 1.0));
  out.std_error = std::sqrt(var / np);
  return out;
}

/// Gradient box 0 <= grad V <= w of a basket with weights w.
inline ConstraintSet basket_gradient_bounds(const Eigen::Ref<const Vector>& weights) {
  if (weights.size() < 1 || weights.minCoeff() < 0.0)
    throw InvalidArgument("basket_gradient_bounds: weights must be nonnegative");
  return ConstraintSet::box(Vector::Zero(weights.size()), weights);
}

}  // namespace shapereg
