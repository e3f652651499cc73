#pragma once

// Per-token fusion rules: the adaptive min-max grid search and the fixed
// half-half product-of-experts baseline.

#include <cmath>
#include <utility>
#include <vector>

#include "cpfuse/core.hpp"

namespace cpfuse {

struct FusionOutcome {
  LogDist dist;
  FusionWeights weights;
  double objective = 0.0;
  std::pair<double, double> constraint_values{0.0, 0.0};
};

// p* with log p*(y) = alpha*l1(y) + beta*l2(y) + gamma, gamma chosen so the
// mass sums to 1. A zero exponent annihilates -inf entries of its model
// (0 * -inf := 0), so alpha = 0 means model 1 is ignored entirely.
inline std::pair<LogDist, double> log_geometric_mix(const LogDist& l1,
                                                    const LogDist& l2,
                                                    double alpha,
                                                    double beta) {
  if (alpha < 0.0 || beta < 0.0)
    throw ContractViolation("log_geometric_mix: negative exponent");
  if (l1.size() != l2.size())
    throw VocabMismatch("log_geometric_mix: size mismatch");
  std::vector<double> mixed(l1.size());
  for (int y = 0; y < l1.size(); ++y) {
    double a = alpha == 0.0 ? 0.0 : alpha * l1[y];
    double b = beta == 0.0 ? 0.0 : beta * l2[y];
    mixed[y] = a + b;
  }
  double gamma = -log_sum_exp(mixed);
  if (gamma == std::numeric_limits<double>::infinity() || std::isnan(gamma))
    throw DegenerateDistribution("log_geometric_mix: empty mixed support");
  for (double& x : mixed)
    if (x != kNegInf) x += gamma;
  return {LogDist(std::move(mixed)), gamma};
}

// KL(p || q) in nats; +inf when p has mass where q has none. Tiny negative
// rounding residue is clamped to 0.
inline double kl_divergence(const LogDist& p, const LogDist& q) {
  if (p.size() != q.size())
    throw VocabMismatch("kl_divergence: size mismatch");
  double kl = 0.0;
  for (int y = 0; y < p.size(); ++y) {
    if (p[y] == kNegInf) continue;  // 0 * log(0/q) = 0
    if (q[y] == kNegInf) return std::numeric_limits<double>::infinity();
    kl += std::exp(p[y]) * (p[y] - q[y]);
  }
  return kl < 0.0 ? 0.0 : kl;
}

// Worst-case constraint value for the candidate (alpha, beta):
//   constraint_i = KL(p* || l_i) + (cum_self - cum_base_i).
inline std::pair<double, std::pair<double, double>> cpfuse_objective(
    double alpha, double beta, const LogDist& l1, const LogDist& l2,
    const SequenceState& state) {
  auto [mixed, gamma] = log_geometric_mix(l1, l2, alpha, beta);
  double c1 = kl_divergence(mixed, l1) + (state.cum_self - state.cum_base1);
  double c2 = kl_divergence(mixed, l2) + (state.cum_self - state.cum_base2);
  return {std::max(c1, c2), {c1, c2}};
}

// Grid search over all (alpha, beta) pairs except (0,0). Ties on the
// objective prefer balanced pairs (smallest |alpha-beta|), then smallest
// alpha, then smallest beta.
inline FusionOutcome cpfuse_step(const LogDist& l1, const LogDist& l2,
                                 const SequenceState& state,
                                 const GridSpec& grid) {
  if (l1.size() != l2.size())
    throw VocabMismatch("cpfuse_step: size mismatch");
  const int n = l1.size();
  const double off1 = state.cum_self - state.cum_base1;
  const double off2 = state.cum_self - state.cum_base2;
  const double inf = std::numeric_limits<double>::infinity();

  bool have_best = false;
  double best_a = 0.0, best_b = 0.0, best_obj = inf;
  double best_c1 = inf, best_c2 = inf;
  auto tie_key = [](double a, double b) {
    return std::make_tuple(std::abs(a - b), a, b);
  };

  std::vector<double> mixed(n), prob(n);
  for (double a : grid.values) {
    for (double b : grid.values) {
      if (a == 0.0 && b == 0.0) continue;
      double mx = kNegInf;
      for (int y = 0; y < n; ++y) {
        double ta = a == 0.0 ? 0.0 : a * l1[y];
        double tb = b == 0.0 ? 0.0 : b * l2[y];
        mixed[y] = ta + tb;
        if (mixed[y] > mx) mx = mixed[y];
      }
      if (mx == kNegInf)
        throw DegenerateDistribution("cpfuse_step: empty mixed support");
      double s = 0.0;
      for (int y = 0; y < n; ++y) {
        prob[y] = mixed[y] == kNegInf ? 0.0 : std::exp(mixed[y] - mx);
        s += prob[y];
      }
      double lse = mx + std::log(s);
      double kl1 = 0.0, kl2 = 0.0;
      for (int y = 0; y < n; ++y) {
        if (prob[y] == 0.0) continue;
        double p = prob[y] / s;
        double lp = mixed[y] - lse;
        kl1 += l1[y] == kNegInf ? inf : p * (lp - l1[y]);
        kl2 += l2[y] == kNegInf ? inf : p * (lp - l2[y]);
      }
      double c1 = (kl1 < 0.0 ? 0.0 : kl1) + off1;
      double c2 = (kl2 < 0.0 ? 0.0 : kl2) + off2;
      double obj = std::max(c1, c2);
      bool take = !have_best || obj < best_obj ||
                  (obj == best_obj && tie_key(a, b) < tie_key(best_a, best_b));
      if (take) {
        best_a = a;
        best_b = b;
        best_obj = obj;
        best_c1 = c1;
        best_c2 = c2;
        have_best = true;
      }
    }
  }
  auto [dist, gamma] = log_geometric_mix(l1, l2, best_a, best_b);
  return FusionOutcome{std::move(dist),
                       FusionWeights{best_a, best_b, gamma},
                       best_obj,
                       {best_c1, best_c2}};
}

// Fixed alpha = beta = 1/2 baseline. Constraint values are still reported
// for diagnostics.
inline FusionOutcome cpdelta_step(const LogDist& l1, const LogDist& l2,
                                  const SequenceState& state = {}) {
  auto [mixed, gamma] = log_geometric_mix(l1, l2, 0.5, 0.5);
  double c1 = kl_divergence(mixed, l1) + (state.cum_self - state.cum_base1);
  double c2 = kl_divergence(mixed, l2) + (state.cum_self - state.cum_base2);
  return FusionOutcome{std::move(mixed),
                       FusionWeights{0.5, 0.5, gamma},
                       std::max(c1, c2),
                       {c1, c2}};
}

}  // namespace cpfuse
