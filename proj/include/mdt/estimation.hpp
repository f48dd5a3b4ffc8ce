#pragma once

// mdt/estimation.hpp: recover (beta, lambda) from indifference prices.
//
// On each day the user reports two prices: the ask at which buying all of the
// worst-case overage d_I - Q is as good as not trading, and the bid at which
// selling all of the best-case surplus Q - d_1 is. Each report gives two
// indifference conditions
//   U_buy(d_I - Q at ask) = U(0),   U_sell(Q - d_1 at bid) = U(0).
// For fixed beta both are linear in lambda, r = gains - lambda * losses, so
// lambda can be eliminated and beta found by a one-dimensional root search.
// Lambda then follows from the sell condition.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mdt/errors.hpp"
#include "mdt/pt_core.hpp"
#include "mdt/roots.hpp"

namespace mdt {

struct IndifferenceReport {
  double buy_price = 0.0;   // ask at which buying d_I - Q is a wash
  double sell_price = 0.0;  // bid at which selling Q - d_1 is a wash
  int day_index = 0;
  double quota_at_day = 0.0;
  DemandDistribution demand_snapshot;

  void validate(double kappa) const {
    detail::require(buy_price > 0.0 && buy_price < kappa, "bad_indifference_price",
                    "buy indifference price must lie in (0, kappa)");
    detail::require(sell_price > 0.0 && sell_price < kappa, "bad_indifference_price",
                    "sell indifference price must lie in (0, kappa)");
    detail::require(quota_at_day > 0.0, "bad_quota", "quota at the report day must be positive");
    demand_snapshot.require_nontrivial(quota_at_day);
  }
};

struct DayEstimate {
  int day_index = 0;
  double beta = 1.0;
  double lambda = 1.0;
};

struct Residuals {
  double buy = 0.0;
  double sell = 0.0;
};

struct EstimationResult {
  double beta = 1.0;
  double lambda = 1.0;
  std::vector<DayEstimate> per_day;
  std::vector<Residuals> residuals;  // per_day[k] evaluated at its own solution
  std::vector<int> skipped_days;
  std::vector<std::string> warnings;
};

struct EstimationOptions {
  double beta_floor = 1e-3;
  double beta_ceiling = 2.0;  // roots past 1 are clamped, so search a little beyond
  int scan_points = 400;
  double beta_tolerance = 1e-10;
};

// Both indifference conditions split into their lambda-free and lambda parts.
struct IndifferenceParts {
  ProspectParts buy;   // U_buy(full) - U(0)
  ProspectParts sell;  // U_sell(full) - U(0)
};

inline IndifferenceParts indifference_parts(double beta, const IndifferenceReport& report, double mu,
                                            ReferencePolicy reference, double kappa) {
  RiskProfile prof;
  prof.beta = beta;
  prof.lambda = 1.0;
  prof.mu = mu;
  prof.reference = reference;
  const UserState st{report.quota_at_day, kappa};
  const auto& d = report.demand_snapshot;
  // The quote's other side is irrelevant to a one-sided objective.
  const Objective buy(Side::Buy, {report.buy_price, report.buy_price}, st, d, prof);
  const Objective sell(Side::Sell, {report.sell_price, report.sell_price}, st, d, prof);
  const ProspectParts none = buy.parts(0.0);
  const ProspectParts b = buy.parts(d.highest() - report.quota_at_day);
  const ProspectParts s = sell.parts(report.quota_at_day - d.lowest());
  return {{b.gains - none.gains, b.losses - none.losses}, {s.gains - none.gains, s.losses - none.losses}};
}

// LHS - RHS of the two indifference conditions.
inline Residuals indifference_residuals(double beta, double lambda, const IndifferenceReport& report, double mu,
                                        ReferencePolicy reference, double kappa) {
  const auto parts = indifference_parts(beta, report, mu, reference, kappa);
  return {parts.buy.utility(lambda), parts.sell.utility(lambda)};
}

// Lambda-free combination: zero exactly when some lambda satisfies both
// conditions at this beta.
inline double beta_residual(double beta, const IndifferenceReport& report, double mu, ReferencePolicy reference,
                            double kappa) {
  const auto p = indifference_parts(beta, report, mu, reference, kappa);
  return p.buy.gains * p.sell.losses - p.sell.gains * p.buy.losses;
}

struct BetaSolution {
  double beta = 1.0;
  bool clamped = false;
};

inline BetaSolution solve_beta_detailed(const IndifferenceReport& report, double mu, ReferencePolicy reference,
                                        double kappa, const EstimationOptions& opt = {}) {
  report.validate(kappa);
  auto f = [&](double b) { return beta_residual(b, report, mu, reference, kappa); };
  const auto br = find_bracket(f, opt.beta_floor, opt.beta_ceiling, opt.scan_points);
  if (!br)
    throw estimation_error("inconsistent_indifference_prices",
                           "inconsistent indifference prices: no beta in (0, 1] reconciles buy price " +
                               std::to_string(report.buy_price) + " and sell price " +
                               std::to_string(report.sell_price));
  const double beta = br->lo == br->hi ? br->lo : bisect(f, br->lo, br->hi, opt.beta_tolerance);
  if (beta > 1.0) return {1.0, true};
  return {beta, false};
}

inline double solve_beta(const IndifferenceReport& report, double mu, ReferencePolicy reference, double kappa,
                         const EstimationOptions& opt = {}) {
  return solve_beta_detailed(report, mu, reference, kappa, opt).beta;
}

// Exact solution of the sell condition, which is linear in lambda.
inline double solve_lambda(double beta, const IndifferenceReport& report, double mu, ReferencePolicy reference,
                           double kappa) {
  const auto p = indifference_parts(beta, report, mu, reference, kappa).sell;
  if (p.losses == 0.0)
    throw estimation_error("degenerate_lambda", "sell condition does not depend on lambda at beta=" +
                                                    std::to_string(beta));
  return p.gains / p.losses;
}

inline EstimationResult estimate_over_cycle(const std::vector<IndifferenceReport>& reports, double mu,
                                            ReferencePolicy reference, double kappa,
                                            const EstimationOptions& opt = {}) {
  detail::require(!reports.empty(), "no_reports", "estimation needs at least one indifference report");
  detail::require(mu > 0.0 && mu <= 1.0, "bad_mu", "mu must lie in (0, 1]");
  EstimationResult out;
  std::string last_error;
  for (const auto& r : reports) {
    try {
      const auto bs = solve_beta_detailed(r, mu, reference, kappa, opt);
      double lambda = solve_lambda(bs.beta, r, mu, reference, kappa);
      const std::string day = "day " + std::to_string(r.day_index) + ": ";
      if (bs.clamped) out.warnings.push_back(day + "beta above 1 clamped to 1");
      if (lambda < 1.0) {
        out.warnings.push_back(day + "lambda " + std::to_string(lambda) + " clamped to 1");
        lambda = 1.0;
      }
      out.per_day.push_back({r.day_index, bs.beta, lambda});
      out.residuals.push_back(indifference_residuals(bs.beta, lambda, r, mu, reference, kappa));
    } catch (const error_base& e) {
      out.skipped_days.push_back(r.day_index);
      last_error = e.code();
      out.warnings.push_back("day " + std::to_string(r.day_index) + " skipped: " + e.code());
    }
  }
  if (out.per_day.empty())
    throw estimation_error("estimation_failed", "no report could be solved (last error: " + last_error + ")");
  // Summed in sorted order so the mean does not depend on report order.
  std::vector<double> betas, lambdas;
  for (const auto& d : out.per_day) betas.push_back(d.beta), lambdas.push_back(d.lambda);
  auto mean = [](std::vector<double>& xs) {
    std::sort(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  out.beta = mean(betas);
  out.lambda = mean(lambdas);
  return out;
}

}  // namespace mdt
