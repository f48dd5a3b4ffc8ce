#pragma once

// mdt/pt_core.hpp: prospect-theory primitives and the two trading objectives.
//
// A user holding quota Q (GB) faces an uncertain remaining demand d drawn from a
// discrete distribution. Buying q GB at the ask costs ask*q and shrinks the
// overage; selling q GB at the bid earns bid*q and grows it. Overage is billed
// at kappa per GB. Outcomes are valued relative to a reference point R with the
// power value function and Prelec probability weighting.
//
// Every quantity here is a plain double: GB for data, abstract currency for
// money. All functions are pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdt/errors.hpp"

namespace mdt {

enum class ReferencePolicy { High, Low };

inline const char* to_string(ReferencePolicy p) { return p == ReferencePolicy::High ? "high" : "low"; }

inline ReferencePolicy reference_from_string(const std::string& s) {
  if (s == "high") return ReferencePolicy::High;
  if (s == "low") return ReferencePolicy::Low;
  throw precondition_error("bad_reference", "reference policy must be \"high\" or \"low\", got \"" + s + "\"");
}

struct RiskProfile {
  double beta = 1.0;
  double lambda = 1.0;
  double mu = 1.0;
  ReferencePolicy reference = ReferencePolicy::High;

  static RiskProfile eut() { return {}; }
  static RiskProfile pt(double beta, double lambda, double mu, ReferencePolicy ref = ReferencePolicy::High) {
    RiskProfile r{beta, lambda, mu, ref};
    r.validate();
    return r;
  }

  bool is_eut() const { return beta == 1.0 && lambda == 1.0 && mu == 1.0; }

  void validate() const {
    detail::require(beta > 0.0 && beta <= 1.0, "bad_beta", "beta must lie in (0, 1], got " + std::to_string(beta));
    detail::require(lambda >= 1.0 && std::isfinite(lambda), "bad_lambda",
                    "lambda must be >= 1, got " + std::to_string(lambda));
    detail::require(mu > 0.0 && mu <= 1.0, "bad_mu", "mu must lie in (0, 1], got " + std::to_string(mu));
  }

  friend bool operator==(const RiskProfile&, const RiskProfile&) = default;
};

struct Outcome {
  double demand = 0.0;       // GB
  double probability = 0.0;  // objective probability

  friend bool operator==(const Outcome&, const Outcome&) = default;
};

// Discrete future-demand distribution with strictly increasing support.
class DemandDistribution {
 public:
  static constexpr double kProbabilityTolerance = 1e-9;

  DemandDistribution() = default;

  explicit DemandDistribution(std::vector<Outcome> outcomes) : outcomes_(std::move(outcomes)) {
    detail::require(!outcomes_.empty(), "empty_demand", "demand distribution needs at least one outcome");
    double total = 0.0;
    for (std::size_t i = 0; i < outcomes_.size(); ++i) {
      const auto& o = outcomes_[i];
      detail::require(std::isfinite(o.demand) && o.demand >= 0.0, "bad_demand",
                      "demand outcomes must be finite and non-negative");
      detail::require(o.probability >= 0.0 && o.probability <= 1.0, "bad_probability",
                      "outcome probabilities must lie in [0, 1]");
      if (i > 0)
        detail::require(outcomes_[i - 1].demand < o.demand, "unsorted_demand",
                        "demand outcomes must be strictly increasing");
      total += o.probability;
    }
    detail::require(std::abs(total - 1.0) <= kProbabilityTolerance, "probability_sum",
                    "outcome probabilities must sum to 1 (got " + std::to_string(total) + ")");
  }

  // Two-point distribution: low demand with probability 1-p, high with p.
  static DemandDistribution binary(double low, double high, double p_high) {
    return DemandDistribution({{low, 1.0 - p_high}, {high, p_high}});
  }

  // Sorts samples, merges equal values and sums their weights.
  static DemandDistribution from_weighted(std::vector<Outcome> samples) {
    std::sort(samples.begin(), samples.end(), [](const Outcome& a, const Outcome& b) { return a.demand < b.demand; });
    std::vector<Outcome> merged;
    for (const auto& s : samples) {
      if (!merged.empty() && merged.back().demand == s.demand)
        merged.back().probability += s.probability;
      else
        merged.push_back(s);
    }
    return DemandDistribution(std::move(merged));
  }

  std::span<const Outcome> outcomes() const { return outcomes_; }
  std::size_t size() const { return outcomes_.size(); }
  const Outcome& operator[](std::size_t i) const { return outcomes_[i]; }
  double lowest() const { return outcomes_.front().demand; }
  double highest() const { return outcomes_.back().demand; }

  // d_1 < Q < d_I: some outcome leaves surplus and some causes overage.
  bool is_nontrivial(double quota) const { return !outcomes_.empty() && lowest() < quota && highest() > quota; }

  // Number of outcomes strictly below the quota (the 1-based pivot index).
  std::size_t pivot(double quota) const {
    std::size_t n = 0;
    while (n < outcomes_.size() && outcomes_[n].demand < quota) ++n;
    return n;
  }

  void require_nontrivial(double quota) const {
    detail::require(is_nontrivial(quota), "trivial_demand",
                    "demand must straddle the quota (d_1 < Q < d_I); Q=" + std::to_string(quota) +
                        ", d_1=" + std::to_string(outcomes_.empty() ? 0.0 : lowest()) +
                        ", d_I=" + std::to_string(outcomes_.empty() ? 0.0 : highest()));
  }

  friend bool operator==(const DemandDistribution&, const DemandDistribution&) = default;

 private:
  std::vector<Outcome> outcomes_;
};

struct UserState {
  double quota = 0.0;  // remaining quota Q, GB
  double kappa = 60.0; // overage price, currency/GB

  void validate() const {
    detail::require(quota > 0.0 && std::isfinite(quota), "bad_quota", "quota must be positive");
    detail::require(kappa > 0.0 && std::isfinite(kappa), "bad_kappa", "kappa must be positive");
  }
};

struct MarketQuote {
  double min_sell_price = 20.0;  // best ask: what a buyer pays
  double max_buy_price = 16.0;   // best bid: what a seller receives

  void validate() const {
    detail::require(max_buy_price > 0.0, "bad_quote", "max_buy_price must be positive");
    detail::require(max_buy_price <= min_sell_price, "crossed_quote", "max_buy_price must not exceed min_sell_price");
  }

  friend bool operator==(const MarketQuote&, const MarketQuote&) = default;
};

// ---------------------------------------------------------------------------
// Scalar primitives
// ---------------------------------------------------------------------------

// S-shaped value: x^beta on gains, -lambda (-x)^beta on losses.
inline double value(double x, const RiskProfile& profile) {
  if (x >= 0.0) return profile.beta == 1.0 ? x : std::pow(x, profile.beta);
  return -profile.lambda * (profile.beta == 1.0 ? -x : std::pow(-x, profile.beta));
}

// dv/dx away from the kink at 0.
inline double value_derivative(double x, const RiskProfile& profile) {
  if (x == 0.0) return profile.beta == 1.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double mag = profile.beta == 1.0 ? 1.0 : profile.beta * std::pow(std::abs(x), profile.beta - 1.0);
  return x > 0.0 ? mag : profile.lambda * mag;
}

// Prelec weighting exp(-(-ln p)^mu), extended by continuity to w(0) = 0.
inline double weight(double p, const RiskProfile& profile) {
  if (!(p >= 0.0 && p <= 1.0))
    throw precondition_error("bad_probability", "weight() needs p in [0, 1], got " + std::to_string(p));
  if (p == 0.0) return 0.0;
  if (profile.mu == 1.0) return p;
  return std::exp(-std::pow(-std::log(p), profile.mu));
}

// Overage payment: 0 within quota, kappa*y (negative) beyond it.
inline double satisfaction_loss(double y, double kappa) { return y >= 0.0 ? 0.0 : kappa * y; }

inline double reference_point(ReferencePolicy policy, const UserState& state, const DemandDistribution& demand) {
  if (policy == ReferencePolicy::High) return 0.0;
  return state.kappa * (state.quota - demand.highest());
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

enum class Side { Buy, Sell };

inline const char* to_string(Side s) { return s == Side::Buy ? "buy" : "sell"; }

// Gains and losses of a prospect, split so the utility is gains - lambda*losses.
struct ProspectParts {
  double gains = 0.0;
  double losses = 0.0;  // weighted sum of |x|^beta over negative outcomes

  double utility(double lambda) const { return gains - lambda * losses; }
};

// Stage II objective for one side, with the weights and reference point
// computed once. U(q) = sum_i w(p_i) v(x_i(q)) where
//   buy : x_i = -ask*q + L(Q + q - d_i) - R
//   sell: x_i =  bid*q + L(Q - q - d_i) - R
class Objective {
 public:
  Objective(Side side, const MarketQuote& quote, const UserState& state, const DemandDistribution& demand,
            const RiskProfile& profile)
      : side_(side),
        price_(side == Side::Buy ? quote.min_sell_price : quote.max_buy_price),
        quota_(state.quota),
        kappa_(state.kappa),
        reference_(reference_point(profile.reference, state, demand)),
        profile_(profile) {
    demand_.reserve(demand.size());
    weights_.reserve(demand.size());
    for (const auto& o : demand.outcomes()) {
      demand_.push_back(o.demand);
      weights_.push_back(weight(o.probability, profile));
    }
  }

  Side side() const { return side_; }
  double price() const { return price_; }
  double quota() const { return quota_; }
  double kappa() const { return kappa_; }
  double reference() const { return reference_; }
  const RiskProfile& profile() const { return profile_; }
  std::span<const double> demands() const { return demand_; }
  std::span<const double> weights() const { return weights_; }
  std::size_t size() const { return demand_.size(); }

  // Quota surplus in outcome i after trading q.
  double surplus(std::size_t i, double q) const {
    return side_ == Side::Buy ? quota_ + q - demand_[i] : quota_ - q - demand_[i];
  }

  // Outcome relative to the reference point.
  double argument(std::size_t i, double q) const {
    const double cash = side_ == Side::Buy ? -price_ * q : price_ * q;
    return cash + satisfaction_loss(surplus(i, q), kappa_) - reference_;
  }

  // d argument / dq, taken from the right of q.
  double argument_slope(std::size_t i, double q) const {
    if (side_ == Side::Buy) return surplus(i, q) < 0.0 ? kappa_ - price_ : -price_;
    return surplus(i, q) <= 0.0 ? price_ - kappa_ : price_;
  }

  double operator()(double q) const {
    double u = 0.0;
    for (std::size_t i = 0; i < demand_.size(); ++i) u += weights_[i] * value(argument(i, q), profile_);
    return u;
  }

  double derivative(double q) const {
    double du = 0.0;
    for (std::size_t i = 0; i < demand_.size(); ++i) {
      if (weights_[i] == 0.0) continue;
      du += weights_[i] * value_derivative(argument(i, q), profile_) * argument_slope(i, q);
    }
    return du;
  }

  ProspectParts parts(double q) const {
    ProspectParts out;
    const double b = profile_.beta;
    for (std::size_t i = 0; i < demand_.size(); ++i) {
      const double x = argument(i, q);
      if (x >= 0.0)
        out.gains += weights_[i] * std::pow(x, b);
      else
        out.losses += weights_[i] * std::pow(-x, b);
    }
    return out;
  }

 private:
  Side side_;
  double price_;
  double quota_;
  double kappa_;
  double reference_;
  RiskProfile profile_;
  std::vector<double> demand_;
  std::vector<double> weights_;
};

inline double buyer_objective(double q_buy, const MarketQuote& quote, const UserState& state,
                              const DemandDistribution& demand, const RiskProfile& profile) {
  detail::require(q_buy >= 0.0, "negative_quantity", "buying quantity must be non-negative");
  return Objective(Side::Buy, quote, state, demand, profile)(q_buy);
}

inline double seller_objective(double q_sell, const MarketQuote& quote, const UserState& state,
                               const DemandDistribution& demand, const RiskProfile& profile) {
  detail::require(q_sell >= 0.0, "negative_quantity", "selling quantity must be non-negative");
  return Objective(Side::Sell, quote, state, demand, profile)(q_sell);
}

}  // namespace mdt
