#pragma once

// mdt/optimizer.hpp: two-stage trade decision.
//
// Stage II maximises the buyer or seller objective over the traded quantity.
// The objective is a weighted sum of power functions of piecewise-linear
// arguments, so it is smooth between
//   * overage breakpoints, where an outcome's surplus crosses zero, and
//   * value kinks, where an outcome's argument crosses the reference point.
// Between consecutive breakpoints every argument keeps its sign: all losses
// give a convex piece, all gains a concave one, a mix is unimodal. Beyond the
// last overage breakpoint (d_I - Q buying, Q - d_1 selling) the objective only
// decreases. The global optimum is therefore found among the breakpoints and
// the zeros of the analytic derivative inside non-convex pieces.
//
// Stage I picks whichever side attains the larger utility.
//
// The I = 2 closed forms and a grid oracle live here too so that tests can
// pit them against the general solver.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mdt/errors.hpp"
#include "mdt/pt_core.hpp"
#include "mdt/roots.hpp"

namespace mdt {

enum class Role { Buyer, Seller, None };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::Buyer: return "buy";
    case Role::Seller: return "sell";
    case Role::None: break;
  }
  return "none";
}

struct TradeDecision {
  Role role = Role::None;
  double quantity = 0.0;  // GB, always >= 0
  double utility = 0.0;

  // Signed ledger convention: buying is positive, selling negative.
  double signed_quantity() const {
    return role == Role::Buyer ? quantity : role == Role::Seller ? -quantity : 0.0;
  }
};

enum class Shape { Convex, Concave, Unimodal, Decreasing };

inline const char* to_string(Shape s) {
  switch (s) {
    case Shape::Convex: return "convex";
    case Shape::Concave: return "concave";
    case Shape::Unimodal: return "unimodal";
    case Shape::Decreasing: break;
  }
  return "decreasing";
}

struct Subinterval {
  double lo = 0.0;
  double hi = 0.0;  // +inf for the trailing piece
  Shape shape = Shape::Convex;
};

struct SubintervalAnalysis {
  std::vector<double> breakpoints;  // sorted, starts at 0, ends at the search bound
  std::vector<Subinterval> pieces;
  std::vector<double> critical_points;
};

struct SolverOptions {
  int derivative_samples = 64;
  double bisection_tolerance = 1e-9;
  double boundary_offset = 1e-12;
};

// Past this bound the objective is strictly decreasing.
inline double search_bound(Side side, double quota, const DemandDistribution& demand) {
  return side == Side::Buy ? std::max(0.0, demand.highest() - quota) : std::max(0.0, quota - demand.lowest());
}

namespace detail {

inline constexpr double kMergeTolerance = 1e-12;

inline bool near_one(double x) { return std::abs(x - 1.0) < 1e-9; }

inline void push_inside(std::vector<double>& pts, double q, double bound) {
  if (std::isfinite(q) && q > 0.0 && q < bound) pts.push_back(q);
}

// Overage breakpoints plus the points where an argument crosses zero.
inline std::vector<double> breakpoints_for(const Objective& obj, double bound) {
  std::vector<double> pts{0.0};
  const double quota = obj.quota();
  const double kappa = obj.kappa();
  const double price = obj.price();
  const double ref = obj.reference();
  const auto demand = obj.demands();
  for (std::size_t i = 0; i < demand.size(); ++i) {
    const double edge = obj.side() == Side::Buy ? demand[i] - quota : quota - demand[i];
    push_inside(pts, edge, bound);
    if (obj.side() == Side::Buy) {
      // surplus < 0: (kappa - price) q + kappa (Q - d_i) - R
      const double a = (ref - kappa * (quota - demand[i])) / (kappa - price);
      if (a < edge) push_inside(pts, a, bound);
      // surplus >= 0: -price q - R
      const double b = -ref / price;
      if (b >= edge) push_inside(pts, b, bound);
    } else {
      // surplus > 0: price q - R
      const double a = ref / price;
      if (a < edge) push_inside(pts, a, bound);
      // surplus <= 0: price q + kappa (Q - q - d_i) - R
      const double b = (kappa * (quota - demand[i]) - ref) / (kappa - price);
      if (b >= edge) push_inside(pts, b, bound);
    }
  }
  pts.push_back(bound);
  std::sort(pts.begin(), pts.end());
  std::vector<double> out;
  for (double p : pts)
    if (out.empty() || p - out.back() > kMergeTolerance) out.push_back(p);
  if (out.size() > 1 && std::abs(out.back() - bound) <= kMergeTolerance) out.back() = bound;
  return out;
}

inline Shape shape_at(const Objective& obj, double q) {
  bool any_gain = false, any_loss = false;
  for (std::size_t i = 0; i < obj.size(); ++i) {
    if (obj.weights()[i] == 0.0) continue;
    const double x = obj.argument(i, q);
    if (x > 0.0) any_gain = true;
    if (x < 0.0) any_loss = true;
  }
  if (any_gain && any_loss) return Shape::Unimodal;
  return any_gain ? Shape::Concave : Shape::Convex;
}

// Zeros of the derivative on (lo, hi), bracketed by sampling.
inline void critical_points_in(const Objective& obj, double lo, double hi, const SolverOptions& opt,
                               std::vector<double>& out) {
  const double off = opt.boundary_offset;
  if (hi - lo <= 4.0 * off) return;
  const int n = std::max(2, opt.derivative_samples);
  const double a = lo + off, b = hi - off;
  auto df = [&](double q) { return obj.derivative(q); };
  double prev_q = a;
  double prev_d = df(a);
  for (int k = 1; k < n; ++k) {
    const double q = a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    const double d = df(q);
    if (d == 0.0) {
      out.push_back(q);
    } else if (prev_d != 0.0 && (prev_d < 0.0) != (d < 0.0)) {
      out.push_back(bisect(df, prev_q, q, opt.bisection_tolerance));
    }
    prev_q = q;
    prev_d = d;
  }
}

inline void check_price(double price, double kappa, const char* which) {
  require(price > 0.0, "bad_price", std::string(which) + " must be positive");
  require(price < kappa, "price_not_below_kappa",
          std::string(which) + " must be below the overage price kappa (" + std::to_string(price) +
              " >= " + std::to_string(kappa) + ")");
}

inline void check_instance(Side side, const MarketQuote& quote, const UserState& state,
                           const DemandDistribution& demand, const RiskProfile& profile) {
  state.validate();
  profile.validate();
  demand.require_nontrivial(state.quota);
  if (side == Side::Buy)
    check_price(quote.min_sell_price, state.kappa, "min_sell_price");
  else
    check_price(quote.max_buy_price, state.kappa, "max_buy_price");
}

inline double tie_margin(double u) { return 1e-12 * (1.0 + std::abs(u)); }

inline Role role_of(Side s) { return s == Side::Buy ? Role::Buyer : Role::Seller; }

}  // namespace detail

inline SubintervalAnalysis analyze_subintervals(const Objective& obj, const SolverOptions& opt = {}) {
  SubintervalAnalysis out;
  const auto d = obj.demands();
  const double bound =
      obj.side() == Side::Buy ? std::max(0.0, d.back() - obj.quota()) : std::max(0.0, obj.quota() - d.front());
  out.breakpoints = detail::breakpoints_for(obj, bound);
  for (std::size_t k = 0; k + 1 < out.breakpoints.size(); ++k) {
    const double lo = out.breakpoints[k], hi = out.breakpoints[k + 1];
    const Shape shape = detail::shape_at(obj, 0.5 * (lo + hi));
    out.pieces.push_back({lo, hi, shape});
    if (shape != Shape::Convex) detail::critical_points_in(obj, lo, hi, opt, out.critical_points);
  }
  out.pieces.push_back({bound, std::numeric_limits<double>::infinity(), Shape::Decreasing});
  return out;
}

// Maximises one side's objective. Ties go to the smaller quantity, so a user
// indifferent between trading and not trading does not trade.
inline TradeDecision solve_side(Side side, const MarketQuote& quote, const UserState& state,
                                const DemandDistribution& demand, const RiskProfile& profile,
                                const SolverOptions& opt = {}) {
  detail::check_instance(side, quote, state, demand, profile);
  const Objective obj(side, quote, state, demand, profile);
  const SubintervalAnalysis an = analyze_subintervals(obj, opt);

  std::vector<double> candidates = an.breakpoints;
  candidates.insert(candidates.end(), an.critical_points.begin(), an.critical_points.end());
  std::sort(candidates.begin(), candidates.end());

  double best_q = 0.0;
  double best_u = obj(0.0);
  for (double q : candidates) {
    const double u = obj(q);
    if (u > best_u + detail::tie_margin(best_u)) {
      best_u = u;
      best_q = q;
    }
  }
  if (best_q == 0.0) return {Role::None, 0.0, best_u};
  return {detail::role_of(side), best_q, best_u};
}

inline TradeDecision solve_buyer_general(const MarketQuote& quote, const UserState& state,
                                         const DemandDistribution& demand, const RiskProfile& profile,
                                         const SolverOptions& opt = {}) {
  return solve_side(Side::Buy, quote, state, demand, profile, opt);
}

inline TradeDecision solve_seller_general(const MarketQuote& quote, const UserState& state,
                                          const DemandDistribution& demand, const RiskProfile& profile,
                                          const SolverOptions& opt = {}) {
  return solve_side(Side::Sell, quote, state, demand, profile, opt);
}

// Stage I. Both Stage II problems are solved; the larger utility wins and an
// exact tie (including both sides declining to trade) means no trade.
struct RoleChoice {
  TradeDecision decision;
  TradeDecision buyer;
  TradeDecision seller;
};

inline RoleChoice choose_role(const MarketQuote& quote, const UserState& state, const DemandDistribution& demand,
                              const RiskProfile& profile, const SolverOptions& opt = {}) {
  quote.validate();
  RoleChoice out;
  out.buyer = solve_buyer_general(quote, state, demand, profile, opt);
  out.seller = solve_seller_general(quote, state, demand, profile, opt);
  const double ub = out.buyer.utility, us = out.seller.utility;
  const double margin = detail::tie_margin(std::max(std::abs(ub), std::abs(us)));
  if (out.buyer.quantity > 0.0 && ub > us + margin)
    out.decision = out.buyer;
  else if (out.seller.quantity > 0.0 && us > ub + margin)
    out.decision = out.seller;
  else
    out.decision = {Role::None, 0.0, Objective(Side::Buy, quote, state, demand, profile)(0.0)};
  return out;
}

inline TradeDecision decide_role(const MarketQuote& quote, const UserState& state, const DemandDistribution& demand,
                                 const RiskProfile& profile, const SolverOptions& opt = {}) {
  return choose_role(quote, state, demand, profile, opt).decision;
}

// ---------------------------------------------------------------------------
// Binary demand: closed-form thresholds and decisions
// ---------------------------------------------------------------------------

struct ThresholdPrices {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
  double buyer_eut = kUnset;
  double buyer_pt_high = kUnset;
  double buyer_pt_low = kUnset;
  double seller_eut = kUnset;
  double seller_pt_high = kUnset;
  double seller_pt_low = kUnset;
};

// Low demand d_low with probability 1 - p, high demand d_high with probability p.
struct BinaryDemand {
  double low = 0.0;
  double high = 0.0;
  double p_high = 0.5;

  DemandDistribution distribution() const { return DemandDistribution::binary(low, high, p_high); }

  void validate(double quota) const {
    detail::require(low >= 0.0 && low < quota && quota < high, "trivial_demand",
                    "binary demand needs 0 <= d_low < Q < d_high");
    detail::require(p_high > 0.0 && p_high < 1.0, "bad_probability", "binary demand needs 0 < p < 1");
  }
};

inline ThresholdPrices buyer_thresholds(const UserState& state, const BinaryDemand& demand,
                                        const RiskProfile& profile) {
  profile.validate();
  const double wp = weight(demand.p_high, profile);
  const double wq = weight(1.0 - demand.p_high, profile);
  const double share = wp / (wp + wq);
  ThresholdPrices t;
  t.buyer_eut = state.kappa * demand.p_high;
  t.buyer_pt_high = state.kappa * std::pow(share, 1.0 / profile.beta);
  t.buyer_pt_low = state.kappa * share;
  return t;
}

// Residual of the PT-high seller threshold condition; zero at the threshold,
// positive below it.
inline double seller_high_threshold_residual(double price, const UserState& state, const BinaryDemand& demand,
                                             const RiskProfile& profile) {
  const double k = state.kappa, b = profile.beta;
  const double wp = weight(demand.p_high, profile);
  const double wq = weight(1.0 - demand.p_high, profile);
  const double over = 1.0 + k * (demand.high - state.quota) / ((k - price) * (state.quota - demand.low));
  return profile.lambda * std::pow(k - price, b) * wp / (std::pow(price, b) * wq) * std::pow(over, b - 1.0) - 1.0;
}

// Residual of the PT-low seller threshold condition (gain from selling all of
// the surplus minus the weighted loss); increasing in price.
inline double seller_low_threshold_residual(double price, const UserState& state, const BinaryDemand& demand,
                                            const RiskProfile& profile) {
  const double k = state.kappa, b = profile.beta, q = state.quota;
  const double wp = weight(demand.p_high, profile);
  const double wq = weight(1.0 - demand.p_high, profile);
  const double base = k * (demand.high - q);
  const double gain = std::pow((price - k) * q + k * demand.high - price * demand.low, b) - std::pow(base, b);
  return wq * gain - profile.lambda * wp * std::pow((k - price) * (q - demand.low), b);
}

inline ThresholdPrices seller_thresholds(const UserState& state, const BinaryDemand& demand,
                                         const RiskProfile& profile) {
  profile.validate();
  state.validate();
  demand.validate(state.quota);
  const double k = state.kappa;
  const double eps = 1e-9 * k;
  const double tol = 1e-13 * k;
  auto solve = [&](auto&& f, const char* name) {
    const double flo = f(eps), fhi = f(k - eps);
    if ((flo < 0.0) == (fhi < 0.0))
      throw numerical_error("threshold_not_bracketed", std::string(name) + " threshold not bracketed in (0, kappa): f(" +
                                                           std::to_string(eps) + ")=" + std::to_string(flo) + ", f(" +
                                                           std::to_string(k - eps) + ")=" + std::to_string(fhi));
    return bisect(f, eps, k - eps, tol);
  };
  ThresholdPrices t;
  t.seller_eut = k * demand.p_high;
  t.seller_pt_high =
      solve([&](double x) { return seller_high_threshold_residual(x, state, demand, profile); }, "seller PT-high");
  t.seller_pt_low =
      solve([&](double x) { return seller_low_threshold_residual(x, state, demand, profile); }, "seller PT-low");
  return t;
}

enum class BinaryRegime { Full, NoTrade, Interior };

inline const char* to_string(BinaryRegime r) {
  switch (r) {
    case BinaryRegime::Full: return "full";
    case BinaryRegime::NoTrade: return "none";
    case BinaryRegime::Interior: break;
  }
  return "interior";
}

struct BinaryDecision {
  TradeDecision decision;
  BinaryRegime regime = BinaryRegime::NoTrade;
  double threshold = 0.0;  // the price the regime switch is compared against
};

namespace detail {

inline BinaryDecision finish_binary(Side side, double q, BinaryRegime regime, double threshold,
                                    const MarketQuote& quote, const UserState& state, const BinaryDemand& demand,
                                    const RiskProfile& profile) {
  const Objective obj(side, quote, state, demand.distribution(), profile);
  BinaryDecision out;
  out.regime = q > 0.0 ? regime : BinaryRegime::NoTrade;
  out.threshold = threshold;
  out.decision = {q > 0.0 ? role_of(side) : Role::None, q, obj(q)};
  return out;
}

}  // namespace detail

inline BinaryDecision solve_binary_buyer(const MarketQuote& quote, const UserState& state, const BinaryDemand& demand,
                                         const RiskProfile& profile) {
  detail::check_instance(Side::Buy, quote, state, demand.distribution(), profile);
  demand.validate(state.quota);
  const double price = quote.min_sell_price;
  const double k = state.kappa, b = profile.beta;
  const double full = demand.high - state.quota;
  const ThresholdPrices t = buyer_thresholds(state, demand, profile);

  if (profile.reference == ReferencePolicy::High) {
    const double q = price < t.buyer_pt_high ? full : 0.0;
    return detail::finish_binary(Side::Buy, q, BinaryRegime::Full, t.buyer_pt_high, quote, state, demand, profile);
  }
  if (price < t.buyer_pt_low)
    return detail::finish_binary(Side::Buy, full, BinaryRegime::Full, t.buyer_pt_low, quote, state, demand, profile);
  if (detail::near_one(b))
    return detail::finish_binary(Side::Buy, 0.0, BinaryRegime::NoTrade, t.buyer_pt_low, quote, state, demand, profile);
  // Concave on [0, d_h - Q]; the first-order condition has a closed form.
  const double wp = weight(demand.p_high, profile);
  const double wq = weight(1.0 - demand.p_high, profile);
  const double ratio = std::pow(wp * std::pow(k - price, b) / (wq * price), 1.0 / (b - 1.0));
  const double q = std::clamp(k * full / (ratio + price), 0.0, full);
  return detail::finish_binary(Side::Buy, q, BinaryRegime::Interior, t.buyer_pt_low, quote, state, demand, profile);
}

inline BinaryDecision solve_binary_seller(const MarketQuote& quote, const UserState& state, const BinaryDemand& demand,
                                          const RiskProfile& profile) {
  detail::check_instance(Side::Sell, quote, state, demand.distribution(), profile);
  demand.validate(state.quota);
  const double price = quote.max_buy_price;
  const double k = state.kappa, b = profile.beta;
  const double full = state.quota - demand.low;
  const ThresholdPrices t = seller_thresholds(state, demand, profile);

  if (profile.reference == ReferencePolicy::Low) {
    const double q = price > t.seller_pt_low ? full : 0.0;
    return detail::finish_binary(Side::Sell, q, BinaryRegime::Full, t.seller_pt_low, quote, state, demand, profile);
  }
  if (price > t.seller_pt_high)
    return detail::finish_binary(Side::Sell, full, BinaryRegime::Full, t.seller_pt_high, quote, state, demand, profile);
  if (detail::near_one(b))
    return detail::finish_binary(Side::Sell, 0.0, BinaryRegime::NoTrade, t.seller_pt_high, quote, state, demand,
                                 profile);
  const double wp = weight(demand.p_high, profile);
  const double wq = weight(1.0 - demand.p_high, profile);
  const double c = wq * std::pow(price, b) / (wp * profile.lambda * std::pow(k - price, b));
  const double q = std::clamp(k / (k - price) * (demand.high - state.quota) / (std::pow(c, 1.0 / (b - 1.0)) - 1.0),
                              0.0, full);
  return detail::finish_binary(Side::Sell, q, BinaryRegime::Interior, t.seller_pt_high, quote, state, demand, profile);
}

// ---------------------------------------------------------------------------
// Grid oracle (verification only)
// ---------------------------------------------------------------------------

struct OracleOptions {
  double q_max = -1.0;  // < 0: use the search bound
  double step = 1e-4;
  int refine_candidates = 16;
  double refine_tolerance = 1e-11;
};

// Exhaustive grid maximisation followed by golden-section refinement around
// the best grid local maxima.
inline TradeDecision brute_force_oracle(Side side, const MarketQuote& quote, const UserState& state,
                                        const DemandDistribution& demand, const RiskProfile& profile,
                                        OracleOptions opt = {}) {
  detail::require(opt.step > 0.0, "bad_step", "oracle step must be positive");
  const Objective obj(side, quote, state, demand, profile);
  const double q_max = opt.q_max >= 0.0 ? opt.q_max : search_bound(side, state.quota, demand);
  const auto n = static_cast<std::size_t>(std::ceil(q_max / opt.step));
  std::vector<double> grid(n + 1);
  std::vector<double> util(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    grid[k] = std::min(q_max, static_cast<double>(k) * opt.step);
    util[k] = obj(grid[k]);
  }
  // Local maxima of the sampled curve.
  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k <= n; ++k) {
    const bool left = k == 0 || util[k] > util[k - 1];
    const bool right = k == n || util[k] >= util[k + 1];
    if (left && right) peaks.push_back(k);
  }
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return util[a] > util[b]; });
  if (peaks.size() > static_cast<std::size_t>(opt.refine_candidates)) peaks.resize(opt.refine_candidates);

  double best_q = 0.0;
  double best_u = util[0];
  auto consider = [&](double q) {
    const double u = obj(q);
    if (u > best_u + detail::tie_margin(best_u) ||
        (std::abs(u - best_u) <= detail::tie_margin(best_u) && q < best_q)) {
      best_u = std::max(u, best_u);
      best_q = q;
    }
  };
  for (std::size_t k : peaks) {
    consider(grid[k]);
    const double lo = k == 0 ? 0.0 : grid[k - 1];
    const double hi = k == n ? q_max : grid[k + 1];
    if (hi > lo) consider(golden_max(obj, lo, hi, opt.refine_tolerance));
  }
  if (best_q == 0.0) return {Role::None, 0.0, best_u};
  return {detail::role_of(side), best_q, best_u};
}

}  // namespace mdt
