#pragma once

// mdt/engine.hpp: the daily trading loop over one billing cycle.
//
// Each morning the remaining-month demand is predicted from the same days of
// previous months, the two-stage problem is solved at today's quote and the
// chosen trade is booked. At night the day's usage is booked and the next
// day's quota is Q + q - usage.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdt/errors.hpp"
#include "mdt/optimizer.hpp"
#include "mdt/pt_core.hpp"

namespace mdt {

struct UsageHistory {
  std::vector<std::vector<double>> past_months;  // [0] is the most recent previous month
  std::vector<double> current;                   // month to date

  void validate() const {
    for (const auto& m : past_months)
      for (double x : m) detail::require(x >= 0.0 && std::isfinite(x), "bad_usage", "usage must be non-negative");
    for (double x : current) detail::require(x >= 0.0 && std::isfinite(x), "bad_usage", "usage must be non-negative");
  }
};

struct TradeRecord {
  int day = 0;
  double quantity = 0.0;  // signed: buy > 0, sell < 0
  double price = 0.0;

  friend bool operator==(const TradeRecord&, const TradeRecord&) = default;
};

struct CycleLedger {
  double initial_quota = 2.0;
  double kappa = 60.0;
  int cycle_length = 30;
  int day = 1;             // the day whose usage has not been booked yet
  double quota = 2.0;      // quota at the start of `day`, after today's trades
  std::vector<TradeRecord> trades;
  std::vector<double> usage;  // usage[j-1] is day j
  std::optional<double> profit;

  static CycleLedger open(double initial_quota, double kappa = 60.0, int cycle_length = 30) {
    detail::require(initial_quota >= 0.0, "bad_quota", "initial quota must be non-negative");
    detail::require(kappa > 0.0, "bad_kappa", "kappa must be positive");
    detail::require(cycle_length >= 1, "bad_cycle_length", "cycle length must be at least one day");
    CycleLedger l;
    l.initial_quota = initial_quota;
    l.kappa = kappa;
    l.cycle_length = cycle_length;
    l.quota = initial_quota;
    return l;
  }

  bool complete() const { return static_cast<int>(usage.size()) >= cycle_length; }

  double traded_total() const {
    double s = 0.0;
    for (const auto& t : trades) s += t.quantity;
    return s;
  }

  double used_total() const {
    double s = 0.0;
    for (double u : usage) s += u;
    return s;
  }

  friend bool operator==(const CycleLedger&, const CycleLedger&) = default;
};

// Remaining demand d_i = usage of month i over days (day+1 .. end), one
// outcome per past month with probability 1/I, equal totals merged.
inline DemandDistribution predict_demand(const UsageHistory& history, int day) {
  detail::require(!history.past_months.empty(), "empty_history", "demand prediction needs at least one past month");
  detail::require(day >= 1, "bad_day", "day index starts at 1");
  const double p = 1.0 / static_cast<double>(history.past_months.size());
  std::vector<Outcome> samples;
  for (const auto& month : history.past_months) {
    double d = 0.0;
    for (std::size_t j = static_cast<std::size_t>(day); j < month.size(); ++j) d += month[j];
    samples.push_back({d, p});
  }
  return DemandDistribution::from_weighted(std::move(samples));
}

// Books a trade on the current day. Selling more than the quota now held is
// refused.
inline void record_trade(CycleLedger& ledger, double signed_quantity, double price) {
  detail::require(!ledger.complete(), "cycle_complete", "the billing cycle is already complete");
  detail::require(std::isfinite(signed_quantity), "bad_quantity", "trade quantity must be finite");
  detail::require(price > 0.0 && std::isfinite(price), "bad_price", "trade price must be positive");
  if (signed_quantity < 0.0 && -signed_quantity > ledger.quota)
    throw quota_cap_error("cannot sell " + std::to_string(-signed_quantity) + " GB with only " +
                          std::to_string(ledger.quota) + " GB of quota left");
  if (signed_quantity == 0.0) return;
  ledger.trades.push_back({ledger.day, signed_quantity, price});
  ledger.quota += signed_quantity;
}

// Books the day's usage and moves to the next day.
inline void record_usage(CycleLedger& ledger, double used) {
  detail::require(!ledger.complete(), "cycle_complete", "the billing cycle is already complete");
  detail::require(used >= 0.0 && std::isfinite(used), "bad_usage", "usage must be non-negative");
  ledger.usage.push_back(used);
  ledger.quota -= used;
  ++ledger.day;
}

// One full day: trade (possibly zero) then usage. Q_next = Q + traded - used.
inline CycleLedger update_quota(CycleLedger ledger, double traded, double price, double used) {
  if (traded != 0.0) record_trade(ledger, traded, price);
  record_usage(ledger, used);
  return ledger;
}

// Net trading revenue plus the overage payment at cycle end.
inline double cycle_profit(const CycleLedger& ledger) {
  detail::require(ledger.complete(), "cycle_incomplete", "profit is defined only for a complete cycle");
  double cash = 0.0;
  for (const auto& t : ledger.trades) cash -= t.quantity * t.price;
  return cash + satisfaction_loss(ledger.initial_quota + ledger.traded_total() - ledger.used_total(), ledger.kappa);
}

inline void close_cycle(CycleLedger& ledger) { ledger.profit = cycle_profit(ledger); }

enum class DecisionPath { Optimizer, Fallback, EndOfCycle };

inline const char* to_string(DecisionPath p) {
  switch (p) {
    case DecisionPath::Optimizer: return "optimizer";
    case DecisionPath::Fallback: return "fallback";
    case DecisionPath::EndOfCycle: break;
  }
  return "end_of_cycle";
}

struct DailyDecision {
  TradeDecision decision;
  DemandDistribution demand;
  DecisionPath path = DecisionPath::Optimizer;
  double price = 0.0;  // price the trade would execute at, 0 for no trade
};

// Surpluses and shortfalls below this are rounding residue of the ledger
// arithmetic, not quota anyone could trade.
inline constexpr double kMinTradeGb = 1e-9;

namespace detail {

// Used when the predicted demand does not straddle the quota, so the outcome
// of some trade is certain.
inline TradeDecision certain_demand_trade(const MarketQuote& quote, double quota, double kappa,
                                          const DemandDistribution& demand, const RiskProfile& profile) {
  const double surplus = quota - demand.highest();
  const double shortfall = demand.lowest() - quota;
  const UserState st{quota, kappa};
  const Objective sell(Side::Sell, quote, st, demand, profile);
  const double u0 = sell(0.0);
  if (surplus > kMinTradeGb) {
    const double q = std::min(surplus, std::max(quota, 0.0));
    const double u = sell(q);
    if (q > 0.0 && u > u0 + tie_margin(u0)) return {Role::Seller, q, u};
  }
  if (shortfall > kMinTradeGb && quote.min_sell_price < kappa) {
    const Objective buy(Side::Buy, quote, st, demand, profile);
    return {Role::Buyer, shortfall, buy(shortfall)};
  }
  return {Role::None, 0.0, u0};
}

}  // namespace detail

inline DailyDecision daily_decision(const CycleLedger& ledger, const UsageHistory& history, const MarketQuote& quote,
                                    const RiskProfile& profile, const SolverOptions& opt = {}) {
  detail::require(!ledger.complete(), "cycle_complete", "the billing cycle is already complete");
  quote.validate();
  profile.validate();
  DailyDecision out;
  out.demand = predict_demand(history, ledger.day);
  if (ledger.day >= ledger.cycle_length) {
    out.path = DecisionPath::EndOfCycle;
    return out;
  }
  if (ledger.quota > 0.0 && out.demand.is_nontrivial(ledger.quota)) {
    out.decision = decide_role(quote, {ledger.quota, ledger.kappa}, out.demand, profile, opt);
    out.path = DecisionPath::Optimizer;
  } else {
    out.decision = detail::certain_demand_trade(quote, ledger.quota, ledger.kappa, out.demand, profile);
    out.path = DecisionPath::Fallback;
  }
  if (out.decision.role == Role::Buyer) out.price = quote.min_sell_price;
  if (out.decision.role == Role::Seller) out.price = quote.max_buy_price;
  return out;
}

// ---------------------------------------------------------------------------
// CSV usage ingest: header "month,day,usage_gb"
// ---------------------------------------------------------------------------

// Months are integers; the largest month is the current one unless
// current_month is given. Days within a month must run 1..n without gaps.
inline UsageHistory usage_history_from_csv(std::istream& in, std::optional<int> current_month = std::nullopt) {
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "bad_csv", "usage CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  detail::require(line == "month,day,usage_gb", "bad_csv", "usage CSV header must be month,day,usage_gb");
  std::map<int, std::map<int, double>> months;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string m, d, u;
    const bool ok = std::getline(ss, m, ',') && std::getline(ss, d, ',') && std::getline(ss, u);
    detail::require(ok, "bad_csv", "usage CSV row " + std::to_string(row) + " needs three fields");
    try {
      std::size_t pm = 0, pd = 0, pu = 0;
      const int month = std::stoi(m, &pm);
      const int day = std::stoi(d, &pd);
      const double usage = std::stod(u, &pu);
      detail::require(pm == m.size() && pd == d.size() && pu == u.size(), "bad_csv",
                      "usage CSV row " + std::to_string(row) + " has trailing characters");
      detail::require(day >= 1, "bad_csv", "usage CSV row " + std::to_string(row) + ": day must be >= 1");
      detail::require(usage >= 0.0, "bad_usage", "usage CSV row " + std::to_string(row) + ": negative usage");
      detail::require(months[month].emplace(day, usage).second, "bad_csv",
                      "usage CSV row " + std::to_string(row) + ": duplicate day");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const precondition_error*>(&e)) throw;
      throw precondition_error("bad_csv", "usage CSV row " + std::to_string(row) + " is not numeric");
    }
  }
  detail::require(!months.empty(), "bad_csv", "usage CSV has no rows");
  const int current = current_month.value_or(months.rbegin()->first);
  UsageHistory h;
  for (auto it = months.rbegin(); it != months.rend(); ++it) {
    std::vector<double> days;
    int expect = 1;
    for (const auto& [day, u] : it->second) {
      detail::require(day == expect, "bad_csv",
                      "month " + std::to_string(it->first) + " is missing day " + std::to_string(expect));
      days.push_back(u);
      ++expect;
    }
    if (it->first == current)
      h.current = std::move(days);
    else if (it->first < current)
      h.past_months.push_back(std::move(days));
  }
  return h;
}

}  // namespace mdt
