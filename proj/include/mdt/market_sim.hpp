#pragma once

// mdt/market_sim.hpp: Monte Carlo evaluation of trading strategies.
//
// A replica is one billing cycle: three past months and the current month
// get monthly usage totals from the demand model (spread evenly over the
// days), prices follow a lazy +-1 random walk, and a strategy trades day by
// day against the resulting quotes. All randomness of a replica is drawn
// up front from its own stream, so every strategy sees the same world.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mdt/engine.hpp"
#include "mdt/errors.hpp"
#include "mdt/optimizer.hpp"
#include "mdt/pt_core.hpp"

namespace mdt {

struct PriceProcess {
  double p_c = 0.1;               // probability of each of the +1 and -1 moves
  double initial_min_sell = 20.0;
  double initial_max_buy = 16.0;  // used only when not coupled
  bool coupled = true;            // one price serves as both bid and ask
  double floor = 1.0;
  double ceiling = 59.0;          // must stay below kappa

  void validate(double kappa) const {
    detail::require(p_c >= 0.0 && p_c <= 0.5, "bad_pc", "p_c must lie in [0, 0.5]");
    detail::require(floor > 0.0 && floor <= ceiling, "bad_price_bounds", "need 0 < floor <= ceiling");
    detail::require(ceiling < kappa, "price_not_below_kappa", "price ceiling must stay below kappa");
    detail::require(initial_min_sell >= floor && initial_min_sell <= ceiling, "bad_price",
                    "initial min_sell_price outside [floor, ceiling]");
    if (!coupled)
      detail::require(initial_max_buy >= floor && initial_max_buy <= initial_min_sell, "bad_price",
                      "initial max_buy_price must lie in [floor, min_sell_price]");
  }
};

enum class DemandKind { Uniform, Normal };

inline const char* to_string(DemandKind k) { return k == DemandKind::Uniform ? "uniform" : "normal"; }

inline DemandKind demand_kind_from_string(const std::string& s) {
  if (s == "uniform") return DemandKind::Uniform;
  if (s == "normal") return DemandKind::Normal;
  throw precondition_error("bad_demand_model", "demand model must be \"uniform\" or \"normal\", got \"" + s + "\"");
}

// Monthly usage totals in GB. Uniform draws from [mean - half_width,
// mean + half_width]; Normal draws N(mean, std) truncated at 0.
struct DemandModel {
  DemandKind kind = DemandKind::Uniform;
  double mean = 2.0;
  double std = 1.0 / 3.0;
  double half_width = 1.0;

  void validate() const {
    detail::require(mean > 0.0, "bad_demand_model", "mean monthly demand must be positive");
    detail::require(std > 0.0, "bad_demand_model", "demand std must be positive");
    detail::require(half_width >= 0.0 && half_width <= mean, "bad_demand_model",
                    "uniform half width must lie in [0, mean]");
  }

  template <typename Rng>
  double draw(Rng& rng) const {
    if (kind == DemandKind::Uniform)
      return std::uniform_real_distribution<double>(mean - half_width, mean + half_width)(rng);
    return std::max(0.0, std::normal_distribution<double>(mean, std)(rng));
  }
};

enum class StrategyKind { Advisor, TradeWithCertainty, NoTrading };

inline const char* to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::Advisor: return "advisor";
    case StrategyKind::TradeWithCertainty: return "trade_with_certainty";
    case StrategyKind::NoTrading: break;
  }
  return "no_trading";
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "advisor") return StrategyKind::Advisor;
  if (s == "trade_with_certainty") return StrategyKind::TradeWithCertainty;
  if (s == "no_trading") return StrategyKind::NoTrading;
  throw precondition_error("bad_strategy", "unknown strategy \"" + s + "\"");
}

struct CycleSettings {
  double initial_quota = 2.0;
  double kappa = 60.0;
  int days = 30;
  int history_months = 3;

  void validate() const {
    detail::require(initial_quota > 0.0, "bad_quota", "initial quota must be positive");
    detail::require(kappa > 0.0, "bad_kappa", "kappa must be positive");
    detail::require(days >= 1, "bad_cycle_length", "cycle needs at least one day");
    detail::require(history_months >= 1, "bad_history", "need at least one past month");
  }
};

// Everything random about one replica.
struct Scenario {
  std::vector<double> past_totals;  // [0] most recent
  double current_total = 0.0;
  std::vector<MarketQuote> quotes;  // quotes[j-1] is day j

  UsageHistory history(int days) const {
    UsageHistory h;
    for (double t : past_totals) h.past_months.emplace_back(days, t / days);
    return h;
  }
  double daily_usage(int days) const { return current_total / days; }
};

template <typename Rng>
int price_step(Rng& rng, double p_c) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < p_c) return 1;
  if (u < 2.0 * p_c) return -1;
  return 0;
}

template <typename Rng>
std::vector<MarketQuote> price_path(Rng& rng, const PriceProcess& pp, int days) {
  std::vector<MarketQuote> out;
  out.reserve(static_cast<std::size_t>(days));
  double ask = pp.initial_min_sell;
  double bid = pp.coupled ? ask : pp.initial_max_buy;
  for (int d = 0; d < days; ++d) {
    out.push_back({ask, bid});
    ask = std::clamp(ask + price_step(rng, pp.p_c), pp.floor, pp.ceiling);
    if (pp.coupled) {
      bid = ask;
    } else {
      bid = std::clamp(bid + price_step(rng, pp.p_c), pp.floor, pp.ceiling);
      bid = std::min(bid, ask);  // the book never crosses
    }
  }
  return out;
}

inline Scenario draw_scenario(std::uint64_t seed, const PriceProcess& pp, const DemandModel& dm,
                              const CycleSettings& cs) {
  std::mt19937_64 rng(seed);
  Scenario s;
  for (int i = 0; i < cs.history_months; ++i) s.past_totals.push_back(dm.draw(rng));
  s.current_total = dm.draw(rng);
  s.quotes = price_path(rng, pp, cs.days);
  return s;
}

inline CycleLedger run_strategy(const Scenario& sc, StrategyKind strategy, const RiskProfile& profile,
                                const CycleSettings& cs) {
  auto ledger = CycleLedger::open(cs.initial_quota, cs.kappa, cs.days);
  const UsageHistory history = sc.history(cs.days);
  const double used = sc.daily_usage(cs.days);
  for (int day = 1; day <= cs.days; ++day) {
    const MarketQuote& quote = sc.quotes[static_cast<std::size_t>(day - 1)];
    if (strategy == StrategyKind::Advisor) {
      const auto dd = daily_decision(ledger, history, quote, profile);
      if (dd.decision.role != Role::None) record_trade(ledger, dd.decision.signed_quantity(), dd.price);
    } else if (strategy == StrategyKind::TradeWithCertainty && day == cs.days) {
      // Usage is known by now: settle the exact surplus or shortfall.
      const double left = ledger.quota - used;
      if (left < 0.0) record_trade(ledger, -left, quote.min_sell_price);
      if (left > 0.0) record_trade(ledger, -left, quote.max_buy_price);
    }
    record_usage(ledger, used);
  }
  close_cycle(ledger);
  return ledger;
}

inline CycleLedger simulate_cycle(std::uint64_t seed, StrategyKind strategy, const RiskProfile& profile,
                                  const PriceProcess& pp, const DemandModel& dm, const CycleSettings& cs = {}) {
  cs.validate();
  pp.validate(cs.kappa);
  dm.validate();
  profile.validate();
  return run_strategy(draw_scenario(seed, pp, dm, cs), strategy, profile, cs);
}

// Seed of replica k, independent of thread scheduling.
inline std::uint64_t replica_seed(std::uint64_t base_seed, std::uint64_t replica) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct ProfitStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  double p05 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p95 = 0.0;
  std::size_t count = 0;
};

// Linear interpolation between order statistics.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline ProfitStats summarize(const std::vector<double>& profits) {
  detail::require(!profits.empty(), "no_replicas", "cannot summarise zero replicas");
  ProfitStats s;
  s.count = profits.size();
  double sum = 0.0;
  for (double p : profits) sum += p;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double p : profits) ss += (p - s.mean) * (p - s.mean);
  s.stddev = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  std::vector<double> sorted = profits;
  std::sort(sorted.begin(), sorted.end());
  s.min = sorted.front();
  s.max = sorted.back();
  // Clamp so that floating-point drift in the mean cannot break min <= mean <= max.
  s.mean = std::clamp(s.mean, s.min, s.max);
  s.p05 = percentile(sorted, 0.05);
  s.p25 = percentile(sorted, 0.25);
  s.p50 = percentile(sorted, 0.50);
  s.p75 = percentile(sorted, 0.75);
  s.p95 = percentile(sorted, 0.95);
  return s;
}

struct MonteCarloResult {
  ProfitStats stats;
  std::vector<double> profits;  // profits[k] is replica k
};

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs fn(k) for k in [0, n) over a fixed pool; fn must write only slot k.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, n))));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < n; k += threads) fn(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline MonteCarloResult monte_carlo(std::size_t replicas, StrategyKind strategy, const RiskProfile& profile,
                                    const PriceProcess& pp, const DemandModel& dm, std::uint64_t base_seed,
                                    const CycleSettings& cs = {}, unsigned threads = default_threads()) {
  detail::require(replicas >= 1, "no_replicas", "need at least one replica");
  cs.validate();
  pp.validate(cs.kappa);
  dm.validate();
  profile.validate();
  MonteCarloResult out;
  out.profits.resize(replicas);
  parallel_for(replicas, threads, [&](std::size_t k) {
    const Scenario sc = draw_scenario(replica_seed(base_seed, k), pp, dm, cs);
    out.profits[k] = *run_strategy(sc, strategy, profile, cs).profit;
  });
  out.stats = summarize(out.profits);
  return out;
}

}  // namespace mdt
