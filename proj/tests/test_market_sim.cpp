#include <catch_amalgamated.hpp>

#include <random>

#include "mdt/market_sim.hpp"

using namespace mdt;
using Catch::Approx;

TEST_CASE("price paths stay in bounds and never cross") {
  for (bool coupled : {true, false})
    for (double pc : {0.0, 0.1, 0.4, 0.5}) {
      PriceProcess pp;
      pp.p_c = pc;
      pp.coupled = coupled;
      pp.initial_min_sell = 3;
      pp.initial_max_buy = 2;
      std::mt19937_64 rng(5);
      for (int rep = 0; rep < 50; ++rep) {
        const auto path = price_path(rng, pp, 300);
        for (const auto& q : path) {
          CHECK(q.max_buy_price >= 1.0);
          CHECK(q.min_sell_price <= 59.0);
          CHECK(q.max_buy_price <= q.min_sell_price);
          if (coupled) CHECK(q.max_buy_price == q.min_sell_price);
        }
        if (pc == 0.0) CHECK(path.back().min_sell_price == 3);
      }
    }
}

TEST_CASE("walk steps are +-1 with the configured probability") {
  std::mt19937_64 rng(9);
  int up = 0, down = 0, n = 200000;
  for (int k = 0; k < n; ++k) {
    const int s = price_step(rng, 0.3);
    up += s == 1;
    down += s == -1;
  }
  CHECK(up / double(n) == Approx(0.3).margin(0.005));
  CHECK(down / double(n) == Approx(0.3).margin(0.005));
}

TEST_CASE("demand models") {
  std::mt19937_64 rng(1);
  DemandModel u;
  DemandModel nrm{DemandKind::Normal};
  double su = 0, sn = 0, sn2 = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double a = u.draw(rng), b = nrm.draw(rng);
    CHECK((a >= 1.0 && a <= 3.0));
    CHECK(b >= 0.0);
    su += a, sn += b, sn2 += b * b;
  }
  CHECK(su / n == Approx(2.0).margin(0.01));
  CHECK(sn / n == Approx(2.0).margin(0.01));
  CHECK(std::sqrt(sn2 / n - (sn / n) * (sn / n)) == Approx(1.0 / 3).margin(0.01));
  DemandModel wide{DemandKind::Normal, 0.2, 1.0};
  for (int k = 0; k < 1000; ++k) CHECK(wide.draw(rng) >= 0.0);
}

TEST_CASE("no trading pays exactly the overage") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto sc = draw_scenario(seed, {}, {}, {});
    const auto l = run_strategy(sc, StrategyKind::NoTrading, RiskProfile::eut(), {});
    CHECK(l.trades.empty());
    CHECK(*l.profit == Approx(satisfaction_loss(2.0 - sc.current_total, 60)).margin(1e-9));
  }
}

TEST_CASE("trade with certainty settles on the last day") {
  Scenario sc;
  sc.past_totals = {2, 2, 2};
  sc.current_total = 2.5;
  sc.quotes.assign(30, {20, 20});
  const auto l = run_strategy(sc, StrategyKind::TradeWithCertainty, RiskProfile::eut(), {});
  REQUIRE(l.trades.size() == 1);
  CHECK(l.trades[0].day == 30);
  CHECK(l.trades[0].quantity == Approx(0.5));
  CHECK(*l.profit == Approx(-10));
  CHECK(l.quota == Approx(0).margin(1e-12));

  sc.current_total = 1.5;
  sc.quotes.back() = {20, 16};
  const auto s = run_strategy(sc, StrategyKind::TradeWithCertainty, RiskProfile::eut(), {});
  REQUIRE(s.trades.size() == 1);
  CHECK(s.trades[0].quantity == Approx(-0.5));
  CHECK(*s.profit == Approx(8));
}

TEST_CASE("simulation is deterministic per seed") {
  PriceProcess pp;
  pp.p_c = 0.3;
  for (auto st : {StrategyKind::Advisor, StrategyKind::TradeWithCertainty, StrategyKind::NoTrading}) {
    const auto a = simulate_cycle(77, st, RiskProfile::pt(0.8, 2, 0.9), pp, {});
    const auto b = simulate_cycle(77, st, RiskProfile::pt(0.8, 2, 0.9), pp, {});
    CHECK(a == b);
    CHECK(a.complete());
    CHECK(a.quota == Approx(a.initial_quota + a.traded_total() - a.used_total()).margin(1e-12));
  }
}

TEST_CASE("advisor never sells more than it holds") {
  PriceProcess pp;
  pp.p_c = 0.5;
  pp.coupled = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto l = simulate_cycle(seed, StrategyKind::Advisor, RiskProfile::pt(0.6, 1, 0.7), pp, {});
    double q = l.initial_quota;
    std::size_t t = 0;
    for (int day = 1; day <= 30; ++day) {
      for (; t < l.trades.size() && l.trades[t].day == day; ++t) {
        if (l.trades[t].quantity < 0) CHECK(-l.trades[t].quantity <= q + 1e-12);
        q += l.trades[t].quantity;
      }
      q -= l.usage[static_cast<std::size_t>(day - 1)];
    }
  }
}

TEST_CASE("Monte Carlo statistics") {
  const auto one = monte_carlo(1, StrategyKind::Advisor, RiskProfile::eut(), {}, {}, 5);
  CHECK(one.stats.count == 1);
  CHECK(one.stats.mean == one.stats.min);
  CHECK(one.stats.max == one.profits[0]);
  CHECK(one.stats.p50 == one.profits[0]);
  CHECK(one.profits[0] == *simulate_cycle(replica_seed(5, 0), StrategyKind::Advisor, RiskProfile::eut(), {}, {}).profit);

  const auto a = monte_carlo(300, StrategyKind::Advisor, RiskProfile::eut(), {}, {}, 5, {}, 1);
  const auto b = monte_carlo(300, StrategyKind::Advisor, RiskProfile::eut(), {}, {}, 5, {}, 7);
  CHECK(a.profits == b.profits);
  CHECK(a.stats.mean == b.stats.mean);
  CHECK(a.stats.min <= a.stats.mean);
  CHECK(a.stats.mean <= a.stats.max);
  CHECK(a.stats.p05 <= a.stats.p50);
  CHECK(a.stats.p50 <= a.stats.p95);
  const auto c = monte_carlo(300, StrategyKind::Advisor, RiskProfile::eut(), {}, {}, 6);
  CHECK(c.profits != a.profits);
}

TEST_CASE("percentiles interpolate order statistics") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(percentile(v, 0.5) == 3);
  CHECK(percentile(v, 0.25) == 2);
  CHECK(percentile(v, 0.1) == Approx(1.4));
  CHECK_THROWS_AS(summarize({}), precondition_error);
}

TEST_CASE("configuration validation") {
  PriceProcess pp;
  pp.p_c = 0.6;
  CHECK_THROWS_AS(pp.validate(60), precondition_error);
  pp.p_c = 0.1;
  pp.ceiling = 60;
  CHECK_THROWS_AS(pp.validate(60), precondition_error);
  CHECK_THROWS_AS(demand_kind_from_string("poisson"), precondition_error);
  CHECK(strategy_from_string("trade_with_certainty") == StrategyKind::TradeWithCertainty);
  CHECK_THROWS_AS(monte_carlo(0, StrategyKind::Advisor, RiskProfile::eut(), {}, {}, 1), precondition_error);
}
