#include <catch_amalgamated.hpp>

#include <random>

#include "mdt/optimizer.hpp"
#include "support/random_instances.hpp"
#include "support/reference_model.hpp"

using namespace mdt;
using Catch::Approx;

namespace {
const DemandDistribution kTwoPoint = DemandDistribution::binary(0.5, 2.0, 0.5);
const UserState kState{1.0, 60.0};

ref::Instance two_point(double ask, double bid) {
  ref::Instance r;
  r.demand = {{0.5, 0.5}, {2.0, 0.5}};
  r.ask = ask;
  r.bid = bid;
  return r;
}
}  // namespace

TEST_CASE("EUT buyer on the two-point instance") {
  auto inst = two_point(20, 16);
  auto [q_or, u_or] = ref::grid_argmax([&](double q) { return inst.buy(q); }, 3.0, 1e-4);
  const auto d = solve_buyer_general({20, 16}, kState, kTwoPoint, RiskProfile::eut());
  CHECK(d.role == Role::Buyer);
  CHECK(d.quantity == Approx(q_or).margin(2e-4));
  CHECK(d.quantity == Approx(1.0));
  CHECK(d.utility == Approx(u_or));

  inst.ask = 40;
  auto [q2, u2] = ref::grid_argmax([&](double q) { return inst.buy(q); }, 3.0, 1e-4);
  const auto d2 = solve_buyer_general({40, 16}, kState, kTwoPoint, RiskProfile::eut());
  CHECK(d2.quantity == 0.0);
  CHECK(q2 == Approx(0.0).margin(1e-9));
  CHECK(d2.role == Role::None);
  CHECK(d2.utility == Approx(u2));
}

TEST_CASE("EUT seller on the two-point instance") {
  auto inst = two_point(20, 16);
  auto [q_or, u_or] = ref::grid_argmax([&](double q) { return inst.sell(q); }, 0.5, 1e-4);
  const auto d = solve_seller_general({20, 16}, kState, kTwoPoint, RiskProfile::eut());
  CHECK(d.quantity == 0.0);
  CHECK(q_or == Approx(0.0).margin(1e-9));

  inst.bid = 40;
  auto [q2, u2] = ref::grid_argmax([&](double q) { return inst.sell(q); }, 0.5, 1e-4);
  const auto d2 = solve_seller_general({45, 40}, kState, kTwoPoint, RiskProfile::eut());
  CHECK(d2.role == Role::Seller);
  CHECK(d2.quantity == Approx(0.5));
  CHECK(q2 == Approx(0.5).margin(2e-4));
  CHECK(d2.utility == Approx(u2));
}

TEST_CASE("high-reference buyer checks only breakpoints") {
  const DemandDistribution d({{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}});
  const UserState st{1.5, 60};
  for (double ask : {5.0, 15.0, 25.0, 35.0, 45.0, 55.0}) {
    const auto prof = RiskProfile::pt(0.7, 2.0, 0.8);
    const Objective obj(Side::Buy, {ask, 1}, st, d, prof);
    const auto an = analyze_subintervals(obj);
    REQUIRE(an.breakpoints.size() == 3);
    CHECK(an.breakpoints[0] == 0.0);
    CHECK(an.breakpoints[1] == Approx(0.5));
    CHECK(an.breakpoints[2] == Approx(1.5));
    CHECK(an.critical_points.empty());
    const auto best = solve_buyer_general({ask, 1}, st, d, prof);
    double u_max = std::max({obj(0.0), obj(0.5), obj(1.5)});
    CHECK(best.utility == Approx(u_max).epsilon(1e-14));
  }
}

TEST_CASE("seller breakpoints include value kinks under high reference") {
  const DemandDistribution d({{0.2, 0.25}, {0.6, 0.25}, {1.5, 0.5}});
  const UserState st{1.0, 60};
  const double bid = 20;
  const Objective obj(Side::Sell, {30, bid}, st, d, RiskProfile::pt(0.8, 2, 1));
  const auto an = analyze_subintervals(obj);
  // {0, Q-d_2, kappa (Q-d_2)/(kappa-bid), Q-d_1}; the kink for d_1 is past the bound.
  REQUIRE(an.breakpoints.size() == 4);
  CHECK(an.breakpoints[1] == Approx(0.4));
  CHECK(an.breakpoints[2] == Approx(60 * 0.4 / 40));
  CHECK(an.breakpoints[3] == Approx(0.8));
  CHECK(an.pieces.back().shape == Shape::Decreasing);
  CHECK(an.critical_points.size() <= d.size());
}

TEST_CASE("Stage I role choice") {
  const auto eut = RiskProfile::eut();
  auto d = decide_role({20, 16}, kState, kTwoPoint, eut);
  CHECK(d.role == Role::Buyer);
  CHECK(d.quantity == Approx(1.0));
  d = decide_role({40, 16}, kState, kTwoPoint, eut);
  CHECK(d.role == Role::None);
  CHECK(d.quantity == 0.0);
  CHECK(d.utility == Approx(-30));
  d = decide_role({45, 40}, kState, kTwoPoint, eut);
  CHECK(d.role == Role::Seller);
  CHECK(d.quantity == Approx(0.5));
  CHECK(d.signed_quantity() == Approx(-0.5));
  CHECK_THROWS_AS(decide_role({16, 20}, kState, kTwoPoint, eut), precondition_error);
}

TEST_CASE("precondition failures") {
  const auto eut = RiskProfile::eut();
  CHECK_THROWS_AS(solve_buyer_general({60, 16}, kState, kTwoPoint, eut), precondition_error);
  CHECK_THROWS_AS(solve_seller_general({70, 61}, kState, kTwoPoint, eut), precondition_error);
  CHECK_THROWS_AS(solve_buyer_general({20, 16}, {3.0, 60}, kTwoPoint, eut), precondition_error);
  try {
    solve_buyer_general({60, 16}, kState, kTwoPoint, eut);
  } catch (const precondition_error& e) {
    CHECK(e.code() == "price_not_below_kappa");
  }
}

TEST_CASE("general solvers against the reference grid") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int k = 0; k < 150; ++k) {
    const auto ri = support::random_instance(rng);
    const auto inst = ri.reference_model();
    const auto b = solve_buyer_general(ri.quote, ri.state, ri.demand, ri.profile);
    const auto s = solve_seller_general(ri.quote, ri.state, ri.demand, ri.profile);
    auto [qb, ub] = ref::grid_argmax([&](double q) { return inst.buy(q); }, inst.buy_bound(), 1e-4);
    auto [qs, us] = ref::grid_argmax([&](double q) { return inst.sell(q); }, inst.sell_bound(), 1e-4);
    // The solver is exact, so it can only beat a grid.
    CHECK(b.utility >= ub - 1e-9 * (1 + std::abs(ub)));
    CHECK(s.utility >= us - 1e-9 * (1 + std::abs(us)));
    CHECK(b.utility == Approx(ub).epsilon(1e-6));
    CHECK(s.utility == Approx(us).epsilon(1e-6));
    CHECK(b.utility == Approx(inst.buy(b.quantity)).epsilon(1e-12));
    ++compared;
  }
  CHECK(compared == 150);
}

TEST_CASE("EUT solutions are vertices") {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 300; ++k) {
    auto ri = support::random_instance(rng);
    ri.profile = RiskProfile::eut();
    for (Side side : {Side::Buy, Side::Sell}) {
      const auto d = solve_side(side, ri.quote, ri.state, ri.demand, ri.profile);
      bool vertex = d.quantity == 0.0;
      for (const auto& o : ri.demand.outcomes()) {
        const double e = side == Side::Buy ? o.demand - ri.state.quota : ri.state.quota - o.demand;
        vertex = vertex || std::abs(d.quantity - e) < 1e-12;
      }
      CHECK(vertex);
    }
  }
}

TEST_CASE("oracle reproduces solver on a sample") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 40; ++k) {
    const auto ri = support::random_instance(rng);
    for (Side side : {Side::Buy, Side::Sell}) {
      const auto d = solve_side(side, ri.quote, ri.state, ri.demand, ri.profile);
      const auto o = brute_force_oracle(side, ri.quote, ri.state, ri.demand, ri.profile);
      CHECK(d.utility == Approx(o.utility).epsilon(1e-6));
    }
  }
}
