// Walks one short billing cycle with the library directly: predict demand,
// ask for the day's trade, book it, book the usage, and report the profit.

#include <cstdio>

#include "mdt/engine.hpp"

int main() {
  using namespace mdt;

  // Three previous months (most recent first) of a 5-day cycle, GB per day.
  UsageHistory history;
  history.past_months = {{0.3, 0.4, 0.5, 0.3, 0.2}, {0.2, 0.2, 0.3, 0.3, 0.2}, {0.5, 0.6, 0.4, 0.5, 0.6}};
  const double actual[] = {0.4, 0.35, 0.5, 0.45, 0.3};
  const MarketQuote quotes[] = {{20, 16}, {21, 17}, {22, 19}, {20, 18}, {19, 16}};
  const RiskProfile profile = RiskProfile::pt(0.8, 2.0, 0.9);

  auto ledger = CycleLedger::open(2.0, 60.0, 5);
  for (int day = 1; day <= 5; ++day) {
    const auto& quote = quotes[day - 1];
    const DailyDecision dd = daily_decision(ledger, history, quote, profile);
    std::printf("day %d  quota %.3f  ask %.0f bid %.0f  -> %s %.4f GB (%s)\n", day, ledger.quota,
                quote.min_sell_price, quote.max_buy_price, to_string(dd.decision.role), dd.decision.quantity,
                to_string(dd.path));
    if (dd.decision.role != Role::None) record_trade(ledger, dd.decision.signed_quantity(), dd.price);
    record_usage(ledger, actual[day - 1]);
    history.current.push_back(actual[day - 1]);
  }
  close_cycle(ledger);
  std::printf("cycle profit %.3f\n", *ledger.profit);
}
