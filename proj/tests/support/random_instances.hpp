#pragma once

#include <random>
#include <vector>

#include "mdt/pt_core.hpp"
#include "support/reference_model.hpp"

namespace support {

struct RandomInstance {
  mdt::DemandDistribution demand;
  mdt::UserState state;
  mdt::MarketQuote quote;
  mdt::RiskProfile profile;

  ref::Instance reference_model() const {
    ref::Instance r;
    for (const auto& o : demand.outcomes()) r.demand.push_back({o.demand, o.probability});
    r.quota = state.quota;
    r.kappa = state.kappa;
    r.ask = quote.min_sell_price;
    r.bid = quote.max_buy_price;
    r.beta = profile.beta;
    r.lambda = profile.lambda;
    r.mu = profile.mu;
    r.low_reference = profile.reference == mdt::ReferencePolicy::Low;
    return r;
  }
};

// I in [min_outcomes, max_outcomes], beta in [0.5,1], lambda in [1,5],
// mu in [0.5,1], both prices in (1, kappa), demand straddling the quota.
inline RandomInstance random_instance(std::mt19937_64& rng, int min_outcomes = 2, int max_outcomes = 10) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(min_outcomes, max_outcomes);
  const int n = count(rng);
  const double kappa = 60.0;
  std::vector<double> raw(n);
  double total = 0.0;
  for (auto& r : raw) total += (r = 0.05 + u01(rng));
  std::vector<mdt::Outcome> out;
  double d = 0.2 * u01(rng);
  for (int i = 0; i < n; ++i) {
    d += 0.05 + u01(rng);
    out.push_back({d, raw[i] / total});
  }
  // Renormalise exactly so the sum check never trips on rounding.
  double s = 0.0;
  for (int i = 0; i + 1 < n; ++i) s += out[i].probability;
  out.back().probability = 1.0 - s;
  const double lo = out.front().demand, hi = out.back().demand;
  const double quota = lo + (hi - lo) * (0.05 + 0.9 * u01(rng));
  const double a = 1.0 + (kappa - 1.0) * u01(rng);
  const double b = 1.0 + (kappa - 1.0) * u01(rng);
  RandomInstance ri{mdt::DemandDistribution(out),
                    {quota, kappa},
                    {std::max(a, b), std::min(a, b)},
                    mdt::RiskProfile::pt(0.5 + 0.5 * u01(rng), 1.0 + 4.0 * u01(rng), 0.5 + 0.5 * u01(rng),
                                         u01(rng) < 0.5 ? mdt::ReferencePolicy::High : mdt::ReferencePolicy::Low)};
  return ri;
}

}  // namespace support
