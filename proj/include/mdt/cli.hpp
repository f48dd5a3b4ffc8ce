#pragma once

// mdt/cli.hpp: the `mdt` batch tool: solve, thresholds, simulate, estimate,
// serve. run() takes argv and the two output streams, so tests can drive it
// in-process.
//
// Every artifact starts with a provenance record: a "# mdt-<cmd> v1
// config_hash=<h> seed=<s>" line for CSV, a "meta" object for JSON. The hash
// covers the effective configuration after command-line overrides.
//
// Exit status: 0 ok, 2 bad configuration or arguments, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "mdt/engine.hpp"
#include "mdt/errors.hpp"
#include "mdt/estimation.hpp"
#include "mdt/io.hpp"
#include "mdt/market_sim.hpp"
#include "mdt/optimizer.hpp"
#include "mdt/pt_core.hpp"
#include "mdt/service.hpp"

namespace mdt::cli {

inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Output {
  std::string path;  // empty: the command's stdout
  bool force = false;
};

inline void emit(const Output& o, const std::string& text, std::ostream& out) {
  if (o.path.empty()) {
    out << text;
    return;
  }
  if (std::filesystem::exists(o.path) && !o.force)
    throw precondition_error("output_exists", o.path + " exists; pass --force to overwrite");
  write_file_atomic(o.path, text);
}

inline json meta(const char* schema, const json& config, std::uint64_t seed) {
  return {{"schema", schema}, {"config_hash", config_hash(config)}, {"seed", seed}};
}

inline std::string csv_header(const char* cmd, const json& config, std::uint64_t seed) {
  return std::string("# mdt-") + cmd + " v1 config_hash=" + config_hash(config) + " seed=" + std::to_string(seed) + "\n";
}

// Demand is either [{demand, probability}, ...] or {low, high, p_high}.
inline bool is_binary(const json& d) { return d.is_object(); }

inline BinaryDemand binary_demand(const json& d) {
  return {detail::number(d, "low"), detail::number(d, "high"), detail::number(d, "p_high")};
}

inline DemandDistribution demand_of(const json& d) {
  return is_binary(d) ? binary_demand(d).distribution() : d.get<DemandDistribution>();
}

struct Instance {
  MarketQuote quote;
  UserState state;
  json demand;
  RiskProfile profile;

  static Instance from(const json& c) {
    Instance i;
    i.quote = detail::field(c, "quote").get<MarketQuote>();
    i.state = {detail::number(c, "quota"), detail::number_or(c, "kappa", 60.0)};
    i.state.validate();
    i.demand = detail::field(c, "demand");
    i.profile = c.contains("profile") ? c.at("profile").get<RiskProfile>() : RiskProfile::eut();
    return i;
  }
};

// --- solve -----------------------------------------------------------------

inline json solve(const json& config, std::uint64_t seed) {
  const Instance in = Instance::from(config);
  const DemandDistribution d = demand_of(in.demand);
  const RoleChoice rc = choose_role(in.quote, in.state, d, in.profile);
  json out = {{"meta", meta("mdt.solve/1", config, seed)},
              {"decision", rc.decision},
              {"buyer", rc.buyer},
              {"seller", rc.seller}};
  if (is_binary(in.demand)) {
    const BinaryDemand b = binary_demand(in.demand);
    ThresholdPrices t = buyer_thresholds(in.state, b, in.profile);
    const ThresholdPrices s = seller_thresholds(in.state, b, in.profile);
    t.seller_eut = s.seller_eut;
    t.seller_pt_high = s.seller_pt_high;
    t.seller_pt_low = s.seller_pt_low;
    out["thresholds"] = t;
  }
  return out;
}

// --- thresholds --------------------------------------------------------------

struct Sweep {
  std::string parameter = "beta";  // beta, lambda, mu, p, price
  double from = 0.1;
  double to = 1.0;
  int steps = 10;

  void validate() const {
    static const char* names[] = {"beta", "lambda", "mu", "p", "price"};
    bool known = false;
    for (const char* n : names) known = known || parameter == n;
    detail::require(known, "bad_sweep", "sweep parameter must be one of beta, lambda, mu, p, price");
    detail::require(steps >= 1, "bad_sweep", "sweep needs at least one step");
    detail::require(std::isfinite(from) && std::isfinite(to), "bad_sweep", "sweep bounds must be finite");
  }

  double at(int k) const { return steps == 1 ? from : from + (to - from) * k / (steps - 1); }
};

inline const char* kThresholdColumns =
    "value,buyer_eut,buyer_pt_high,buyer_pt_low,seller_eut,seller_pt_high,seller_pt_low,"
    "buy_q_high,buy_q_low,sell_q_high,sell_q_low\n";

inline std::string thresholds(const json& config, std::uint64_t seed, std::ostream& err) {
  const Instance base = Instance::from(config);
  Sweep sw;
  if (config.contains("sweep")) {
    const json& s = config.at("sweep");
    sw.parameter = detail::string_or(s, "parameter", sw.parameter);
    sw.from = detail::number_or(s, "from", sw.from);
    sw.to = detail::number_or(s, "to", sw.to);
    sw.steps = detail::integer_or(s, "steps", sw.steps);
  }
  sw.validate();
  detail::require(sw.parameter != "p" || is_binary(base.demand), "bad_sweep",
                  "sweeping p needs binary demand {low, high, p_high}");

  std::string csv = csv_header("thresholds", config, seed) + kThresholdColumns;
  int missing = 0;
  for (int k = 0; k < sw.steps; ++k) {
    const double x = sw.at(k);
    Instance in = base;
    if (sw.parameter == "beta") in.profile.beta = x;
    if (sw.parameter == "lambda") in.profile.lambda = x;
    if (sw.parameter == "mu") in.profile.mu = x;
    if (sw.parameter == "p") in.demand["p_high"] = x;
    if (sw.parameter == "price") in.quote = {x, x};
    in.profile.validate();

    ThresholdPrices t;
    if (is_binary(in.demand)) {
      const BinaryDemand b = binary_demand(in.demand);
      b.validate(in.state.quota);
      t = buyer_thresholds(in.state, b, in.profile);
      try {
        const ThresholdPrices s = seller_thresholds(in.state, b, in.profile);
        t.seller_eut = s.seller_eut;
        t.seller_pt_high = s.seller_pt_high;
        t.seller_pt_low = s.seller_pt_low;
      } catch (const numerical_error&) {
        t.seller_eut = in.state.kappa * b.p_high;
        ++missing;
      }
    }
    const DemandDistribution d = demand_of(in.demand);
    auto q = [&](Side side, ReferencePolicy ref) {
      RiskProfile p = in.profile;
      p.reference = ref;
      return solve_side(side, in.quote, in.state, d, p).quantity;
    };
    csv += fmt(x) + "," + fmt(t.buyer_eut) + "," + fmt(t.buyer_pt_high) + "," + fmt(t.buyer_pt_low) + "," +
           fmt(t.seller_eut) + "," + fmt(t.seller_pt_high) + "," + fmt(t.seller_pt_low) + "," +
           fmt(q(Side::Buy, ReferencePolicy::High)) + "," + fmt(q(Side::Buy, ReferencePolicy::Low)) + "," +
           fmt(q(Side::Sell, ReferencePolicy::High)) + "," + fmt(q(Side::Sell, ReferencePolicy::Low)) + "\n";
  }
  if (missing > 0) err << "note: " << missing << " row(s) have no seller threshold inside (0, kappa)\n";
  return csv;
}

// --- simulate ----------------------------------------------------------------

struct NamedProfile {
  std::string name;
  RiskProfile profile;
};

struct Campaign {
  std::size_t replicas = 1000;
  std::uint64_t seed = 12345;
  PriceProcess prices;
  DemandModel demand;
  CycleSettings cycle;
  std::vector<StrategyKind> strategies{StrategyKind::Advisor, StrategyKind::TradeWithCertainty,
                                       StrategyKind::NoTrading};
  std::vector<NamedProfile> profiles{{"risk_neutral", RiskProfile::eut()}};

  static Campaign from(const json& c) {
    Campaign k;
    const int replicas = detail::integer_or(c, "replicas", 1000);
    detail::require(replicas >= 1, "no_replicas", "need at least one replica");
    k.replicas = static_cast<std::size_t>(replicas);
    if (c.contains("seed")) k.seed = c.at("seed").get<std::uint64_t>();
    if (c.contains("price_process")) k.prices = c.at("price_process").get<PriceProcess>();
    if (c.contains("demand_model")) k.demand = c.at("demand_model").get<DemandModel>();
    if (c.contains("cycle")) k.cycle = c.at("cycle").get<CycleSettings>();
    if (c.contains("strategies")) {
      k.strategies.clear();
      for (const auto& s : c.at("strategies")) k.strategies.push_back(strategy_from_string(s.get<std::string>()));
    }
    if (c.contains("profiles")) {
      k.profiles.clear();
      for (const auto& p : c.at("profiles"))
        k.profiles.push_back({detail::string_or(p, "name", "profile" + std::to_string(k.profiles.size())),
                              p.get<RiskProfile>()});
    }
    detail::require(!k.strategies.empty(), "bad_field", "strategies must not be empty");
    detail::require(!k.profiles.empty(), "bad_field", "profiles must not be empty");
    k.cycle.validate();
    k.prices.validate(k.cycle.kappa);
    return k;
  }
};

struct SimulationOutput {
  std::string csv;
  json stats;
};

// Only the advisor depends on the risk profile; the baselines get one row set
// each, labelled with profile "none".
inline SimulationOutput simulate(const json& config, unsigned threads) {
  const Campaign c = Campaign::from(config);
  SimulationOutput out;
  out.csv = csv_header("simulate", config, c.seed) + "replica,strategy,profile,profit\n";
  json runs = json::array();
  for (StrategyKind s : c.strategies) {
    std::vector<NamedProfile> profiles = c.profiles;
    if (s != StrategyKind::Advisor) profiles = {{"none", RiskProfile::eut()}};
    for (const auto& p : profiles) {
      const MonteCarloResult mc = monte_carlo(c.replicas, s, p.profile, c.prices, c.demand, c.seed, c.cycle, threads);
      for (std::size_t k = 0; k < mc.profits.size(); ++k)
        out.csv += std::to_string(k) + "," + to_string(s) + "," + p.name + "," + fmt(mc.profits[k]) + "\n";
      runs.push_back({{"strategy", to_string(s)}, {"profile", p.name}, {"risk_profile", p.profile}, {"stats", mc.stats}});
    }
  }
  out.stats = {{"meta", meta("mdt.simulate-stats/1", config, c.seed)}, {"runs", runs}};
  return out;
}

// --- estimate ----------------------------------------------------------------

inline json estimate(const json& config, std::uint64_t seed) {
  const double mu = detail::number_or(config, "mu", 1.0);
  const double kappa = detail::number_or(config, "kappa", 60.0);
  const ReferencePolicy ref = reference_from_string(detail::string_or(config, "reference", "high"));
  std::vector<IndifferenceReport> reports;
  for (const auto& r : detail::field(config, "reports")) reports.push_back(r.get<IndifferenceReport>());
  const EstimationResult est = estimate_over_cycle(reports, mu, ref, kappa);
  return {{"meta", meta("mdt.estimate/1", config, seed)}, {"estimate", est}};
}

// --- serve -------------------------------------------------------------------

struct ServeOptions {
  std::string storage = "mdt-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string replay;  // quote replay CSV, empty for operator-set quotes
};

inline int serve(const ServeOptions& o, std::ostream& err) {
  std::vector<MarketQuote> replay;
  if (!o.replay.empty()) {
    std::istringstream in(read_text_file(o.replay));
    replay = quotes_from_csv(in);
  }
  AdvisorService service(o.storage, std::move(replay));
  httplib::Server server;
  service.mount(server);
  err << "mdt advisor listening on " << o.host << ":" << o.port << " (storage " << o.storage << ")\n";
  if (!server.listen(o.host, o.port)) {
    err << "error: cannot listen on " << o.host << ":" << o.port << "\n";
    return 1;
  }
  return 0;
}

// --- entry point ---------------------------------------------------------------

inline json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  json c = read_json_file(path);
  detail::require(c.is_object(), "bad_config", path + ": top level must be an object");
  return c;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mdt: mobile-data trading advisor and simulator"};
  app.require_subcommand(1);

  std::string config_path;
  Output output;
  std::optional<std::uint64_t> seed;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON configuration file");
    sub->add_option("-o,--out", output.path, "output file (default stdout)");
    sub->add_flag("-f,--force", output.force, "overwrite an existing output file");
    sub->add_option("--seed", seed, "random seed (recorded in every output)");
  };

  CLI::App* solve_cmd = app.add_subcommand("solve", "optimal role and quantity for one instance");
  common(solve_cmd);

  CLI::App* thr_cmd = app.add_subcommand("thresholds", "CSV sweep of threshold prices and optimal quantities");
  common(thr_cmd);
  std::optional<std::string> sweep_param;
  std::optional<double> sweep_from, sweep_to;
  std::optional<int> sweep_steps;
  thr_cmd->add_option("--sweep", sweep_param, "beta, lambda, mu, p or price");
  thr_cmd->add_option("--from", sweep_from, "first sweep value");
  thr_cmd->add_option("--to", sweep_to, "last sweep value");
  thr_cmd->add_option("--steps", sweep_steps, "number of sweep points");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo profit campaign");
  common(sim_cmd);
  std::optional<int> replicas;
  std::optional<double> pc;
  std::string stats_path;
  unsigned threads = default_threads();
  sim_cmd->add_option("--replicas", replicas, "replicas per strategy and profile");
  sim_cmd->add_option("--pc", pc, "probability of each price move");
  sim_cmd->add_option("--stats", stats_path, "write the JSON summary here (default stdout when --out is set)");
  sim_cmd->add_option("--threads", threads, "worker threads (does not change results)");

  CLI::App* est_cmd = app.add_subcommand("estimate", "estimate beta and lambda from indifference reports");
  common(est_cmd);

  CLI::App* serve_cmd = app.add_subcommand("serve", "run the advisor HTTP service");
  ServeOptions so;
  std::string serve_config;
  serve_cmd->add_option("-c,--config", serve_config, "JSON file with storage, host, port, replay");
  serve_cmd->add_option("--storage", so.storage, "account storage directory")->envname("MDT_STORAGE");
  serve_cmd->add_option("--host", so.host, "listen address")->envname("MDT_HOST");
  serve_cmd->add_option("--port", so.port, "listen port")->envname("MDT_PORT");
  serve_cmd->add_option("--replay", so.replay, "quote replay CSV (day,min_sell,max_buy)");

  std::vector<const char*> argv{"mdt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (serve_cmd->parsed()) {
      if (!serve_config.empty()) {
        const json c = load_config(serve_config);
        if (serve_cmd->count("--storage") == 0 && c.contains("storage")) so.storage = c.at("storage");
        if (serve_cmd->count("--host") == 0 && c.contains("host")) so.host = c.at("host");
        if (serve_cmd->count("--port") == 0 && c.contains("port")) so.port = c.at("port");
        if (serve_cmd->count("--replay") == 0 && c.contains("replay")) so.replay = c.at("replay");
      }
      return serve(so, err);
    }

    json config = load_config(config_path);
    if (seed) config["seed"] = *seed;
    const std::uint64_t used_seed = config.contains("seed") ? config.at("seed").get<std::uint64_t>() : 0;

    if (solve_cmd->parsed()) {
      emit(output, solve(config, used_seed).dump(2) + "\n", out);
    } else if (thr_cmd->parsed()) {
      json& s = config["sweep"];
      if (!s.is_object()) s = json::object();
      if (sweep_param) s["parameter"] = *sweep_param;
      if (sweep_from) s["from"] = *sweep_from;
      if (sweep_to) s["to"] = *sweep_to;
      if (sweep_steps) s["steps"] = *sweep_steps;
      emit(output, thresholds(config, used_seed, err), out);
    } else if (sim_cmd->parsed()) {
      if (replicas) config["replicas"] = *replicas;
      if (pc) {
        json& p = config["price_process"];
        if (!p.is_object()) p = json::object();
        p["p_c"] = *pc;
      }
      if (!config.contains("seed")) config["seed"] = Campaign{}.seed;
      // Check the stats target before spending time on the campaign.
      if (!stats_path.empty() && std::filesystem::exists(stats_path) && !output.force)
        throw precondition_error("output_exists", stats_path + " exists; pass --force to overwrite");
      const SimulationOutput r = simulate(config, threads);
      emit(output, r.csv, out);
      const std::string stats = r.stats.dump(2) + "\n";
      if (!stats_path.empty())
        emit({stats_path, output.force}, stats, out);
      else if (!output.path.empty())
        out << stats;
    } else if (est_cmd->parsed()) {
      emit(output, estimate(config, used_seed).dump(2) + "\n", out);
    }
    return 0;
  } catch (const precondition_error& e) {
    err << "config error [" << e.code() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const numerical_error& e) {
    err << "numerical error [" << e.code() << "]: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    err << "config error [bad_json]: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace mdt::cli
