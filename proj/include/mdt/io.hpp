#pragma once

// mdt/io.hpp: JSON forms of the domain types, config hashing and the small
// file helpers shared by the CLI and the service.
//
// Every from_json validates, and a malformed document surfaces as a
// precondition_error so callers see one error family.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mdt/engine.hpp"
#include "mdt/errors.hpp"
#include "mdt/estimation.hpp"
#include "mdt/market_sim.hpp"
#include "mdt/optimizer.hpp"
#include "mdt/pt_core.hpp"

namespace mdt {

using json = nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw precondition_error("bad_json", std::string("expected an object holding \"") + key + "\"");
  const auto it = j.find(key);
  if (it == j.end()) throw precondition_error("missing_field", std::string("missing field \"") + key + "\"");
  return *it;
}

inline double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw precondition_error("bad_field", std::string("field \"") + key + "\" must be a number");
  return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return number(j, key);
}

inline int integer_or(const json& j, const char* key, int fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw precondition_error("bad_field", std::string("field \"") + key + "\" must be an integer");
  return v.get<int>();
}

inline std::string string_or(const json& j, const char* key, const std::string& fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw precondition_error("bad_field", std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, const char* what) {
  if (!v.is_array()) throw precondition_error("bad_field", std::string(what) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw precondition_error("bad_field", std::string(what) + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

// --- pt-core -----------------------------------------------------------------

inline void to_json(json& j, const RiskProfile& p) {
  j = {{"beta", p.beta}, {"lambda", p.lambda}, {"mu", p.mu}, {"reference", to_string(p.reference)}};
}

inline void from_json(const json& j, RiskProfile& p) {
  p.beta = detail::number_or(j, "beta", 1.0);
  p.lambda = detail::number_or(j, "lambda", 1.0);
  p.mu = detail::number_or(j, "mu", 1.0);
  p.reference = reference_from_string(detail::string_or(j, "reference", "high"));
  p.validate();
}

inline void to_json(json& j, const MarketQuote& q) {
  j = {{"min_sell_price", q.min_sell_price}, {"max_buy_price", q.max_buy_price}};
}

inline void from_json(const json& j, MarketQuote& q) {
  q.min_sell_price = detail::number(j, "min_sell_price");
  q.max_buy_price = detail::number(j, "max_buy_price");
  q.validate();
}

inline void to_json(json& j, const DemandDistribution& d) {
  j = json::array();
  for (const auto& o : d.outcomes()) j.push_back({{"demand", o.demand}, {"probability", o.probability}});
}

inline void from_json(const json& j, DemandDistribution& d) {
  if (!j.is_array()) throw precondition_error("bad_field", "demand must be an array of {demand, probability}");
  std::vector<Outcome> out;
  for (const auto& o : j) out.push_back({detail::number(o, "demand"), detail::number(o, "probability")});
  d = DemandDistribution(std::move(out));
}

// --- optimizer ---------------------------------------------------------------

inline void to_json(json& j, const TradeDecision& d) {
  j = {{"role", to_string(d.role)}, {"quantity", d.quantity}, {"utility", d.utility}};
}

inline void to_json(json& j, const ThresholdPrices& t) {
  auto put = [&](const char* k, double v) { j[k] = std::isnan(v) ? json(nullptr) : json(v); };
  j = json::object();
  put("buyer_eut", t.buyer_eut);
  put("buyer_pt_high", t.buyer_pt_high);
  put("buyer_pt_low", t.buyer_pt_low);
  put("seller_eut", t.seller_eut);
  put("seller_pt_high", t.seller_pt_high);
  put("seller_pt_low", t.seller_pt_low);
}

// --- engine ------------------------------------------------------------------

inline void to_json(json& j, const UsageHistory& h) { j = {{"past_months", h.past_months}, {"current", h.current}}; }

inline void from_json(const json& j, UsageHistory& h) {
  h = {};
  if (j.contains("past_months")) {
    const json& pm = j.at("past_months");
    if (!pm.is_array()) throw precondition_error("bad_field", "past_months must be an array of arrays");
    for (const auto& m : pm) h.past_months.push_back(detail::numbers(m, "past_months entry"));
  }
  if (j.contains("current")) h.current = detail::numbers(j.at("current"), "current");
  h.validate();
}

inline void to_json(json& j, const CycleLedger& l) {
  json trades = json::array();
  for (const auto& t : l.trades) trades.push_back({{"day", t.day}, {"quantity", t.quantity}, {"price", t.price}});
  j = {{"initial_quota", l.initial_quota},
       {"kappa", l.kappa},
       {"cycle_length", l.cycle_length},
       {"day", l.day},
       {"quota", l.quota},
       {"trades", trades},
       {"usage", l.usage},
       {"profit", l.profit ? json(*l.profit) : json(nullptr)}};
}

// Imports a ledger and checks that its bookkeeping is self-consistent.
inline void from_json(const json& j, CycleLedger& l) {
  l = CycleLedger::open(detail::number(j, "initial_quota"), detail::number_or(j, "kappa", 60.0),
                        detail::integer_or(j, "cycle_length", 30));
  std::vector<TradeRecord> trades;
  if (j.contains("trades")) {
    if (!j.at("trades").is_array()) throw precondition_error("bad_field", "trades must be an array");
    for (const auto& t : j.at("trades"))
      trades.push_back({detail::integer_or(t, "day", 0), detail::number(t, "quantity"), detail::number(t, "price")});
  }
  const std::vector<double> usage = j.contains("usage") ? detail::numbers(j.at("usage"), "usage") : std::vector<double>{};
  detail::require(static_cast<int>(usage.size()) <= l.cycle_length, "bad_ledger", "more usage days than the cycle");
  // Replay through the same bookkeeping used live.
  std::size_t t = 0;
  for (int day = 1; day <= static_cast<int>(usage.size()) + 1 && day <= l.cycle_length; ++day) {
    for (; t < trades.size() && trades[t].day == day; ++t) record_trade(l, trades[t].quantity, trades[t].price);
    if (day <= static_cast<int>(usage.size())) record_usage(l, usage[static_cast<std::size_t>(day - 1)]);
  }
  detail::require(t == trades.size(), "bad_ledger", "trade days must be non-decreasing and within the booked days");
  if (j.contains("day")) detail::require(detail::integer_or(j, "day", l.day) == l.day, "bad_ledger", "day does not match usage");
  if (j.contains("quota"))
    detail::require(std::abs(detail::number(j, "quota") - l.quota) <= 1e-9 * (1.0 + std::abs(l.quota)), "bad_ledger",
                    "quota does not match trades and usage");
  if (l.complete()) close_cycle(l);
}

// --- estimation --------------------------------------------------------------

inline void to_json(json& j, const IndifferenceReport& r) {
  j = {{"buy_price", r.buy_price},
       {"sell_price", r.sell_price},
       {"day_index", r.day_index},
       {"quota_at_day", r.quota_at_day},
       {"demand_snapshot", r.demand_snapshot}};
}

inline void from_json(const json& j, IndifferenceReport& r) {
  r.buy_price = detail::number(j, "buy_price");
  r.sell_price = detail::number(j, "sell_price");
  r.day_index = detail::integer_or(j, "day_index", 0);
  r.quota_at_day = detail::number(j, "quota_at_day");
  r.demand_snapshot = detail::field(j, "demand_snapshot").get<DemandDistribution>();
}

inline void to_json(json& j, const EstimationResult& e) {
  json days = json::array();
  for (std::size_t k = 0; k < e.per_day.size(); ++k) {
    json d = {{"day_index", e.per_day[k].day_index}, {"beta", e.per_day[k].beta}, {"lambda", e.per_day[k].lambda}};
    if (k < e.residuals.size()) d["residuals"] = {e.residuals[k].buy, e.residuals[k].sell};
    days.push_back(d);
  }
  j = {{"beta", e.beta}, {"lambda", e.lambda}, {"per_day", days}, {"skipped_days", e.skipped_days},
       {"warnings", e.warnings}};
}

// --- market-sim --------------------------------------------------------------

inline void to_json(json& j, const ProfitStats& s) {
  j = {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}, {"p05", s.p05}, {"p25", s.p25},
       {"p50", s.p50},   {"p75", s.p75},       {"p95", s.p95}, {"count", s.count}};
}

inline void from_json(const json& j, PriceProcess& p) {
  p = {};
  p.p_c = detail::number_or(j, "p_c", p.p_c);
  p.initial_min_sell = detail::number_or(j, "initial_min_sell", p.initial_min_sell);
  p.initial_max_buy = detail::number_or(j, "initial_max_buy", p.initial_max_buy);
  if (j.contains("coupled")) {
    if (!j.at("coupled").is_boolean()) throw precondition_error("bad_field", "coupled must be a boolean");
    p.coupled = j.at("coupled").get<bool>();
  }
  p.floor = detail::number_or(j, "floor", p.floor);
  p.ceiling = detail::number_or(j, "ceiling", p.ceiling);
}

inline void to_json(json& j, const PriceProcess& p) {
  j = {{"p_c", p.p_c},       {"initial_min_sell", p.initial_min_sell}, {"initial_max_buy", p.initial_max_buy},
       {"coupled", p.coupled}, {"floor", p.floor},                     {"ceiling", p.ceiling}};
}

inline void from_json(const json& j, DemandModel& d) {
  d = {};
  d.kind = demand_kind_from_string(detail::string_or(j, "kind", "uniform"));
  d.mean = detail::number_or(j, "mean", d.mean);
  d.std = detail::number_or(j, "std", d.std);
  d.half_width = detail::number_or(j, "half_width", d.half_width);
  d.validate();
}

inline void to_json(json& j, const DemandModel& d) {
  j = {{"kind", to_string(d.kind)}, {"mean", d.mean}, {"std", d.std}, {"half_width", d.half_width}};
}

inline void from_json(const json& j, CycleSettings& c) {
  c = {};
  c.initial_quota = detail::number_or(j, "initial_quota", c.initial_quota);
  c.kappa = detail::number_or(j, "kappa", c.kappa);
  c.days = detail::integer_or(j, "days", c.days);
  c.history_months = detail::integer_or(j, "history_months", c.history_months);
  c.validate();
}

inline void to_json(json& j, const CycleSettings& c) {
  j = {{"initial_quota", c.initial_quota}, {"kappa", c.kappa}, {"days", c.days}, {"history_months", c.history_months}};
}

// --- files -------------------------------------------------------------------

// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// Hash of the canonical (sorted-key, compact) serialisation.
inline std::string config_hash(const json& config) { return fnv1a_hex(config.dump()); }

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw precondition_error("bad_json", origin + ": " + e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw precondition_error("unreadable_file", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::filesystem::path& path) { return parse_json_text(read_text_file(path), path.string()); }

// Writes to a sibling temporary file and renames it over the target, so a
// reader never sees a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot replace " + path.string() + ": " + ec.message());
}

// Quote replay file: header "day,min_sell,max_buy", one row per day.
inline std::vector<MarketQuote> quotes_from_csv(std::istream& in) {
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "bad_csv", "quote CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  detail::require(line == "day,min_sell,max_buy", "bad_csv", "quote CSV header must be day,min_sell,max_buy");
  std::vector<MarketQuote> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string d, a, b;
    const bool ok = std::getline(ss, d, ',') && std::getline(ss, a, ',') && std::getline(ss, b);
    detail::require(ok, "bad_csv", "quote CSV row " + std::to_string(row) + " needs three fields");
    int day = 0;
    MarketQuote q;
    try {
      day = std::stoi(d);
      q = {std::stod(a), std::stod(b)};
    } catch (const std::logic_error&) {
      throw precondition_error("bad_csv", "quote CSV row " + std::to_string(row) + " is not numeric");
    }
    detail::require(day == static_cast<int>(out.size()) + 1, "bad_csv",
                    "quote CSV days must run 1, 2, ... (row " + std::to_string(row) + ")");
    q.validate();
    out.push_back(q);
  }
  detail::require(!out.empty(), "bad_csv", "quote CSV has no rows");
  return out;
}

}  // namespace mdt
