#pragma once

// mdt/service.hpp: the advisor HTTP/JSON service.
//
// Accounts live one per file under <storage>/accounts/<id>.json and the
// operator-set quote under <storage>/market.json. A mutation is applied to a
// copy of the account, written atomically, and only then made visible, so an
// acknowledged request always survives a restart.
//
// All routing goes through handle(), which the HTTP layer and the tests share.

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mdt/engine.hpp"
#include "mdt/errors.hpp"
#include "mdt/estimation.hpp"
#include "mdt/io.hpp"
#include "mdt/optimizer.hpp"
#include "mdt/pt_core.hpp"

namespace mdt {

struct AccountSettings {
  double notification_hours = 24.0;  // only the UI's polling interval
  int cycle_length = 30;
  int history_months = 3;  // months kept when a cycle rolls over

  void validate() const {
    detail::require(notification_hours > 0.0, "bad_settings", "notification_hours must be positive");
    detail::require(cycle_length >= 1, "bad_settings", "cycle_length must be at least 1");
    detail::require(history_months >= 1, "bad_settings", "history_months must be at least 1");
  }
};

struct Account {
  std::string id;
  RiskProfile profile;
  UsageHistory history;
  CycleLedger ledger;
  AccountSettings settings;
  std::vector<IndifferenceReport> reports;  // this cycle's elicitation answers
  // Replies to recent client request ids, newest last, so a retried
  // mutation is answered without being applied twice.
  std::vector<std::pair<std::string, json>> replies;
};

inline constexpr std::size_t kRememberedReplies = 64;

inline void to_json(json& j, const AccountSettings& s) {
  j = {{"notification_hours", s.notification_hours},
       {"cycle_length", s.cycle_length},
       {"history_months", s.history_months}};
}

inline void from_json(const json& j, AccountSettings& s) {
  s = {};
  s.notification_hours = detail::number_or(j, "notification_hours", s.notification_hours);
  s.cycle_length = detail::integer_or(j, "cycle_length", s.cycle_length);
  s.history_months = detail::integer_or(j, "history_months", s.history_months);
  s.validate();
}

inline void to_json(json& j, const Account& a) {
  j = {{"id", a.id},           {"profile", a.profile},   {"history", a.history},
       {"ledger", a.ledger},   {"settings", a.settings}, {"reports", a.reports}};
  json replies = json::array();
  for (const auto& [rid, body] : a.replies) replies.push_back({{"request_id", rid}, {"response", body}});
  j["replies"] = replies;
}

inline void from_json(const json& j, Account& a) {
  a.id = detail::field(j, "id").get<std::string>();
  a.profile = detail::field(j, "profile").get<RiskProfile>();
  a.history = detail::field(j, "history").get<UsageHistory>();
  a.ledger = detail::field(j, "ledger").get<CycleLedger>();
  a.settings = j.contains("settings") ? j.at("settings").get<AccountSettings>() : AccountSettings{};
  a.reports.clear();
  if (j.contains("reports"))
    for (const auto& r : j.at("reports")) a.reports.push_back(r.get<IndifferenceReport>());
  a.replies.clear();
  if (j.contains("replies"))
    for (const auto& r : j.at("replies")) a.replies.emplace_back(r.at("request_id").get<std::string>(), r.at("response"));
}

class AdvisorService {
 public:
  struct Response {
    int status = 200;
    json body;
  };

  using Query = std::map<std::string, std::string>;

  explicit AdvisorService(std::filesystem::path storage, std::vector<MarketQuote> replay = {})
      : storage_(std::move(storage)), replay_(std::move(replay)) {
    std::filesystem::create_directories(storage_ / "accounts");
    if (std::filesystem::exists(market_path())) quote_ = read_json_file(market_path()).get<MarketQuote>();
    for (const auto& entry : std::filesystem::directory_iterator(storage_ / "accounts")) {
      if (entry.path().extension() != ".json") continue;
      Account a = read_json_file(entry.path()).get<Account>();
      auto slot = std::make_shared<Slot>();
      slot->account = std::move(a);
      accounts_[slot->account.id] = slot;
    }
  }

  const std::filesystem::path& storage() const { return storage_; }

  Response handle(const std::string& method, const std::string& path, const std::string& body,
                  const Query& query = {}) {
    try {
      return route(method, path, body, query);
    } catch (const quota_cap_error& e) {
      return error(409, e.code(), e.what());
    } catch (const precondition_error& e) {
      return error(400, e.code(), e.what());
    } catch (const estimation_error& e) {
      return error(400, e.code(), e.what());
    } catch (const numerical_error& e) {
      return error(500, e.code(), e.what());
    } catch (const json::exception& e) {
      return error(400, "bad_json", e.what());
    }
  }

  // Registers catch-all handlers that forward to handle().
  void mount(httplib::Server& server) {
    auto forward = [this](const char* method) {
      return [this, method](const httplib::Request& req, httplib::Response& res) {
        Query q;
        for (const auto& [k, v] : req.params) q[k] = v;
        const Response r = handle(method, req.path, req.body, q);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
      };
    };
    server.Get(".*", forward("GET"));
    server.Put(".*", forward("PUT"));
    server.Post(".*", forward("POST"));
    server.Delete(".*", forward("DELETE"));
  }

  // The quote in force for a given cycle day.
  MarketQuote quote_for_day(int day) const {
    if (!replay_.empty()) {
      const auto k = static_cast<std::size_t>(std::clamp(day, 1, static_cast<int>(replay_.size())));
      return replay_[k - 1];
    }
    std::lock_guard lock(market_mutex_);
    return quote_;
  }

 private:
  struct Slot {
    std::mutex mutex;
    Account account;
  };

  struct NotFound {
    std::string code;
    std::string message;
  };

  std::filesystem::path market_path() const { return storage_ / "market.json"; }
  std::filesystem::path account_path(const std::string& id) const { return storage_ / "accounts" / (id + ".json"); }

  static Response error(int status, const std::string& code, const std::string& message) {
    return {status, {{"error", code}, {"message", message}}};
  }

  static json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    return parse_json_text(body, "request body");
  }

  static std::vector<std::string> split(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
      if (c == '/') {
        if (!cur.empty()) parts.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
  }

  Response route(const std::string& method, const std::string& path, const std::string& body, const Query& query) {
    const auto parts = split(path);
    if (parts.size() == 1 && parts[0] == "market") {
      if (method == "GET") return get_market(query);
      if (method == "PUT") return put_market(parse_body(body));
      return error(405, "method_not_allowed", method + " " + path);
    }
    if (!parts.empty() && parts[0] == "accounts") {
      if (parts.size() == 1) {
        if (method == "POST") return create_account(parse_body(body));
        if (method == "GET") return list_accounts();
        return error(405, "method_not_allowed", method + " " + path);
      }
      const std::string& id = parts[1];
      auto slot = find(id);
      if (!slot) return error(404, "unknown_account", "no account \"" + id + "\"");
      const std::string leaf = parts.size() == 3 ? parts[2] : parts.size() == 2 ? "" : "?";
      const std::string key = method + " " + leaf;
      if (key == "GET ") return with_account(*slot, [](Account& a) { return Response{200, json(a)}; });
      if (key == "GET profile") return with_account(*slot, [](Account& a) { return Response{200, json(a.profile)}; });
      if (key == "PUT profile") return put_profile(*slot, parse_body(body));
      if (key == "GET settings") return with_account(*slot, [](Account& a) { return Response{200, json(a.settings)}; });
      if (key == "PUT settings") return put_settings(*slot, parse_body(body));
      if (key == "POST usage") return post_usage(*slot, parse_body(body));
      if (key == "GET recommendation") return get_recommendation(*slot);
      if (key == "POST trades") return post_trade(*slot, parse_body(body));
      if (key == "POST whatif") return post_whatif(*slot, parse_body(body));
      if (key == "POST elicitation") return post_elicitation(*slot, parse_body(body));
      if (key == "GET ledger") return with_account(*slot, [](Account& a) { return Response{200, json(a.ledger)}; });
      if (key == "POST cycle") return post_cycle(*slot, parse_body(body));
    }
    return error(404, "not_found", "no route for " + method + " " + path);
  }

  std::shared_ptr<Slot> find(const std::string& id) {
    std::shared_lock lock(accounts_mutex_);
    const auto it = accounts_.find(id);
    return it == accounts_.end() ? nullptr : it->second;
  }

  template <typename Fn>
  Response with_account(Slot& slot, Fn&& fn) {
    std::lock_guard lock(slot.mutex);
    return fn(slot.account);
  }

  // Applies fn to a copy, persists the copy, then commits it. A body carrying
  // a request_id already answered gets the stored reply instead.
  template <typename Fn>
  Response mutate(Slot& slot, const json& body, Fn&& fn) {
    std::lock_guard lock(slot.mutex);
    const std::string rid = body.is_object() ? detail::string_or(body, "request_id", "") : "";
    if (!rid.empty())
      for (const auto& [seen, reply] : slot.account.replies)
        if (seen == rid) return {200, reply};
    Account next = slot.account;
    Response r = fn(next);
    if (r.status < 300) {
      if (!rid.empty()) {
        next.replies.emplace_back(rid, r.body);
        if (next.replies.size() > kRememberedReplies) next.replies.erase(next.replies.begin());
      }
      write_file_atomic(account_path(next.id), json(next).dump(2));
      slot.account = std::move(next);
    }
    return r;
  }

  // --- market --------------------------------------------------------------

  Response get_market(const Query& query) {
    json out;
    if (!replay_.empty()) {
      int day = 1;
      if (const auto it = query.find("day"); it != query.end()) {
        try {
          day = std::stoi(it->second);
        } catch (const std::logic_error&) {
          return error(400, "bad_field", "day must be an integer");
        }
      }
      out = quote_for_day(day);
      out["replay_day"] = std::clamp(day, 1, static_cast<int>(replay_.size()));
      out["replay_days"] = replay_.size();
    } else {
      out = quote_for_day(1);
    }
    return {200, out};
  }

  Response put_market(const json& body) {
    if (!replay_.empty()) return error(409, "replay_mode", "quotes come from the replay file");
    const auto q = body.get<MarketQuote>();
    std::lock_guard lock(market_mutex_);
    write_file_atomic(market_path(), json(q).dump(2));
    quote_ = q;
    return {200, json(q)};
  }

  // --- accounts ------------------------------------------------------------

  Response list_accounts() {
    std::shared_lock lock(accounts_mutex_);
    json ids = json::array();
    for (const auto& [id, _] : accounts_) ids.push_back(id);
    return {200, {{"accounts", ids}}};
  }

  Response create_account(const json& body) {
    static const std::regex id_pattern("[A-Za-z0-9_-]{1,64}");
    Account a;
    a.settings = body.contains("settings") ? body.at("settings").get<AccountSettings>() : AccountSettings{};
    if (body.contains("cycle_length")) a.settings.cycle_length = detail::integer_or(body, "cycle_length", 30);
    a.settings.validate();
    a.profile = body.contains("profile") ? body.at("profile").get<RiskProfile>() : RiskProfile::eut();
    a.history = body.contains("history") ? body.at("history").get<UsageHistory>() : UsageHistory{};
    a.ledger = CycleLedger::open(detail::number_or(body, "initial_quota", 2.0), detail::number_or(body, "kappa", 60.0),
                                 a.settings.cycle_length);
    for (double u : a.history.current) record_usage(a.ledger, u);

    std::unique_lock lock(accounts_mutex_);
    a.id = detail::string_or(body, "id", "");
    if (a.id.empty()) {
      do a.id = "acct-" + std::to_string(++next_id_);
      while (accounts_.count(a.id));
    }
    if (!std::regex_match(a.id, id_pattern))
      return error(400, "bad_account_id", "account ids use letters, digits, '_' and '-' (max 64)");
    if (accounts_.count(a.id)) return error(409, "account_exists", "account \"" + a.id + "\" already exists");
    write_file_atomic(account_path(a.id), json(a).dump(2));
    auto slot = std::make_shared<Slot>();
    slot->account = a;
    accounts_[a.id] = slot;
    return {201, json(a)};
  }

  Response put_profile(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      a.profile = body.get<RiskProfile>();
      return Response{200, json(a.profile)};
    });
  }

  Response put_settings(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      const auto s = body.get<AccountSettings>();
      detail::require(s.cycle_length == a.ledger.cycle_length, "bad_settings",
                      "cycle_length can only change at the next cycle");
      a.settings = s;
      return Response{200, json(a.settings)};
    });
  }

  Response post_usage(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      const double used = detail::number(body, "usage_gb");
      if (body.contains("day"))
        detail::require(detail::integer_or(body, "day", 0) == a.ledger.day, "day_mismatch",
                        "usage is expected for day " + std::to_string(a.ledger.day));
      record_usage(a.ledger, used);
      a.history.current.push_back(used);
      if (a.ledger.complete()) close_cycle(a.ledger);
      return Response{200, json(a.ledger)};
    });
  }

  static json recommendation_json(const Account& a, const MarketQuote& quote) {
    const DailyDecision dd = daily_decision(a.ledger, a.history, quote, a.profile);
    json out = json(dd.decision);
    out["price"] = dd.price;
    out["path"] = to_string(dd.path);
    out["day"] = a.ledger.day;
    out["quota"] = a.ledger.quota;
    out["quote"] = quote;
    out["demand"] = dd.demand;
    out["signed_quantity"] = dd.decision.signed_quantity();
    return out;
  }

  Response get_recommendation(Slot& slot) {
    return with_account(slot, [&](Account& a) {
      return Response{200, recommendation_json(a, quote_for_day(a.ledger.day))};
    });
  }

  Response post_trade(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      const double q = detail::number(body, "quantity");
      detail::require(q != 0.0, "bad_quantity", "trade quantity must be non-zero");
      const MarketQuote quote = quote_for_day(a.ledger.day);
      const double price = detail::number_or(body, "price", q > 0.0 ? quote.min_sell_price : quote.max_buy_price);
      record_trade(a.ledger, q, price);
      return Response{200, json(a.ledger)};
    });
  }

  Response post_whatif(Slot& slot, const json& body) {
    return with_account(slot, [&](Account& a) {
      const double q = detail::number_or(body, "quantity", 0.0);
      detail::require(q >= 0.0, "negative_quantity", "what-if quantity must be non-negative");
      const MarketQuote quote = body.contains("quote") ? body.at("quote").get<MarketQuote>() : quote_for_day(a.ledger.day);
      const DemandDistribution demand = predict_demand(a.history, a.ledger.day);
      const UserState st{a.ledger.quota, a.ledger.kappa};
      const Objective buy(Side::Buy, quote, st, demand, a.profile);
      const Objective sell(Side::Sell, quote, st, demand, a.profile);
      json out = {{"quantity", q},
                  {"quote", quote},
                  {"demand", demand},
                  {"utilities", {{"buy", buy(q)}, {"sell", sell(q)}, {"none", buy(0.0)}}}};
      if (!a.ledger.complete()) {
        try {
          out["recommendation"] = recommendation_json(a, quote);
        } catch (const error_base& e) {
          out["recommendation"] = {{"error", e.code()}};
        }
      }
      return Response{200, out};
    });
  }

  Response post_elicitation(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      IndifferenceReport r;
      r.buy_price = detail::number(body, "buy_price");
      r.sell_price = detail::number(body, "sell_price");
      r.day_index = a.ledger.day;
      r.quota_at_day = a.ledger.quota;
      r.demand_snapshot = predict_demand(a.history, a.ledger.day);
      r.validate(a.ledger.kappa);
      const double mu = a.profile.mu;
      const ReferencePolicy ref = a.profile.reference;
      // Rejected before it is stored, so one bad answer cannot poison the cycle.
      const double beta = solve_beta(r, mu, ref, a.ledger.kappa);
      const double lambda = solve_lambda(beta, r, mu, ref, a.ledger.kappa);
      std::erase_if(a.reports, [&](const IndifferenceReport& x) { return x.day_index == r.day_index; });
      a.reports.push_back(r);
      const EstimationResult est = estimate_over_cycle(a.reports, mu, ref, a.ledger.kappa);
      a.profile.beta = est.beta;
      a.profile.lambda = est.lambda;
      a.profile.validate();
      return Response{200, {{"day_estimate", {{"day_index", r.day_index}, {"beta", beta}, {"lambda", lambda}}},
                            {"profile", a.profile},
                            {"estimate", est},
                            {"reports", a.reports.size()}}};
    });
  }

  // Closes a finished cycle: its usage becomes the newest past month.
  Response post_cycle(Slot& slot, const json& body) {
    return mutate(slot, body, [&](Account& a) {
      detail::require(a.ledger.complete(), "cycle_incomplete", "the current cycle is not finished");
      a.history.past_months.insert(a.history.past_months.begin(), a.history.current);
      if (static_cast<int>(a.history.past_months.size()) > a.settings.history_months)
        a.history.past_months.resize(static_cast<std::size_t>(a.settings.history_months));
      a.history.current.clear();
      a.ledger = CycleLedger::open(a.ledger.initial_quota, a.ledger.kappa, a.settings.cycle_length);
      a.reports.clear();
      return Response{200, json(a)};
    });
  }

  std::filesystem::path storage_;
  std::vector<MarketQuote> replay_;
  mutable std::mutex market_mutex_;
  MarketQuote quote_{20.0, 16.0};
  std::shared_mutex accounts_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> accounts_;
  unsigned long next_id_ = 0;
};

}  // namespace mdt
