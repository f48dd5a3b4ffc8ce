#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <thread>

#include "mdt/service.hpp"
#include "support/reference_model.hpp"

using namespace mdt;
using Catch::Approx;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mdt_service_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// Day-1 demand over the rest of the cycle is {0.5, 2} with equal weight.
json small_account(const std::string& id) {
  return {{"id", id},
          {"initial_quota", 1.0},
          {"cycle_length", 3},
          {"history", {{"past_months", {{0.0, 0.25, 0.25}, {0.0, 1.0, 1.0}}}}}};
}

AdvisorService::Response post(AdvisorService& s, const std::string& path, const json& body) {
  return s.handle("POST", path, body.dump());
}

AdvisorService::Response get(AdvisorService& s, const std::string& path) { return s.handle("GET", path, ""); }

}  // namespace

TEST_CASE("account creation and lookup") {
  AdvisorService s(fresh_dir("create"));
  auto r = post(s, "/accounts", small_account("alice"));
  CHECK(r.status == 201);
  CHECK(r.body["id"] == "alice");
  CHECK(r.body["ledger"]["quota"] == 1.0);

  CHECK(post(s, "/accounts", small_account("alice")).status == 409);
  CHECK(post(s, "/accounts", small_account("no spaces")).status == 400);
  CHECK(post(s, "/accounts", small_account("no spaces")).body["error"] == "bad_account_id");

  auto gen = post(s, "/accounts", json::object());
  CHECK(gen.status == 201);
  CHECK(!gen.body["id"].get<std::string>().empty());

  CHECK(get(s, "/accounts/alice").status == 200);
  CHECK(get(s, "/accounts/bob").status == 404);
  CHECK(get(s, "/accounts/bob").body["error"] == "unknown_account");
  CHECK(get(s, "/nowhere").status == 404);
  CHECK(s.handle("POST", "/accounts", "{not json").body["error"] == "bad_json");
  CHECK(get(s, "/accounts").body["accounts"].size() == 2);
}

TEST_CASE("market quote get and put") {
  AdvisorService s(fresh_dir("market"));
  CHECK(get(s, "/market").body["min_sell_price"] == 20.0);
  auto r = s.handle("PUT", "/market", json{{"min_sell_price", 25.0}, {"max_buy_price", 22.0}}.dump());
  CHECK(r.status == 200);
  CHECK(get(s, "/market").body["max_buy_price"] == 22.0);
  // A crossed book is rejected and leaves the quote alone.
  r = s.handle("PUT", "/market", json{{"min_sell_price", 10.0}, {"max_buy_price", 22.0}}.dump());
  CHECK(r.status == 400);
  CHECK(get(s, "/market").body["min_sell_price"] == 25.0);
}

TEST_CASE("replayed quotes follow the ledger day") {
  AdvisorService s(fresh_dir("replay"), {{20.0, 16.0}, {30.0, 28.0}});
  CHECK(s.handle("PUT", "/market", json{{"min_sell_price", 25.0}, {"max_buy_price", 22.0}}.dump()).status == 409);
  CHECK(s.handle("GET", "/market", "", {{"day", "2"}}).body["min_sell_price"] == 30.0);
  CHECK(s.handle("GET", "/market", "", {{"day", "9"}}).body["replay_day"] == 2);
  post(s, "/accounts", small_account("a"));
  post(s, "/accounts/a/usage", {{"usage_gb", 0.1}});
  CHECK(get(s, "/accounts/a/recommendation").body["quote"]["min_sell_price"] == 30.0);
}

TEST_CASE("recommendation for a two-outcome buyer") {
  AdvisorService s(fresh_dir("recommend"));
  post(s, "/accounts", small_account("a"));
  auto r = get(s, "/accounts/a/recommendation");
  REQUIRE(r.status == 200);
  CHECK(r.body["role"] == "buy");
  CHECK(r.body["quantity"].get<double>() == Approx(1.0).margin(1e-9));
  CHECK(r.body["utility"].get<double>() == Approx(-20.0).margin(1e-9));
  CHECK(r.body["price"] == 20.0);
  CHECK(r.body["path"] == "optimizer");
  CHECK(r.body["day"] == 1);
  CHECK(r.body["demand"].size() == 2);
}

TEST_CASE("profile updates change the recommendation inputs") {
  AdvisorService s(fresh_dir("profile"));
  post(s, "/accounts", small_account("a"));
  auto r = s.handle("PUT", "/accounts/a/profile",
                    json{{"beta", 0.8}, {"lambda", 2.0}, {"mu", 0.7}, {"reference", "low"}}.dump());
  CHECK(r.status == 200);
  CHECK(get(s, "/accounts/a/profile").body["reference"] == "low");
  r = s.handle("PUT", "/accounts/a/profile", json{{"beta", 1.5}}.dump());
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "bad_beta");
  CHECK(get(s, "/accounts/a/profile").body["beta"] == 0.8);
}

TEST_CASE("what-if evaluation does not mutate the account") {
  AdvisorService s(fresh_dir("whatif"));
  post(s, "/accounts", small_account("a"));
  const json before = get(s, "/accounts/a").body;
  auto r = post(s, "/accounts/a/whatif", {{"quantity", 0.5}});
  REQUIRE(r.status == 200);
  // Buying 0.5: surplus 1 w.p. 1/2, shortfall 0.5 w.p. 1/2.
  CHECK(r.body["utilities"]["buy"].get<double>() == Approx(-10.0 - 15.0));
  CHECK(r.body["utilities"]["none"].get<double>() == Approx(-30.0));
  CHECK(r.body["utilities"]["sell"].get<double>() == Approx(8.0 - 0.5 * 60.0 * 1.5));
  CHECK(r.body["recommendation"]["role"] == "buy");
  r = post(s, "/accounts/a/whatif", {{"quantity", 0.5}, {"quote", {{"min_sell_price", 50.0}, {"max_buy_price", 10.0}}}});
  CHECK(r.body["utilities"]["buy"].get<double>() == Approx(-25.0 - 15.0));
  CHECK(post(s, "/accounts/a/whatif", {{"quantity", -1.0}}).status == 400);
  CHECK(get(s, "/accounts/a").body == before);
}

TEST_CASE("trades, usage and cycle close") {
  AdvisorService s(fresh_dir("ledger"));
  post(s, "/accounts", small_account("a"));
  auto r = post(s, "/accounts/a/trades", {{"quantity", 0.5}});
  REQUIRE(r.status == 200);
  CHECK(r.body["quota"] == 1.5);
  CHECK(r.body["trades"][0]["price"] == 20.0);

  r = post(s, "/accounts/a/trades", {{"quantity", -5.0}});
  CHECK(r.status == 409);
  CHECK(r.body["error"] == "quota_cap_exceeded");
  CHECK(get(s, "/accounts/a/ledger").body["quota"] == 1.5);

  CHECK(post(s, "/accounts/a/usage", {{"usage_gb", 1.25}, {"day", 2}}).status == 400);
  CHECK(post(s, "/accounts/a/usage", {{"usage_gb", -1.0}}).status == 400);
  CHECK(post(s, "/accounts/a/usage", {{"usage_gb", 1.25}, {"day", 1}}).status == 200);
  CHECK(post(s, "/accounts/a/trades", {{"quantity", -0.25}, {"price", 16.0}}).status == 200);
  CHECK(post(s, "/accounts/a/usage", {{"usage_gb", 0.75}}).status == 200);
  CHECK(post(s, "/accounts/a/cycle", json::object()).status == 400);

  // Day 3 is the last day: no trading advice.
  CHECK(get(s, "/accounts/a/recommendation").body["path"] == "end_of_cycle");
  r = post(s, "/accounts/a/usage", {{"usage_gb", 1.0}});
  REQUIRE(r.status == 200);
  // 1 + 0.5 - 0.25 - 3 = -1.75 GB over: -10 + 4 - 105.
  CHECK(r.body["profit"].get<double>() == Approx(-111.0));
  CHECK(post(s, "/accounts/a/usage", {{"usage_gb", 1.0}}).status == 400);
  CHECK(s.handle("GET", "/accounts/a/recommendation", "").body["error"] == "cycle_complete");

  r = post(s, "/accounts/a/cycle", json::object());
  REQUIRE(r.status == 200);
  CHECK(r.body["history"]["past_months"].size() == 3);
  CHECK(r.body["history"]["past_months"][0] == json({1.25, 0.75, 1.0}));
  CHECK(r.body["ledger"]["day"] == 1);
  CHECK(r.body["ledger"]["trades"].empty());
}

TEST_CASE("elicitation recovers the risk profile") {
  AdvisorService s(fresh_dir("elicit"));
  post(s, "/accounts", small_account("a"));
  s.handle("PUT", "/accounts/a/profile", json{{"mu", 0.8}}.dump());

  ref::Instance inst;
  inst.demand = {{0.5, 0.5}, {2.0, 0.5}};
  inst.quota = 1.0;
  inst.beta = 0.8;
  inst.lambda = 2.0;
  inst.mu = 0.8;
  const auto prices = ref::indifference_prices(inst);
  auto r = post(s, "/accounts/a/elicitation", {{"buy_price", prices.buy_price}, {"sell_price", prices.sell_price}});
  REQUIRE(r.status == 200);
  CHECK(r.body["profile"]["beta"].get<double>() == Approx(0.8).margin(1e-4));
  CHECK(r.body["profile"]["lambda"].get<double>() == Approx(2.0).margin(1e-4));
  CHECK(r.body["profile"]["mu"] == 0.8);
  CHECK(get(s, "/accounts/a/profile").body["lambda"].get<double>() == Approx(2.0).margin(1e-4));

  // Re-answering on the same day replaces the earlier answer.
  r = post(s, "/accounts/a/elicitation", {{"buy_price", prices.buy_price}, {"sell_price", prices.sell_price}});
  CHECK(r.body["reports"] == 1);

  r = post(s, "/accounts/a/elicitation", {{"buy_price", 70.0}, {"sell_price", 10.0}});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "bad_indifference_price");
  // Buying dearer than the overage cost itself cannot be reconciled.
  r = post(s, "/accounts/a/elicitation", {{"buy_price", 59.0}, {"sell_price", 1.0}});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "inconsistent_indifference_prices");
  CHECK(get(s, "/accounts/a").body["reports"].size() == 1);
}

TEST_CASE("accounts survive a restart") {
  const auto dir = fresh_dir("restart");
  json before;
  {
    AdvisorService s(dir);
    post(s, "/accounts", small_account("a"));
    s.handle("PUT", "/market", json{{"min_sell_price", 25.0}, {"max_buy_price", 22.0}}.dump());
    post(s, "/accounts/a/trades", {{"quantity", 0.5}});
    post(s, "/accounts/a/usage", {{"usage_gb", 0.4}});
    before = get(s, "/accounts/a").body;
  }
  AdvisorService s(dir);
  CHECK(get(s, "/accounts/a").body == before);
  CHECK(get(s, "/market").body["min_sell_price"] == 25.0);
  CHECK(post(s, "/accounts", small_account("a")).status == 409);
}

TEST_CASE("concurrent requests on one account are serialised") {
  AdvisorService s(fresh_dir("concurrent"));
  json acct = small_account("a");
  acct["cycle_length"] = 400;
  post(s, "/accounts", acct);
  std::atomic<int> ok{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 8; ++t)
    pool.emplace_back([&] {
      for (int k = 0; k < 25; ++k) {
        if (post(s, "/accounts/a/usage", {{"usage_gb", 0.001}}).status == 200) ++ok;
        get(s, "/accounts/a/ledger");
      }
    });
  for (auto& th : pool) th.join();
  CHECK(ok == 200);
  const json ledger = get(s, "/accounts/a/ledger").body;
  CHECK(ledger["day"] == 201);
  CHECK(ledger["quota"].get<double>() == Approx(1.0 - 0.2));
  AdvisorService reloaded(s.storage());
  CHECK(get(reloaded, "/accounts/a/ledger").body == ledger);
}

TEST_CASE("live HTTP server") {
  AdvisorService s(fresh_dir("live"));
  httplib::Server server;
  s.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto r = client.Post("/accounts", small_account("net").dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  r = client.Get("/accounts/net/recommendation");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["role"] == "buy");
  r = client.Post("/accounts/net/trades", json{{"quantity", -9.0}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 409);
  r = client.Get("/accounts/ghost");
  REQUIRE(r);
  CHECK(r->status == 404);
  CHECK(r->get_header_value("Content-Type") == "application/json");

  server.stop();
  th.join();
}

TEST_CASE("retried mutations with a request id apply once") {
  AdvisorService s(fresh_dir("idempotent"));
  post(s, "/accounts", small_account("a"));
  const json trade = {{"quantity", 0.5}, {"request_id", "t-1"}};
  const auto first = post(s, "/accounts/a/trades", trade);
  const auto again = post(s, "/accounts/a/trades", trade);
  CHECK(first.status == 200);
  CHECK(again.status == 200);
  CHECK(again.body == first.body);
  CHECK(get(s, "/accounts/a/ledger").body["trades"].size() == 1);
  post(s, "/accounts/a/usage", {{"usage_gb", 0.2}, {"request_id", "u-1"}});
  post(s, "/accounts/a/usage", {{"usage_gb", 0.2}, {"request_id", "u-1"}});
  CHECK(get(s, "/accounts/a/ledger").body["day"] == 2);
  // A failed attempt is not remembered, so it can be retried.
  CHECK(post(s, "/accounts/a/trades", {{"quantity", -9.0}, {"request_id", "t-2"}}).status == 409);
  CHECK(post(s, "/accounts/a/trades", {{"quantity", -0.1}, {"request_id", "t-2"}}).status == 200);
}

TEST_CASE("recommendation is a pure function of stored state") {
  AdvisorService s(fresh_dir("pure"));
  post(s, "/accounts", small_account("a"));
  s.handle("PUT", "/accounts/a/profile", json{{"beta", 0.7}, {"lambda", 3.0}, {"mu", 0.6}}.dump());
  const auto a = get(s, "/accounts/a/recommendation");
  const auto b = get(s, "/accounts/a/recommendation");
  CHECK(a.body.dump() == b.body.dump());
  const auto w = post(s, "/accounts/a/whatif", {{"quantity", 0.0}});
  CHECK(w.body["utilities"]["buy"] == w.body["utilities"]["sell"]);
  CHECK(w.body["utilities"]["buy"] == w.body["utilities"]["none"]);
}
