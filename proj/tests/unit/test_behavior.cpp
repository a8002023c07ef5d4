#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "tempcog/behavior.hpp"
#include "tempcog/errors.hpp"
#include "tempcog/synthkit.hpp"

// After Eigen: resolv.h, pulled in here, defines a macro named _res.
#include <fmt/core.h>
#include <httplib.h>

using namespace tempcog;
using namespace tempcog::behavior;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tempcog_behavior_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ExperimentConfig mock_config(const std::filesystem::path& dir, std::size_t in_flight = 1) {
  ExperimentConfig c;
  c.model = "mock";
  c.max_in_flight = in_flight;
  c.retry.retries = 2;
  c.retry.base_delay = std::chrono::milliseconds(0);
  c.retry.max_delay = std::chrono::milliseconds(0);
  if (!dir.empty()) c.checkpoint_path = dir / "checkpoint.tsv";
  return c;
}

}  // namespace

TEST_CASE("prompts") {
  const auto y = build_prompt(core::Condition::Temporal, 1900, 2000);
  for (const char* part : {"1900", "2000", "0", "1", "year"}) CHECK(y.find(part) != std::string::npos);
  const auto n = build_prompt(core::Condition::Numerical, 1900, 2000);
  CHECK(n.find("number") != std::string::npos);
  CHECK(n.find("year") == std::string::npos);
  CHECK(build_prompt("{A}|{B}", 1, 2) == "1|2");
  CHECK_THROWS_AS((void)build_prompt("{A} only", 1, 2), ConfigError);
  const auto swapped = build_prompt(core::Condition::Temporal, 2000, 1900);
  CHECK(swapped.size() == y.size());
  CHECK(swapped != y);
}

TEST_CASE("rating parser") {
  CHECK(parse_rating("0.85") == 0.85);
  CHECK(parse_rating("Similarity: 0.2 (low)") == 0.2);
  CHECK_FALSE(parse_rating("about 12").has_value());
  CHECK(parse_rating("1") == 1.0);
  CHECK(parse_rating("0") == 0.0);
  CHECK(parse_rating(".5") == 0.5);
  CHECK(parse_rating("rating 7 then 0.3") == 0.3);
  CHECK_FALSE(parse_rating("-0.4").has_value());
  CHECK_FALSE(parse_rating("no digits").has_value());
  CHECK_FALSE(parse_rating("").has_value());
}

TEST_CASE("chat wire format") {
  const JudgeRequest req{"m1", "hello", 0.0, {1, 2}};
  const auto body = nlohmann::json::parse(ChatCompletionJudge::request_body(req));
  CHECK(body["model"] == "m1");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hello");
  CHECK(ChatCompletionJudge::reply_text(R"({"choices":[{"message":{"content":"0.4"}}]})") == "0.4");
  CHECK_THROWS_AS((void)ChatCompletionJudge::reply_text("{}"), TransportError);
  CHECK_THROWS_AS((void)ChatCompletionJudge::reply_text("not json"), TransportError);
}

TEST_CASE("config validation and digest") {
  auto c = mock_config({});
  c.temperature = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = mock_config({});
  c.prompt_template = "{A}";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = mock_config({});
  const core::PairSet pairs(core::YearRange(2000, 2004), core::PairMode::Full);
  auto other = c;
  other.model = "other";
  CHECK(c.digest(pairs) != other.digest(pairs));
  auto parallel = c;
  parallel.max_in_flight = 8;
  CHECK(c.digest(pairs) == parallel.digest(pairs));
}

TEST_CASE("mock judge fills the matrix") {
  const core::PairSet pairs(core::YearRange(1525, 1624), core::PairMode::Full);
  synth::FunctionJudge judge(synth::reference_rule(2025));
  const auto r = collect_matrix(mock_config({}), pairs, judge);
  CHECK(r.complete);
  CHECK(r.matrix.size() == 100);
  CHECK(r.matrix.missing_count() == 0);
  CHECK(r.stats.network_calls == 10000);
  CHECK(*r.matrix.at_years(1600, 1610) == doctest::Approx(std::exp(-core::d_ref(1600, 1610, 2025))));
}

TEST_CASE("failures degrade to Missing and are retried") {
  const core::PairSet pairs(core::YearRange(2000, 2019), core::PairMode::Full);
  synth::FunctionJudge dead(synth::reference_rule(2025));
  dead.always_fail_every = 1;
  const auto all = collect_matrix(mock_config({}), pairs, dead);
  CHECK(all.matrix.missing_count() == 400);
  CHECK(all.failures.size() == 400);
  CHECK(all.stats.network_calls == 1200);
  CHECK(all.complete);

  synth::FunctionJudge flaky(synth::reference_rule(2025));
  flaky.fail_every = 3;
  flaky.transient_failures = 2;
  flaky.garble_every = 5;
  const auto r = collect_matrix(mock_config({}), pairs, flaky);
  CHECK(r.matrix.missing_count() == 0);
  CHECK(r.stats.transport_failures > 0);
  CHECK(r.stats.parse_failures > 0);
}

TEST_CASE("result is independent of parallelism") {
  const core::PairSet pairs(core::YearRange(1900, 1949), core::PairMode::Full);
  synth::FunctionJudge a(synth::reference_rule(2025));
  synth::FunctionJudge b(synth::reference_rule(2025));
  b.fail_every = 7;
  b.transient_failures = 1;
  const auto serial = collect_matrix(mock_config({}, 1), pairs, a);
  const auto parallel = collect_matrix(mock_config({}, 8), pairs, b);
  CHECK(matrix_digest(serial.matrix) == matrix_digest(parallel.matrix));
}

TEST_CASE("interrupted and resumed run matches the uninterrupted run") {
  const core::PairSet pairs(core::YearRange(1525, 1574), core::PairMode::Full);
  synth::FunctionJudge once(synth::reference_rule(2025));
  const auto full = collect_matrix(mock_config(fresh_dir("full")), pairs, once);

  const auto dir = fresh_dir("resume");
  synth::FunctionJudge judge(synth::reference_rule(2025));
  const auto part = collect_matrix(mock_config(dir, 4), pairs, judge, {false, 1000});
  CHECK_FALSE(part.complete);
  CHECK(part.stats.completed_now == 1000);
  const std::size_t calls_before = judge.calls();
  const auto rest = collect_matrix(mock_config(dir, 4), pairs, judge, {true, std::nullopt});
  CHECK(rest.complete);
  CHECK(rest.stats.resumed == 1000);
  CHECK(judge.calls() - calls_before == pairs.size() - 1000);
  CHECK(matrix_digest(rest.matrix) == matrix_digest(full.matrix));
}

TEST_CASE("checkpoint refuses a different configuration and drops a torn record") {
  const auto dir = fresh_dir("ckpt");
  const auto path = dir / "c.tsv";
  {
    Checkpoint c(path, "abc", 10);
    c.append(0, 0.5);
    c.append(3, std::nullopt);
  }
  CHECK_THROWS_AS(Checkpoint(path, "other", 10), ConfigError);
  {
    std::ofstream out(path, std::ios::app);
    out << "4\t0.2";
  }
  Checkpoint reopened(path, "abc", 10);
  CHECK(reopened.completed().size() == 2);
  CHECK(reopened.completed().at(0) == 0.5);
  CHECK_FALSE(reopened.completed().at(3).has_value());
}

TEST_CASE("persistent cache short-circuits the judge") {
  const auto dir = fresh_dir("cache");
  const core::PairSet pairs(core::YearRange(2000, 2009), core::PairMode::Full);
  auto c = mock_config({});
  c.cache_path = dir / "cache.jsonl";
  synth::FunctionJudge cold(synth::reference_rule(2025));
  const auto first = collect_matrix(c, pairs, cold);
  synth::FunctionJudge warm(synth::reference_rule(2025));
  const auto second = collect_matrix(c, pairs, warm);
  CHECK(warm.calls() == 0);
  CHECK(second.stats.network_calls == 0);
  CHECK(second.stats.cache_hits == 100);
  CHECK(matrix_digest(first.matrix) == matrix_digest(second.matrix));
}

TEST_CASE("chat judge against a local endpoint") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const bool authorized = req.get_header_value("Authorization") == "Bearer k";
    ++hits;
    if (!authorized || body["temperature"] != 0.0) {
      res.status = 401;
      return;
    }
    nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", "Rating: 0.75"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ChatCompletionJudge judge(fmt::format("http://127.0.0.1:{}/v1", port), "k", std::chrono::seconds(5));
  const core::PairSet pairs(core::YearRange(2000, 2002), core::PairMode::Full);
  auto c = mock_config({}, 2);
  const auto r = collect_matrix(c, pairs, judge);
  CHECK(r.matrix.missing_count() == 0);
  CHECK(*r.matrix.at_years(2000, 2001) == 0.75);
  CHECK(hits.load() == 9);

  ChatCompletionJudge bad(fmt::format("http://127.0.0.1:{}/v1", port), "wrong", std::chrono::seconds(5));
  CHECK_THROWS_AS((void)bad.complete({"m", "p", 0.0, {2000, 2001}}), TransportError);
  server.stop();
  t.join();
}
