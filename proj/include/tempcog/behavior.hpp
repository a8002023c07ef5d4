#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tempcog/core.hpp"
#include "tempcog/endpoint.hpp"

// Similarity-judgment collection against a chat-completion endpoint.
namespace tempcog::behavior {

// Placeholders "{A}" and "{B}" receive the two stimuli of a pair.
[[nodiscard]] std::string default_prompt_template(core::Condition condition);

// Throws ConfigError if either placeholder is missing.
[[nodiscard]] std::string build_prompt(std::string_view tmpl, core::Year i, core::Year j);
[[nodiscard]] std::string build_prompt(core::Condition condition, core::Year i, core::Year j);

// First decimal literal in [0,1] in the reply; nullopt when none is present.
// Out-of-range literals are skipped, never clamped.
[[nodiscard]] std::optional<double> parse_rating(std::string_view text);

struct JudgeRequest {
  std::string_view model;
  std::string_view prompt;
  double temperature = 0.0;
  core::YearPair pair{};
};

// Source of raw replies. Implementations must be safe to call concurrently
// and throw TransportError on retryable failures.
class RatingProvider {
 public:
  virtual ~RatingProvider() = default;
  [[nodiscard]] virtual std::string complete(const JudgeRequest& request) = 0;
};

// OpenAI-compatible POST {endpoint}/chat/completions.
class ChatCompletionJudge final : public RatingProvider {
 public:
  ChatCompletionJudge(std::string endpoint, std::string api_key,
                      std::chrono::seconds timeout = std::chrono::seconds(120));
  [[nodiscard]] std::string complete(const JudgeRequest& request) override;

  [[nodiscard]] static std::string request_body(const JudgeRequest& request);
  // choices[0].message.content; TransportError on a malformed body.
  [[nodiscard]] static std::string reply_text(std::string_view body);

 private:
  net::EndpointUrl endpoint_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

struct ExperimentConfig {
  std::string endpoint;
  std::string model;
  core::Condition condition = core::Condition::Temporal;
  std::string prompt_template;  // empty: default for the condition
  double temperature = 0.0;
  std::size_t max_in_flight = 1;
  net::RetryPolicy retry;
  std::filesystem::path cache_path;       // empty: no persistent cache
  std::filesystem::path checkpoint_path;  // empty: no checkpoint

  // temperature == 0, max_in_flight >= 1, template has both placeholders.
  void validate() const;
  [[nodiscard]] std::string effective_template() const;
  // Digest of everything that determines the matrix contents.
  [[nodiscard]] std::string digest(const core::PairSet& pairs) const;
};

struct ResponseRecord {
  core::YearPair pair{};
  std::string raw;
  std::optional<double> rating;  // nullopt: parse or transport failure
  std::string error;
  std::chrono::system_clock::time_point timestamp;
  std::size_t attempts = 0;
};

// Header line "tempcog-checkpoint <version> <digest> <pairs>", then one
// "<pair index>\t<rating|F>" record per completed pair, append-only.
class Checkpoint {
 public:
  static constexpr int kVersion = 1;

  // Opens (or creates) the file. An existing file with another digest is
  // refused with ConfigError. A torn trailing record is discarded.
  Checkpoint(const std::filesystem::path& path, const std::string& digest, std::size_t total_pairs);

  [[nodiscard]] const std::map<std::size_t, std::optional<double>>& completed() const noexcept {
    return completed_;
  }
  void append(std::size_t pair_index, std::optional<double> rating);

 private:
  std::mutex mu_;
  std::map<std::size_t, std::optional<double>> completed_;
  std::ofstream out_;
};

struct CollectOptions {
  bool resume = false;  // reuse an existing checkpoint instead of starting over
  // Stop after this many newly completed pairs (simulated interruption).
  std::optional<std::size_t> stop_after;
};

struct CollectStats {
  std::size_t pairs_total = 0;
  std::size_t resumed = 0;
  std::size_t completed_now = 0;
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t transport_failures = 0;
  std::size_t parse_failures = 0;
  std::size_t missing = 0;
};

struct CollectResult {
  core::SimilarityMatrix matrix;
  std::vector<ResponseRecord> failures;  // pairs that ended Missing in this run
  CollectStats stats;
  bool complete = false;
};

// Rates every pair, at most max_in_flight requests at a time. The result is
// independent of parallelism and of interruption points.
[[nodiscard]] CollectResult collect_matrix(const ExperimentConfig& config, const core::PairSet& pairs,
                                           RatingProvider& judge, const CollectOptions& options = {});

// Digest over range, condition, model and every cell's bit pattern.
[[nodiscard]] std::string matrix_digest(const core::SimilarityMatrix& m);

}  // namespace tempcog::behavior
