#include "tempcog/behavior.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <thread>

#include "tempcog/digest.hpp"

namespace tempcog::behavior {

using nlohmann::json;

std::string default_prompt_template(core::Condition condition) {
  const std::string_view noun = condition == core::Condition::Temporal ? "year" : "number";
  return fmt::format(
      "Please rate the similarity between the {0} {{A}} and the {0} {{B}} on a continuous scale "
      "from 0 (completely dissimilar) to 1 (most similar). Respond with a single number between "
      "0 and 1.",
      noun);
}

std::string build_prompt(std::string_view tmpl, core::Year i, core::Year j) {
  if (tmpl.find("{A}") == std::string_view::npos || tmpl.find("{B}") == std::string_view::npos) {
    throw ConfigError("prompt template must contain both {A} and {B}");
  }
  const std::string a = std::to_string(i);
  const std::string b = std::to_string(j);
  std::string out;
  out.reserve(tmpl.size() + 16);
  for (std::size_t k = 0; k < tmpl.size();) {
    if (tmpl.compare(k, 3, "{A}") == 0) {
      out += a;
      k += 3;
    } else if (tmpl.compare(k, 3, "{B}") == 0) {
      out += b;
      k += 3;
    } else {
      out.push_back(tmpl[k++]);
    }
  }
  return out;
}

std::string build_prompt(core::Condition condition, core::Year i, core::Year j) {
  return build_prompt(default_prompt_template(condition), i, j);
}

std::optional<double> parse_rating(std::string_view text) {
  const auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::size_t k = 0;
  while (k < text.size()) {
    const bool starts = is_digit(text[k]) ||
                        (text[k] == '.' && k + 1 < text.size() && is_digit(text[k + 1]));
    if (!starts) {
      ++k;
      continue;
    }
    // Literal extent: digits with at most one decimal point.
    std::size_t end = k;
    bool dot = false;
    while (end < text.size() && (is_digit(text[end]) || (text[end] == '.' && !dot))) {
      if (text[end] == '.') {
        if (end + 1 >= text.size() || !is_digit(text[end + 1])) break;
        dot = true;
      }
      ++end;
    }
    const bool negative = k > 0 && text[k - 1] == '-';
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data() + k, text.data() + end, value,
                                     std::chars_format::fixed);
    if (ec == std::errc{} && !negative && value >= 0.0 && value <= 1.0) return value;
    k = std::max(end, k + 1);
  }
  return std::nullopt;
}

ChatCompletionJudge::ChatCompletionJudge(std::string endpoint, std::string api_key,
                                         std::chrono::seconds timeout)
    : endpoint_(net::EndpointUrl::parse(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {}

std::string ChatCompletionJudge::request_body(const JudgeRequest& request) {
  json body = {{"model", request.model},
               {"temperature", request.temperature},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  return body.dump();
}

std::string ChatCompletionJudge::reply_text(std::string_view body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("chat completion reply is not JSON");
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(fmt::format("unexpected chat completion reply: {}", e.what()));
  }
}

std::string ChatCompletionJudge::complete(const JudgeRequest& request) {
  return reply_text(net::post_json(endpoint_, "/chat/completions", request_body(request), api_key_, timeout_));
}

void ExperimentConfig::validate() const {
  if (temperature != 0.0) throw ConfigError("temperature must be 0 for similarity collection");
  if (max_in_flight < 1) throw ConfigError("max in-flight requests must be at least 1");
  (void)build_prompt(effective_template(), 1, 2);
}

std::string ExperimentConfig::effective_template() const {
  return prompt_template.empty() ? default_prompt_template(condition) : prompt_template;
}

std::string ExperimentConfig::digest(const core::PairSet& pairs) const {
  const json j = {{"model", model},
                  {"condition", core::to_string(condition)},
                  {"template", effective_template()},
                  {"temperature", temperature},
                  {"range", pairs.range().to_string()},
                  {"pairs", core::to_string(pairs.mode())},
                  {"count", pairs.size()}};
  return sha256_hex(j.dump());
}

namespace {

std::string format_rating(std::optional<double> r) { return r ? fmt::format("{}", *r) : "F"; }

std::string header_line(const std::string& digest, std::size_t total) {
  return fmt::format("tempcog-checkpoint {} {} {}", Checkpoint::kVersion, digest, total);
}

}  // namespace

Checkpoint::Checkpoint(const std::filesystem::path& path, const std::string& digest,
                       std::size_t total_pairs) {
  const std::string expected = header_line(digest, total_pairs);
  std::uintmax_t keep_bytes = 0;
  bool fresh = true;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto nl = content.find('\n');
    if (nl == std::string::npos) {
      // Crashed before the header was complete; treat as empty.
      keep_bytes = 0;
    } else {
      const std::string head = content.substr(0, nl);
      if (head != expected) {
        throw ConfigError(fmt::format("checkpoint {} was written for a different configuration; "
                                      "refusing to resume",
                                      path.string()));
      }
      fresh = false;
      keep_bytes = nl + 1;
      std::size_t pos = nl + 1;
      while (pos < content.size()) {
        const auto end = content.find('\n', pos);
        if (end == std::string::npos) break;  // torn record
        const std::string_view line(content.data() + pos, end - pos);
        const auto tab = line.find('\t');
        std::size_t index = 0;
        const auto ir = std::from_chars(line.data(), line.data() + std::min(tab, line.size()), index);
        if (tab == std::string_view::npos || ir.ec != std::errc{} || index >= total_pairs) {
          throw DataError(fmt::format("corrupt checkpoint record at byte {} of {}", pos, path.string()));
        }
        const auto value = line.substr(tab + 1);
        if (value == "F") {
          completed_[index] = std::nullopt;
        } else {
          double v = 0.0;
          const auto vr = std::from_chars(value.data(), value.data() + value.size(), v);
          if (vr.ec != std::errc{} || !(v >= 0.0 && v <= 1.0)) {
            throw DataError(fmt::format("corrupt checkpoint rating at byte {} of {}", pos, path.string()));
          }
          completed_[index] = v;
        }
        pos = end + 1;
        keep_bytes = pos;
      }
    }
    std::filesystem::resize_file(path, keep_bytes);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open checkpoint " + path.string());
  if (fresh) {
    out_ << expected << '\n';
    out_.flush();
  }
}

void Checkpoint::append(std::size_t pair_index, std::optional<double> rating) {
  std::lock_guard lock(mu_);
  completed_[pair_index] = rating;
  out_ << pair_index << '\t' << format_rating(rating) << '\n';
  out_.flush();
}

CollectResult collect_matrix(const ExperimentConfig& config, const core::PairSet& pairs,
                             RatingProvider& judge, const CollectOptions& options) {
  config.validate();
  const std::string tmpl = config.effective_template();

  CollectResult result;
  result.matrix = core::SimilarityMatrix(pairs.range(), {config.model, config.condition});
  result.stats.pairs_total = pairs.size();

  std::optional<Checkpoint> checkpoint;
  if (!config.checkpoint_path.empty()) {
    if (!options.resume) std::filesystem::remove(config.checkpoint_path);
    checkpoint.emplace(config.checkpoint_path, config.digest(pairs), pairs.size());
  }
  std::optional<net::ResponseCache> cache;
  if (!config.cache_path.empty()) {
    cache.emplace(config.cache_path);
  } else {
    cache.emplace();
  }

  const auto& range = pairs.range();
  auto store = [&](std::size_t index, std::optional<double> rating) {
    const auto& p = pairs[index];
    if (rating) result.matrix.set(range.index_of(p.i), range.index_of(p.j), *rating);
  };

  std::vector<char> done(pairs.size(), 0);
  if (checkpoint) {
    for (const auto& [index, rating] : checkpoint->completed()) {
      done[index] = 1;
      store(index, rating);
    }
    result.stats.resumed = checkpoint->completed().size();
  }
  std::vector<std::size_t> todo;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (!done[k]) todo.push_back(k);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> finished{0};
  std::atomic<std::size_t> network_calls{0};
  std::atomic<std::size_t> cache_hits{0};
  std::atomic<std::size_t> transport_failures{0};
  std::atomic<std::size_t> parse_failures{0};
  std::mutex failures_mu;
  std::vector<ResponseRecord> failures;

  const std::size_t limit = std::min(todo.size(), options.stop_after.value_or(todo.size()));
  auto worker = [&] {
    while (true) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= limit) break;
      const std::size_t index = todo[slot];
      const auto& pair = pairs[index];
      const std::string prompt = build_prompt(tmpl, pair.i, pair.j);
      const std::string key =
          sha256_hex(fmt::format("{}\n{}\n{}", config.model, config.temperature, prompt));

      ResponseRecord record;
      record.pair = pair;
      bool bypass_cache = false;
      for (std::size_t attempt = 0; attempt <= config.retry.retries; ++attempt) {
        record.attempts = attempt + 1;
        if (attempt > 0) std::this_thread::sleep_for(config.retry.delay_for(attempt - 1));
        std::optional<std::string> reply;
        if (!bypass_cache) {
          reply = cache->get(key);
          if (reply) ++cache_hits;
        }
        if (!reply) {
          try {
            ++network_calls;
            reply = judge.complete({config.model, prompt, config.temperature, pair});
          } catch (const TransportError& e) {
            ++transport_failures;
            record.error = e.what();
            continue;
          }
        }
        record.raw = *reply;
        record.rating = parse_rating(*reply);
        if (record.rating) {
          cache->put(key, *reply);
          record.error.clear();
          break;
        }
        ++parse_failures;
        record.error = "no rating in [0,1] found in reply";
        bypass_cache = true;
      }
      record.timestamp = std::chrono::system_clock::now();

      store(index, record.rating);
      if (checkpoint) checkpoint->append(index, record.rating);
      if (!record.rating) {
        spdlog::warn("pair ({}, {}) recorded as missing after {} attempts: {}", pair.i, pair.j,
                     record.attempts, record.error);
        std::lock_guard lock(failures_mu);
        failures.push_back(std::move(record));
      }
      ++finished;
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.max_in_flight, limit));
  if (limit > 0) {
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::size_t k = 0; k < n_workers; ++k) threads.emplace_back(worker);
  }

  std::sort(failures.begin(), failures.end(), [&](const auto& a, const auto& b) {
    return pairs.position(a.pair).value_or(0) < pairs.position(b.pair).value_or(0);
  });
  result.failures = std::move(failures);
  result.stats.completed_now = finished.load();
  result.stats.network_calls = network_calls.load();
  result.stats.cache_hits = cache_hits.load();
  result.stats.transport_failures = transport_failures.load();
  result.stats.parse_failures = parse_failures.load();
  result.complete = result.stats.resumed + result.stats.completed_now == pairs.size();
  std::size_t missing = 0;
  for (const auto& p : pairs) {
    if (result.matrix.missing(range.index_of(p.i), range.index_of(p.j))) ++missing;
  }
  result.stats.missing = missing;
  return result;
}

std::string matrix_digest(const core::SimilarityMatrix& m) {
  Sha256 h;
  h.update(fmt::format("{}|{}|{}|", m.range().to_string(), core::to_string(m.meta().condition),
                       m.meta().model));
  std::string bytes(m.raw().size() * 8, '\0');
  for (std::size_t k = 0; k < m.raw().size(); ++k) {
    double v = m.raw()[k];
    std::uint64_t bits = std::isnan(v) ? 0x7ff8000000000000ULL : std::bit_cast<std::uint64_t>(v);
    std::memcpy(bytes.data() + 8 * k, &bits, 8);
  }
  h.update(bytes);
  return h.hex();
}

}  // namespace tempcog::behavior
