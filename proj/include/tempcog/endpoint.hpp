#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "tempcog/errors.hpp"

// HTTP plumbing shared by the chat-completion judge and the embedding client.
namespace tempcog::net {

struct EndpointUrl {
  std::string scheme_host_port;  // "https://api.example.com:443"
  std::string base_path;         // "/v1", never with a trailing slash

  // Accepts "http(s)://host[:port][/base]".
  static EndpointUrl parse(std::string_view url);
};

struct RetryPolicy {
  std::size_t retries = 3;  // attempts = retries + 1
  std::chrono::milliseconds base_delay{200};
  std::chrono::milliseconds max_delay{10'000};

  // base_delay * 2^attempt, capped.
  [[nodiscard]] std::chrono::milliseconds delay_for(std::size_t attempt) const;
};

// Reads the credential from TEMPCOG_API_KEY, falling back to OPENAI_API_KEY.
[[nodiscard]] std::string api_key_from_env();

// POSTs a JSON body and returns the response body. Non-2xx status, connection
// failure and timeouts all raise TransportError.
[[nodiscard]] std::string post_json(const EndpointUrl& endpoint, std::string_view path,
                                    const std::string& body, const std::string& api_key,
                                    std::chrono::seconds timeout = std::chrono::seconds(120));

// Append-only key/value store persisted as JSON lines. Thread-safe.
class ResponseCache {
 public:
  ResponseCache() = default;  // in-memory only
  explicit ResponseCache(const std::filesystem::path& path);

  [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& value);
  [[nodiscard]] std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::ofstream> out_;
};

}  // namespace tempcog::net
