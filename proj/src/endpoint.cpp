#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "tempcog/endpoint.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <httplib.h>
#include <json.hpp>

namespace tempcog::net {

EndpointUrl EndpointUrl::parse(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ConfigError(fmt::format("endpoint '{}' must start with http:// or https://", url));
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError(fmt::format("unsupported endpoint scheme '{}'", scheme));
  }
  const auto rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  EndpointUrl out;
  out.scheme_host_port = std::string(url.substr(0, scheme_end + 3 + std::min(slash, rest.size())));
  if (slash != std::string_view::npos) out.base_path = std::string(rest.substr(slash));
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  if (rest.empty() || slash == 0) throw ConfigError(fmt::format("endpoint '{}' has no host", url));
  return out;
}

std::chrono::milliseconds RetryPolicy::delay_for(std::size_t attempt) const {
  auto delay = base_delay;
  for (std::size_t k = 0; k < attempt && delay < max_delay; ++k) delay *= 2;
  return std::min(delay, max_delay);
}

std::string api_key_from_env() {
  for (const char* name : {"TEMPCOG_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(name); v != nullptr && *v != '\0') return v;
  }
  return {};
}

std::string post_json(const EndpointUrl& endpoint, std::string_view path, const std::string& body,
                      const std::string& api_key, std::chrono::seconds timeout) {
  httplib::Client client(endpoint.scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  const std::string full_path = endpoint.base_path + std::string(path);
  auto res = client.Post(full_path, headers, body, "application/json");
  if (!res) {
    throw TransportError(fmt::format("POST {}{} failed: {}", endpoint.scheme_host_port, full_path,
                                     httplib::to_string(res.error())));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError(fmt::format("POST {}{} returned HTTP {}: {}", endpoint.scheme_host_port,
                                     full_path, res->status, res->body.substr(0, 200)));
  }
  return res->body;
}

ResponseCache::ResponseCache(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      // A torn final line from an interrupted run is skipped.
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("k") || !j.contains("v")) continue;
      entries_[j["k"].get<std::string>()] = j["v"].get<std::string>();
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool needs_newline = false;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream tail(path, std::ios::binary);
    tail.seekg(-1, std::ios::end);
    needs_newline = tail.get() != '\n';
  }
  out_.emplace(path, std::ios::app);
  if (!*out_) throw Error("cannot open cache file " + path.string());
  if (needs_newline) *out_ << '\n';
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(key, value).second) return;
  if (out_) {
    *out_ << nlohmann::json{{"k", key}, {"v", value}}.dump() << '\n';
    out_->flush();
  }
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace tempcog::net
