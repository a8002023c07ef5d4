#include "tempcog/embeddings.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "tempcog/digest.hpp"

namespace tempcog::embeddings {

using nlohmann::json;

void EmbeddingSet::validate() const {
  if (dim == 0) throw StructuralError("embedding set has zero dimension");
  if (vectors.size() != range.size() * dim) {
    throw StructuralError(fmt::format("embedding set holds {} values, expected {} years x {} dims",
                                      vectors.size(), range.size(), dim));
  }
}

SemanticMatrix::SemanticMatrix(core::YearRange range)
    : range_(range), cells_(range.size() * range.size(), 0.0), defined_(range.size(), 1) {}

std::optional<double> SemanticMatrix::at(std::size_t r, std::size_t c) const {
  if (!defined(r) || !defined(c)) return std::nullopt;
  return cells_[r * size() + c];
}

std::size_t SemanticMatrix::undefined_count() const {
  return static_cast<std::size_t>(std::count(defined_.begin(), defined_.end(), 0));
}

void SemanticMatrix::set(std::size_t r, std::size_t c, double value) {
  cells_[r * size() + c] = value;
  cells_[c * size() + r] = value;
}

void SemanticMatrix::mark_undefined(std::size_t r) { defined_[r] = 0; }

core::SimilarityMatrix SemanticMatrix::to_similarity(core::MatrixMeta meta) const {
  core::SimilarityMatrix out(range_, std::move(meta));
  for (std::size_t r = 0; r < size(); ++r) {
    for (std::size_t c = 0; c < size(); ++c) {
      if (auto v = at(r, c)) out.set(r, c, std::clamp(*v, 0.0, 1.0));
    }
  }
  return out;
}

Eigen::MatrixXd SemanticMatrix::dissimilarity() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto v = at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      d(r, c) = r == c ? 0.0 : (v ? 1.0 - *v : 1.0);
    }
  }
  return d;
}

SemanticMatrix cosine_matrix(const EmbeddingSet& e) {
  e.validate();
  const std::size_t n = e.range.size();
  SemanticMatrix s(e.range);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (double v : e.row(i)) sq += v * v;
    norms[i] = std::sqrt(sq);
    if (norms[i] == 0.0) s.mark_undefined(i);
  }
  auto fill_row = [&](std::size_t i) {
    if (norms[i] == 0.0) return;
    const auto vi = e.row(i);
    s.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norms[j] == 0.0) continue;
      const auto vj = e.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < e.dim; ++k) dot += vi[k] * vj[k];
      s.set(i, j, std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0));
    }
  };
  // Each row i owns cells (i, j >= i) and their mirrors, so workers never overlap.
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 8);
  if (workers == 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fill_row(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) fill_row(i);
      });
    }
  }
  return s;
}

OpenAIEmbeddingClient::OpenAIEmbeddingClient(std::string endpoint, std::string api_key,
                                             std::chrono::seconds timeout)
    : endpoint_(net::EndpointUrl::parse(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {}

std::string OpenAIEmbeddingClient::request_body(std::string_view model,
                                                std::span<const std::string> inputs) {
  json body = {{"model", model}, {"input", json::array()}};
  for (const auto& s : inputs) body["input"].push_back(s);
  return body.dump();
}

std::vector<std::vector<double>> OpenAIEmbeddingClient::parse_reply(std::string_view body,
                                                                    std::size_t expected) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw TransportError("embedding reply is not JSON");
  std::vector<std::vector<double>> out(expected);
  std::vector<char> seen(expected, 0);
  try {
    const auto& data = j.at("data");
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto& item = data.at(k);
      const std::size_t index = item.contains("index") ? item.at("index").get<std::size_t>() : k;
      if (index >= expected || seen[index]) {
        throw TransportError(fmt::format("embedding reply has unexpected index {}", index));
      }
      out[index] = item.at("embedding").get<std::vector<double>>();
      seen[index] = 1;
    }
  } catch (const json::exception& e) {
    throw TransportError(fmt::format("unexpected embedding reply: {}", e.what()));
  }
  if (std::count(seen.begin(), seen.end(), 1) != static_cast<std::ptrdiff_t>(expected)) {
    throw TransportError(fmt::format("embedding reply is missing vectors ({} requested)", expected));
  }
  return out;
}

std::vector<std::vector<double>> OpenAIEmbeddingClient::embed(std::string_view model,
                                                              std::span<const std::string> inputs) {
  return parse_reply(net::post_json(endpoint_, "/embeddings", request_body(model, inputs), api_key_, timeout_),
                     inputs.size());
}

EmbeddingSet embed_collect(EmbeddingProvider& provider, const EmbedConfig& config,
                           const core::YearRange& range, EmbedStats* stats) {
  if (config.batch_size == 0) throw ConfigError("embedding batch size must be at least 1");
  EmbedStats local;
  EmbedStats& st = stats != nullptr ? *stats : local;

  std::optional<net::ResponseCache> cache;
  if (config.cache_path.empty()) {
    cache.emplace();
  } else {
    cache.emplace(config.cache_path);
  }

  const std::size_t n = range.size();
  std::vector<std::string> texts(n);
  std::vector<std::string> keys(n);
  std::vector<std::vector<double>> vectors(n);
  std::vector<std::size_t> todo;
  for (std::size_t k = 0; k < n; ++k) {
    texts[k] = core::render_stimulus(range.year_at(k), config.condition, config.stimulus);
    keys[k] = sha256_hex(fmt::format("embedding\n{}\n{}", config.model, texts[k]));
    if (auto hit = cache->get(keys[k])) {
      vectors[k] = json::parse(*hit).get<std::vector<double>>();
      ++st.cache_hits;
    } else {
      todo.push_back(k);
    }
  }

  for (std::size_t start = 0; start < todo.size(); start += config.batch_size) {
    const std::size_t stop = std::min(todo.size(), start + config.batch_size);
    std::vector<std::string> batch;
    for (std::size_t t = start; t < stop; ++t) batch.push_back(texts[todo[t]]);
    std::vector<std::vector<double>> reply;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        ++st.network_calls;
        reply = provider.embed(config.model, batch);
        if (reply.size() != batch.size()) {
          throw TransportError(fmt::format("provider returned {} vectors for {} inputs", reply.size(),
                                           batch.size()));
        }
        break;
      } catch (const TransportError& e) {
        ++st.transport_failures;
        if (attempt >= config.retry.retries) {
          throw TransportError(fmt::format("embedding batch starting at year {} failed after {} attempts: {}",
                                           range.year_at(todo[start]), attempt + 1, e.what()));
        }
        std::this_thread::sleep_for(config.retry.delay_for(attempt));
      }
    }
    for (std::size_t t = start; t < stop; ++t) {
      const std::size_t k = todo[t];
      vectors[k] = std::move(reply[t - start]);
      cache->put(keys[k], json(vectors[k]).dump());
    }
  }

  EmbeddingSet out;
  out.model = config.model;
  out.stimulus_template =
      config.condition == core::Condition::Temporal ? config.stimulus.temporal : config.stimulus.numerical;
  out.range = range;
  out.dim = n == 0 ? 0 : vectors.front().size();
  out.vectors.reserve(n * out.dim);
  for (std::size_t k = 0; k < n; ++k) {
    if (vectors[k].size() != out.dim) {
      throw DataError(fmt::format("embedding for year {} has dimension {}, expected {}", range.year_at(k),
                                  vectors[k].size(), out.dim));
    }
    out.vectors.insert(out.vectors.end(), vectors[k].begin(), vectors[k].end());
  }
  out.validate();
  return out;
}

void write_embedding_dump(const std::filesystem::path& path, const EmbeddingSet& e) {
  e.validate();
  dumpio::DumpHeader h;
  h.kind = dumpio::DumpKind::Embeddings;
  h.model = e.model;
  h.condition = "year";
  h.stimuli = e.range.years();
  h.layers = {{0, e.range.size(), e.dim}};
  h.element_type = dumpio::ElementType::Float32;
  h.attributes["stimulus_template"] = e.stimulus_template;
  dumpio::write_dump(path, h, [&](std::size_t) {
    std::vector<float> v(e.vectors.begin(), e.vectors.end());
    return dumpio::LayerArray::from_float32(e.range.size(), e.dim, v);
  });
}

EmbeddingSet read_embedding_dump(const std::filesystem::path& path, std::optional<int> layer) {
  dumpio::DumpReader reader(path);
  const auto& h = reader.header();
  if (h.kind != dumpio::DumpKind::Embeddings) {
    throw StructuralError(fmt::format("{} is a {} dump, expected embeddings", path.string(),
                                      dumpio::to_string(h.kind)));
  }
  if (h.stimuli.empty() || h.layers.empty()) throw StructuralError(path.string() + " holds no embeddings");
  for (std::size_t k = 1; k < h.stimuli.size(); ++k) {
    if (h.stimuli[k] != h.stimuli[k - 1] + 1) {
      throw StructuralError(path.string() + ": embedding stimuli must be consecutive years");
    }
  }
  const auto array = layer ? reader.read_layer(*layer) : reader.read_layer_at(h.layers.size() - 1);
  EmbeddingSet e;
  e.model = h.model;
  if (auto it = h.attributes.find("stimulus_template"); it != h.attributes.end()) e.stimulus_template = it->second;
  e.range = core::YearRange(h.stimuli.front(), h.stimuli.back());
  e.dim = array.cols();
  e.vectors = array.to_float64();
  e.validate();
  return e;
}

void check_dissimilarity(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) throw DomainError("dissimilarity matrix must be square");
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw DomainError(fmt::format("dissimilarity diagonal entry {} is nonzero", i));
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) {
        throw DomainError(fmt::format("dissimilarity ({}, {}) is negative or not finite", i, j));
      }
      if (d(i, j) != d(j, i)) throw DomainError(fmt::format("dissimilarity is not symmetric at ({}, {})", i, j));
    }
  }
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& d, std::size_t k) {
  const Eigen::Index n = d.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  if (k == 0 || kk > n) throw ConfigError(fmt::format("MDS dimension {} must lie in [1, {}]", k, n));
  const Eigen::MatrixXd d2 = d.array().square().matrix();
  const Eigen::MatrixXd j =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd b = -0.5 * j * d2 * j;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
  if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed in classical MDS");
  Eigen::MatrixXd x(n, kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    const Eigen::Index src = n - 1 - c;  // eigenvalues ascend
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    x.col(c) = v * std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
  }
  return x;
}

double kruskal_stress(const Eigen::MatrixXd& d, const Eigen::MatrixXd& y) {
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
      const double e = (y.row(i) - y.row(j)).norm();
      num += (d(i, j) - e) * (d(i, j) - e);
      den += d(i, j) * d(i, j);
    }
  }
  return den == 0.0 ? 0.0 : std::sqrt(num / den);
}

namespace {

Eigen::MatrixXd guttman_transform(const Eigen::MatrixXd& d, const Eigen::MatrixXd& x) {
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double e = (x.row(i) - x.row(j)).norm();
      const double v = e > 0.0 ? -d(i, j) / e : 0.0;
      b(i, j) = v;
      b(j, i) = v;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) b(i, i) = -b.row(i).sum();
  return b * x / static_cast<double>(n);
}

}  // namespace

MdsResult smacof(const Eigen::MatrixXd& d, Eigen::MatrixXd start, const MdsOptions& options) {
  check_dissimilarity(d);
  if (start.rows() != d.rows()) throw ConfigError("SMACOF start has the wrong number of points");
  MdsResult r;
  r.coordinates = std::move(start);
  double prev = kruskal_stress(d, r.coordinates);
  r.stress_history.push_back(prev);
  if (prev == 0.0) {
    r.stress = 0.0;
    r.converged = true;
    return r;
  }
  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    r.coordinates = guttman_transform(d, r.coordinates);
    const double s = kruskal_stress(d, r.coordinates);
    r.stress_history.push_back(s);
    r.iterations = it;
    if (s > prev * (1.0 + 1e-12) + 1e-15) r.monotone = false;
    if (prev == 0.0 || (prev - s) / prev < options.tol) {
      r.converged = true;
      prev = s;
      break;
    }
    prev = s;
  }
  r.stress = prev;
  return r;
}

MdsResult mds_embed(const Eigen::MatrixXd& d, const MdsOptions& options) {
  check_dissimilarity(d);
  return smacof(d, classical_mds(d, options.k), options);
}

analysis::MetricComparison semantic_regression(const SemanticMatrix& s, const core::PairSet& pairs,
                                               std::span<const core::TheoreticalMetric> metrics) {
  if (s.range() != pairs.range()) throw StructuralError("semantic matrix and pair set cover different ranges");
  std::vector<double> observed;
  observed.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto v = s.at(s.range().index_of(p.i), s.range().index_of(p.j));
    observed.push_back(v ? 1.0 - *v : std::numeric_limits<double>::quiet_NaN());
  }
  return analysis::compare_on_samples(pairs.pairs(), observed, metrics);
}

}  // namespace tempcog::embeddings
