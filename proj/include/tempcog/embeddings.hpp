#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempcog/analysis.hpp"
#include "tempcog/core.hpp"
#include "tempcog/dumpio.hpp"
#include "tempcog/endpoint.hpp"

namespace tempcog::embeddings {

// One vector per year of `range`, row-major.
struct EmbeddingSet {
  std::string model;
  std::string stimulus_template;
  core::YearRange range;
  std::size_t dim = 0;
  std::vector<double> vectors;

  [[nodiscard]] std::span<const double> row(std::size_t k) const {
    return {vectors.data() + k * dim, dim};
  }
  // Throws StructuralError when the storage does not match range x dim.
  void validate() const;
};

// Symmetric cosine similarities. Rows of zero vectors are undefined.
class SemanticMatrix {
 public:
  SemanticMatrix() = default;
  explicit SemanticMatrix(core::YearRange range);

  [[nodiscard]] const core::YearRange& range() const noexcept { return range_; }
  [[nodiscard]] std::size_t size() const noexcept { return range_.size(); }
  [[nodiscard]] bool defined(std::size_t r) const { return defined_[r] != 0; }
  [[nodiscard]] std::optional<double> at(std::size_t r, std::size_t c) const;
  [[nodiscard]] std::size_t undefined_count() const;

  void set(std::size_t r, std::size_t c, double value);  // writes both (r, c) and (c, r)
  void mark_undefined(std::size_t r);

  // Cells as a SimilarityMatrix: cosine clamped to [0,1], undefined as Missing.
  [[nodiscard]] core::SimilarityMatrix to_similarity(core::MatrixMeta meta = {}) const;
  // d = 1 - cos over all cells; undefined cells become 1.
  [[nodiscard]] Eigen::MatrixXd dissimilarity() const;

 private:
  core::YearRange range_;
  std::vector<double> cells_;
  std::vector<char> defined_;
};

// Computed once per i <= j and mirrored.
[[nodiscard]] SemanticMatrix cosine_matrix(const EmbeddingSet& e);

// Returns one vector per input, in input order. Throws TransportError on
// retryable failures; must be safe for sequential reuse.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  [[nodiscard]] virtual std::vector<std::vector<double>> embed(std::string_view model,
                                                               std::span<const std::string> inputs) = 0;
};

// OpenAI-compatible POST {endpoint}/embeddings.
class OpenAIEmbeddingClient final : public EmbeddingProvider {
 public:
  OpenAIEmbeddingClient(std::string endpoint, std::string api_key,
                        std::chrono::seconds timeout = std::chrono::seconds(120));
  [[nodiscard]] std::vector<std::vector<double>> embed(std::string_view model,
                                                       std::span<const std::string> inputs) override;

  [[nodiscard]] static std::string request_body(std::string_view model,
                                                std::span<const std::string> inputs);
  // data[].embedding ordered by data[].index.
  [[nodiscard]] static std::vector<std::vector<double>> parse_reply(std::string_view body,
                                                                    std::size_t expected);

 private:
  net::EndpointUrl endpoint_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

struct EmbedConfig {
  std::string model;
  core::Condition condition = core::Condition::Temporal;
  core::StimulusTemplate stimulus;
  std::size_t batch_size = 64;
  net::RetryPolicy retry;
  std::filesystem::path cache_path;  // empty: in-memory only
};

struct EmbedStats {
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t transport_failures = 0;
};

// Embeds the rendered stimulus of every year. Each vector is cached as soon
// as its batch returns, so an interrupted run resumes from the cache. A
// batch that still fails after the retries raises TransportError.
[[nodiscard]] EmbeddingSet embed_collect(EmbeddingProvider& provider, const EmbedConfig& config,
                                         const core::YearRange& range, EmbedStats* stats = nullptr);

// EMBDUMP interchange: one layer per embedding set, rows = years.
void write_embedding_dump(const std::filesystem::path& path, const EmbeddingSet& e);
[[nodiscard]] EmbeddingSet read_embedding_dump(const std::filesystem::path& path,
                                               std::optional<int> layer = std::nullopt);

struct MdsOptions {
  std::size_t k = 2;
  double tol = 1e-6;
  std::size_t max_iter = 300;
};

struct MdsResult {
  Eigen::MatrixXd coordinates;  // n x k
  double stress = 0.0;          // Kruskal stress-1 over i < j
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> stress_history;  // stress of the start, then after each update
  bool monotone = true;                // no increase beyond rounding in stress_history
};

// Throws DomainError unless D is square, symmetric, nonnegative, finite and
// has a zero diagonal.
void check_dissimilarity(const Eigen::MatrixXd& d);

// Double-centred squared distances, top-k eigenvectors scaled by sqrt(lambda).
[[nodiscard]] Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& d, std::size_t k);

// sqrt(sum (d_ij - |y_i - y_j|)^2 / sum d_ij^2) over i < j; 0 when D is all zero.
[[nodiscard]] double kruskal_stress(const Eigen::MatrixXd& d, const Eigen::MatrixXd& y);

// Guttman-transform iterations from the given start.
[[nodiscard]] MdsResult smacof(const Eigen::MatrixXd& d, Eigen::MatrixXd start, const MdsOptions& options);

// SMACOF from the classical-MDS start.
[[nodiscard]] MdsResult mds_embed(const Eigen::MatrixXd& d, const MdsOptions& options = {});

// Regresses d = 1 - cos onto each metric; undefined cells are excluded.
[[nodiscard]] analysis::MetricComparison semantic_regression(
    const SemanticMatrix& s, const core::PairSet& pairs, std::span<const core::TheoreticalMetric> metrics);

}  // namespace tempcog::embeddings
