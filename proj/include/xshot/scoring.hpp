#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "xshot/types.hpp"

namespace xshot {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{200};  // doubles per attempt
};

// One config covers the three backend roles (score / complete / embed);
// which fields matter depends on kind.
struct BackendConfig {
  std::string kind;  // http | score-file | oracle-mock | hash-mock | echo-mock | fail-mock
  std::string endpoint;  // http only, scheme://host:port
  int batch_size = 16;
  int max_concurrency = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{30000};
  std::string score_path;     // score-file kind
  std::string gold_map_path;  // oracle-mock kind: instance JSONL with gold labels
  std::uint64_t salt = 0;     // hash-mock kind
  int embed_dim = 64;         // hash-mock embeddings
  std::string cache_dir;      // non-empty enables the on-disk score cache
  std::string auth_header;
  std::string auth_token;

  void validate_for_scoring() const;

  // Accepts a JSON config file path, a bare URL, or "kind[:arg]" shorthand
  // (e.g. "oracle-mock:gold.jsonl", "score-file:scores.jsonl", "hash-mock").
  // Unset endpoint/auth fall back to XSHOT_BACKEND_URL, XSHOT_AUTH_HEADER and
  // XSHOT_AUTH_TOKEN.
  static BackendConfig parse(const std::string& arg);
};

class ScoreBackend {
 public:
  virtual ~ScoreBackend() = default;
  // One record per input triplet, in input order.
  virtual std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) = 0;
  virtual std::string identity() const = 0;  // stable cache-key component
};

struct CompletionParams {
  int max_tokens = 256;
  double temperature = 0.0;
};

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual std::string complete(const std::string& prompt, const CompletionParams& params) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // One vector per text, all of equal dimension.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

std::unique_ptr<ScoreBackend> make_score_backend(const BackendConfig& cfg);
std::unique_ptr<CompletionBackend> make_completion_backend(const BackendConfig& cfg);
std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& cfg);

// Backend call plus the optional disk cache. Cache entries are keyed by
// backend identity and triplet content, so stale scores can never leak across
// datasets or backends.
std::vector<ScoreRecord> score_triplets(const std::vector<TripletExample>& triplets,
                                        const BackendConfig& cfg);
std::vector<ScoreRecord> score_with_cache(const std::vector<TripletExample>& triplets,
                                          ScoreBackend& backend,
                                          const std::filesystem::path& cache_dir);

std::string complete_text(const std::string& prompt, const CompletionParams& params,
                          const BackendConfig& cfg);

std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts,
                                             const BackendConfig& cfg);

// p_yes used by the hash-mock scorer: stable across runs and platforms.
double hash_mock_score(const std::string& triplet_id, std::uint64_t salt);

}  // namespace xshot
