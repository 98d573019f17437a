#include "xshot/scoring.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "xshot/jsonl.hpp"
#include "xshot/rng.hpp"

namespace xshot {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

std::string hex128(const std::string& payload) {
  // Two FNV-1a streams with distinct bases; plenty for content addressing here.
  const std::uint64_t a = fnv1a64(payload);
  const std::uint64_t b = fnv1a64(payload, 0x84222325cbf29ce4ull);
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

}  // namespace

void BackendConfig::validate_for_scoring() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_concurrency < 1) throw ValidationError("max_concurrency must be >= 1");
  if (retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be >= 1");
  if (kind == "http" && endpoint.empty())
    throw ValidationError("http backend needs an endpoint (flag or XSHOT_BACKEND_URL)");
  if (kind == "score-file" && score_path.empty())
    throw ValidationError("score-file backend needs a score path");
  if (kind == "oracle-mock" && gold_map_path.empty())
    throw ValidationError("oracle-mock backend needs a gold-map path");
}

BackendConfig BackendConfig::parse(const std::string& arg) {
  BackendConfig cfg;
  if (arg.rfind("http://", 0) == 0 || arg.rfind("https://", 0) == 0) {
    cfg.kind = "http";
    cfg.endpoint = arg;
  } else if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json") {
    if (!std::filesystem::exists(arg))
      throw ValidationError("backend config file not found: " + arg);
    json j;
    try {
      j = json::parse(read_file(arg));
    } catch (const json::exception& e) {
      throw ValidationError(arg + ": " + e.what());
    }
    cfg.kind = j.value("kind", "http");
    cfg.endpoint = j.value("endpoint", "");
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_concurrency = j.value("max_concurrency", cfg.max_concurrency);
    cfg.retry.max_attempts = j.value("max_attempts", cfg.retry.max_attempts);
    cfg.retry.base_backoff = std::chrono::milliseconds(
        j.value("base_backoff_ms", static_cast<int>(cfg.retry.base_backoff.count())));
    cfg.timeout =
        std::chrono::milliseconds(j.value("timeout_ms", static_cast<int>(cfg.timeout.count())));
    cfg.score_path = j.value("score_path", "");
    cfg.gold_map_path = j.value("gold_map_path", "");
    cfg.salt = j.value("salt", std::uint64_t{0});
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.cache_dir = j.value("cache_dir", "");
    cfg.auth_header = j.value("auth_header", "");
    cfg.auth_token = j.value("auth_token", "");
  } else {
    const auto colon = arg.find(':');
    cfg.kind = arg.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : arg.substr(colon + 1);
    if (cfg.kind == "score-file")
      cfg.score_path = rest;
    else if (cfg.kind == "oracle-mock")
      cfg.gold_map_path = rest;
    else if (cfg.kind == "hash-mock")
      cfg.salt = rest.empty() ? 0 : std::stoull(rest);
    else if (cfg.kind == "http")
      cfg.endpoint = rest;
    else if (cfg.kind != "echo-mock" && cfg.kind != "fail-mock")
      throw ValidationError("unknown backend \"" + arg + "\"");
  }
  if (cfg.endpoint.empty()) cfg.endpoint = env_or("XSHOT_BACKEND_URL", "");
  if (cfg.auth_header.empty()) cfg.auth_header = env_or("XSHOT_AUTH_HEADER", "");
  if (cfg.auth_token.empty()) cfg.auth_token = env_or("XSHOT_AUTH_TOKEN", "");
  return cfg;
}

double hash_mock_score(const std::string& triplet_id, std::uint64_t salt) {
  const std::uint64_t h = splitmix64(fnv1a64(triplet_id) + salt);
  return static_cast<double>(h) * 0x1p-64;
}

// ---------------------------------------------------------------------------
// HTTP plumbing

namespace {

std::unique_ptr<httplib::Client> make_client(const BackendConfig& cfg) {
  auto cli = std::make_unique<httplib::Client>(cfg.endpoint);
  cli->set_connection_timeout(cfg.timeout);
  cli->set_read_timeout(cfg.timeout);
  cli->set_write_timeout(cfg.timeout);
  if (!cfg.auth_header.empty())
    cli->set_default_headers({{cfg.auth_header, cfg.auth_token}});
  return cli;
}

// Transport-level retry with exponential backoff. Malformed 200 responses are
// backend bugs, not transients, and fail immediately at the caller.
std::string http_post_retry(const BackendConfig& cfg, const std::string& path,
                            const std::string& body) {
  std::string last_error;
  for (int attempt = 1; attempt <= cfg.retry.max_attempts; ++attempt) {
    auto cli = make_client(cfg);
    auto res = cli->Post(path, body, "application/json");
    if (res && res->status == 200) return res->body;
    last_error = res ? "HTTP " + std::to_string(res->status)
                     : "transport error (" + httplib::to_string(res.error()) + ")";
    if (attempt < cfg.retry.max_attempts)
      std::this_thread::sleep_for(cfg.retry.base_backoff * (1 << (attempt - 1)));
  }
  throw BackendError("POST " + path + " failed after " +
                     std::to_string(cfg.retry.max_attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Score backends

class HttpScorer final : public ScoreBackend {
 public:
  explicit HttpScorer(BackendConfig cfg) : cfg_(std::move(cfg)) {}

  std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) override {
    if (triplets.empty()) return {};
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    const std::size_t n_batches = (triplets.size() + bs - 1) / bs;

    std::vector<std::unordered_map<std::string, double>> batch_scores(n_batches);
    std::vector<bool> batch_done(n_batches, false);
    std::vector<std::string> batch_errors(n_batches);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto run_batch = [&](std::size_t b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(triplets.size(), lo + bs);
      json items = json::array();
      for (std::size_t i = lo; i < hi; ++i)
        items.push_back({{"id", triplets[i].triplet_id},
                         {"instruction", triplets[i].instruction},
                         {"input", triplets[i].input},
                         {"label", triplets[i].label}});
      const std::string body = json{{"items", items}}.dump();
      const std::string response = http_post_retry(cfg_, "/v1/score", body);
      json parsed = json::parse(response);
      std::unordered_map<std::string, double> got;
      for (const auto& row : parsed.at("scores")) {
        const double p = row.at("p_yes").get<double>();
        if (!(p >= 0.0 && p <= 1.0)) throw BackendError("backend returned p_yes outside [0,1]");
        got[row.at("id").get<std::string>()] = p;
      }
      for (std::size_t i = lo; i < hi; ++i)
        if (got.count(triplets[i].triplet_id) == 0)
          throw BackendError("backend response missing id " + triplets[i].triplet_id);
      batch_scores[b] = std::move(got);
      batch_done[b] = true;
    };

    auto worker = [&] {
      for (;;) {
        const std::size_t b = next.fetch_add(1);
        if (b >= n_batches || abort.load()) return;
        try {
          run_batch(b);
        } catch (const std::exception& e) {
          batch_errors[b] = e.what();
          abort.store(true);
        }
      }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(cfg_.max_concurrency), n_batches);
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }

    if (abort.load()) {
      std::string first_error;
      std::string unfetched;
      for (std::size_t b = 0; b < n_batches; ++b) {
        if (batch_done[b]) continue;
        if (first_error.empty() && !batch_errors[b].empty()) first_error = batch_errors[b];
        const std::size_t lo = b * bs;
        const std::size_t hi = std::min(triplets.size(), lo + bs);
        for (std::size_t i = lo; i < hi; ++i) unfetched += "\n  " + triplets[i].triplet_id;
      }
      throw BackendError("scoring aborted: " + first_error + "\nunfetched triplet ids:" + unfetched);
    }

    // input order regardless of completion order
    std::vector<ScoreRecord> out;
    out.reserve(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i)
      out.push_back({triplets[i].triplet_id, batch_scores[i / bs].at(triplets[i].triplet_id)});
    return out;
  }

  std::string identity() const override { return "http:" + cfg_.endpoint; }

 private:
  BackendConfig cfg_;
};

class ScoreFileScorer final : public ScoreBackend {
 public:
  explicit ScoreFileScorer(const std::filesystem::path& path) {
    for (const auto& rec : read_scores(path)) {
      if (!scores_.emplace(rec.triplet_id, rec.p_yes).second)
        throw ValidationError(path.string() + ": duplicate triplet_id \"" + rec.triplet_id + "\"");
    }
    id_ = "score-file:" + hex128(read_file(path));
  }

  std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) override {
    std::vector<ScoreRecord> out;
    std::string missing;
    for (const auto& t : triplets) {
      auto it = scores_.find(t.triplet_id);
      if (it == scores_.end()) {
        missing += "\n  " + t.triplet_id;
        continue;
      }
      out.push_back({t.triplet_id, it->second});
    }
    if (!missing.empty()) throw BackendError("score file missing triplet ids:" + missing);
    return out;
  }

  std::string identity() const override { return id_; }

 private:
  std::unordered_map<std::string, double> scores_;
  std::string id_;
};

class OracleMockScorer final : public ScoreBackend {
 public:
  explicit OracleMockScorer(const std::filesystem::path& gold_map_path) {
    for (const auto& inst : read_instances(gold_map_path))
      if (inst.gold_label) gold_[inst.id] = *inst.gold_label;
    id_ = "oracle-mock:" + hex128(read_file(gold_map_path));
  }

  std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) override {
    std::vector<ScoreRecord> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
      auto it = gold_.find(t.instance_id);
      const bool is_gold = it != gold_.end() && it->second == t.label;
      out.push_back({t.triplet_id, is_gold ? 0.9 : 0.1});
    }
    return out;
  }

  std::string identity() const override { return id_; }

 private:
  std::unordered_map<std::string, std::string> gold_;
  std::string id_;
};

class HashMockScorer final : public ScoreBackend {
 public:
  explicit HashMockScorer(std::uint64_t salt) : salt_(salt) {}

  std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) override {
    std::vector<ScoreRecord> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) out.push_back({t.triplet_id, hash_mock_score(t.triplet_id, salt_)});
    return out;
  }

  std::string identity() const override { return "hash-mock:salt=" + std::to_string(salt_); }

 private:
  std::uint64_t salt_;
};

// ---------------------------------------------------------------------------
// Completion backends

class HttpCompletion final : public CompletionBackend {
 public:
  explicit HttpCompletion(BackendConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const std::string& prompt, const CompletionParams& params) override {
    const json body = {{"prompt", prompt},
                       {"max_tokens", params.max_tokens},
                       {"temperature", params.temperature}};
    const std::string response = http_post_retry(cfg_, "/v1/complete", body.dump());
    return json::parse(response).at("text").get<std::string>();
  }

 private:
  BackendConfig cfg_;
};

// Fills the fields announced by the prompt's first demo block with fixed
// strings, keeping any line already present in the final block. Enough to
// exercise the weak-generation loop without a live model.
class EchoMockCompletion final : public CompletionBackend {
 public:
  std::string complete(const std::string& prompt, const CompletionParams&) override {
    const auto blocks = split_blocks(prompt);
    if (blocks.empty()) return "";
    if (blocks.size() == 1) return blocks.back();

    std::vector<std::string> field_order;
    for (const auto& line : split_lines(blocks.front())) {
      auto colon = line.find(':');
      if (colon != std::string::npos) field_order.push_back(line.substr(0, colon));
    }
    std::unordered_map<std::string, std::string> last_block;
    for (const auto& line : split_lines(blocks.back())) {
      auto colon = line.find(':');
      if (colon != std::string::npos) last_block[line.substr(0, colon)] = line;
    }
    std::string out;
    for (const auto& field : field_order) {
      if (!out.empty()) out += '\n';
      auto it = last_block.find(field);
      out += it != last_block.end() ? it->second : field + ": sample " + field;
    }
    return out;
  }

 private:
  static std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
      auto nl = s.find('\n', start);
      if (nl == std::string::npos) {
        lines.push_back(s.substr(start));
        break;
      }
      lines.push_back(s.substr(start, nl - start));
      start = nl + 1;
    }
    return lines;
  }

  static std::vector<std::string> split_blocks(const std::string& s) {
    std::vector<std::string> blocks;
    std::string current;
    for (const auto& line : split_lines(s)) {
      if (line.empty()) {
        if (!current.empty()) blocks.push_back(current);
        current.clear();
      } else {
        if (!current.empty()) current += '\n';
        current += line;
      }
    }
    if (!current.empty()) blocks.push_back(current);
    return blocks;
  }
};

class FailMockCompletion final : public CompletionBackend {
 public:
  std::string complete(const std::string&, const CompletionParams&) override {
    return "no usable fields here";
  }
};

// ---------------------------------------------------------------------------
// Embedding backends

class HttpEmbedding final : public EmbeddingBackend {
 public:
  explicit HttpEmbedding(BackendConfig cfg) : cfg_(std::move(cfg)) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    const json body = {{"texts", texts}};
    const std::string response = http_post_retry(cfg_, "/v1/embed", body.dump());
    auto vectors = json::parse(response).at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size())
      throw BackendError("embedding backend returned " + std::to_string(vectors.size()) +
                         " vectors for " + std::to_string(texts.size()) + " texts");
    return vectors;
  }

 private:
  BackendConfig cfg_;
};

// Hashed bag-of-words; identical texts always embed identically.
class HashMockEmbedding final : public EmbeddingBackend {
 public:
  explicit HashMockEmbedding(int dim) : dim_(dim < 1 ? 64 : dim) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
      std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
      std::string token;
      auto flush = [&] {
        if (token.empty()) return;
        v[fnv1a64(token) % static_cast<std::uint64_t>(dim_)] += 1.0;
        token.clear();
      };
      for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
          flush();
        else
          token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      flush();
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  int dim_;
};

std::mutex g_cache_mutex;

}  // namespace

std::unique_ptr<ScoreBackend> make_score_backend(const BackendConfig& cfg) {
  cfg.validate_for_scoring();
  if (cfg.kind == "http") return std::make_unique<HttpScorer>(cfg);
  if (cfg.kind == "score-file") return std::make_unique<ScoreFileScorer>(cfg.score_path);
  if (cfg.kind == "oracle-mock") return std::make_unique<OracleMockScorer>(cfg.gold_map_path);
  if (cfg.kind == "hash-mock") return std::make_unique<HashMockScorer>(cfg.salt);
  throw ValidationError("backend kind \"" + cfg.kind + "\" cannot score triplets");
}

std::unique_ptr<CompletionBackend> make_completion_backend(const BackendConfig& cfg) {
  if (cfg.kind == "http") {
    if (cfg.endpoint.empty()) throw ValidationError("http completion backend needs an endpoint");
    return std::make_unique<HttpCompletion>(cfg);
  }
  if (cfg.kind == "echo-mock") return std::make_unique<EchoMockCompletion>();
  if (cfg.kind == "fail-mock") return std::make_unique<FailMockCompletion>();
  throw ValidationError("backend kind \"" + cfg.kind + "\" cannot complete text");
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const BackendConfig& cfg) {
  if (cfg.kind == "http") {
    if (cfg.endpoint.empty()) throw ValidationError("http embedding backend needs an endpoint");
    return std::make_unique<HttpEmbedding>(cfg);
  }
  if (cfg.kind == "hash-mock") return std::make_unique<HashMockEmbedding>(cfg.embed_dim);
  throw ValidationError("backend kind \"" + cfg.kind + "\" cannot embed texts");
}

std::vector<ScoreRecord> score_triplets(const std::vector<TripletExample>& triplets,
                                        const BackendConfig& cfg) {
  auto backend = make_score_backend(cfg);
  return score_with_cache(triplets, *backend, cfg.cache_dir);
}

namespace {

std::string cache_key(const std::string& identity, const TripletExample& t) {
  std::string payload = identity;
  payload += '\x1f';
  payload += t.triplet_id;
  payload += '\x1f';
  payload += t.instruction;
  payload += '\x1f';
  payload += t.input;
  payload += '\x1f';
  payload += t.label;
  return hex128(payload);
}

}  // namespace

std::vector<ScoreRecord> score_with_cache(const std::vector<TripletExample>& triplets,
                                          ScoreBackend& backend,
                                          const std::filesystem::path& cache_dir) {
  std::set<std::string> ids;
  for (const auto& t : triplets)
    if (!ids.insert(t.triplet_id).second)
      throw ValidationError("duplicate triplet_id \"" + t.triplet_id + "\"");

  if (cache_dir.empty()) return backend.score(triplets);

  const auto cache_path = cache_dir / "scores_cache.jsonl";
  std::unordered_map<std::string, double> cached;
  if (std::filesystem::exists(cache_path)) {
    for (const auto& row : read_jsonl(cache_path))
      cached[row.at("key").get<std::string>()] = row.at("p_yes").get<double>();
  }

  const std::string identity = backend.identity();
  std::vector<TripletExample> misses;
  for (const auto& t : triplets)
    if (cached.count(cache_key(identity, t)) == 0) misses.push_back(t);

  if (!misses.empty()) {
    auto fetched = backend.score(misses);
    std::string appended;
    for (std::size_t i = 0; i < misses.size(); ++i) {
      const std::string key = cache_key(identity, misses[i]);
      cached[key] = fetched[i].p_yes;
      appended += json{{"key", key}, {"p_yes", fetched[i].p_yes}}.dump() + "\n";
    }
    std::lock_guard<std::mutex> lock(g_cache_mutex);
    std::filesystem::create_directories(cache_dir);
    std::ofstream out(cache_path, std::ios::binary | std::ios::app);
    if (!out) throw ValidationError("cannot write " + cache_path.string());
    out << appended;
  }

  std::vector<ScoreRecord> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) out.push_back({t.triplet_id, cached.at(cache_key(identity, t))});
  return out;
}

std::string complete_text(const std::string& prompt, const CompletionParams& params,
                          const BackendConfig& cfg) {
  if (prompt.empty()) throw ValidationError("empty prompt rejected before dispatch");
  auto backend = make_completion_backend(cfg);
  return backend->complete(prompt, params);
}

std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts,
                                             const BackendConfig& cfg) {
  if (texts.empty()) throw ValidationError("embed_texts requires a non-empty list");
  auto backend = make_embedding_backend(cfg);
  auto vectors = backend->embed(texts);
  for (const auto& v : vectors)
    if (v.size() != vectors.front().size())
      throw BackendError("embedding backend returned inconsistent dimensions");
  return vectors;
}

}  // namespace xshot
