#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "testutil.hpp"
#include "xshot/jsonl.hpp"
#include "xshot/scoring.hpp"

using namespace xshot;
using namespace xshot::testutil;

namespace {

std::vector<TripletExample> make_triplets(int n, const std::string& prefix = "inst") {
  std::vector<TripletExample> out;
  for (int i = 0; i < n; ++i) {
    TripletExample t;
    t.instance_id = prefix + std::to_string(i / 4);
    t.label = "label" + std::to_string(i % 4);
    t.triplet_id = make_triplet_id(t.instance_id, t.label);
    t.instruction = "Decide.";
    t.input = "Sentence: row " + std::to_string(i) + "\nRelation: " + t.label;
    t.group = FrequencyGroup::few;
    out.push_back(std::move(t));
  }
  return out;
}

// In-process scoring server; p_yes deterministic from the id, optionally
// shuffling each response batch and optionally failing the first attempts.
class MockScoreServer {
 public:
  explicit MockScoreServer(bool shuffle = false, int fail_first = 0)
      : shuffle_(shuffle), fail_first_(fail_first) {
    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (fail_remaining_ > 0) {
        --fail_remaining_;
        res.status = 503;
        return;
      }
      auto body = json::parse(req.body);
      std::vector<json> scores;
      for (const auto& item : body.at("items")) {
        const std::string id = item.at("id").get<std::string>();
        scores.push_back({{"id", id}, {"p_yes", hash_mock_score(id, 12345)}});
      }
      if (shuffle_) {
        Rng rng(fnv1a64(req.body));
        rng.shuffle(scores);
      }
      res.set_content(json{{"scores", scores}}.dump(), "application/json");
    });
    server_.Post("/v1/complete", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      auto body = json::parse(req.body);
      const std::string prompt = body.at("prompt").get<std::string>();
      res.set_content(json{{"text", "completion for: " + prompt}}.dump(), "application/json");
    });
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      auto body = json::parse(req.body);
      std::vector<std::vector<double>> vectors;
      const bool ragged = ragged_.load();
      for (const auto& text : body.at("texts"))
        vectors.push_back({static_cast<double>(text.get<std::string>().size()), 1.0});
      if (ragged && !vectors.empty()) vectors.back().push_back(2.0);
      res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    });
    fail_remaining_ = fail_first_;
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockScoreServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  void make_ragged() { ragged_.store(true); }

  std::atomic<int> requests{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  bool shuffle_;
  int fail_first_;
  std::atomic<int> fail_remaining_{0};
  std::atomic<bool> ragged_{false};
};

BackendConfig http_cfg(const MockScoreServer& server, int batch_size = 4, int concurrency = 2) {
  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = server.endpoint();
  cfg.batch_size = batch_size;
  cfg.max_concurrency = concurrency;
  cfg.retry.max_attempts = 3;
  cfg.retry.base_backoff = std::chrono::milliseconds(5);
  cfg.timeout = std::chrono::milliseconds(2000);
  return cfg;
}

class CountingScorer final : public ScoreBackend {
 public:
  explicit CountingScorer(std::uint64_t salt) : salt_(salt) {}
  std::vector<ScoreRecord> score(const std::vector<TripletExample>& triplets) override {
    scored += static_cast<int>(triplets.size());
    std::vector<ScoreRecord> out;
    for (const auto& t : triplets) out.push_back({t.triplet_id, hash_mock_score(t.triplet_id, salt_)});
    return out;
  }
  std::string identity() const override { return "counting:" + std::to_string(salt_); }
  int scored = 0;

 private:
  std::uint64_t salt_;
};

}  // namespace

TEST_CASE("backend config parsing") {
  CHECK(BackendConfig::parse("hash-mock").kind == "hash-mock");
  CHECK(BackendConfig::parse("hash-mock:99").salt == 99);
  CHECK(BackendConfig::parse("score-file:x.jsonl").score_path == "x.jsonl");
  CHECK(BackendConfig::parse("oracle-mock:gold.jsonl").gold_map_path == "gold.jsonl");
  auto http = BackendConfig::parse("http://localhost:9999");
  CHECK(http.kind == "http");
  CHECK(http.endpoint == "http://localhost:9999");
  CHECK_THROWS_AS(BackendConfig::parse("quantum-mock"), ValidationError);

  TempDir dir("cfg");
  write_file(dir / "backend.json", R"({
    "kind": "hash-mock", "salt": 7, "batch_size": 3, "max_attempts": 5
  })");
  auto from_file = BackendConfig::parse((dir / "backend.json").string());
  CHECK(from_file.kind == "hash-mock");
  CHECK(from_file.salt == 7);
  CHECK(from_file.batch_size == 3);
  CHECK(from_file.retry.max_attempts == 5);
}

TEST_CASE("environment variables supply endpoint and auth") {
  setenv("XSHOT_BACKEND_URL", "http://envhost:1234", 1);
  setenv("XSHOT_AUTH_HEADER", "Authorization", 1);
  setenv("XSHOT_AUTH_TOKEN", "Bearer tok", 1);
  auto cfg = BackendConfig::parse("http");
  CHECK(cfg.endpoint == "http://envhost:1234");
  CHECK(cfg.auth_header == "Authorization");
  CHECK(cfg.auth_token == "Bearer tok");

  // explicit endpoint wins over the environment
  CHECK(BackendConfig::parse("http://other:1").endpoint == "http://other:1");
  unsetenv("XSHOT_BACKEND_URL");
  unsetenv("XSHOT_AUTH_HEADER");
  unsetenv("XSHOT_AUTH_TOKEN");
}

TEST_CASE("hash-mock scores are stable and match an independent oracle") {
  auto triplets = make_triplets(32);
  BackendConfig cfg = BackendConfig::parse("hash-mock:42");
  auto a = score_triplets(triplets, cfg);
  auto b = score_triplets(triplets, cfg);
  CHECK(a == b);

  // independent reimplementation of the documented formula
  auto oracle = [](const std::string& id, std::uint64_t salt) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : id) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h += salt;
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    h = h ^ (h >> 31);
    return static_cast<double>(h) / 18446744073709551616.0;
  };
  for (const auto& rec : a) {
    CHECK(rec.p_yes >= 0.0);
    CHECK(rec.p_yes < 1.0);
    CHECK(rec.p_yes == doctest::Approx(oracle(rec.triplet_id, 42)).epsilon(1e-15));
  }
}

TEST_CASE("oracle-mock scores gold triplets 0.9 and the rest 0.1") {
  TempDir dir("oracle");
  auto instances = make_corpus({"label0", "label1"}, 2);
  write_instances(dir / "gold.jsonl", instances);

  LabelSpace space = make_space({"label0", "label1", "label2"}, 1, 1);
  std::vector<TripletExample> triplets;
  for (const auto& inst : instances)
    for (const auto& label : space.labels) {
      TripletExample t;
      t.instance_id = inst.id;
      t.label = label;
      t.triplet_id = make_triplet_id(inst.id, label);
      triplets.push_back(t);
    }

  auto scores = score_triplets(triplets, BackendConfig::parse("oracle-mock:" +
                                                              (dir / "gold.jsonl").string()));
  REQUIRE(scores.size() == triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const bool gold = triplets[i].label == instances[i / 3].gold_label;
    CHECK(scores[i].p_yes == (gold ? 0.9 : 0.1));
  }
}

TEST_CASE("score-file backend errors on missing ids") {
  TempDir dir("scorefile");
  auto triplets = make_triplets(12);
  std::vector<ScoreRecord> partial;
  for (int i = 0; i < 10; ++i) partial.push_back({triplets[i].triplet_id, 0.5});
  write_scores(dir / "scores.jsonl", partial);

  BackendConfig cfg = BackendConfig::parse("score-file:" + (dir / "scores.jsonl").string());
  try {
    score_triplets(triplets, cfg);
    FAIL("expected missing-id error");
  } catch (const BackendError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(triplets[10].triplet_id) != std::string::npos);
    CHECK(msg.find(triplets[11].triplet_id) != std::string::npos);
  }

  auto full = partial;
  full.push_back({triplets[10].triplet_id, 0.25});
  full.push_back({triplets[11].triplet_id, 0.75});
  write_scores(dir / "full.jsonl", full);
  auto scores =
      score_triplets(triplets, BackendConfig::parse("score-file:" + (dir / "full.jsonl").string()));
  CHECK(scores.size() == 12);
  CHECK(scores[11].p_yes == 0.75);
}

TEST_CASE("duplicate triplet ids are rejected before scoring") {
  auto triplets = make_triplets(4);
  triplets.push_back(triplets[0]);
  CHECK_THROWS_AS(score_triplets(triplets, BackendConfig::parse("hash-mock")), ValidationError);
}

TEST_CASE("http scorer restores input order against a shuffling backend") {
  MockScoreServer server(/*shuffle=*/true);
  auto triplets = make_triplets(37);  // odd size: last batch is partial

  auto sequential = score_triplets(triplets, http_cfg(server, 4, 1));
  REQUIRE(sequential.size() == triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    CHECK(sequential[i].triplet_id == triplets[i].triplet_id);
    CHECK(sequential[i].p_yes == hash_mock_score(triplets[i].triplet_id, 12345));
  }

  auto concurrent = score_triplets(triplets, http_cfg(server, 4, 32));
  CHECK(concurrent == sequential);
}

TEST_CASE("http scorer retries transient failures with backoff") {
  MockScoreServer server(/*shuffle=*/false, /*fail_first=*/2);
  auto triplets = make_triplets(4);
  auto scores = score_triplets(triplets, http_cfg(server, 4, 1));  // 3 attempts allowed
  CHECK(scores.size() == 4);
  CHECK(server.requests == 3);  // 2 failures + 1 success
}

TEST_CASE("http scorer aborts after max attempts listing unfetched ids") {
  MockScoreServer server(/*shuffle=*/false, /*fail_first=*/50);
  auto triplets = make_triplets(8);
  auto cfg = http_cfg(server, 4, 1);
  cfg.retry.max_attempts = 2;
  try {
    score_triplets(triplets, cfg);
    FAIL("expected backend error");
  } catch (const BackendError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unfetched triplet ids") != std::string::npos);
    CHECK(msg.find(triplets[0].triplet_id) != std::string::npos);
  }
}

TEST_CASE("http completion and transport failure") {
  MockScoreServer server;
  BackendConfig cfg = http_cfg(server);
  CHECK(complete_text("hello", CompletionParams{}, cfg) == "completion for: hello");
  CHECK_THROWS_AS(complete_text("", CompletionParams{}, cfg), ValidationError);

  BackendConfig dead = cfg;
  dead.endpoint = "http://127.0.0.1:1";  // nothing listens there
  dead.retry.max_attempts = 2;
  dead.retry.base_backoff = std::chrono::milliseconds(1);
  dead.timeout = std::chrono::milliseconds(200);
  CHECK_THROWS_AS(complete_text("hello", CompletionParams{}, dead), BackendError);
}

TEST_CASE("echo-mock fills the fields announced by the first demo block") {
  auto cfg = BackendConfig::parse("echo-mock");
  const std::string prompt =
      "event type: Competition\nevent trigger: tournament\nsentence: The final stage.\n\n"
      "event type: Manufacturing";
  auto text = complete_text(prompt, CompletionParams{}, cfg);
  CHECK(text.find("event type: Manufacturing") != std::string::npos);
  CHECK(text.find("event trigger: sample event trigger") != std::string::npos);
  CHECK(text.find("sentence: sample sentence") != std::string::npos);
}

TEST_CASE("embeddings") {
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(embed_texts({}, BackendConfig::parse("hash-mock")), ValidationError);
  }

  SUBCASE("identical texts embed identically, mock kind") {
    auto v = embed_texts({"alpha beta", "alpha beta", "gamma"}, BackendConfig::parse("hash-mock"));
    REQUIRE(v.size() == 3);
    CHECK(v[0] == v[1]);
    CHECK(v[0] != v[2]);
    CHECK(v[0].size() == 64);
  }

  SUBCASE("757 definitions give 757 vectors of one dimension") {
    std::vector<std::string> texts;
    for (int i = 0; i < 757; ++i) texts.push_back("task definition " + std::to_string(i));
    auto v = embed_texts(texts, BackendConfig::parse("hash-mock"));
    CHECK(v.size() == 757);
    for (const auto& vec : v) CHECK(vec.size() == v.front().size());
  }

  SUBCASE("http embedding with dimension inconsistency fails") {
    MockScoreServer server;
    auto v = embed_texts({"aa", "bbb"}, http_cfg(server));
    REQUIRE(v.size() == 2);
    CHECK(v[0][0] == 2.0);
    CHECK(v[1][0] == 3.0);

    server.make_ragged();
    CHECK_THROWS_AS(embed_texts({"aa", "bbb"}, http_cfg(server)), BackendError);
  }
}

TEST_CASE("score cache avoids refetching and is content-addressed") {
  TempDir dir("cache");
  auto triplets = make_triplets(20);

  CountingScorer backend(1);
  auto first = score_with_cache(triplets, backend, dir.path());
  CHECK(backend.scored == 20);
  auto second = score_with_cache(triplets, backend, dir.path());
  CHECK(backend.scored == 20);  // all hits
  CHECK(second == first);
  CHECK(std::filesystem::exists(dir / "scores_cache.jsonl"));

  // same ids, different backend identity: no stale reuse
  CountingScorer other(2);
  auto refetched = score_with_cache(triplets, other, dir.path());
  CHECK(other.scored == 20);
  CHECK(refetched != first);

  // same id, different content: no stale reuse either
  auto changed = triplets;
  changed[0].input += " tweaked";
  score_with_cache(changed, backend, dir.path());
  CHECK(backend.scored == 21);
}

TEST_CASE("backend validation") {
  BackendConfig cfg;
  cfg.kind = "http";
  CHECK_THROWS_AS(make_score_backend(cfg), ValidationError);  // endpoint missing
  cfg.kind = "score-file";
  CHECK_THROWS_AS(make_score_backend(cfg), ValidationError);  // path missing
  cfg.kind = "hash-mock";
  cfg.batch_size = 0;
  CHECK_THROWS_AS(make_score_backend(cfg), ValidationError);
  cfg.batch_size = 1;
  CHECK_NOTHROW(make_score_backend(cfg));
  cfg.kind = "echo-mock";
  CHECK_THROWS_AS(make_score_backend(cfg), ValidationError);  // cannot score
}
