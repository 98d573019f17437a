#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "testutil.hpp"
#include "xshot/indirect.hpp"
#include "xshot/jsonl.hpp"

using namespace xshot;
using namespace xshot::testutil;

TEST_CASE("count_words splits on whitespace") {
  CHECK(count_words("") == 0);
  CHECK(count_words("one") == 1);
  CHECK(count_words("  two\twords \n") == 2);
  CHECK(count_words(words(17)) == 17);
}

TEST_CASE("sample_task_instances") {
  SUBCASE("cap above size returns everything") {
    auto task = make_task("t", 50, 50);
    auto sampled = sample_task_instances(task, 100, 7);
    CHECK(sampled.size() == 50);
    std::set<std::string> ids;
    for (const auto& inst : sampled) ids.insert(inst.id);
    CHECK(ids.size() == 50);
  }

  SUBCASE("large task capped at 100, reproducibly") {
    auto task = make_task("big", 5000, 5000);
    auto a = sample_task_instances(task, 100, 42);
    auto b = sample_task_instances(task, 100, 42);
    REQUIRE(a.size() == 100);
    CHECK(a == b);
    auto c = sample_task_instances(task, 100, 43);
    CHECK(a != c);
  }

  SUBCASE("cap 1 yields a singleton") {
    CHECK(sample_task_instances(make_task("t", 9, 9), 1, 3).size() == 1);
  }

  SUBCASE("cap below 1 is rejected") {
    CHECK_THROWS_AS(sample_task_instances(make_task("t", 3, 3), 0, 1), ValidationError);
  }
}

TEST_CASE("build_prefix respects the word limit greedily") {
  // definition 20 words; each rendered demo is exactly 30 words:
  // "Input:" + 14 + "Output:" + 14 = 30 tokens
  TaskRecord task;
  task.task_id = "t";
  task.definition = words(20, "def");
  task.positive_demos = {{words(14, "ain"), words(14, "aout")},
                         {words(14, "bin"), words(14, "bout")}};

  SUBCASE("max 100 keeps both demos (80 words total)") {
    auto prefix = build_prefix(task, 100);
    CHECK_FALSE(prefix.truncated);
    CHECK(count_words(prefix.text) == 80);
    CHECK(prefix.text.find("Input: ain0") != std::string::npos);
    CHECK(prefix.text.find("Input: bin0") != std::string::npos);
  }

  SUBCASE("max 60 keeps the definition and first demo only") {
    auto prefix = build_prefix(task, 60);
    CHECK(count_words(prefix.text) == 50);
    CHECK(prefix.text.find("ain0") != std::string::npos);
    CHECK(prefix.text.find("bin0") == std::string::npos);
  }

  SUBCASE("max 10 truncates the definition and flags it") {
    auto prefix = build_prefix(task, 10);
    CHECK(prefix.truncated);
    CHECK(count_words(prefix.text) == 10);
    CHECK(prefix.text == words(10, "def"));
  }

  SUBCASE("demo rendering format") {
    auto prefix = build_prefix(make_task("t", 0, 1), 1000);
    CHECK(prefix.text ==
          "Answer the question.\nInput: demo input one\nOutput: demo output one\n"
          "Input: demo input two\nOutput: demo output two");
  }
}

TEST_CASE("sample_negative_answer draws from other instances' golds") {
  SUBCASE("binary task leaves exactly one choice") {
    TaskRecord task;
    task.task_id = "bin";
    task.instances = {{"i0", "in0", {"Yes"}}, {"i1", "in1", {"No"}}, {"i2", "in2", {"Yes"}}};
    auto neg = sample_negative_answer(task, task.instances[0], 5);
    REQUIRE(neg.has_value());
    CHECK(*neg == "No");
  }

  SUBCASE("single-answer task skips") {
    auto task = make_task("mono", 10, 1);  // every gold is "answer0"
    CHECK_FALSE(sample_negative_answer(task, task.instances[0], 5).has_value());
  }

  SUBCASE("instance's own golds are excluded even when multi-valued") {
    TaskRecord task;
    task.task_id = "multi";
    task.instances = {{"i0", "in0", {"a", "b"}}, {"i1", "in1", {"b"}}, {"i2", "in2", {"c"}}};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto neg = sample_negative_answer(task, task.instances[0], seed);
      REQUIRE(neg.has_value());
      CHECK(*neg == "c");  // "a" and "b" are this instance's golds
    }
  }

  SUBCASE("1000 draws on a 3-answer pool stay within 3 sigma of uniform") {
    TaskRecord task = make_task("tri", 30, 3);  // golds cycle answer0..answer2
    TaskInstance probe{"probe", "input", {"other"}};
    task.instances.push_back(probe);
    std::map<std::string, int> counts;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      auto neg = sample_negative_answer(task, probe, seed);
      REQUIRE(neg.has_value());
      ++counts[*neg];
    }
    CHECK(counts.size() == 3);
    // sigma = sqrt(1000 * (1/3) * (2/3)) ~= 14.9; 3 sigma ~= 45
    for (const auto& [answer, count] : counts) {
      CAPTURE(answer);
      CHECK(count > 333 - 45);
      CHECK(count < 333 + 45);
    }
  }
}

TEST_CASE("build_indirect_dataset balances yes and no pairs") {
  SUBCASE("757 small tasks stay within the cap bound") {
    std::vector<TaskRecord> tasks;
    for (int i = 0; i < 757; ++i) tasks.push_back(make_task("task" + std::to_string(i), 3, 3));
    auto ds = build_indirect_dataset(tasks, 100, 512, 11);
    CHECK(ds.pairs.size() <= 2u * 757u * 100u);  // <= 151,400
    int yes = 0, no = 0;
    for (const auto& p : ds.pairs) (p.polarity == Polarity::yes ? yes : no)++;
    CHECK(yes == no);
  }

  SUBCASE("task with 10 distinct answers emits 20 pairs") {
    auto ds = build_indirect_dataset({make_task("t", 10, 10)}, 100, 512, 3);
    CHECK(ds.pairs.size() == 20);
  }

  SUBCASE("single-answer task contributes nothing") {
    auto ds = build_indirect_dataset({make_task("mono", 10, 1)}, 100, 512, 3);
    CHECK(ds.pairs.empty());
  }

  SUBCASE("negatives never collide with the instance's golds") {
    std::vector<TaskRecord> tasks;
    for (int i = 0; i < 20; ++i) tasks.push_back(make_task("t" + std::to_string(i), 12, 4));
    auto ds = build_indirect_dataset(tasks, 100, 512, 17);
    std::map<std::string, const TaskRecord*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;
    for (const auto& p : ds.pairs) {
      if (p.polarity != Polarity::no) continue;
      const TaskRecord& task = *by_id.at(p.task_id);
      const std::string inst_id = p.pair_id.substr(p.task_id.size() + 2,
                                                   p.pair_id.size() - p.task_id.size() - 2 - 4);
      auto inst = std::find_if(task.instances.begin(), task.instances.end(),
                               [&](const TaskInstance& i) { return i.id == inst_id; });
      REQUIRE(inst != task.instances.end());
      for (const auto& gold : inst->outputs) CHECK(p.candidate != gold);
    }
  }

  SUBCASE("deterministic under a fixed seed") {
    std::vector<TaskRecord> tasks = {make_task("a", 30, 5), make_task("b", 8, 8)};
    auto x = build_indirect_dataset(tasks, 5, 64, 7);
    auto y = build_indirect_dataset(tasks, 5, 64, 7);
    CHECK(x.pairs == y.pairs);
    auto z = build_indirect_dataset(tasks, 5, 64, 8);
    CHECK(x.pairs != z.pairs);
  }

  SUBCASE("truncated definitions are reported once per task") {
    TaskRecord longdef = make_task("long", 4, 4, words(600, "d"));
    auto ds = build_indirect_dataset({longdef}, 10, 512, 1);
    REQUIRE(ds.warnings.size() == 1);
    CHECK(ds.warnings[0].find("long") != std::string::npos);
  }
}

TEST_CASE("indirect pair JSONL round trip") {
  TempDir dir("pairs");
  auto ds = build_indirect_dataset({make_task("t", 6, 6)}, 4, 128, 2);
  write_indirect_pairs(dir / "p.jsonl", ds.pairs);
  CHECK(read_indirect_pairs(dir / "p.jsonl") == ds.pairs);
}

TEST_CASE("cosine similarity") {
  std::vector<double> a{1, 2, 3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.0));
  // 4 / (sqrt(5) * sqrt(5)) = 0.8
  CHECK(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 1}) ==
        doctest::Approx(0.8));
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
                  ValidationError);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                  ValidationError);
  CHECK_THROWS_AS(cosine_similarity(std::vector<double>{}, std::vector<double>{}),
                  ValidationError);
}

TEST_CASE("filter_similar_tasks") {
  std::vector<TaskRecord> tasks;
  for (int i = 0; i < 5; ++i) tasks.push_back(make_task("t" + std::to_string(i), 1, 1));
  const std::vector<double> target{1.0, 0.0};
  // cosines to target: 1.0, ~0.996, ~0.707, 0.0, ~-0.707
  std::vector<std::vector<double>> emb{{2.0, 0.0}, {10.0, 1.0}, {1.0, 1.0}, {0.0, 3.0}, {-1.0, 1.0}};

  SUBCASE("k = 0 keeps everything") {
    auto r = filter_similar_tasks(tasks, emb, target, 0);
    CHECK(r.kept.size() == 5);
    CHECK(r.removed_ids.empty());
  }

  SUBCASE("k = 2 removes the provably closest two") {
    auto r = filter_similar_tasks(tasks, emb, target, 2);
    CHECK(r.removed_ids == std::vector<std::string>{"t0", "t1"});
    REQUIRE(r.kept.size() == 3);
    CHECK(r.kept[0].task_id == "t2");
  }

  SUBCASE("ties break by ascending task id") {
    std::vector<std::vector<double>> tied{{1, 0}, {2, 0}, {3, 0}, {0, 1}, {0, 2}};
    auto r = filter_similar_tasks(tasks, tied, target, 2);
    CHECK(r.removed_ids == std::vector<std::string>{"t0", "t1"});  // all of t0..t2 tie at 1.0
  }

  SUBCASE("k >= n is rejected") {
    CHECK_THROWS_AS(filter_similar_tasks(tasks, emb, target, 5), ValidationError);
  }

  SUBCASE("default k removes ten") {
    std::vector<TaskRecord> many;
    std::vector<std::vector<double>> es;
    for (int i = 0; i < 757; ++i) {
      many.push_back(make_task("task" + std::to_string(i), 1, 1));
      es.push_back({1.0, static_cast<double>(i)});
    }
    auto r = filter_similar_tasks(many, es, target);
    CHECK(r.removed_ids.size() == 10);
    CHECK(r.kept.size() == 747);
  }
}

TEST_CASE("filter agrees with a brute-force selection oracle") {
  Rng rng(1357);
  for (int round = 0; round < 25; ++round) {
    const int n = 2 + static_cast<int>(rng.below(199));
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(n, 21))));
    const int dim = 2 + static_cast<int>(rng.below(6));
    std::vector<TaskRecord> tasks;
    std::vector<std::vector<double>> emb;
    for (int i = 0; i < n; ++i) {
      tasks.push_back(make_task("t" + std::to_string(i), 1, 1));
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.real01() * 2 - 1;
      if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
      emb.push_back(v);
    }
    std::vector<double> target(dim);
    for (auto& x : target) x = rng.real01() * 2 - 1;
    target[0] += 1.0;

    // oracle: repeatedly select the most similar of the remainder
    std::vector<double> sims;
    for (const auto& e : emb) sims.push_back(cosine_similarity(e, target));
    std::set<int> taken;
    std::vector<std::string> expected;
    for (int pick = 0; pick < k; ++pick) {
      int best = -1;
      for (int i = 0; i < n; ++i) {
        if (taken.count(i)) continue;
        if (best < 0 || sims[i] > sims[best] ||
            (sims[i] == sims[best] && tasks[i].task_id < tasks[best].task_id))
          best = i;
      }
      taken.insert(best);
      expected.push_back(tasks[best].task_id);
    }

    auto r = filter_similar_tasks(tasks, emb, target, k);
    CHECK(r.removed_ids == expected);
    CHECK(r.kept.size() == static_cast<std::size_t>(n - k));
  }
}

TEST_CASE("ablation schedules") {
  SUBCASE("vary-tasks reproduces 100..700 by 100") {
    auto s = build_ablation_schedule(ScheduleMode::vary_tasks, 757);
    CHECK_FALSE(s.warning.has_value());
    REQUIRE(s.points.size() == 7);
    for (int i = 0; i < 7; ++i) {
      CHECK(s.points[i].num_tasks == 100 * (i + 1));
      CHECK(s.points[i].instances_per_task == 100);
    }
    CHECK(s.points[6].total() == 70000);
  }

  SUBCASE("vary-instances divides the budget over 757 tasks") {
    auto s = build_ablation_schedule(ScheduleMode::vary_instances, 757);
    REQUIRE(s.points.size() == 7);
    const std::vector<int> expected{13, 26, 40, 53, 66, 79, 92};  // round(10000 i / 757)
    for (int i = 0; i < 7; ++i) {
      CHECK(s.points[i].num_tasks == 757);
      CHECK(s.points[i].instances_per_task == expected[i]);
    }
  }

  SUBCASE("vary-tasks scales proportionally when short of 700") {
    auto s = build_ablation_schedule(ScheduleMode::vary_tasks, 70);
    REQUIRE(s.warning.has_value());
    const std::vector<int> expected{10, 20, 30, 40, 50, 60, 70};
    for (int i = 0; i < 7; ++i) CHECK(s.points[i].num_tasks == expected[i]);
  }

  CHECK(schedule_mode_from_string("vary-tasks") == ScheduleMode::vary_tasks);
  CHECK_THROWS_AS(schedule_mode_from_string("vary"), ValidationError);
  CHECK_THROWS_AS(build_ablation_schedule(ScheduleMode::vary_tasks, 0), ValidationError);
}
