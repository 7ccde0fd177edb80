#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include "nbmig/error.hpp"
#include "nbmig/knowledge.hpp"

using namespace nbmig;

namespace {

// Paper-scale oracle in milliseconds: local 21.5 s per epoch, remote 4.85 s per epoch
// plus a 120 s migration.
std::shared_ptr<AffineOracle> paper_oracle() {
  return std::make_shared<AffineOracle>(LinearModel{21'500, 0}, LinearModel{4'850, 120'000});
}

CellKnowledge fit_cell(std::int64_t epochs) {
  return notebook_to_kb("model.fit(x, epochs=" + std::to_string(epochs) + ")");
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an nbmig::Error");
  return ErrorCode::InvalidArgument;
}

// Counts measurements so tests can see how many dataset builds ran.
class CountingOracle final : public TimingOracle {
 public:
  explicit CountingOracle(std::shared_ptr<TimingOracle> inner) : inner_(std::move(inner)) {}
  Millis measure(Environment env, std::int64_t value) override {
    ++calls;
    return inner_->measure(env, value);
  }
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<TimingOracle> inner_;
};

}  // namespace

TEST_CASE("parameter extraction") {
  auto k = notebook_to_kb("model.fit(epochs=10)");
  CHECK(k.is_cell_of_interest);
  CHECK(k.parameters == std::map<std::string, std::int64_t>{{"epochs", 10}});

  k = notebook_to_kb("x = 1 + 2");
  CHECK_FALSE(k.is_cell_of_interest);
  CHECK(k.parameters.empty());

  k = notebook_to_kb("model.fit(epochs=n)");
  CHECK(k.is_cell_of_interest);
  CHECK(k.parameters.empty());
  CHECK(k.unextractable == std::set<std::string>{"epochs"});

  k = notebook_to_kb("fit(epochs=2.5, batch_size=32, verbose=1)");
  CHECK(k.parameters == std::map<std::string, std::int64_t>{{"batch_size", 32}});
  CHECK(k.unextractable == std::set<std::string>{"epochs"});

  k = notebook_to_kb("model.predict(epochs=3)");
  CHECK_FALSE(k.is_cell_of_interest);

  k = notebook_to_kb("model.fit(epochs=", {}, CellProvenance{"nb", "c1", {}, 5});
  CHECK(k.parse_error.has_value());
  CHECK_FALSE(k.is_cell_of_interest);
  CHECK(k.provenance.cell_id == "c1");
}

TEST_CASE("dataset from the noiseless paper oracle") {
  auto oracle = paper_oracle();
  const std::vector<std::int64_t> probes = {3, 1, 2, 2};
  const auto ds = build_or_update_dataset(fit_cell(10), "epochs", probes, *oracle);
  REQUIRE(ds.samples.size() == 6);
  for (const auto& s : ds.samples) {
    CHECK(s.stdev == 0);
    CHECK(s.stable);
    CHECK(s.repetitions == 2);
  }
  CHECK(ds.samples[0].total_time == 21'500);
  CHECK(ds.samples[5].total_time == 4'850 * 3 + 120'000);
  CHECK_FALSE(ds.budget_exhausted);
  CHECK(ds.was_modified);

  // Rebuilding with the previous dataset measures the same medians: nothing changes.
  const auto again = build_or_update_dataset(fit_cell(10), "epochs", probes, *oracle, {}, &ds);
  CHECK_FALSE(again.was_modified);
  CHECK(again.samples == ds.samples);
}

TEST_CASE("dataset errors and budget") {
  auto oracle = paper_oracle();
  CHECK(code_of([&] { build_or_update_dataset(fit_cell(1), "epochs", {}, *oracle); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([&] {
          build_or_update_dataset(notebook_to_kb("x = 1"), "epochs", std::vector<std::int64_t>{1, 2}, *oracle);
        }) == ErrorCode::InvalidArgument);

  // Probe 3 makes the local stream exceed a 200 s budget: 2 * (21.5 + 43 + 64.5) s.
  ProbeBudget tight;
  tight.max_wait = 200'000;
  const auto ds = build_or_update_dataset(fit_cell(1), "epochs", std::vector<std::int64_t>{1, 2, 3}, *oracle, tight);
  CHECK(ds.budget_exhausted);
  CHECK(ds.samples.size() == 4);
  REQUIRE(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("probe 3") != std::string::npos);

  tight.max_wait = 100'000;
  CHECK(code_of([&] {
          build_or_update_dataset(fit_cell(1), "epochs", std::vector<std::int64_t>{1, 2, 3}, *oracle, tight);
        }) == ErrorCode::EmptyDataset);
}

TEST_CASE("jittered oracle: 5% noise is almost always stable") {
  int unstable = 0;
  int total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    JitterOracle noisy(paper_oracle(), 0.05, seed);
    ProbeBudget budget;
    budget.max_wait = 1e12;
    const auto ds = build_or_update_dataset(fit_cell(1), "epochs", std::vector<std::int64_t>{1, 2, 3}, noisy, budget);
    for (const auto& s : ds.samples) {
      ++total;
      unstable += !s.stable;
      CHECK(s.repetitions <= 5);
      CHECK(s.repetitions >= 2);
      if (s.stable) CHECK(s.stdev <= 0.10 * s.total_time);
    }
  }
  // A pair of readings can differ by at most 10% of the base here, so the rule holds
  // for every sample; keep a margin for the median/mean distinction.
  CHECK(unstable <= total / 100);
}

TEST_CASE("fitting") {
  std::vector<TimingSample> local;
  for (std::int64_t e = 1; e <= 3; ++e) {
    TimingSample s;
    s.param_value = e;
    s.total_time = 21'500.0 * static_cast<double>(e);
    s.stable = true;
    local.push_back(s);
  }
  const auto m = fit_line(local);
  CHECK(m.slope == doctest::Approx(21'500));
  CHECK(m.intercept == doctest::Approx(0).epsilon(1e-9));
  CHECK(code_of([&] { fit_line(std::span(local).first(1)); }) == ErrorCode::InsufficientData);
}

TEST_CASE("intersection") {
  const IntRange range{1, 1000};
  auto fit = intersect({21'500, 0}, {4'850, 120'000}, range);
  CHECK(fit.crossing == doctest::Approx(120'000.0 / 16'650.0));
  CHECK(fit.threshold == 7);
  CHECK(fit.regime == Regime::Above);
  CHECK(decide(fit.regime, fit.threshold, 8));
  CHECK_FALSE(decide(fit.regime, fit.threshold, 7));

  CHECK(code_of([&] { intersect({5, 1}, {5, 9}, range); }) == ErrorCode::ParallelLines);

  fit = intersect({1000, 0}, {2000, 0}, range);
  CHECK(fit.crossing == 0);
  CHECK(fit.threshold == 1);
  CHECK(fit.regime == Regime::Never);
  CHECK_FALSE(fit.reason.empty());
  for (std::int64_t v = 1; v <= 1000; v += 37) CHECK_FALSE(decide(fit.regime, fit.threshold, v));

  // Remote cheaper everywhere.
  fit = intersect({100, 50}, {10, 0}, range);
  CHECK(fit.regime == Regime::Always);
  CHECK(decide(fit.regime, fit.threshold, 1));

  // Crossing beyond the range clamps to the top: never worth it in range.
  fit = intersect({10, 0}, {1, 1e9}, range);
  CHECK(fit.threshold == 1000);
  CHECK_FALSE(decide(fit.regime, fit.threshold, 1000));
}

TEST_CASE("property: noiseless fits recover the oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> coef(1, 50'000);
  for (int round = 0; round < 200; ++round) {
    const LinearModel l{coef(rng), coef(rng)};
    const LinearModel r{coef(rng), coef(rng) + 100'000};
    AffineOracle oracle(l, r);
    std::vector<std::int64_t> probes;
    const auto n = 2 + rng() % 4;
    for (std::size_t i = 0; i < n; ++i) probes.push_back(1 + static_cast<std::int64_t>(rng() % 50));
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    if (probes.size() < 2) probes.push_back(probes.back() + 1);
    ProbeBudget budget;
    budget.max_wait = 1e15;
    const auto ds = build_or_update_dataset(fit_cell(1), "epochs", probes, oracle, budget);
    const auto m = fit_models(ds);
    CHECK(m.local.slope == doctest::Approx(l.slope).epsilon(1e-9));
    CHECK(m.local.intercept == doctest::Approx(l.intercept).epsilon(1e-9));
    CHECK(m.remote.slope == doctest::Approx(r.slope).epsilon(1e-9));
    CHECK(m.remote.intercept == doctest::Approx(r.intercept).epsilon(1e-9));
  }
}

TEST_CASE("property: threshold never drops as the migration offset grows") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> coef(1, 50'000);
  const IntRange range{1, 10'000};
  for (int round = 0; round < 300; ++round) {
    double ls = coef(rng), rs = coef(rng);
    if (ls < rs) std::swap(ls, rs);
    if (ls == rs) continue;
    const double li = coef(rng);
    double offset = 0;
    std::int64_t previous = std::numeric_limits<std::int64_t>::min();
    for (int step = 0; step < 20; ++step) {
      offset += coef(rng) * 10;
      const auto fit = intersect({ls, li}, {rs, offset}, range);
      CHECK(fit.threshold >= previous);
      previous = fit.threshold;
    }
  }
}

TEST_CASE("property: decisions agree with the oracle above the crossing") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> coef(1, 50'000);
  const IntRange range{0, 100'000};
  for (int round = 0; round < 300; ++round) {
    const LinearModel l{coef(rng), coef(rng)};
    const LinearModel r{coef(rng), coef(rng) * 5};
    if (l.slope == r.slope) continue;
    const auto fit = intersect(l, r, range);
    for (int k = 0; k < 20; ++k) {
      const auto v = static_cast<std::int64_t>(std::max(fit.crossing + 1, 0.0)) + 1 +
                     static_cast<std::int64_t>(rng() % 1000);
      if (!range.contains(v)) continue;
      const bool remote_wins = r.predict(static_cast<double>(v)) < l.predict(static_cast<double>(v));
      CHECK(decide(fit.regime, fit.threshold, v) == remote_wins);
    }
  }
}

TEST_CASE("knowledge base: seed, update, persistence, provenance") {
  KnowledgeBase kb;
  kb.seed("epochs", {1, 1000}, 50, 100);
  CHECK(code_of([&] { kb.seed("x", {5, 1}, 3, 0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { kb.update("batch", ThresholdFit{}, 0); }) == ErrorCode::UnknownParameter);

  auto cell = fit_cell(50);
  auto v = should_migrate_knowledge(cell, kb);
  CHECK_FALSE(v.migrate);
  CHECK_FALSE(v.fallback_to_performance);
  CHECK(v.explanation.find("threshold 50") != std::string::npos);
  CHECK(v.explanation.find("expert") != std::string::npos);

  kb.update("epochs", intersect({21'500, 0}, {4'850, 120'000}, {1, 1000}), 200);
  v = should_migrate_knowledge(cell, kb);
  CHECK(v.migrate);
  CHECK(v.explanation.find("fitted") != std::string::npos);
  CHECK(should_migrate_knowledge(fit_cell(10), kb).migrate);
  CHECK_FALSE(should_migrate_knowledge(fit_cell(7), kb).migrate);

  const auto before = kb.get("epochs")->provenance;
  kb.update("epochs", intersect({21'500, 0}, {4'850, 240'000}, {1, 1000}), 300);
  const auto after = kb.get("epochs")->provenance;
  REQUIRE(after.size() == before.size() + 1);
  CHECK(std::equal(before.begin(), before.end(), after.begin()));
  CHECK(after.front().source == ThresholdSource::Expert);

  const auto restored = KnowledgeBase::from_json(kb.to_json());
  CHECK(restored.to_json() == kb.to_json());
  CHECK(restored.get("epochs")->threshold == 14);
  CHECK_THROWS_AS(KnowledgeBase::from_json("[1]"), Error);
  CHECK_THROWS_AS(KnowledgeBase::from_json(R"({"epochs":{"range":[3,1],"threshold":2}})"), Error);

  // Unknown or unextractable parameters fall back to the performance policy.
  CHECK(should_migrate_knowledge(notebook_to_kb("m.fit(epochs=k)"), kb).fallback_to_performance);
  CHECK(should_migrate_knowledge(notebook_to_kb("x = 1"), kb).fallback_to_performance);
}

TEST_CASE("update loop: one update, change detection, contained failures") {
  KnowledgeBase kb;
  kb.seed("epochs", {1, 1000}, 50, 0);
  auto counting = std::make_shared<CountingOracle>(paper_oracle());
  KbUpdater updater(kb, counting);

  NotebookEvent ev{"nb", 1000, {{"c1", "import m\nmodel = m.build()"}, {"c2", "model.fit(x, epochs=50)"}}};
  auto updates = updater.process(ev);
  REQUIRE(updates.size() == 1);
  CHECK(updates[0].fit.threshold == 7);
  CHECK(kb.get("epochs")->threshold == 7);
  CHECK(kb.get("epochs")->provenance.back().timestamp == 1000);
  CHECK(updater.dataset_builds() == 1);

  // Same source, and a whitespace/comment-only edit: no rebuild.
  CHECK(updater.process(ev).empty());
  ev.cells[1].source = "model.fit( x ,epochs = 50 )  # tuned";
  CHECK(updater.process(ev).empty());
  CHECK(updater.dataset_builds() == 1);

  // A real edit rebuilds, but identical measurements leave the KB alone.
  ev.cells[1].source = "model.fit(x, epochs=60)";
  CHECK(updater.process(ev).empty());
  CHECK(updater.dataset_builds() == 2);
  CHECK(kb.get("epochs")->provenance.size() == 2);

  // A broken cell is recorded and does not stop the rest.
  const auto issues_before = updater.issues().size();
  NotebookEvent bad{"nb2", 2000, {{"x", "def (:"}, {"y", "model.fit(epochs=3)"}}};
  CHECK(updater.process(bad).empty());  // measured, but the shared dataset is unchanged
  CHECK(updater.issues().size() == issues_before + 1);
  CHECK(updater.dataset_builds() == 3);

  // Nothing of interest: no updates.
  KnowledgeBase kb2;
  kb2.seed("epochs", {1, 1000}, 50, 0);
  KbUpdater quiet(kb2, counting);
  CHECK(quiet.process(NotebookEvent{"nb", 0, {{"a", "x = 1"}, {"b", "print(x)"}}}).empty());
  CHECK(quiet.dataset_builds() == 0);
}

TEST_CASE("update loop over a queue with concurrent producers and readers") {
  KnowledgeBase kb;
  kb.seed("epochs", {1, 1000}, 50, 0);
  KbUpdater updater(kb, paper_oracle());
  EventQueue queue;
  std::vector<KbUpdate> seen;
  std::thread consumer([&] { updater.run(queue, [&](const KbUpdate& u) { seen.push_back(u); }); });

  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};
  std::thread reader([&] {
    while (!stop) {
      const auto e = kb.get("epochs");
      if (!e || (e->threshold != 50 && e->threshold != 7)) ++torn;
    }
  });
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p) {
    producers.emplace_back([&, p] {
      for (int i = 0; i < 5; ++i) {
        queue.push(NotebookEvent{"nb" + std::to_string(p), i,
                                 {{"c" + std::to_string(i), "model.fit(epochs=" + std::to_string(10 + i) + ")"}}});
      }
    });
  }
  for (auto& t : producers) t.join();
  queue.close();
  consumer.join();
  stop = true;
  reader.join();
  CHECK(torn == 0);
  REQUIRE_FALSE(seen.empty());
  CHECK(seen.front().fit.threshold == 7);
  CHECK(kb.get("epochs")->threshold == 7);
}

TEST_CASE("replay and affine oracle specs") {
  auto replay = ReplayOracle::from_csv("environment,param_value,total_ms\nlocal,1,10\nlocal,1,12\nremote,1,5\n");
  CHECK(replay.measure(Environment::Local, 1) == 10);
  CHECK(replay.measure(Environment::Local, 1) == 12);
  CHECK(replay.measure(Environment::Local, 1) == 10);
  CHECK_THROWS_AS(replay.measure(Environment::Remote, 2), Error);
  CHECK_THROWS_AS(ReplayOracle::from_csv("local,1\n"), Error);

  auto affine = make_oracle("affine:21500,0,4850,120000");
  CHECK(affine->measure(Environment::Remote, 2) == 129'700);
  CHECK_THROWS_AS(make_oracle("affine:1,2"), Error);
  CHECK_THROWS_AS(make_oracle("/does/not/exist.csv"), Error);

  // Same seed, same readings.
  auto a = make_oracle("affine:1,0,1,0", 0.05, 9);
  auto b = make_oracle("affine:1,0,1,0", 0.05, 9);
  for (int i = 0; i < 10; ++i) CHECK(a->measure(Environment::Local, 100) == b->measure(Environment::Local, 100));
}

TEST_CASE("normalized source hash ignores layout and comments") {
  CHECK(normalized_source_hash("model.fit(x, epochs=5)") == normalized_source_hash("model.fit( x,epochs = 5 ) # c"));
  CHECK(normalized_source_hash("model.fit(x, epochs=5)") != normalized_source_hash("model.fit(x, epochs=6)"));
  CHECK(normalized_source_hash("\"unterminated") != normalized_source_hash("\"unterminated2"));
}
