#include <benchmark/benchmark.h>

#include <random>

#include "aipat/analytics.hpp"
#include "aipat/gateway/structured_output.hpp"
#include "aipat/secure_dist.hpp"

using namespace aipat;

static void BM_Pearson(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(50, 15);
  std::vector<double> x(state.range(0)), y(state.range(0));
  for (auto& v : x) v = d(rng);
  for (auto& v : y) v = d(rng);
  for (auto _ : state) benchmark::DoNotOptimize(analytics::pearson(x, y));
}
BENCHMARK(BM_Pearson)->Arg(73)->Arg(1000);

static void BM_Spearman(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<double> x(state.range(0)), y(state.range(0));
  for (auto& v : x) v = static_cast<double>(rng() % 17) / 2;
  for (auto& v : y) v = static_cast<double>(rng() % 17) / 2;
  for (auto _ : state) benchmark::DoNotOptimize(analytics::spearman(x, y));
}
BENCHMARK(BM_Spearman)->Arg(73)->Arg(1000);

static Rubric bench_rubric() {
  Rubric r;
  r.question_id = "q1";
  for (int i = 1; i <= 3; ++i) {
    RubricCriterion c;
    c.id = "c" + std::to_string(i);
    c.title = "criterion";
    c.max_points = Decimal(i == 3 ? 2 : 3);
    c.full_descriptor = "full";
    c.partial_descriptor = "partial";
    c.none_descriptor = "none";
    r.criteria.push_back(c);
  }
  return r;
}

static void BM_ParseEvaluation(benchmark::State& state) {
  const Rubric rubric = bench_rubric();
  const std::string reply =
      R"({"criteria":[{"criterion_id":"c1","tier":"full","points":3,"justification":"ok"},)"
      R"({"criterion_id":"c2","tier":"partial","points":1.5,"justification":"half"},)"
      R"({"criterion_id":"c3","tier":"none","points":0,"justification":"missing"}],)"
      R"("overall_feedback":"Good.","total":4.5})";
  for (auto _ : state) benchmark::DoNotOptimize(gateway::parse_evaluation(reply, rubric));
}
BENCHMARK(BM_ParseEvaluation);

static void BM_EncryptArchive(benchmark::State& state) {
  dist::ArchiveSpec spec{"s1", {}};
  std::vector<std::uint8_t> bytes(state.range(0));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(i * 31 % 251);
  spec.files.push_back({"feedback.bin", std::nullopt, bytes});
  for (auto _ : state) benchmark::DoNotOptimize(dist::encrypt_archive(spec, "CorrectHorse1234"));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncryptArchive)->Arg(4 << 10)->Arg(1 << 20);

BENCHMARK_MAIN();
