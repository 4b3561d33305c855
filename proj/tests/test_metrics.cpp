#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "resq/metrics.hpp"
#include "resq/quantizer.hpp"

using resq::CodeHistogram;

namespace {

CodeHistogram single_stage(std::size_t k, std::vector<std::uint64_t> counts) {
  CodeHistogram h(1, k);
  h.set_counts(0, counts);
  return h;
}

}  // namespace

TEST(Perplexity, UniformIsK) {
  EXPECT_NEAR(resq::perplexity(single_stage(1024, std::vector<std::uint64_t>(1024, 7)), 0), 1024.0,
              1e-9);
}

TEST(Perplexity, OneOneTwo) {
  // p = (1/4, 1/4, 1/2): H = 1.5 ln 2, exp(H) = 2^1.5.
  EXPECT_NEAR(resq::perplexity(single_stage(3, {1, 1, 2}), 0), std::pow(2.0, 1.5), 1e-12);
}

TEST(Perplexity, CollapseIsOne) {
  EXPECT_DOUBLE_EQ(resq::perplexity(single_stage(5, {0, 0, 9, 0, 0}), 0), 1.0);
}

TEST(Perplexity, EmptyHistogramThrows) {
  try {
    resq::perplexity(single_stage(4, {0, 0, 0, 0}), 0);
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::EmptyHistogram);
  }
}

TEST(Perplexity, BoundedAndPermutationInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 64;
    std::vector<std::uint64_t> counts(k);
    for (auto& c : counts) c = rng() % 5 == 0 ? 0 : rng() % 1000;
    counts[rng() % k] += 1;
    const double p = resq::perplexity(single_stage(k, counts), 0);
    EXPECT_GE(p, 1.0 - 1e-12);
    EXPECT_LE(p, static_cast<double>(k) + 1e-9);
    std::shuffle(counts.begin(), counts.end(), rng);
    EXPECT_NEAR(resq::perplexity(single_stage(k, counts), 0), p, 1e-9 * p);
  }
}

TEST(Perplexity, HistogramFromCodes) {
  // 4 frames x 2 stages, frame-major
  const std::vector<std::uint32_t> codes{0, 1, 0, 2, 1, 1, 3, 0};
  const auto h = CodeHistogram::from_codes(codes, 2, 4);
  EXPECT_EQ(h.total(), 4u);
  EXPECT_EQ(std::vector<std::uint64_t>(h.counts(0).begin(), h.counts(0).end()),
            (std::vector<std::uint64_t>{2, 1, 0, 1}));
  EXPECT_EQ(std::vector<std::uint64_t>(h.counts(1).begin(), h.counts(1).end()),
            (std::vector<std::uint64_t>{1, 2, 1, 0}));
}

TEST(Perplexity, AggregateIsMeanAndWithinRange) {
  const std::vector<double> curve{2.0, 8.0, 5.0};
  const double a = resq::aggregate_perplexity(curve);
  EXPECT_DOUBLE_EQ(a, 5.0);
  EXPECT_GE(a, 2.0);
  EXPECT_LE(a, 8.0);
}

TEST(Mse, HandComputed) {
  resq::Matrix<float> a(2, 2), b(2, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(1, 0) = 3;
  a(1, 1) = 4;
  b(0, 0) = 0;
  b(0, 1) = 2;
  b(1, 0) = 5;
  b(1, 1) = 4;
  // per-frame squared error summed over dimensions, averaged over frames
  EXPECT_DOUBLE_EQ(resq::mse(a, b), (1.0 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(resq::mse(a, a), 0.0);
}

TEST(Mse, ShapeMismatch) {
  try {
    resq::mse(resq::Matrix<float>(2, 3), resq::Matrix<float>(3, 3));
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::LengthMismatch);
  }
}

TEST(EvalReport, CsvAndRecords) {
  resq::EvalReport r;
  r.quantizer = "rvq";
  r.frames = 10;
  r.stages = 2;
  r.codebook_size = 4;
  r.mse_per_stage = {2.0, 1.0};
  r.perplexity_per_stage = {3.0, 2.0};
  EXPECT_EQ(r.perplexity_csv(), "stage,perplexity\n1,3\n2,2\n");
  const auto s = r.summary();
  EXPECT_DOUBLE_EQ(s["mse"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(s["perplexity"].get<double>(), 2.5);
  std::istringstream lines(r.records());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("metric") && j.contains("stage") && j.contains("value"));
    ++n;
  }
  EXPECT_EQ(n, 4);
}

TEST(EvalReport, AllIdenticalFramesGiveStageOnePerplexityOne) {
  resq::Matrix<float> table(4, 2);
  for (std::size_t k = 0; k < 4; ++k) table(k, 0) = static_cast<float>(k);
  resq::RvqModel<float> model;
  model.codebooks.emplace_back(table);
  resq::Matrix<float> frames(50, 2, 1.0f);
  const auto report = resq::evaluate(resq::AnyModel(model), frames);
  EXPECT_DOUBLE_EQ(report.perplexity_per_stage[0], 1.0);
}
