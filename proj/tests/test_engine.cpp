#include <klabc/engine.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace klabc;

namespace {

ReferenceTable table_of(std::initializer_list<double> khat, const std::string& metric = "klc") {
  ReferenceTable t;
  t.metric = metric;
  std::size_t j = 0;
  for (double k : khat) {
    ReferenceRow r;
    r.j = j++;
    r.theta = ParamVector::Constant(1, static_cast<double>(r.j));
    r.khat = {k};
    r.khat_mean = k;
    t.rows.push_back(r);
  }
  return t;
}

// theta ~ U(0, 1); fake rows are theta + u with u from the fake stream.
auto toy_prior = [](SeedSpec s) {
  RandomStream rng(s);
  return ParamVector::Constant(1, rng.uniform());
};

auto toy_simulator = [](const ParamVector& theta, std::size_t rows, SeedSpec s) {
  RandomStream rng(s);
  Dataset d(static_cast<Eigen::Index>(rows), 1);
  for (std::size_t i = 0; i < rows; ++i) d(static_cast<Eigen::Index>(i), 0) = theta[0] + rng.uniform();
  return SimOutput{std::move(d), 0};
};

}  // namespace

TEST(AcceptCount, CeilingWithSnapping) {
  EXPECT_EQ(accept_count(0.5, 4), 2u);
  EXPECT_EQ(accept_count(1.0, 7), 7u);
  EXPECT_EQ(accept_count(0.01, 100000), 1000u);
  EXPECT_EQ(accept_count(0.3, 10), 3u);
  EXPECT_EQ(accept_count(0.25, 10), 3u);
  EXPECT_THROW(accept_count(0.05, 10), ConfigError);
}

TEST(AcceptReject, KeepsSmallestWithEqualWeights) {
  const auto t = accept_reject(table_of({3.0, 1.0, 4.0, 2.0}), 0.5);
  EXPECT_FALSE(t.rows[0].accepted);
  EXPECT_TRUE(t.rows[1].accepted);
  EXPECT_FALSE(t.rows[2].accepted);
  EXPECT_TRUE(t.rows[3].accepted);
  EXPECT_DOUBLE_EQ(t.rows[1].weight, 0.5);
  EXPECT_DOUBLE_EQ(t.rows[3].weight, 0.5);
  EXPECT_EQ(t.rows[0].weight, 0.0);
  EXPECT_EQ(t.kernel, "accept_reject");
}

TEST(AcceptReject, FullFractionAcceptsAll) {
  const auto t = accept_reject(table_of({1, 2, 3, 4}), 1.0);
  for (const auto& r : t.rows) {
    EXPECT_TRUE(r.accepted);
    EXPECT_DOUBLE_EQ(r.weight, 0.25);
  }
}

TEST(AcceptReject, TiesGoToLowerIndex) {
  const auto t = accept_reject(table_of({1.0, 0.5, 1.0, 1.0}), 0.5);
  EXPECT_TRUE(t.rows[0].accepted);
  EXPECT_TRUE(t.rows[1].accepted);
  EXPECT_FALSE(t.rows[2].accepted);
  EXPECT_FALSE(t.rows[3].accepted);
}

TEST(AcceptReject, LargeTableOnePercent) {
  ReferenceTable t;
  for (std::size_t j = 0; j < 100000; ++j) {
    ReferenceRow r;
    r.j = j;
    r.theta = ParamVector::Zero(1);
    r.khat_mean = static_cast<double>((j * 7919) % 100000);
    t.rows.push_back(r);
  }
  const auto out = accept_reject(t, 0.01);
  std::size_t kept = 0;
  for (const auto& r : out.rows) {
    if (r.accepted) {
      ++kept;
      EXPECT_LT(r.khat_mean, 1000.0);
    }
  }
  EXPECT_EQ(kept, 1000u);
  EXPECT_THROW(accept_reject(t, 0.0), ConfigError);
}

TEST(ExponentialWeights, HandValues) {
  const auto t = exponential_weights(table_of({0.0, std::log(2.0)}), 1.0);
  EXPECT_NEAR(t.rows[0].weight, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(t.rows[1].weight, 1.0 / 3.0, 1e-15);
}

TEST(ExponentialWeights, NoOverflowAtLargeScale) {
  const auto t = exponential_weights(table_of({0.0, 1000.0}), 100.0);
  EXPECT_EQ(t.rows[0].weight, 1.0);
  EXPECT_EQ(t.rows[1].weight, 0.0);
  const auto u = exponential_weights(table_of({5000.0, 5001.0}), 100.0);
  EXPECT_NEAR(u.rows[0].weight, 1.0 / (1.0 + std::exp(-100.0)), 1e-15);
}

TEST(ExponentialWeights, ShiftInvariant) {
  const auto a = exponential_weights(table_of({0.1, 0.4, -0.3, 0.2}), 3.0);
  const auto b = exponential_weights(table_of({10.1, 10.4, 9.7, 10.2}), 3.0);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.rows[j].weight, b.rows[j].weight, 1e-12);
}

TEST(ExponentialWeights, InfiniteDiscrepancyGetsZeroWeight) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto t = exponential_weights(table_of({inf, 1.0}), 1.0);
  EXPECT_EQ(t.rows[0].weight, 0.0);
  EXPECT_EQ(t.rows[1].weight, 1.0);
  EXPECT_THROW(exponential_weights(table_of({inf, inf}), 1.0), std::runtime_error);
}

TEST(ExponentialWeights, MeanExpAggregation) {
  auto t = table_of({0.0, 0.0});
  t.rows[1].khat = {0.0, std::numeric_limits<double>::infinity()};
  t.rows[0].khat = {0.0, 0.0};
  const auto w = exponential_weights(t, 1.0, Aggregation::kMeanExp);
  EXPECT_NEAR(w.rows[0].weight, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.rows[1].weight, 1.0 / 3.0, 1e-15);
}

TEST(ExponentialWeights, AccuracyIsRescaled) {
  EXPECT_EQ(kernel_discrepancy("ca", 0.4), 0.0);
  EXPECT_EQ(kernel_discrepancy("ca", 0.75), 0.5);
  EXPECT_EQ(kernel_discrepancy("klc", -0.2), -0.2);
  const auto t = exponential_weights(table_of({0.4, 0.5, 0.75}, "ca"), 2.0);
  EXPECT_NEAR(t.rows[0].weight, t.rows[1].weight, 1e-15);
  EXPECT_NEAR(t.rows[2].weight / t.rows[0].weight, std::exp(-1.0), 1e-14);
}

TEST(ApplyKernel, DefaultScaleIsSampleSize) {
  KernelSpec k;
  k.kind = KernelKind::kExponential;
  const auto a = apply_kernel(table_of({0.0, 0.01}), k, 100);
  const auto b = exponential_weights(table_of({0.0, 0.01}), 100.0);
  EXPECT_EQ(a.rows[1].weight, b.rows[1].weight);
}

TEST(Ess, KnownValues) {
  auto t = table_of({1, 2, 3, 4, 5});
  for (auto& r : t.rows) r.weight = 0.2;
  EXPECT_NEAR(effective_sample_size(t), 5.0, 1e-12);
  for (auto& r : t.rows) r.weight = 0.0;
  t.rows[2].weight = 1.0;
  EXPECT_DOUBLE_EQ(effective_sample_size(t), 1.0);
  const auto w = exponential_weights(table_of({0.0, std::log(2.0)}), 1.0);
  EXPECT_NEAR(effective_sample_size(w), 1.8, 1e-12);
}

TEST(ReferenceTable, IdenticalAcrossThreadCounts) {
  AbcConfig cfg;
  cfg.n_proposals = 64;
  cfg.nlatent = 3;
  cfg.m_ratio = 2.0;
  cfg.master_seed = 17;
  Dataset real(5, 1);
  for (int i = 0; i < 5; ++i) real(i, 0) = 0.1 * i;
  auto metric = [](const Dataset& r, const Dataset& f, SeedSpec s) {
    RandomStream rng(s);
    return MetricValue{std::abs(f.matrix().mean() - r.matrix().mean()) + 1e-3 * rng.uniform(), 0};
  };
  cfg.threads = 1;
  const auto a = build_reference_table(cfg, toy_prior, toy_simulator, metric, real);
  cfg.threads = 4;
  const auto b = build_reference_table(cfg, toy_prior, toy_simulator, metric, real);
  std::ostringstream sa, sb;
  write_reference_table(a, sa);
  write_reference_table(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(ReferenceTable, FakeNoiseIsSharedAcrossProposals) {
  AbcConfig cfg;
  cfg.n_proposals = 20;
  cfg.nlatent = 2;
  cfg.m_ratio = 1.0;
  cfg.master_seed = 3;
  const Dataset real(4, 1);
  // khat is the first fake value, so khat - theta is the shared noise draw.
  auto metric = [](const Dataset&, const Dataset& f, SeedSpec) { return MetricValue{f(0, 0), 0}; };
  const auto t = build_reference_table(cfg, toy_prior, toy_simulator, metric, real);
  for (std::size_t l = 0; l < 2; ++l) {
    const double noise0 = t.rows[0].khat[l] - t.rows[0].theta[0];
    for (const auto& r : t.rows) EXPECT_NEAR(r.khat[l] - r.theta[0], noise0, 1e-15);
  }
  EXPECT_NE(t.rows[0].khat[0] - t.rows[0].theta[0], t.rows[0].khat[1] - t.rows[0].theta[0]);
  for (const auto& r : t.rows) EXPECT_NEAR(r.khat_mean, 0.5 * (r.khat[0] + r.khat[1]), 1e-15);
}

TEST(ReferenceTable, ProposalsFollowPriorStreams) {
  AbcConfig cfg;
  cfg.n_proposals = 5;
  cfg.nlatent = 1;
  cfg.master_seed = 8;
  auto metric = [](const Dataset&, const Dataset&, SeedSpec) { return MetricValue{0.0, 0}; };
  const auto t = build_reference_table(cfg, toy_prior, toy_simulator, metric, Dataset(2, 1));
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(t.rows[j].theta, toy_prior(derive_stream(8, Purpose::kPrior, j)));
  }
}

TEST(ReferenceTable, FailuresBecomeInfiniteAndFlagged) {
  AbcConfig cfg;
  cfg.n_proposals = 4;
  cfg.nlatent = 1;
  auto failing = [](const ParamVector& theta, std::size_t rows, SeedSpec s) {
    if (theta[0] > 0.5) throw std::invalid_argument("bad theta");
    return toy_simulator(theta, rows, s);
  };
  auto metric = [](const Dataset&, const Dataset&, SeedSpec) { return MetricValue{1.0, kFlagNotConverged}; };
  const auto t = build_reference_table(cfg, toy_prior, failing, metric, Dataset(2, 1));
  for (const auto& r : t.rows) {
    if (r.theta[0] > 0.5) {
      EXPECT_TRUE(std::isinf(r.khat_mean));
      EXPECT_TRUE(r.flags & kFlagFailed);
    } else {
      EXPECT_EQ(r.khat_mean, 1.0);
      EXPECT_EQ(r.flags, static_cast<std::uint32_t>(kFlagNotConverged));
    }
  }
}

TEST(ReferenceTable, CsvRoundTrip) {
  auto t = exponential_weights(table_of({0.25, 1.0 / 3.0, std::numeric_limits<double>::infinity()}), 2.0);
  t.rows[1].flags = kFlagTruncated;
  const auto path = (std::filesystem::temp_directory_path() / "klabc_engine_table.csv").string();
  write_reference_table(t, path);
  const auto back = read_reference_table(path);
  ASSERT_EQ(back.size(), t.size());
  EXPECT_EQ(back.metric, "klc");
  EXPECT_EQ(back.kernel, "exponential");
  for (std::size_t j = 0; j < t.size(); ++j) {
    EXPECT_EQ(back.rows[j].theta, t.rows[j].theta);
    EXPECT_EQ(back.rows[j].khat, t.rows[j].khat);
    EXPECT_EQ(back.rows[j].weight, t.rows[j].weight);
    EXPECT_EQ(back.rows[j].accepted, t.rows[j].accepted);
    EXPECT_EQ(back.rows[j].flags, t.rows[j].flags);
  }
  std::filesystem::remove(path);
}

TEST(ReferenceTable, MissingWeightColumnIsNamed) {
  const auto path = (std::filesystem::temp_directory_path() / "klabc_engine_noweight.csv").string();
  {
    std::ofstream out(path);
    out << "j,theta_1,khat_1,khat_mean,accepted,flags\n0,0.5,1,1,1,0\n";
  }
  try {
    read_reference_table(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'weight'"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(KernelSpec, Validation) {
  KernelSpec k;
  k.accept_fraction = 0.0;
  EXPECT_THROW(k.validate(), ConfigError);
  k.accept_fraction = 0.1;
  k.scale = -1.0;
  EXPECT_THROW(k.validate(), ConfigError);
  EXPECT_THROW(parse_kernel_kind("gaussian"), ConfigError);
  EXPECT_EQ(parse_aggregation("mean_exp"), Aggregation::kMeanExp);
}
