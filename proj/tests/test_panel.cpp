#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "peerbench/panel.hpp"
#include "peerbench/synth.hpp"

using namespace peerbench;

namespace {

// Brute force: evaluate both ECDFs at every sample point of either sample.
double ks_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& s, double t) {
    double c = 0;
    for (double v : s) c += v <= t;
    return c / static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b})
    for (double t : *s) d = std::max(d, std::fabs(ecdf(a, t) - ecdf(b, t)));
  return d;
}

PanelSchema simple_schema() {
  PanelSchema s;
  s.subject_column = "firm";
  s.time_column = "year";
  s.score_column = "roa";
  s.spec.covariates = {{"size", CovariateKind::kRaw}, {"gics", CovariateKind::kCode}, {"country", CovariateKind::kGroupDistance}};
  s.spec.baseline_group = "USA";
  return s;
}

PanelDataset load(const std::string& text, const PanelSchema& schema = simple_schema()) {
  std::istringstream in(text);
  return load_panel(in, schema);
}

}  // namespace

TEST(KsDistance, Examples) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  EXPECT_EQ(ks_distance(a, a), 0.0);
  EXPECT_EQ(ks_distance(std::vector<double>{1, 2}, std::vector<double>{3, 4}), 1.0);
  const std::vector<double> x{1.0, 2.0}, y{1.5, 2.5};
  EXPECT_DOUBLE_EQ(ks_oracle(x, y), 0.5);
  EXPECT_DOUBLE_EQ(ks_distance(x, y), 0.5);
  EXPECT_THROW(ks_distance(std::vector<double>{}, a), DomainError);
}

TEST(KsDistance, MatchesBruteForceSymmetricAndInvariant) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> len(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    const double shift = 0.5 * nd(rng);
    for (auto& v : a) v = std::round(4.0 * nd(rng)) / 4.0;
    for (auto& v : b) v = std::round(4.0 * (nd(rng) + shift)) / 4.0;
    const double d = ks_distance(a, b);
    EXPECT_NEAR(d, ks_oracle(a, b), 1e-15);
    EXPECT_EQ(d, ks_distance(b, a));
    std::vector<double> ta(a), tb(b);
    for (auto& v : ta) v = std::atan(v) * 7.0 - 1.0;
    for (auto& v : tb) v = std::atan(v) * 7.0 - 1.0;
    EXPECT_EQ(d, ks_distance(ta, tb));
  }
}

TEST(LoadPanel, WellFormed) {
  const auto d = load(
      "firm,year,roa,size,gics,country\n"
      "a,1990,0.05,3.2,451020,USA\n"
      "a,1991,0.04,3.3,451020,USA\n"
      "b,1990,-0.10,1.0,101010,GBR\n");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.observations[2].subject_id, "b");
  EXPECT_EQ(d.observations[0].covariates[1], 451020.0);
  EXPECT_EQ(d.observations[2].group, "GBR");
  EXPECT_EQ(d.time_range, (std::pair<int, int>{1990, 1991}));
  EXPECT_FALSE(d.covariates_built);
}

TEST(LoadPanel, BlankScoreDropped) {
  const auto d = load(
      "firm,year,roa,size,gics,country\n"
      "a,1990,0.05,3.2,451020,USA\n"
      "a,1991,,3.3,451020,USA\n"
      "b,1990,-0.10,1.0,101010,GBR\n");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dropped_missing_score, 1u);
}

TEST(LoadPanel, BlankCovariateDropped) {
  const auto d = load(
      "firm,year,roa,size,gics,country\n"
      "a,1990,0.05,,451020,USA\n"
      "b,1990,-0.10,1.0,101010,GBR\n");
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.dropped_missing_covariate, 1u);
}

TEST(LoadPanel, DuplicateNamesPair) {
  try {
    load(
        "firm,year,roa,size,gics,country\n"
        "firmA,1990,0.05,3.2,451020,USA\n"
        "firmA,1990,0.06,3.2,451020,USA\n");
    FAIL() << "expected a uniqueness error";
  } catch (const UniquenessError& e) {
    EXPECT_NE(std::string(e.what()).find("(firmA, 1990)"), std::string::npos);
  }
}

TEST(LoadPanel, MalformedRowReportsLine) {
  try {
    load(
        "firm,year,roa,size,gics,country\n"
        "a,1990,0.05,3.2,451020,USA\n"
        "a,1991,0.05,3.2\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(load("firm,year,roa,size,gics,country\na,x,0.1,1,1,USA\n"), ParseError);
  EXPECT_THROW(load("firm,year,roa,size,gics,country\na,1990,abc,1,1,USA\n"), ParseError);
  EXPECT_THROW(load(""), ParseError);
  EXPECT_THROW(load("firm,year,size\n"), ParseError);
}

TEST(LoadPanel, TabDelimitedAndQuoted) {
  auto s = simple_schema();
  s.delimiter = '\t';
  const auto d = load("firm\tyear\troa\tsize\tgics\tcountry\n\"x y\"\t2000\t0.1\t1\t2\tUSA\n", s);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.observations[0].subject_id, "x y");
}

TEST(BuildCovariates, BaselineZeroAndOracle) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::ostringstream csv;
  csv << "firm,year,roa,size,gics,country\n";
  std::map<std::string, std::vector<double>> pooled;
  const std::vector<std::pair<std::string, double>> groups{{"USA", 0.0}, {"GBR", 0.3}, {"JPN", -0.8}};
  for (const auto& [g, shift] : groups)
    for (int f = 0; f < 15; ++f)
      for (int y = 0; y < 4; ++y) {
        const double r = std::round(100.0 * (nd(rng) + shift)) / 100.0;
        pooled[g].push_back(r);
        csv << g << f << ',' << 2000 + y << ',' << r << ",1.5,10," << g << '\n';
      }
  const auto d = build_covariates(load(csv.str()));
  EXPECT_TRUE(d.covariates_built);
  for (const auto& o : d.observations) {
    const double expect = o.group == "USA" ? 0.0 : ks_oracle(pooled[o.group], pooled["USA"]);
    EXPECT_DOUBLE_EQ(o.covariates[2], expect);
    EXPECT_EQ(o.covariates[0], 1.5);
    EXPECT_EQ(o.covariates[1], 10.0);
  }
  const auto again = build_covariates(d);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(again.observations[i].covariates, d.observations[i].covariates);
}

TEST(BuildCovariates, IdenticalGroupIsZero) {
  const auto d = build_covariates(load(
      "firm,year,roa,size,gics,country\n"
      "a,1990,0.1,1,1,USA\n"
      "a,1991,0.2,1,1,USA\n"
      "b,1990,0.2,1,1,FRA\n"
      "b,1991,0.1,1,1,FRA\n"));
  for (const auto& o : d.observations) EXPECT_EQ(o.covariates[2], 0.0);
}

TEST(BuildCovariates, MissingBaselineIsDomainError) {
  EXPECT_THROW(build_covariates(load("firm,year,roa,size,gics,country\na,1990,0.1,1,1,FRA\n")), DomainError);
}

TEST(PanelSchema, ConfigRoundTrip) {
  const auto cfg = text::KeyValueConfig::parse_string(
      "subject = firm\ntime = year\nscore = roa\ncovariates = size, gics:code, country:ks\nbaseline = USA\n"
      "delimiter = tab\n");
  const auto s = PanelSchema::from_config(cfg);
  EXPECT_EQ(s.delimiter, '\t');
  ASSERT_EQ(s.spec.covariates.size(), 3u);
  EXPECT_EQ(s.spec.covariates[1].kind, CovariateKind::kCode);
  EXPECT_EQ(s.spec.covariates[2].kind, CovariateKind::kGroupDistance);
  const auto back = PanelSchema::from_config(s.to_config());
  EXPECT_EQ(back.to_config().to_string(), s.to_config().to_string());
  EXPECT_THROW(PanelSchema::from_config(text::KeyValueConfig::parse_string("covariates = c:ks\n")), ConfigError);
  EXPECT_THROW(PanelSchema::from_config(text::KeyValueConfig::parse_string("covariates = c:bogus\n")), ConfigError);
}

TEST(WritePanel, SynthRoundTripsBitIdentically) {
  SynthPanelConfig cfg;
  cfg.subjects = 30;
  cfg.periods = 6;
  cfg.missing_rate = 0.2;
  const auto panel = generate_panel(cfg);
  std::ostringstream first;
  write_panel(first, panel.data);
  std::istringstream in(first.str());
  const auto loaded = load_panel(in, cfg.schema());
  std::ostringstream second;
  write_panel(second, loaded);
  EXPECT_EQ(first.str(), second.str());
  ASSERT_EQ(loaded.size(), panel.data.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) EXPECT_EQ(loaded.observations[i].raw_score, panel.data.observations[i].raw_score);
}
