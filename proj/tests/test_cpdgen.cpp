#include <gtest/gtest.h>

#include <cmath>

#include "csiva/graphgen.hpp"
#include "csiva/trainer.hpp"
#include "oracles.hpp"

using namespace csiva;

namespace {

AdjacencyMatrix chain(int n) {
  AdjacencyMatrix a(n);
  for (int i = 1; i < n; ++i) a.at(i, i - 1) = 1;
  return a;
}

CbnSpec table_cbn(const AdjacencyMatrix& g, int k, double alpha, uint64_t seed) {
  CpdHyper h;
  h.k = k;
  h.alpha = alpha;
  return make_cbn(g, Family::dirichlet, h, seed);
}

// Empirical joint over full configurations, same layout as the oracle.
std::vector<double> empirical_joint(const CbnSpec& cbn, const InterventionSpec& iv,
                                    int samples, uint64_t seed) {
  size_t total = 1;
  for (int i = 0; i < cbn.n(); ++i) total *= static_cast<size_t>(cbn.card[i]);
  std::vector<double> freq(total, 0.0);
  Rng rng(seed);
  for (int t = 0; t < samples; ++t) {
    std::vector<double> x = ancestral_sample(cbn, iv, rng);
    size_t idx = 0;
    for (int i = 0; i < cbn.n(); ++i)
      idx = idx * static_cast<size_t>(cbn.card[i]) + static_cast<size_t>(x[i]) - 1;
    freq[idx] += 1.0 / samples;
  }
  return freq;
}

}  // namespace

TEST(Cpdgen, DirichletRowsSumToOne) {
  AdjacencyMatrix g = sample_dag(GraphDistributionSpec{5, 2.0, 11});
  CbnSpec cbn = table_cbn(g, 3, 0.5, 12);
  for (int n = 0; n < cbn.n(); ++n) {
    size_t rows = cbn.table[n].p.size() / static_cast<size_t>(cbn.card[n]);
    for (size_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (int j = 0; j < cbn.card[n]; ++j)
        sum += cbn.table[n].p[r * static_cast<size_t>(cbn.card[n]) + j];
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Cpdgen, MlpSoftmaxSumsToOne) {
  AdjacencyMatrix g = sample_dag(GraphDistributionSpec{4, 1.5, 13});
  CpdHyper h;
  h.k = 3;
  CbnSpec cbn = make_cbn(g, Family::mlp_discrete, h, 14);
  for (int n = 0; n < cbn.n(); ++n) {
    const CbnSpec::NodeMlp& m = cbn.mlp[n];
    // Every parent configuration, encoded one-hot per parent.
    const std::vector<int>& par = cbn.parents[n];
    size_t combos = 1;
    for (int p : par) combos *= static_cast<size_t>(cbn.card[p]);
    for (size_t c = 0; c < combos; ++c) {
      std::vector<double> in(static_cast<size_t>(m.in), 0.0);
      if (par.empty()) {
        in[0] = 1.0;
      } else {
        size_t rem = c, off = 0;
        for (size_t i = par.size(); i-- > 0;) {
          // Fill from the last parent backwards; offsets ascend with i.
          size_t cat = rem % static_cast<size_t>(cbn.card[par[i]]);
          rem /= static_cast<size_t>(cbn.card[par[i]]);
          size_t base = 0;
          for (size_t j = 0; j < i; ++j) base += static_cast<size_t>(cbn.card[par[j]]);
          in[base + cat] = 1.0;
          (void)off;
        }
      }
      std::vector<double> p = detail::mlp_categorical_dist(m, in.data());
      double sum = 0;
      for (double v : p) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Cpdgen, HardInterventionIsDelta) {
  CbnSpec cbn = table_cbn(chain(2), 3, 0.3, 15);
  InterventionSpec iv;
  iv.kind = InterventionSpec::Kind::hard;
  iv.target = 0;
  iv.value = 2;
  Rng rng(16);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x = ancestral_sample(cbn, iv, rng);
    EXPECT_EQ(x[0], 2.0);
  }
  iv.value = 5;  // not a category
  EXPECT_THROW(ancestral_sample(cbn, iv, rng), ValidationError);
  iv.value = 2;
  iv.target = 7;
  EXPECT_THROW(ancestral_sample(cbn, iv, rng), ValidationError);
}

TEST(Cpdgen, FractionZeroIsFullyObservational) {
  CbnSpec cbn = table_cbn(chain(3), 3, 0.5, 17);
  Dataset d = sample_dataset(cbn, 200, 0.0, Regime::hard, 18);
  for (int r = 0; r < d.s; ++r) EXPECT_EQ(d.markers[r], -1);
  EXPECT_EQ(dataset_stats(d).total_interventions, 0);
}

TEST(Cpdgen, FractionCountsAreExact) {
  CbnSpec cbn = table_cbn(chain(4), 3, 0.5, 19);
  Dataset d = sample_dataset(cbn, 1500, 0.8, Regime::hard, 20);
  EXPECT_EQ(dataset_stats(d).total_interventions, 1200);
}

TEST(Cpdgen, DiscreteHardValuesAreCategories) {
  CbnSpec cbn = table_cbn(chain(4), 3, 0.5, 21);
  Dataset d = sample_dataset(cbn, 400, 0.6, Regime::hard, 22);
  for (int r = 0; r < d.s; ++r) {
    if (d.markers[r] == -1) continue;
    double v = d.value(r, d.markers[r] - 1);
    EXPECT_TRUE(v == 1.0 || v == 2.0 || v == 3.0);
  }
}

TEST(Cpdgen, UnknownHardHidesMarkersButIntervenes) {
  // Single-node network with a near-point-mass marginal: uniform intervention
  // values are unmistakable in the category frequencies.
  CbnSpec cbn = table_cbn(AdjacencyMatrix(1), 3, 0.05, 23);
  Dataset d = sample_dataset(cbn, 5000, 1.0, Regime::unknown_hard, 24);
  for (int r = 0; r < d.s; ++r) EXPECT_EQ(d.markers[r], -1);
  DatasetStats st = dataset_stats(d);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(st.freq[0][j], 1.0 / 3.0, 0.05);
}

TEST(Cpdgen, SoftInterventionsKeepMarkers) {
  CbnSpec cbn = table_cbn(chain(3), 3, 0.5, 25);
  Dataset d = sample_dataset(cbn, 300, 1.0, Regime::soft, 26);
  for (int r = 0; r < d.s; ++r) {
    EXPECT_GE(d.markers[r], 1);
    EXPECT_LE(d.markers[r], 3);
  }
}

TEST(Cpdgen, SamplingIsDeterministic) {
  CbnSpec cbn = table_cbn(chain(3), 3, 0.5, 27);
  Dataset a = sample_dataset(cbn, 100, 0.5, Regime::hard, 28);
  Dataset b = sample_dataset(cbn, 100, 0.5, Regime::hard, 28);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.markers, b.markers);
  Dataset c = sample_dataset(cbn, 100, 0.5, Regime::hard, 29);
  EXPECT_NE(a.values, c.values);
}

TEST(Cpdgen, ObservationalJointMatchesEnumeration) {
  InterventionSpec none;
  {
    CbnSpec cbn = table_cbn(sample_dag(GraphDistributionSpec{3, 1.5, 30}), 3, 0.5, 31);
    double tv = oracle::tv_distance(empirical_joint(cbn, none, 100000, 32),
                                    oracle::joint_enumeration(cbn, none));
    EXPECT_LE(tv, 0.02);
  }
  {
    CpdHyper h;
    h.k = 2;
    CbnSpec cbn =
        make_cbn(sample_dag(GraphDistributionSpec{3, 1.5, 33}), Family::mlp_discrete, h, 34);
    double tv = oracle::tv_distance(empirical_joint(cbn, none, 100000, 35),
                                    oracle::joint_enumeration(cbn, none));
    EXPECT_LE(tv, 0.02);
  }
}

TEST(Cpdgen, NonDescendantsUnmovedByIntervention) {
  // Chain 0 -> 1 -> 2: intervening on 2 leaves the (0, 1) marginals alone.
  CbnSpec cbn = table_cbn(chain(3), 3, 0.4, 36);
  InterventionSpec iv;
  iv.kind = InterventionSpec::Kind::hard;
  iv.target = 2;
  iv.value = 1;
  std::vector<double> obs = oracle::joint_enumeration(cbn, InterventionSpec{});
  std::vector<double> emp = empirical_joint(cbn, iv, 100000, 37);
  for (int node : {0, 1}) {
    std::vector<double> want = oracle::marginal_of(obs, {3, 3, 3}, node);
    std::vector<double> got = oracle::marginal_of(emp, {3, 3, 3}, node);
    EXPECT_LE(oracle::tv_distance(want, got), 0.02) << "node " << node;
  }
  // And the enumeration itself keeps them exactly equal.
  std::vector<double> ivj = oracle::joint_enumeration(cbn, iv);
  for (int node : {0, 1}) {
    std::vector<double> a = oracle::marginal_of(obs, {3, 3, 3}, node);
    std::vector<double> b = oracle::marginal_of(ivj, {3, 3, 3}, node);
    for (size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
  }
}

TEST(Cpdgen, StatsMatchDirectRecount) {
  CbnSpec cbn = table_cbn(chain(4), 3, 0.5, 38);
  Dataset d = sample_dataset(cbn, 512, 0.4, Regime::hard, 39);
  DatasetStats st = dataset_stats(d);
  int total = 0;
  std::vector<int> per_node(4, 0);
  for (int r = 0; r < d.s; ++r)
    if (d.markers[r] != -1) {
      ++total;
      ++per_node[d.markers[r] - 1];
    }
  EXPECT_EQ(st.total_interventions, total);
  EXPECT_EQ(st.interventions_per_node, per_node);
  for (int node = 0; node < 4; ++node) {
    double sum = 0;
    for (int j = 0; j < 3; ++j) {
      double count = 0;
      for (int r = 0; r < d.s; ++r)
        if (d.value(r, node) == j + 1) count += 1;
      EXPECT_NEAR(st.freq[node][j], count / d.s, 1e-12);
      sum += st.freq[node][j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Cpdgen, DatasetTextRoundTripsExactly) {
  {
    CbnSpec cbn = table_cbn(chain(3), 3, 0.5, 40);
    Dataset d = sample_dataset(cbn, 50, 0.5, Regime::hard, 41);
    Dataset e = dataset_from_text(dataset_to_text(d));
    EXPECT_EQ(d.values, e.values);
    EXPECT_EQ(d.markers, e.markers);
    EXPECT_EQ(d.truth, e.truth);
    EXPECT_EQ(d.k, e.k);
    EXPECT_EQ(d.family, e.family);
  }
  {
    CpdHyper h;
    CbnSpec cbn = make_cbn(chain(3), Family::linear, h, 42);
    Dataset d = sample_dataset(cbn, 50, 0.3, Regime::hard, 43);
    Dataset e = dataset_from_text(dataset_to_text(d));
    EXPECT_EQ(d.values, e.values);  // 17 significant digits: bit-exact doubles
    EXPECT_EQ(d.markers, e.markers);
  }
}

TEST(Cpdgen, LinearHardValuesInUnitInterval) {
  CpdHyper h;
  CbnSpec cbn = make_cbn(chain(3), Family::linear, h, 44);
  Dataset d = sample_dataset(cbn, 300, 0.7, Regime::hard, 45);
  for (int r = 0; r < d.s; ++r) {
    if (d.markers[r] == -1) continue;
    double v = d.value(r, d.markers[r] - 1);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Cpdgen, RejectsBadConfig) {
  CpdHyper h;
  h.k = 1;
  EXPECT_THROW(make_cbn(chain(2), Family::dirichlet, h, 1), ConfigError);
  h.k = 3;
  h.alpha = 0.0;
  EXPECT_THROW(make_cbn(chain(2), Family::dirichlet, h, 1), ConfigError);
  h.alpha = 1.0;
  CbnSpec cbn = make_cbn(chain(2), Family::dirichlet, h, 1);
  EXPECT_THROW(sample_dataset(cbn, 0, 0.5, Regime::hard, 1), ConfigError);
  EXPECT_THROW(sample_dataset(cbn, 10, 1.5, Regime::hard, 1), ConfigError);
  EXPECT_THROW(sample_dataset(cbn, 10, -0.1, Regime::hard, 1), ConfigError);
}

TEST(Cpdgen, MalformedDatasetTextRejected) {
  CbnSpec cbn = table_cbn(chain(2), 3, 0.5, 46);
  Dataset d = sample_dataset(cbn, 5, 0.0, Regime::hard, 47);
  std::string good = dataset_to_text(d);
  EXPECT_THROW(dataset_from_text("WRONG v1\n" + good.substr(good.find('\n') + 1)),
               ValidationError);
  std::string bad = good;
  bad.replace(bad.find("| -1"), 4, "| 9");  // marker out of range
  EXPECT_THROW(dataset_from_text(bad), ValidationError);
}
