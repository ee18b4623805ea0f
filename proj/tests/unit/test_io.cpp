// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "support.hpp"

using namespace microlink;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("microlink_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

template <typename F>
DataError data_error(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e;
  }
  ADD_FAILURE() << "expected DataError";
  return DataError("none");
}

template <typename F>
std::string config_pointer(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "<no error>";
}

}  // namespace

TEST(Profiles, CodesFollowSortedValues) {
  TempDir dir;
  const auto p = dir.file("p.csv", "by,sex\n1950,F\n1949,M\n\"1950\",M\n1960,F\n");
  const Dataset ds = load_profiles(p);
  EXPECT_EQ(ds.table.records(), 4u);
  EXPECT_EQ(ds.table.fields(), 2u);
  EXPECT_EQ(ds.table.domain_size(0), 3);
  EXPECT_EQ(ds.table.at(0, 0), 1);
  EXPECT_EQ(ds.table.at(1, 0), 0);
  EXPECT_EQ(ds.table.at(2, 0), 1);
  EXPECT_EQ(ds.codebooks[0][2], "1960");
  EXPECT_EQ(ds.field_names[1], "sex");
}

TEST(Profiles, NumericValuesSortNumerically) {
  TempDir dir;
  const Dataset ds = load_profiles(dir.file("p.csv", "d\n10\n9\n2\n"));
  EXPECT_EQ(ds.codebooks[0], (std::vector<std::string>{"2", "9", "10"}));
}

TEST(Profiles, FieldSelection) {
  TempDir dir;
  const auto p = dir.file("p.csv", "a,b,c\n1,x,5\n2,y,5\n1,y,6\n");
  const Dataset ds = load_profiles(p, {"c", "a"});
  EXPECT_EQ(ds.field_names, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(ds.table.at(2, 0), 1);
  EXPECT_EQ(data_error([&] { load_profiles(p, {"zzz"}); }).line(), 1u);
}

TEST(Profiles, ErrorsCarryLineAndColumn) {
  TempDir dir;
  DataError e = data_error([&] { load_profiles(dir.file("a.csv", "a,b\n1,2\n3\n")); });
  EXPECT_EQ(e.line(), 3u);
  e = data_error([&] { load_profiles(dir.file("b.csv", "a,b\n1,2\n3,\n")); });
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.column(), 2u);
  e = data_error([&] { load_profiles(dir.file("c.csv", "a,b\n1,2\n\"3,4\n")); });
  EXPECT_EQ(e.line(), 3u);
  e = data_error([&] { load_profiles(dir.file("d.csv", "a,b\n1,2\n3,\xff\n")); });
  EXPECT_EQ(e.line(), 3u);
  data_error([&] { load_profiles(dir.path() / "missing.csv"); });
  data_error([&] { load_profiles(dir.file("e.csv", "")); });
  data_error([&] { load_profiles(dir.file("f.csv", "a,b\n")); });
}

TEST(Profiles, SingleCategoryFieldRejected) {
  TempDir dir;
  const DataError e = data_error([&] { load_profiles(dir.file("p.csv", "a,b\n1,x\n2,x\n")); });
  EXPECT_EQ(e.column(), 2u);
  EXPECT_NE(std::string(e.what()).find("M >= 2"), std::string::npos);
}

TEST(Profiles, CrlfAndByteOrderMark) {
  TempDir dir;
  const Dataset ds = load_profiles(dir.file("p.csv", "\xEF\xBB\xBF" "a\r\n1\r\n2\r\n"));
  EXPECT_EQ(ds.field_names[0], "a");
  EXPECT_EQ(ds.table.records(), 2u);
}

TEST(Truth, HeaderOptionalAndValidated) {
  TempDir dir;
  const LinkageState a = load_truth(dir.file("a.csv", "id\n7\n7\n3\n"), 3);
  EXPECT_TRUE(a.same_partition(LinkageState::from_labels(std::vector<int>{0, 0, 1})));
  const LinkageState b = load_truth(dir.file("b.csv", "1\n2\n2\n"), 3);
  EXPECT_EQ(b.clusters(), 2u);
  EXPECT_EQ(data_error([&] { load_truth(dir.file("c.csv", "id\n1\nx\n"), 2); }).line(), 3u);
  data_error([&] { load_truth(dir.file("d.csv", "1\n2\n"), 3); });
}

TEST(NetworkFile, ParsesAndValidates) {
  TempDir dir;
  const Network net = load_network(dir.file("n.csv", "i,j\n0,2\n1,2\n"), 3);
  EXPECT_EQ(net.edge_count(), 2u);
  EXPECT_TRUE(net.has_edge(2, 0));
  EXPECT_EQ(load_network(dir.file("h.csv", "i,j\n"), 3).edge_count(), 0u);
  EXPECT_EQ(load_network(dir.file("e.csv", "\n"), 3).edge_count(), 0u);
  EXPECT_EQ(data_error([&] { load_network(dir.file("a.csv", "i,j\n0,1\n2,1\n"), 3); }).line(), 3u);
  EXPECT_EQ(data_error([&] { load_network(dir.file("b.csv", "i,j\n0,1\n0,5\n"), 3); }).line(), 3u);
  const DataError c = data_error([&] { load_network(dir.file("c.csv", "i,j\n0,1\n0,q\n"), 3); });
  EXPECT_EQ(c.line(), 3u);
  EXPECT_EQ(c.column(), 2u);
  data_error([&] { load_network(dir.file("d.csv", "i,j\n0,1\n0,1\n"), 3); });
}

TEST(Bundle, RoundTrip) {
  TempDir dir;
  Rng rng(5);
  Dataset ds = rldata_replica(rng, 60, 10);
  ds.net = synth_network(*ds.truth, scenario(1), rng);
  save_dataset(dir.path(), ds);
  const Dataset back = load_dataset(dir.path());
  ASSERT_EQ(back.table.records(), ds.table.records());
  EXPECT_EQ(std::vector<int>(back.table.codes().begin(), back.table.codes().end()),
            std::vector<int>(ds.table.codes().begin(), ds.table.codes().end()));
  EXPECT_EQ(back.codebooks, ds.codebooks);
  EXPECT_EQ(back.field_names, ds.field_names);
  ASSERT_TRUE(back.net && back.truth);
  EXPECT_EQ(std::vector<Network::Edge>(back.net->edges().begin(), back.net->edges().end()),
            std::vector<Network::Edge>(ds.net->edges().begin(), ds.net->edges().end()));
  EXPECT_TRUE(back.truth->same_partition(*ds.truth));
  const Dataset subset = load_dataset(dir.path(), {"bd"});
  EXPECT_EQ(subset.table.fields(), 1u);
}

TEST(ChainFiles, LinkageAndTraceRoundTrip) {
  TempDir dir;
  const std::vector<std::vector<int>> samples = {{0, 0, 1}, {0, 1, 2}};
  save_linkage_samples(dir.path() / "linkage.csv", samples);
  EXPECT_EQ(load_linkage_samples(dir.path() / "linkage.csv"), samples);
  ChainOutput out;
  out.trace_names = {"N", "beta"};
  out.traces = {{2.0, 0.1 + 0.2}, {3.0, std::nan("")}};
  save_traces(dir.path() / "traces.csv", out);
  const TraceTable t = load_traces(dir.path() / "traces.csv");
  EXPECT_EQ(t.names, out.trace_names);
  EXPECT_EQ(t.rows[0][1], 0.1 + 0.2);
  EXPECT_TRUE(std::isnan(t.rows[1][1]));
  EXPECT_EQ(t.column("N"), (std::vector<double>{2.0, 3.0}));
  EXPECT_THROW(t.column("zzz"), DataError);
  EXPECT_EQ(data_error([&] { load_linkage_samples(dir.file("bad.csv", "1,2\n0,1\n")); }).line(), 2u);
}

TEST(RunConfigJson, DefaultsAndRoundTrip) {
  const RunConfig c = parse_config(std::string(R"({"prior": {"type": "ABP", "M": 3, "pi": 0.5},
    "sampler": {"burn_in": 10, "samples": 20, "network_kernel": "SGHMC", "sghmc": {"epsilon": 0.002}},
    "model": {"K": 3, "fields": ["by", "bd"]},
    "sweep": [{"a": 1, "b": 99}, {"a": 0.3, "b": 9.7}]})"));
  EXPECT_EQ(c.prior.max_size, 3);
  EXPECT_EQ(c.sampler.network_kernel, NetworkKernel::SGHMC);
  EXPECT_EQ(c.sampler.sghmc.leapfrog, 5);
  EXPECT_DOUBLE_EQ(c.sampler.sghmc.minibatch_frac, 0.2);
  EXPECT_DOUBLE_EQ(c.sampler.sghmc.epsilon, 0.002);
  EXPECT_EQ(c.model.dim, 3u);
  EXPECT_EQ(c.sweep.size(), 2u);
  const std::string once = dump(c);
  const std::string twice = dump(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(config_hash(c), config_hash(parse_config(once)));
  RunConfig d = c;
  d.sampler.seed = 2;
  EXPECT_NE(config_hash(c), config_hash(d));
  EXPECT_NE(config_hash(c, "a"), config_hash(c, "b"));
}

TEST(RunConfigJson, ErrorsPointAtTheMember) {
  EXPECT_EQ(config_pointer([] { parse_config(std::string("{")); }), "/");
  EXPECT_EQ(config_pointer([] { parse_config(std::string("[]")); }), "/");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"priors": {}})")); }), "/priors");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"prior": {}})")); }), "/prior/type");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"prior": {"type": "XX"}})")); }), "/prior/type");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"prior": {"type": "ABP", "pi": 1.5}})")); }),
            "/prior/pi");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sampler": {"sghmc": {"epsilon": 0}}})")); }),
            "/sampler/sghmc/epsilon");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sampler": {"sghmc": {"L": 0}}})")); }),
            "/sampler/sghmc/L");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sampler": {"samples": 2.5}})")); }),
            "/sampler/samples");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sampler": {"network_kernel": "NUTS"}})")); }),
            "/sampler/network_kernel");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"model": {"K": 0}})")); }), "/model/K");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sweep": [{"a": 1}]})")); }), "/sweep/0/b");
  EXPECT_EQ(config_pointer([] { parse_config(std::string(R"({"sweep": [{"a": 1, "b": -1}]})")); }), "/sweep/0/b");
  const RunConfig abp = parse_config(std::string(R"({"prior": {"type": "ABP", "M": 3, "a": [1]}})"));
  EXPECT_EQ(config_pointer([&] { abp.prior.build(100); }), "/prior");
}

TEST(RunConfigJson, PriorBlocksBuild) {
  const auto build = [](const char* text) { return parse_config(std::string(text)).prior.build(500); };
  const auto abp = std::get<AbpPrior>(build(R"({"prior": {"type": "ABP", "pi": 0.8, "cv": 0.5}})"));
  EXPECT_NEAR(abp.a[0], 3.0, 1e-12);
  EXPECT_NEAR(abp.b[0], 12.0, 1e-12);
  const auto epp = std::get<EppPrior>(build(R"({"prior": {"type": "EPP"}})"));
  EXPECT_NEAR(epp.a_theta / epp.b_theta, 1996.0, 1e-9);
  const auto nb = std::get<NbnbPrior>(build(R"({"prior": {"type": "NBNBP"}})"));
  EXPECT_NEAR(nb.q, 0.996, 1e-12);
  EXPECT_TRUE(std::holds_alternative<UpPrior>(build(R"({"prior": {"type": "UP"}})")));
  EXPECT_TRUE(std::holds_alternative<NbdpPrior>(build(R"({"prior": {"type": "NBDP"}})")));
  EXPECT_THROW(build(R"({"prior": {"type": "ABP", "pi": 0.2}})"), ElicitationError);
}

TEST(RunConfigJson, ModelBlockElicitsNetworkHypers) {
  const RunConfig c = parse_config(std::string(R"({"model": {"a": 2, "b": 98}})"));
  const std::vector<int> domains = {3, 4};
  const HyperParams h = c.model.build(500, domains);
  EXPECT_NEAR(h.b_sigma, elicit_network_hypers(500, 2).b_sigma, 1e-9);
  EXPECT_DOUBLE_EQ(h.a_dist, 2.0);
  EXPECT_EQ(h.alpha_field[1].size(), 4u);
}

TEST(RunConfigJson, BundledSampleConfigsParse) {
  std::size_t seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(MICROLINK_SAMPLES_DIR)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const RunConfig cfg = parse_config(text);
    EXPECT_NO_THROW(cfg.prior.build(500)) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 3u);
}

TEST(Sensitivity, GridHasEighteenPoints) {
  const auto g = sensitivity_grid();
  ASSERT_EQ(g.size(), 18u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(g[k].a / (g[k].a + g[k].b), 0.002, 1e-12);
  for (std::size_t k = 6; k < 12; ++k) EXPECT_NEAR(g[k].a + g[k].b, 100.0, 1e-9);
  for (std::size_t k = 12; k < 18; ++k) EXPECT_NEAR(g[k].a + g[k].b, 10.0, 1e-9);
}

TEST(Synthetic, ReplicaStructure) {
  Rng rng(1);
  const Dataset ds = rldata_replica(rng);
  EXPECT_EQ(ds.table.records(), 500u);
  ASSERT_TRUE(ds.truth);
  EXPECT_EQ(ds.truth->clusters(), 450u);
  EXPECT_EQ(ds.truth->allelic()[2], 50);
  EXPECT_LE(ds.table.domain_size(0), 90);
  EXPECT_LE(ds.table.domain_size(1), 12);
  EXPECT_LE(ds.table.domain_size(2), 31);
  for (std::size_t i = 0; i < 500; ++i)
    for (std::size_t j = i + 1; j < 500; ++j)
      if (ds.truth->together(i, j)) {
        int diff = 0;
        for (std::size_t l = 0; l < 3; ++l) diff += ds.table.at(i, l) != ds.table.at(j, l);
        EXPECT_LE(diff, 1);
      }
}

TEST(Synthetic, SeedDeterminism) {
  Rng a(42), b(42);
  const Dataset x = rldata_replica(a);
  const Dataset y = rldata_replica(b);
  EXPECT_EQ(std::vector<int>(x.table.codes().begin(), x.table.codes().end()),
            std::vector<int>(y.table.codes().begin(), y.table.codes().end()));
  const Network nx = synth_network(*x.truth, scenario(1), a);
  const Network ny = synth_network(*y.truth, scenario(1), b);
  EXPECT_EQ(nx.edge_count(), ny.edge_count());
  EXPECT_TRUE(std::equal(nx.edges().begin(), nx.edges().end(), ny.edges().begin()));
}

TEST(Synthetic, ScenarioTwoIsSparser) {
  double d1 = 0.0, d2 = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const Dataset ds = rldata_replica(rng);
    Rng r1(seed * 7), r2(seed * 7);
    d1 += network_stats(synth_network(*ds.truth, scenario(1), r1)).density / 20.0;
    d2 += network_stats(synth_network(*ds.truth, scenario(2), r2)).density / 20.0;
  }
  EXPECT_LT(d2, d1);
  EXPECT_THROW(scenario(3), std::invalid_argument);
}

TEST(Synthetic, LinkedRecordsAreAlwaysConnected) {
  Rng rng(3);
  const Dataset ds = rldata_replica(rng);
  const Network net = synth_network(*ds.truth, ScenarioSpec{20.0, 178.0, 2}, rng);
  for (std::size_t i = 0; i < 500; ++i)
    for (std::size_t j = i + 1; j < 500; ++j)
      if (ds.truth->together(i, j)) {
        EXPECT_TRUE(net.has_edge(i, j));
      }
}

TEST(Synthetic, DistortionRate) {
  Rng rng(4);
  const LinkageState truth = LinkageState::from_labels(std::vector<int>(4000, 0));
  const std::vector<int> domains = {2};
  const std::vector<std::vector<double>> theta = {{0.5, 0.5}};
  // A distorted cell keeps the entity value half of the time.
  const RecordTable t = synth_profiles(truth, domains, 0.4, rng, &theta);
  const int pi = t.at(0, 0);
  double mismatch = 0.0;
  for (std::size_t i = 0; i < 4000; ++i) mismatch += t.at(i, 0) != pi;
  // Record 0 may itself be distorted; either way the rate is 0.2 or 0.8.
  const double rate = std::min(mismatch, 4000.0 - mismatch) / 4000.0;
  EXPECT_NEAR(rate, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / 4000.0));
  const RecordTable clean = synth_profiles(truth, domains, 0.0, rng, &theta);
  for (std::size_t i = 1; i < 4000; ++i) EXPECT_EQ(clean.at(i, 0), clean.at(0, 0));
}
