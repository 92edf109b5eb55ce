#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mkofl/data_pipeline.hpp"
#include "mkofl/errors.hpp"
#include "mkofl/evaluation.hpp"

using namespace mkofl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("mkofl_data_" + std::to_string(std::rand()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

Dataset tiny(std::size_t n) {
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(n), 1);
  ds.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    ds.X(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    ds.y[static_cast<Eigen::Index>(i)] = static_cast<double>(i) * 10.0;
  }
  return ds;
}

}  // namespace

TEST_CASE("load a small numeric csv") {
  TempDir dir;
  write_text(dir.file("a.csv"), "y,a,b\n1,2,3\n4,5,6\n7,8,9\n");
  CsvOptions opts;
  opts.label_column = "y";
  const auto ds = load_csv(dir.file("a.csv"), opts);
  REQUIRE(ds.size() == 3);
  REQUIRE(ds.dim() == 2);
  CHECK(ds.y[2] == 7.0);
  CHECK(ds.X(1, 1) == 6.0);
  CHECK(ds.provenance["dropped_rows"] == 0);

  opts.feature_columns = {"b"};
  const auto only_b = load_csv(dir.file("a.csv"), opts);
  CHECK(only_b.dim() == 1);
  CHECK(only_b.X(0, 0) == 3.0);
}

TEST_CASE("malformed rows are dropped and counted") {
  TempDir dir;
  std::string text = "label,x\n";
  for (int i = 0; i < 100; ++i) text += i == 37 ? "oops,1\n" : std::to_string(i) + "," + std::to_string(2 * i) + "\n";
  write_text(dir.file("m.csv"), text);
  CsvOptions opts;
  opts.label_column = "label";
  const auto ds = load_csv(dir.file("m.csv"), opts);
  CHECK(ds.size() == 99);
  CHECK(ds.provenance["dropped_rows"] == 1);

  write_text(dir.file("gap.csv"), "label,x\n1,\n2,3\n");
  CHECK(load_csv(dir.file("gap.csv"), opts).size() == 1);
}

TEST_CASE("csv ingestion errors") {
  TempDir dir;
  CsvOptions opts;
  opts.label_column = "y";
  CHECK_THROWS_AS(load_csv(dir.file("missing.csv"), opts), IngestionError);
  write_text(dir.file("nolabel.csv"), "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(dir.file("nolabel.csv"), opts), IngestionError);
  write_text(dir.file("empty.csv"), "y,a\nx,z\n");
  CHECK_THROWS_AS(load_csv(dir.file("empty.csv"), opts), IngestionError);
  try {
    load_csv(dir.file("missing.csv"), opts);
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("missing.csv") != std::string::npos);
  }
}

TEST_CASE("csv round trip") {
  TempDir dir;
  Dataset ds;
  ds.X.resize(5, 3);
  ds.y.resize(5);
  for (int i = 0; i < 5; ++i) {
    ds.y[i] = std::sqrt(i + 0.1) / 7.0;
    for (int j = 0; j < 3; ++j) ds.X(i, j) = std::exp(-0.3 * i * j) * 1e-3 + j / 3.0;
  }
  write_csv(ds, dir.file("rt.csv"));
  CsvOptions opts;
  opts.label_column = "y";
  const auto back = load_csv(dir.file("rt.csv"), opts);
  CHECK((back.X - ds.X).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.y - ds.y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("min-max normalization") {
  Dataset ds;
  ds.X.resize(3, 2);
  ds.X << 0, 4, 5, 4, 10, 4;
  ds.y.resize(3);
  ds.y << -1, 0, 1;
  const auto n = normalize_minmax(ds);
  CHECK(n.X(0, 0) == 0.0);
  CHECK(n.X(1, 0) == 0.5);
  CHECK(n.X(2, 0) == 1.0);
  for (int i = 0; i < 3; ++i) CHECK(n.X(i, 1) == 0.0);
  CHECK(n.y[1] == 0.5);
  CHECK(n.provenance.contains("normalization"));

  const auto twice = normalize_minmax(n);
  CHECK(twice.X == n.X);
  CHECK(twice.y == n.y);
}

TEST_CASE("autoregressive features") {
  const std::vector<double> s{1, 2, 3, 4};
  const auto ds = ar_featurize(s, 2);
  REQUIRE(ds.size() == 2);
  CHECK(ds.X(0, 0) == 2.0);
  CHECK(ds.X(0, 1) == 1.0);
  CHECK(ds.y[0] == 3.0);
  CHECK(ds.X(1, 0) == 3.0);
  CHECK(ds.X(1, 1) == 2.0);
  CHECK(ds.y[1] == 4.0);
  CHECK(ar_featurize(s, 3).size() == 1);
  for (std::size_t lag = 1; lag < 4; ++lag) CHECK(ar_featurize(s, lag).size() == 4 - lag);
  CHECK_THROWS_AS(ar_featurize(s, 4), ConfigError);
}

TEST_CASE("partition interleaves rows across nodes") {
  const auto ds = tiny(4);
  const auto streams = partition(ds, 2, 2, 1, false);
  CHECK(streams.at(0, 0).id == 0);
  CHECK(streams.at(1, 0).id == 2);
  CHECK(streams.at(0, 1).id == 1);
  CHECK(streams.at(1, 1).id == 3);
  CHECK(streams.at(1, 1).y == 30.0);

  const auto one = partition(tiny(6), 1, 6, 1, false);
  for (std::size_t t = 0; t < 6; ++t) CHECK(one.at(t, 0).id == t);
}

TEST_CASE("shuffled partition is a permutation prefix without duplicates") {
  const auto ds = tiny(100);
  const auto streams = partition(ds, 7, 13, 42, true);
  CHECK(streams.samples.size() == 91);
  std::set<std::size_t> ids;
  for (const auto& s : streams.samples) {
    ids.insert(s.id);
    CHECK(s.y == ds.y[static_cast<Eigen::Index>(s.id)]);
  }
  CHECK(ids.size() == 91);
  const auto again = partition(ds, 7, 13, 42, true);
  for (std::size_t i = 0; i < 91; ++i) CHECK(again.samples[i].id == streams.samples[i].id);

  // K = 1 returns the shuffled dataset itself.
  const auto all = partition(ds, 1, 100, 42, true);
  std::set<std::size_t> every;
  for (const auto& s : all.samples) every.insert(s.id);
  CHECK(every.size() == 100);
}

TEST_CASE("insufficient rows report the feasible horizon") {
  const auto ds = tiny(45);
  try {
    partition(ds, 10, 5, 1);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.n = 2000;
  spec.dim = 2;
  const auto a = synth_generate(spec, 5);
  const auto b = synth_generate(spec, 5);
  CHECK(a.X == b.X);
  CHECK(a.y == b.y);
  CHECK(a.y.minCoeff() >= 0.0);
  CHECK(a.y.maxCoeff() <= 1.0);
  CHECK(a.X.minCoeff() >= 0.0);
  CHECK(a.X.maxCoeff() <= 1.0);
  CHECK(a.provenance["bandwidth_sq"] == spec.bandwidth_sq);

  // Rows do not depend on how many are requested.
  spec.n = 500;
  const auto prefix = synth_generate(spec, 5);
  CHECK(prefix.X == a.X.topRows(500));
  CHECK(prefix.y == a.y.head(500));
  CHECK_THROWS_AS(synth_generate(SyntheticSpec{-1.0}, 1), ConfigError);
}

TEST_CASE("noiseless synthetic data is nearly realizable by the generating kernel") {
  SyntheticSpec spec;
  spec.n = 3000;
  spec.noise_sd = 0.0;
  spec.offset = 0.5;
  spec.amplitude = 0.08;  // keeps labels away from the clipping bounds
  const auto ds = synth_generate(spec, 9);
  CHECK(ds.y.minCoeff() > 0.0);
  CHECK(ds.y.maxCoeff() < 1.0);
  const auto streams = partition(ds, 1, 3000, 1);
  const auto dict = KernelDictionary::build(11, 512, 1, 77);
  Vector y(3000);
  for (std::size_t i = 0; i < 3000; ++i) y[static_cast<Eigen::Index>(i)] = streams.samples[i].y;
  std::vector<double> per_sample;
  for (KernelId p = 0; p < 11; ++p) {
    const auto sol = best_hindsight(feature_matrix(dict, p, streams.samples), y, 1e-6);
    per_sample.push_back(sol.loss / 3000.0);
  }
  const auto best = std::min_element(per_sample.begin(), per_sample.end()) - per_sample.begin();
  CHECK(best == 3);
  CHECK(per_sample[3] <= 1e-4);
}
