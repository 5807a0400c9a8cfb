#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "geopatch/config.hpp"
#include "geopatch/error.hpp"
#include "geopatch/worker_pool.hpp"
#include "test_support.hpp"

namespace geopatch {
namespace {

TEST(Config, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.grid_cell(), 1200.0);
  EXPECT_EQ(c.nomenclature().mapping(), ClassNomenclature::standard19().mapping());
}

TEST(Config, TomlOverridesDefaults) {
  const auto c = apply_config_text(R"(
patch_size_m = 600
seed = 9
modality = "S2"

[split]
p = 0.2
q = 0.1
method = "grid"
grid_cell_m = 2400.0

[paths]
tiles = "in/tiles"
out_dir = "/abs/out"

[store]
batch_size = 8
)",
                                   RunConfig{}, "/cfg");
  EXPECT_EQ(c.patch_size_m, 600.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.modality, Modality::S2);
  EXPECT_EQ(c.split_p, 0.2);
  EXPECT_EQ(c.split_q, 0.1);
  EXPECT_EQ(c.split_method, SplitMethod::Grid);
  EXPECT_EQ(c.grid_cell(), 2400.0);
  EXPECT_EQ(c.tiles_dir, std::filesystem::path("/cfg/in/tiles"));
  EXPECT_EQ(c.out_dir, std::filesystem::path("/abs/out"));
  EXPECT_EQ(c.store(), std::filesystem::path("/abs/out/store"));
  EXPECT_EQ(c.baseline(), std::filesystem::path("/abs/out/patches"));
  EXPECT_EQ(c.batch_size, 8u);
  EXPECT_EQ(c.coverage_threshold, RunConfig{}.coverage_threshold);
}

TEST(Config, LaterLayersWin) {
  RunConfig base;
  base.seed = 1;
  base.split_p = 0.3;
  const auto c = apply_config_text("seed = 2\n", base);
  EXPECT_EQ(c.seed, 2u);
  EXPECT_EQ(c.split_p, 0.3);
}

TEST(Config, RejectsUnknownAndMistyped) {
  EXPECT_THROW((void)apply_config_text("sede = 1\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("[split]\nr = 0.1\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("[nope]\nx = 1\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("seed = \"one\"\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("seed = -1\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("[split]\nmethod = \"voronoi\"\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("modality = \"S3\"\n", {}), UsageError);
  EXPECT_THROW((void)apply_config_text("this is = not toml =\n", {}), UsageError);
}

TEST(Config, ValidateRanges) {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), UsageError);
  };
  bad([](RunConfig& c) { c.split_p = 0.8; });
  bad([](RunConfig& c) { c.split_q = -0.1; });
  bad([](RunConfig& c) { c.patch_size_m = 0; });
  bad([](RunConfig& c) { c.coverage_threshold = 1.5; });
  bad([](RunConfig& c) { c.min_label_fraction = 1.0; });
  bad([](RunConfig& c) { c.batch_size = 0; });
}

TEST(Config, FileResolvesRelativePaths) {
  testing::TempDir dir;
  testing::write_text(dir / "run.toml", "[paths]\nland_cover = \"clc\"\n");
  const auto c = apply_config_file(dir / "run.toml", {});
  EXPECT_EQ(c.land_cover, dir.path() / "clc");
  EXPECT_THROW((void)apply_config_file(dir / "missing.toml", {}), IoError);
}

TEST(Config, HashIgnoresOutputLocationAndJobs) {
  RunConfig a;
  a.out_dir = "/x";
  a.jobs = 1;
  RunConfig b;
  b.out_dir = "/y";
  b.jobs = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 5;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
  const nlohmann::json j = a;
  EXPECT_FALSE(j.contains("jobs"));
}

TEST(WorkerPool, RunsEveryIndexOnceAndRethrows) {
  for (std::size_t jobs : {1u, 4u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    EXPECT_THROW(parallel_for(50, jobs,
                              [](std::size_t i) {
                                if (i == 17) throw DataError("boom");
                              }),
                 DataError);
  }
  EXPECT_GE(resolve_jobs(0), 1u);
  EXPECT_EQ(resolve_jobs(3), 3u);
}

}  // namespace
}  // namespace geopatch
