#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedseg/checkpoint.hpp"
#include "fedseg/json_io.hpp"
#include "fedseg/orchestrator.hpp"
#include "fedseg/raster.hpp"
#include "test_util.hpp"

using namespace fedseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fedseg_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

}  // namespace

TEST(Checkpoint, RoundTripsBitExactly) {
  TempDir tmp;
  Rng rng(1);
  const auto params = testutil::random_params({{{4u, 2u, 3u, 3u}}, {{4u}}}, rng);
  save_checkpoint(tmp.path / "m.fpk", params, {12, "fedavg", 42});

  CheckpointMeta meta;
  const auto loaded = load_checkpoint(tmp.path / "m.fpk", &meta);
  EXPECT_EQ(loaded.values, params.values);
  EXPECT_EQ(loaded.layout, params.layout);
  EXPECT_EQ(meta.round, 12);
  EXPECT_EQ(meta.rule, "fedavg");
  EXPECT_EQ(meta.seed, 42u);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir tmp;
  std::ofstream(tmp.path / "bad.fpk") << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(tmp.path / "bad.fpk"), CheckpointError);
  EXPECT_THROW(load_checkpoint(tmp.path / "missing.fpk"), CheckpointError);
}

TEST(Raster, StudyRoundTrip) {
  TempDir tmp;
  auto profile = default_federation(42)[0];
  Rng rng(derive_seed(profile.seed, kSeedStudy, 1));
  const auto study = generate_phantom(profile, rng, LesionCategory::M);
  write_study_raster(tmp.path / "s.rst", study);

  const auto data = read_raster(tmp.path / "s.rst");
  ASSERT_EQ(data.channels.size(), 3u);
  EXPECT_EQ(data.spacing, study.spacing);
  EXPECT_EQ(data.channels[0].data, study.dwi.data);
  EXPECT_EQ(data.channels[1].data, study.adc.data);
  EXPECT_EQ(mask_from_channel(data.channels[2]).data, study.gt_mask.data);

  const auto back = study_from_raster(data);
  EXPECT_EQ(back.gt_mask.data, study.gt_mask.data);
}

TEST(Raster, MaskRoundTrip) {
  TempDir tmp;
  const auto mask = testutil::make_mask(6, 5, {{0, 0}, {3, 2}, {5, 4}});
  write_mask_raster(tmp.path / "m.rst", mask, {2.0, 2.0, 6.0});
  const auto data = read_raster(tmp.path / "m.rst");
  ASSERT_EQ(data.channels.size(), 1u);
  EXPECT_EQ(mask_from_channel(data.channels[0]).data, mask.data);
  EXPECT_DOUBLE_EQ(data.spacing.slice_mm, 6.0);
}

TEST(Raster, RejectsGarbage) {
  TempDir tmp;
  std::ofstream(tmp.path / "junk.rst") << "???";
  EXPECT_THROW(read_raster(tmp.path / "junk.rst"), RasterError);
}

TEST(Manifest, WriteDatasetEmitsRastersAndManifest) {
  TempDir tmp;
  auto profiles = default_federation(7);
  profiles[0].n_train = 2;
  profiles[0].n_test = 1;
  const std::vector<CenterDataset> datasets{generate_center(profiles[0])};
  write_dataset(tmp.path, datasets, 7);

  std::ifstream in(tmp.path / "manifest.json");
  ASSERT_TRUE(in.good());
  json manifest = json::parse(in);
  EXPECT_EQ(manifest.at("master_seed").get<std::uint64_t>(), 7u);
  ASSERT_EQ(manifest.at("studies").size(), 3u);
  for (const auto& entry : manifest.at("studies")) {
    EXPECT_TRUE(fs::exists(tmp.path / entry.at("file").get<std::string>()));
  }
  const CenterProfile echo = manifest.at("centers").at(0).get<CenterProfile>();
  EXPECT_EQ(echo.center_id, profiles[0].center_id);
  EXPECT_EQ(echo.seed, profiles[0].seed);
}

TEST(ConfigJson, FederationConfigRoundTrip) {
  FederationConfig cfg;
  cfg.rounds = 4;
  cfg.rule = AggregationRule::beta_weighting(0.9);
  cfg.train.epochs_per_round = 2;
  cfg.train.learning_rate = 0.25;
  cfg.master_seed = 99;
  cfg.threads = 2;

  const json j = cfg;
  const auto back = j.get<FederationConfig>();
  EXPECT_EQ(back.rounds, 4);
  EXPECT_EQ(back.rule.name(), "beta");
  EXPECT_DOUBLE_EQ(back.rule.beta, 0.9);
  EXPECT_DOUBLE_EQ(back.train.learning_rate, 0.25);
  EXPECT_EQ(back.master_seed, 99u);
  EXPECT_TRUE(back.centers.empty());  // "default" sentinel survives
}

TEST(ConfigJson, ExplicitCentersRoundTrip) {
  FederationConfig cfg;
  cfg.centers = default_federation(5);
  const json j = cfg;
  const auto back = j.get<FederationConfig>();
  ASSERT_EQ(back.centers.size(), 14u);
  EXPECT_EQ(back.centers[5].n_train, cfg.centers[5].n_train);
  EXPECT_EQ(back.centers[5].seed, cfg.centers[5].seed);
}

TEST(ConfigJson, RejectsInvalid) {
  json j;
  j["rounds"] = 0;
  EXPECT_THROW(j.get<FederationConfig>(), std::invalid_argument);
  json r;
  r["name"] = "beta";
  r["beta"] = 1.5;
  EXPECT_THROW(r.get<AggregationRule>(), std::invalid_argument);
}
