#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "../support.hpp"
#include "siamreid/error.hpp"
#include "siamreid/metrics.hpp"
#include "siamreid/report.hpp"
#include "siamreid/rng.hpp"
#include "siamreid/synth.hpp"
#include "siamreid/trainer.hpp"

namespace siamreid {
namespace {

using testing::TempDir;

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new TempDir("trainer_data");
    generate_synthetic_dataset(data_->path() / "data", {4, 10, 3, 64});
    const auto catalog = select_view(scan_dataset(data_->path() / "data"), PhotoType::kTop);
    manifest_ = new SplitManifest(stratified_split(catalog, 1));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete data_;
  }

  static ExperimentConfig small_config() {
    ExperimentConfig c;
    c.epochs = 2;
    c.batch_size = 16;
    c.learning_rate = 1e-3;
    return c;
  }

  static TempDir* data_;
  static SplitManifest* manifest_;
};

TempDir* TrainerTest::data_ = nullptr;
SplitManifest* TrainerTest::manifest_ = nullptr;

TEST(ExperimentConfig, Validation) {
  ExperimentConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), Error);
  c.epochs = 1;
  c.loss.margin = 0.0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidMargin);
  }
}

TEST(ExperimentConfig, JsonAndHash) {
  ExperimentConfig c;
  c.learning_rate = 1e-3;
  c.augmentation = AugmentationKind::kRotate;
  EXPECT_EQ(experiment_config_from_json(to_json(c)), c);
  EXPECT_EQ(config_hash(c).size(), 16u);
  ExperimentConfig d = c;
  d.seed = 1;
  EXPECT_NE(config_hash(c), config_hash(d));
  EXPECT_EQ(config_hash(c), config_hash(experiment_config_from_json(to_json(c))));
}

TEST_F(TrainerTest, WritesArtifactsAndIsDeterministic) {
  TempDir out("train");
  TrainOptions opt;
  opt.run_dir = out / "a";
  const auto a = train(small_config(), *manifest_, opt);
  opt.run_dir = out / "b";
  const auto b = train(small_config(), *manifest_, opt);

  for (auto f : {"config.json", "history.csv", "metrics.json", "gallery.json", "result.json",
                 "checkpoint/metadata.json", "checkpoint/weights.srta"}) {
    EXPECT_TRUE(std::filesystem::exists(out / "a" / f)) << f;
  }
  ASSERT_EQ(a.history.epochs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.history.epochs[i].train_loss, b.history.epochs[i].train_loss);
    EXPECT_EQ(a.history.epochs[i].val_loss, b.history.epochs[i].val_loss);
  }
  EXPECT_EQ(a.metrics.f1_macro, b.metrics.f1_macro);
  EXPECT_EQ(a.metrics.confusion.counts(), b.metrics.confusion.counts());
  EXPECT_EQ(a.metrics.n_test, static_cast<int>(manifest_->test.size()));
  EXPECT_EQ(read_text(out / "a" / "history.csv").substr(0, 34), "epoch,train_loss,val_loss,seconds\n");
}

TEST_F(TrainerTest, CheckpointReproducesMetrics) {
  TempDir out("train_ckpt");
  TrainOptions opt;
  opt.run_dir = out.path();
  const auto r = train(small_config(), *manifest_, opt);
  const auto net = load_checkpoint(r.checkpoint_path);
  const auto gallery = load_gallery(out / "gallery.json");
  const auto again = evaluate(net, gallery, manifest_->test, 0.4);
  EXPECT_NEAR(again.f1_macro, r.metrics.f1_macro, 1e-6);
  EXPECT_NEAR(again.accuracy, r.metrics.accuracy, 1e-6);
}

TEST_F(TrainerTest, TrainingLossDecreases) {
  TempDir out("train_loss");
  auto c = small_config();
  c.epochs = 6;
  TrainOptions opt;
  opt.run_dir = out.path();
  int calls = 0;
  opt.on_epoch = [&](const EpochRecord&) { ++calls; };
  const auto r = train(c, *manifest_, opt);
  EXPECT_EQ(calls, 6);
  EXPECT_LT(r.history.epochs.back().train_loss, r.history.epochs.front().train_loss);
}

TEST_F(TrainerTest, TripletAndAugmentedRunsComplete) {
  TempDir out("train_var");
  auto c = small_config();
  c.epochs = 1;
  c.loss = LossConfig::defaults_for(LossKind::kTriplet);
  c.augmentation = AugmentationKind::kNoise;
  TrainOptions opt;
  opt.run_dir = out / "t";
  const auto r = train(c, *manifest_, opt);
  EXPECT_EQ(r.status, RunStatus::kOk);
  EXPECT_TRUE(std::isfinite(r.history.epochs[0].train_loss));
}

TEST_F(TrainerTest, DivergenceIsReported) {
  TempDir out("train_nan");
  auto c = small_config();
  c.learning_rate = 1e30;
  c.epochs = 5;
  TrainOptions opt;
  opt.run_dir = out.path();
  try {
    train(c, *manifest_, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
  EXPECT_TRUE(std::filesystem::exists(out / "history.csv"));
}

TEST_F(TrainerTest, EvaluateNeedsEveryTestIdentity) {
  TempDir out("train_eval");
  TrainOptions opt;
  opt.run_dir = out.path();
  auto c = small_config();
  c.epochs = 1;
  const auto r = train(c, *manifest_, opt);
  const auto net = load_checkpoint(r.checkpoint_path);
  auto anchors = select_anchors(manifest_->train);
  anchors.pop_back();
  const auto gallery = build_gallery(net, anchors);
  try {
    evaluate(net, gallery, manifest_->test, 0.4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingGalleryIdentity);
  }
  EXPECT_THROW(evaluate(net, gallery, std::vector<ImageRecord>{}, 0.4), Error);
}

TEST_F(TrainerTest, SweepIsolatesFailuresAndResumes) {
  TempDir out("sweep");
  auto base = small_config();
  base.epochs = 1;
  std::vector<ExperimentConfig> grid(3, base);
  grid[1].photo_type = PhotoType::kFront;  // the provider refuses this one
  grid[2].seed = 7;
  int provided = 0;
  const ManifestProvider provider = [&](const ExperimentConfig& c) {
    ++provided;
    if (c.photo_type == PhotoType::kFront) throw Error(ErrorCode::kEmptyDataset, "no front images");
    return *manifest_;
  };
  std::ostringstream log;
  SweepOptions opt{out.path(), {}, true, &log};
  const auto first = run_sweep(grid, provider, opt);
  ASSERT_EQ(first.size(), 3u);
  EXPECT_EQ(first[0].status, RunStatus::kOk);
  EXPECT_EQ(first[1].status, RunStatus::kFailed);
  EXPECT_EQ(first[2].status, RunStatus::kOk);

  std::string csv = read_text(out / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kResultsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find(",failed,"), std::string::npos);

  // the failed config is retried, the completed ones are skipped
  provided = 0;
  const auto second = run_sweep(grid, provider, opt);
  EXPECT_EQ(provided, 1);
  EXPECT_EQ(second[0].metrics.f1_macro, first[0].metrics.f1_macro);
  const std::string exec = read_text(out / "sweep.log");
  EXPECT_NE(exec.find("skip " + config_hash(grid[0])), std::string::npos);
  EXPECT_NE(exec.find("skip " + config_hash(grid[2])), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(run_directory(out.path(), grid[2]) / "checkpoint" / "metadata.json"));
}

TEST(SweepDefinition, CrossProductOrder) {
  const auto grid = parse_sweep_definition(
      R"({"learning_rate": [0.001, 0.0001], "loss": ["contrastive", "triplet"], "epochs": [1]})", {});
  ASSERT_EQ(grid.size(), 4u);
  EXPECT_EQ(grid[0].loss.kind, LossKind::kContrastive);
  EXPECT_EQ(grid[0].learning_rate, 0.001);
  EXPECT_EQ(grid[1].loss.kind, LossKind::kContrastive);
  EXPECT_EQ(grid[1].learning_rate, 0.0001);
  EXPECT_EQ(grid[2].loss.kind, LossKind::kTriplet);
  EXPECT_EQ(grid[3].loss.margin, 0.5);
}

TEST(SweepDefinition, Rejections) {
  auto code = [](const std::string& text) {
    try {
      parse_sweep_definition(text, {});
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(code(R"({"epochs": []})").find("epochs"), std::string::npos);
  EXPECT_NE(code(R"({"depth": [1]})").find("depth"), std::string::npos);
  EXPECT_NE(code(R"({"epochs": 3})").find("epochs"), std::string::npos);
  EXPECT_NE(code("{\n\"epochs\": [1,\n}").find("line 3"), std::string::npos);
  EXPECT_THROW(run_sweep({}, {}, {}), Error);
}

TEST(Report, RowsAndTopResults) {
  TempDir out("report");
  std::vector<ExperimentResult> results(8);
  for (int i = 0; i < 8; ++i) {
    results[i].config.seed = i;
    results[i].metrics.f1_macro = (i * 37 % 8) / 10.0;
    results[i].checkpoint_path = "runs/x/checkpoint";
    results[i].history.epochs = {{1, 2.0, 2.5, 0.1}, {2, 1.0, 1.5, 0.1}};
  }
  results[3].status = RunStatus::kFailed;  // f1 0.7
  results[3].metrics.f1_macro = 0.99;
  const auto art = write_report(results, out.path());
  const std::string csv = read_text(art.results_csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  const auto top = top_results(results, 5);
  ASSERT_EQ(top.size(), 5u);
  EXPECT_EQ(top[0].metrics.f1_macro, 0.6);  // 0.7 and 0.99 belong to the failed run
  for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(top[i - 1].metrics.f1_macro, top[i].metrics.f1_macro);
  const std::string top5 = read_text(art.top5_csv);
  EXPECT_EQ(std::count(top5.begin(), top5.end(), '\n'), 6);
  EXPECT_FALSE(art.plots.empty());
  for (const auto& p : art.plots) EXPECT_GT(std::filesystem::file_size(p), 100u);
  const std::string failed_row = results_csv_row(results[3]);
  EXPECT_NE(failed_row.find(",,,failed,"), std::string::npos);
}

}  // namespace
}  // namespace siamreid
