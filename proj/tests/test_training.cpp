#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <unistd.h>

#include "pcnet/checkpoint.hpp"
#include "pcnet/errors.hpp"
#include "pcnet/runner.hpp"
#include "pcnet/training.hpp"

using namespace pcnet;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.synth_classes = 4;
  c.synth_per_class = 9;
  c.input_size = 16;
  c.widths = {4, 8};
  c.eca_k = 3;
  c.classes_per_batch = 4;
  c.images_per_class = 2;
  c.epochs = 4;
  c.seed = 3;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pcnet_train_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

template <typename T>
std::vector<std::vector<T>> snapshot(const Model<T>& m) {
  std::vector<std::vector<T>> out;
  for (const auto& [name, p] : m.parameters()) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

}  // namespace

TEST(CosineLr, Endpoints) {
  EXPECT_EQ(cosine_lr(0, 100, 0.01, 0.0), 0.01);
  EXPECT_NEAR(cosine_lr(100, 100, 0.01, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(cosine_lr(100, 100, 0.01, 0.001), 0.001, 1e-12);
  EXPECT_NEAR(cosine_lr(50, 100, 0.01, 0.002), 0.006, 1e-12);
}

TEST(CosineLr, MonotoneAndValidated) {
  double prev = 1e9;
  for (std::size_t t = 0; t <= 37; ++t) {
    const double lr = cosine_lr(t, 37, 0.05, 0.001);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(cosine_lr(5, 4, 0.01, 0.0), UsageError);
  EXPECT_THROW(cosine_lr(0, 0, 0.01, 0.0), UsageError);
}

TEST(SgdStep, PlainAndFixedPoint) {
  std::vector<double> p{1.0, -2.0}, g{0.5, 0.25}, v{0, 0};
  sgd_step<double>(p, g, v, 0.1, 0.0, 0.0);
  EXPECT_EQ(p[0], 1.0 - 0.1 * 0.5);
  EXPECT_EQ(p[1], -2.0 - 0.1 * 0.25);

  std::vector<double> q{3.0, 4.0}, zero{0, 0}, vz{0, 0};
  sgd_step<double>(q, zero, vz, 0.1, 0.9, 0.0);
  EXPECT_EQ(q, (std::vector<double>{3.0, 4.0}));
}

TEST(SgdStep, TwoStepMomentumClosedForm) {
  const double lr = 0.01, g = 0.7, p0 = 0.3;
  std::vector<double> p{p0}, grad{g}, v{0};
  sgd_step<double>(p, grad, v, lr, 0.9, 0.0);
  sgd_step<double>(p, grad, v, lr, 0.9, 0.0);
  EXPECT_NEAR(p0 - p[0], lr * g * (1 + 1.9), 1e-12);
  EXPECT_NEAR(v[0], 1.9 * g, 1e-12);
}

TEST(SgdStep, CoupledWeightDecay) {
  std::vector<double> p{2.0}, g{0.0}, v{0};
  sgd_step<double>(p, g, v, 0.1, 0.0, 0.5);
  EXPECT_NEAR(p[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
}

TEST(SgdStep, SizeMismatch) {
  std::vector<double> p{1.0}, g{1.0, 2.0}, v{0};
  EXPECT_THROW(sgd_step<double>(p, g, v, 0.1, 0.9, 0.0), DimensionError);
}

TEST(Metrics, CsvRoundTrip) {
  EpochMetrics m{3, 0.005, 1.25, 0.5, 1.75, 10.0, 4.0, 0.875, 0.9};
  const std::string csv = metrics_csv({m});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,L_c,L_r,L,train_acc,test_OA,L_c_sum,L_r_sum");
  const EpochMetrics back = parse_metrics_row(metrics_csv_row(m));
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.lr, 0.005);
  EXPECT_EQ(back.loss, 1.75);
  EXPECT_EQ(back.test_oa, 0.9);
}

TEST(PrepareData, StandardizedTrainSplit) {
  const PreparedData d = prepare_data(tiny_train_config());
  EXPECT_EQ(d.train.size() + d.test.size(), 36u);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, sq = 0, n = 0;
    for (const auto& img : d.train.images) {
      const std::size_t hw = img.height * img.width;
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = img.pixels[c * hw + i];
        s += v;
        sq += v * v;
        n += 1;
      }
    }
    EXPECT_NEAR(s / n, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(sq / n - (s / n) * (s / n)), 1.0, 1e-3);
  }
}

TEST(ResolveConfig, CapsClassesPerBatch) {
  TrainConfig c = tiny_train_config();
  c.classes_per_batch = 30;
  const PreparedData d = prepare_data(c);
  std::string note;
  EXPECT_EQ(resolve_config(c, d, &note).classes_per_batch, 4u);
  EXPECT_FALSE(note.empty());
}

TEST(TrainEpoch, ZeroLearningRateLeavesParametersBitwise) {
  TrainConfig c = tiny_train_config();
  c.lr0 = 0;
  c.lr_min = 0;
  const PreparedData d = prepare_data(c);
  auto state = TrainState<float>::create(c, d.train.class_names);
  const auto before = snapshot(state.model);
  const EpochMetrics m = train_epoch(state, d.train);
  EXPECT_TRUE(std::isfinite(m.loss));
  EXPECT_EQ(snapshot(state.model), before);
}

TEST(TrainEpoch, DeterministicTraces) {
  const TrainConfig c = tiny_train_config();
  const PreparedData d = prepare_data(c);
  auto a = TrainState<float>::create(c, d.train.class_names);
  auto b = TrainState<float>::create(c, d.train.class_names);
  for (int e = 0; e < 2; ++e) {
    const EpochMetrics ma = train_epoch(a, d.train);
    const EpochMetrics mb = train_epoch(b, d.train);
    EXPECT_EQ(metrics_csv_row(ma), metrics_csv_row(mb));
  }
  EXPECT_EQ(snapshot(a.model), snapshot(b.model));
}

TEST(TrainEpoch, LambdaZeroRandomPairsLossDecreases) {
  TrainConfig c = tiny_train_config();
  c.lambda = 0;
  c.strategy = Strategy::kRandomRandom;
  c.synth_per_class = 24;
  c.images_per_class = 4;
  c.epochs = 3;
  const PreparedData d = prepare_data(c);
  auto s = TrainState<double>::create(c, d.train.class_names);
  std::vector<double> losses;
  for (int e = 0; e < 3; ++e) {
    const EpochMetrics m = train_epoch(s, d.train);
    ASSERT_TRUE(std::isfinite(m.loss));
    EXPECT_EQ(m.loss, m.lc);
    losses.push_back(m.loss);
  }
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Checkpoint, RoundTripBitwise) {
  const TrainConfig c = tiny_train_config();
  const PreparedData d = prepare_data(c);
  auto s = TrainState<double>::create(c, d.train.class_names);
  train_epoch(s, d.train);
  const fs::path dir = fresh_dir("ckpt");
  save_checkpoint(s, dir / "a.pcn");
  auto back = load_checkpoint<double>(dir / "a.pcn");
  EXPECT_EQ(back.epoch, s.epoch);
  EXPECT_EQ(back.class_names, s.class_names);
  EXPECT_EQ(snapshot(back.model), snapshot(s.model));
  ASSERT_EQ(back.velocity.size(), s.velocity.size());
  for (std::size_t i = 0; i < s.velocity.size(); ++i)
    EXPECT_TRUE(std::equal(s.velocity[i].data().begin(), s.velocity[i].data().end(), back.velocity[i].data().begin()));
  EXPECT_EQ(back.rng.serialize(), s.rng.serialize());
  EXPECT_EQ(back.config.to_text(), s.config.to_text());
  save_checkpoint(back, dir / "b.pcn");
  EXPECT_EQ(slurp(dir / "a.pcn"), slurp(dir / "b.pcn"));
  fs::remove_all(dir);
}

TEST(Checkpoint, LayoutAndCorruption) {
  const TrainConfig c = tiny_train_config();
  auto s = TrainState<float>::create(c, {"a", "b", "c", "d"});
  const auto bytes = encode_checkpoint(checkpoint_from_state(s));
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PCN1");
  EXPECT_EQ(bytes[4], kCheckpointVersion);

  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  EXPECT_THROW(decode_checkpoint(truncated), ChecksumError);
  auto tiny = std::vector<unsigned char>(bytes.begin(), bytes.begin() + 6);
  EXPECT_THROW(decode_checkpoint(tiny), ChecksumError);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), ChecksumError);

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), IoError);

  CheckpointFile future = decode_checkpoint(bytes);
  future.version = kCheckpointVersion + 1;
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(future)), VersionError);
}

TEST(Checkpoint, PrecisionConversion) {
  TrainConfig c = tiny_train_config();
  auto s = TrainState<float>::create(c, {"a", "b", "c", "d"});
  auto d = state_from_checkpoint<double>(checkpoint_from_state(s));
  const auto fs = snapshot(s.model);
  const auto ds = snapshot(d.model);
  ASSERT_EQ(fs.size(), ds.size());
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (std::size_t j = 0; j < fs[i].size(); ++j) EXPECT_EQ(static_cast<double>(fs[i][j]), ds[i][j]);
}

TEST(RunTraining, ResumeMatchesStraightThrough) {
  TrainConfig c = tiny_train_config();
  c.checkpoint_every = 2;
  const PreparedData d = prepare_data(c);
  const fs::path root = fresh_dir("resume");

  RunOptions straight;
  straight.out_dir = root / "straight";
  fs::create_directories(straight.out_dir);
  const RunResult a = run_training(c, d, straight);
  EXPECT_EQ(a.history.size(), 4u);
  EXPECT_TRUE(a.equivalence_ok);

  RunOptions resumed;
  resumed.out_dir = root / "resumed";
  resumed.resume_from = straight.out_dir / "checkpoint_epoch002.pcn";
  fs::create_directories(resumed.out_dir);
  run_training(c, d, resumed);

  EXPECT_EQ(slurp(straight.out_dir / "metrics.csv"), slurp(resumed.out_dir / "metrics.csv"));
  EXPECT_EQ(slurp(straight.out_dir / "final.pcn"), slurp(resumed.out_dir / "final.pcn"));

  TrainConfig other = c;
  other.lambda = 0.5;
  RunOptions bad = resumed;
  bad.out_dir = root / "bad";
  fs::create_directories(bad.out_dir);
  EXPECT_THROW(run_training(other, d, bad), ConfigError);
  fs::remove_all(root);
}

TEST(RunTraining, RepeatedRunsAreBitwiseIdentical) {
  TrainConfig c = tiny_train_config();
  c.epochs = 2;
  const PreparedData d = prepare_data(c);
  const fs::path root = fresh_dir("repeat");
  for (const char* name : {"one", "two"}) {
    RunOptions o;
    o.out_dir = root / name;
    fs::create_directories(o.out_dir);
    run_training(c, d, o);
  }
  EXPECT_EQ(slurp(root / "one" / "metrics.csv"), slurp(root / "two" / "metrics.csv"));
  EXPECT_EQ(slurp(root / "one" / "final.pcn"), slurp(root / "two" / "final.pcn"));
  fs::remove_all(root);
}

TEST(RunDirectories, LockAndUniqueNames) {
  const fs::path root = fresh_dir("lock");
  {
    DirectoryLock lock(root);
    EXPECT_THROW(DirectoryLock second(root), UsageError);
  }
  DirectoryLock again(root);
  const fs::path a = create_run_directory(root, "train");
  const fs::path b = create_run_directory(root, "train");
  EXPECT_NE(a, b);
  EXPECT_TRUE(fs::is_directory(a));
  EXPECT_EQ(a.filename().string().rfind("train-", 0), 0u);
  fs::remove_all(root);
}

TEST(RunDirectories, OutputRootFromEnvironment) {
  ::setenv("PCNET_OUT", "/tmp/pcnet_env_root", 1);
  EXPECT_EQ(default_output_root(), fs::path("/tmp/pcnet_env_root"));
  ::unsetenv("PCNET_OUT");
  EXPECT_EQ(default_output_root(), fs::path("runs"));
}
