#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "pcnet/pcnet.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  pcnet_free_string(s);
  return out;
}

class CApi : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("pcnet_capi_" + std::to_string(::getpid()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    ASSERT_EQ(pcnet_config_new(&cfg_), PCNET_OK);
    const char* kv[][2] = {{"synth_classes", "4"}, {"synth_per_class", "9"}, {"input_size", "16"},
                           {"widths", "4,8"},      {"eca_k", "3"},           {"classes_per_batch", "4"},
                           {"images_per_class", "2"}, {"epochs", "2"},       {"seed", "11"}};
    for (auto& [k, v] : kv) ASSERT_EQ(pcnet_config_set(cfg_, k, v), PCNET_OK) << k;
  }
  void TearDown() override {
    pcnet_config_free(cfg_);
    fs::remove_all(root_);
  }

  std::string train() {
    char* dir = nullptr;
    EXPECT_EQ(pcnet_train(cfg_, root_.c_str(), nullptr, &dir), PCNET_OK) << pcnet_last_error();
    return take(dir);
  }

  fs::path root_;
  pcnet_config* cfg_ = nullptr;
};

}  // namespace

TEST_F(CApi, VersionAndKeys) {
  EXPECT_NE(std::string(pcnet_version()), "");
  char* keys = nullptr;
  ASSERT_EQ(pcnet_config_keys(&keys), PCNET_OK);
  const std::string k = take(keys);
  EXPECT_NE(k.find("lambda\n"), std::string::npos);
  EXPECT_NE(k.find("strategy\n"), std::string::npos);
}

TEST_F(CApi, ConfigGetSetAndErrors) {
  char* v = nullptr;
  ASSERT_EQ(pcnet_config_get(cfg_, "widths", &v), PCNET_OK);
  EXPECT_EQ(take(v), "4,8");
  EXPECT_EQ(pcnet_config_set(cfg_, "bogus", "1"), PCNET_ERR_CONFIG);
  EXPECT_NE(std::string(pcnet_last_error()).find("bogus"), std::string::npos);
  EXPECT_EQ(pcnet_config_set(cfg_, "lambda", "abc"), PCNET_ERR_CONFIG);
  EXPECT_EQ(pcnet_config_set(nullptr, "lambda", "1"), PCNET_ERR_CONFIG);
  EXPECT_EQ(pcnet_config_validate(cfg_), PCNET_OK);
  ASSERT_EQ(pcnet_config_set(cfg_, "eca_k", "4"), PCNET_OK);
  EXPECT_EQ(pcnet_config_validate(cfg_), PCNET_ERR_CONFIG);
  EXPECT_EQ(pcnet_config_load_file(cfg_, "/nonexistent/pcnet.cfg"), PCNET_ERR_IO);
}

TEST_F(CApi, OutputRootFromEnvironment) {
  ::setenv("PCNET_OUT", "/tmp/pcnet_capi_env", 1);
  char* p = nullptr;
  ASSERT_EQ(pcnet_default_output_root(&p), PCNET_OK);
  EXPECT_EQ(take(p), "/tmp/pcnet_capi_env");
  ::unsetenv("PCNET_OUT");
}

TEST_F(CApi, TrainEvalPredictRoundTrip) {
  const fs::path run = train();
  for (const char* f : {"manifest.txt", "split.csv", "metrics.csv", "final.pcn"}) EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_TRUE(fs::exists(root_ / ".pcnet.lock"));
  EXPECT_EQ(run.parent_path(), root_);

  const std::string ckpt = (run / "final.pcn").string();
  double oa = -1;
  char* eval_dir = nullptr;
  ASSERT_EQ(pcnet_eval(ckpt.c_str(), nullptr, root_.c_str(), &oa, &eval_dir), PCNET_OK) << pcnet_last_error();
  const fs::path ed = take(eval_dir);
  EXPECT_GE(oa, 0.0);
  EXPECT_LE(oa, 1.0);
  EXPECT_TRUE(fs::exists(ed / "confusion.csv"));

  pcnet_model* model = nullptr;
  ASSERT_EQ(pcnet_model_load(ckpt.c_str(), &model), PCNET_OK);
  size_t classes = 0, size = 0, params = 0;
  pcnet_model_num_classes(model, &classes);
  pcnet_model_input_size(model, &size);
  pcnet_model_num_parameters(model, &params);
  EXPECT_EQ(classes, 4u);
  EXPECT_EQ(size, 16u);
  EXPECT_GT(params, 0u);
  std::vector<float> img(3 * 16 * 16, 0.25f);
  std::vector<double> probs(4);
  ASSERT_EQ(pcnet_model_predict(model, img.data(), 3, 16, 16, probs.data()), PCNET_OK);
  double s = 0;
  for (double p : probs) s += p;
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_EQ(pcnet_model_predict(model, img.data(), 3, 8, 8, probs.data()), PCNET_ERR_CONFIG);
  pcnet_model_free(model);

  char* attn = nullptr;
  ASSERT_EQ(pcnet_export_attention(ckpt.c_str(), 0, 1, root_.c_str(), &attn), PCNET_OK) << pcnet_last_error();
  EXPECT_TRUE(fs::exists(fs::path(take(attn)) / "pair.png"));
  EXPECT_EQ(pcnet_export_attention(ckpt.c_str(), 0, 100000, root_.c_str(), nullptr), PCNET_ERR_CONFIG);

  char* pairs = nullptr;
  ASSERT_EQ(pcnet_pairs(cfg_, ckpt.c_str(), root_.c_str(), &pairs), PCNET_OK) << pcnet_last_error();
  EXPECT_TRUE(fs::exists(fs::path(take(pairs)) / "pairs.csv"));
}

TEST_F(CApi, TrainingIsReproducible) {
  const fs::path a = train(), b = train();
  EXPECT_NE(a, b);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const char* f : {"metrics.csv", "split.csv", "final.pcn", "manifest.txt"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST_F(CApi, IoFailures) {
  fs::create_directories(root_);
  const fs::path junk = root_ / "junk.pcn";
  std::ofstream(junk) << "definitely not a checkpoint";
  pcnet_model* m = nullptr;
  EXPECT_EQ(pcnet_model_load(junk.c_str(), &m), PCNET_ERR_IO);
  EXPECT_EQ(pcnet_model_load("/nonexistent/x.pcn", &m), PCNET_ERR_IO);
  EXPECT_EQ(pcnet_config_set(cfg_, "dataset", "/nonexistent/pcnet-data"), PCNET_OK);
  EXPECT_EQ(pcnet_train(cfg_, root_.c_str(), nullptr, nullptr), PCNET_ERR_CONFIG);
}

TEST_F(CApi, SynthTree) {
  const fs::path dst = root_ / "synth";
  ASSERT_EQ(pcnet_synth(4, 2, 16, 3, dst.c_str()), PCNET_OK) << pcnet_last_error();
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dst)) files += e.is_regular_file();
  EXPECT_EQ(files, 8u);
  EXPECT_EQ(pcnet_synth(4, 2, 16, 3, dst.c_str()), PCNET_ERR_CONFIG);
  EXPECT_EQ(pcnet_synth(2, 2, 16, 3, (root_ / "other").c_str()), PCNET_ERR_CONFIG);
}

TEST_F(CApi, Gradcheck) {
  char* csv = nullptr;
  int ok = 0;
  ASSERT_EQ(pcnet_gradcheck(2, 3, &csv, &ok), PCNET_OK);
  EXPECT_EQ(ok, 1);
  EXPECT_NE(take(csv).find('\n'), std::string::npos);
}
