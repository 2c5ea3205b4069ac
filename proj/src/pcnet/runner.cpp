#include "pcnet/runner.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "pcnet/checkpoint.hpp"
#include "pcnet/errors.hpp"

namespace fs = std::filesystem;

namespace pcnet {

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::string> config_difference(const TrainConfig& a, const TrainConfig& b) {
  std::istringstream ia(a.to_text()), ib(b.to_text());
  std::string la, lb;
  while (std::getline(ia, la) && std::getline(ib, lb)) {
    if (la == lb) continue;
    const std::string key = la.substr(0, la.find(' '));
    if (key == "checkpoint_every") continue;
    return key;
  }
  return std::nullopt;
}

namespace {

template <typename T>
RunResult run_typed(const TrainConfig& config, const PreparedData& data, const RunOptions& options) {
  const Logger& log = options.log;
  TrainState<T> state = TrainState<T>::create(config, data.train.class_names);
  if (!options.resume_from.empty()) {
    state = load_checkpoint<T>(options.resume_from);
    if (auto key = config_difference(state.config, config)) {
      throw ConfigError("resume: checkpoint '" + options.resume_from.string() + "' was trained with a different '" +
                        *key + "'");
    }
    if (state.class_names != data.train.class_names) throw ConfigError("resume: checkpoint classes differ from the dataset");
    state.config = config;
    state.history.resize(std::min(state.history.size(), state.epoch));
    if (log) log("resumed from " + options.resume_from.string() + " at epoch " + std::to_string(state.epoch));
  }
  fs::create_directories(options.out_dir);
  const fs::path metrics_path = options.out_dir / "metrics.csv";
  write_text_file(metrics_path, metrics_csv(state.history));

  while (state.epoch < config.epochs) {
    EpochMetrics m = train_epoch(state, data.train, log);
    m.test_oa = evaluate(state.model, data.test).overall_accuracy;
    state.history.push_back(m);
    write_text_file(metrics_path, metrics_csv(state.history));
    if (log) {
      char line[200];
      std::snprintf(line, sizeof line, "epoch %zu/%zu lr %.5f L_c %.4f L_r %.4f L %.4f train_acc %.4f test_OA %.4f",
                    m.epoch, config.epochs, m.lr, m.lc, m.lr_loss, m.loss, m.train_acc, m.test_oa);
      log(line);
    }
    if (config.checkpoint_every && state.epoch % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch%03zu.pcn", state.epoch);
      save_checkpoint(state, options.out_dir / name);
    }
  }
  RunResult result;
  result.final_checkpoint = options.out_dir / "final.pcn";
  save_checkpoint(state, result.final_checkpoint);
  result.history = state.history;
  result.final_oa = state.history.empty() ? evaluate(state.model, data.test).overall_accuracy
                                          : state.history.back().test_oa;
  if (!config.eval_eca) {
    const EquivalenceResult eq = inference_equivalence_check(state.model, data.test);
    result.equivalence_ok = eq.equal;
    if (!eq.equal && log) log("inference equivalence check failed: " + eq.report);
  }
  return result;
}

}  // namespace

RunResult run_training(const TrainConfig& config, const PreparedData& data, const RunOptions& options) {
  config.validate();
  return config.precision == Precision::kFloat64 ? run_typed<double>(config, data, options)
                                                 : run_typed<float>(config, data, options);
}

fs::path default_output_root() {
  const char* env = std::getenv("PCNET_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path lock = dir / ".pcnet.lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file '" + lock.string() + "': " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw UsageError("output directory '" + dir.string() + "' is locked by another pcnet process");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::ftruncate(fd_, 0) == 0) {
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

fs::path create_run_directory(const fs::path& root, const std::string& command) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp;
  fs::create_directories(root);
  for (int n = 1;; ++n) {
    const fs::path dir = root / (n == 1 ? base : base + "-" + std::to_string(n));
    std::error_code ec;
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
  }
}

std::string manifest_text(const TrainConfig& resolved, const std::string& fingerprint,
                          const std::vector<std::pair<std::string, std::string>>& artifacts) {
  std::string out = "# pcnet run manifest: a loadable config (train --config <this file>)\n";
  out += "# dataset_sha256: " + fingerprint + "\n";
  for (const auto& [name, path] : artifacts) out += "# artifact " + name + ": " + path + "\n";
  out += resolved.to_text();
  return out;
}

}  // namespace pcnet
