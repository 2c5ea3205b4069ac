#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pcnet/config.hpp"
#include "pcnet/evaluation.hpp"
#include "pcnet/training.hpp"

namespace pcnet {

struct RunOptions {
  std::filesystem::path out_dir;  // metrics.csv, checkpoints, final.pcn
  std::filesystem::path resume_from;  // optional checkpoint
  Logger log;
};

struct RunResult {
  std::vector<EpochMetrics> history;
  std::filesystem::path final_checkpoint;
  double final_oa = 0;
  bool equivalence_ok = true;
};

// Full training run on prepared data. Rewrites out_dir/metrics.csv after
// every epoch, writes checkpoint_epochNNN.pcn every `checkpoint_every`
// epochs and final.pcn at the end. A resumed run must use the same config
// as the checkpoint (checkpoint_every excepted).
RunResult run_training(const TrainConfig& config, const PreparedData& data, const RunOptions& options);

// Names the first key whose value differs, or nullopt.
std::optional<std::string> config_difference(const TrainConfig& a, const TrainConfig& b);

// Output root: PCNET_OUT if set, else ./runs.
std::filesystem::path default_output_root();

// Exclusive advisory lock on <dir>/.pcnet.lock, held for the object's
// lifetime. Throws UsageError if another process holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

// <root>/<command>-YYYYmmdd-HHMMSS[-n], created fresh.
std::filesystem::path create_run_directory(const std::filesystem::path& root, const std::string& command);

// The resolved config text plus comment lines for the fingerprint and
// artifacts; itself a loadable config file.
std::string manifest_text(const TrainConfig& resolved, const std::string& fingerprint,
                          const std::vector<std::pair<std::string, std::string>>& artifacts);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace pcnet
