#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcnet/config.hpp"
#include "pcnet/runner.hpp"

namespace pcnet {

struct AblationRow {
  std::string row_id;  // e.g. "T3-PCNet", "T4-cosine", "T6-lambda-0.8"
  TrainConfig config;
};

// Component comparison (5 rows), selection metric (3), pairing strategy
// (4) and the lambda sweep (5), all derived from `base`. `with_plain`
// appends a single-branch row without any attention.
std::vector<AblationRow> default_grid(const TrainConfig& base, bool with_plain = false);

// Rows whose id starts with any of the comma-separated prefixes
// ("T3", "T6-lambda-1.0", "T3-Baseline,T3-PCNet", ...). "all" keeps every row.
std::vector<AblationRow> filter_grid(const std::vector<AblationRow>& grid, const std::string& selection);

struct AblationResult {
  AblationRow row;
  double oa = 0;
  double final_lc = 0;
  double final_lr = 0;
  std::string status;  // "ok", "ok:same-as=<row>", or "failed:<reason>"
  std::vector<EpochMetrics> history;
};

// One full training run per row on the shared prepared data. Each row lives
// in out_dir/rows/<row_id>; a row with a result.txt there is not rerun, and
// rows whose resolved configs coincide run once. A failing row is recorded
// and the others proceed.
std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid, const PreparedData& data,
                                         const std::filesystem::path& out_dir, const Logger& log = {});

// row_id,architecture,representation,objective,metric,strategy,lambda,OA,final_Lc,final_Lr,status
std::string ablation_csv(const std::vector<AblationResult>& results);

}  // namespace pcnet
