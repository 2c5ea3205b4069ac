#include "pcnet/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pcnet/errors.hpp"

namespace fs = std::filesystem;

namespace pcnet {

namespace {

TrainConfig pcnet_row(const TrainConfig& base) {
  TrainConfig c = base;
  c.architecture = Architecture::kMulti;
  c.representation = Representation::kBoth;
  c.objective = Objective::kLcLr;
  c.attention = true;
  return c;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string memo_key(const TrainConfig& c) {
  TrainConfig k = c;
  k.checkpoint_every = 0;
  return k.to_text();
}

fs::path latest_checkpoint(const fs::path& dir) {
  fs::path best;
  if (!fs::is_directory(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("checkpoint_epoch", 0) == 0 && e.path().extension() == ".pcn" && name > best.filename().string())
      best = e.path();
  }
  return best;
}

}  // namespace

std::vector<AblationRow> default_grid(const TrainConfig& base, bool with_plain) {
  std::vector<AblationRow> rows;
  TrainConfig baseline = base;
  baseline.architecture = Architecture::kSingle;
  baseline.representation = Representation::kSelf;
  baseline.objective = Objective::kLc;
  baseline.attention = true;
  rows.push_back({"T3-Baseline", baseline});

  const std::pair<const char*, Representation> multi[] = {
      {"T3-Multi1", Representation::kSelf}, {"T3-Multi2", Representation::kMutual}, {"T3-Multi3", Representation::kBoth}};
  for (const auto& [id, rep] : multi) {
    TrainConfig c = pcnet_row(base);
    c.representation = rep;
    c.objective = Objective::kLc;
    rows.push_back({id, c});
  }
  rows.push_back({"T3-PCNet", pcnet_row(base)});

  for (Metric m : {Metric::kRandom, Metric::kCosine, Metric::kEuclidean}) {
    TrainConfig c = pcnet_row(base);
    c.metric = m;
    c.strategy = Strategy::kSS;
    rows.push_back({"T4-" + to_string(m), c});
  }
  for (Strategy s : {Strategy::kRandomRandom, Strategy::kSRandom, Strategy::kSD, Strategy::kSS}) {
    TrainConfig c = pcnet_row(base);
    c.metric = Metric::kEuclidean;
    c.strategy = s;
    rows.push_back({"T5-" + to_string(s), c});
  }
  for (double lambda : {0.5, 0.8, 1.0, 1.2, 1.5}) {
    TrainConfig c = pcnet_row(base);
    c.lambda = lambda;
    char id[40];
    std::snprintf(id, sizeof id, "T6-lambda-%.1f", lambda);
    rows.push_back({id, c});
  }
  if (with_plain) {
    TrainConfig plain = baseline;
    plain.attention = false;
    rows.push_back({"T3-Plain", plain});
  }
  return rows;
}

std::vector<AblationRow> filter_grid(const std::vector<AblationRow>& grid, const std::string& selection) {
  if (selection.empty() || selection == "all") return grid;
  std::vector<std::string> prefixes;
  std::stringstream ss(selection);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) prefixes.push_back(item);
  std::vector<AblationRow> out;
  for (const auto& row : grid)
    for (const auto& p : prefixes)
      if (row.row_id.rfind(p, 0) == 0) {
        out.push_back(row);
        break;
      }
  if (out.empty()) throw ConfigError("ablation: selection '" + selection + "' matches no grid row");
  return out;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid, const PreparedData& data,
                                         const fs::path& out_dir, const Logger& log) {
  std::vector<AblationResult> results;
  std::map<std::string, std::size_t> done;  // memo key -> index into results
  for (const AblationRow& row : grid) {
    AblationResult r;
    r.row = row;
    r.row.config = resolve_config(row.config, data);
    const std::string key = memo_key(r.row.config);
    if (auto it = done.find(key); it != done.end() && results[it->second].status.rfind("ok", 0) == 0) {
      const AblationResult& src = results[it->second];
      r.oa = src.oa;
      r.final_lc = src.final_lc;
      r.final_lr = src.final_lr;
      r.history = src.history;
      r.status = "ok:same-as=" + src.row.row_id;
      results.push_back(std::move(r));
      continue;
    }
    const fs::path dir = out_dir / "rows" / row.row_id;
    const fs::path result_file = dir / "result.txt";
    try {
      if (fs::exists(result_file) && read_text_file(dir / "config.txt") == r.row.config.to_text()) {
        std::istringstream in(read_text_file(dir / "metrics.csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line))
          if (!line.empty()) r.history.push_back(parse_metrics_row(line));
        if (log) log("row " + row.row_id + ": reusing finished run in " + dir.string());
      } else {
        write_text_file(dir / "config.txt", r.row.config.to_text());
        RunOptions opts;
        opts.out_dir = dir;
        opts.resume_from = latest_checkpoint(dir);
        opts.log = [&](const std::string& msg) {
          if (log) log(row.row_id + ": " + msg);
        };
        r.history = run_training(r.row.config, data, opts).history;
      }
      if (r.history.empty()) throw IoError("row produced no epochs");
      r.oa = r.history.back().test_oa;
      r.final_lc = r.history.back().lc;
      r.final_lr = r.history.back().lr_loss;
      r.status = std::isfinite(r.oa) ? "ok" : "failed:non-finite OA";
      write_text_file(result_file, "OA = " + fmt(r.oa) + "\n");
    } catch (const std::exception& e) {
      std::string reason = e.what();
      for (char& ch : reason)
        if (ch == ',' || ch == '\n') ch = ';';
      r.status = "failed:" + reason;
      r.oa = std::nan("");
      if (log) log("row " + row.row_id + " failed: " + e.what());
    }
    done.emplace(key, results.size());
    results.push_back(std::move(r));
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::string out = "row_id,architecture,representation,objective,metric,strategy,lambda,OA,final_Lc,final_Lr,status\n";
  for (const auto& r : results) {
    const TrainConfig& c = r.row.config;
    const bool single = c.architecture == Architecture::kSingle;
    const double lambda = c.objective == Objective::kLcLr ? c.lambda : 0.0;
    out += r.row.row_id + "," + to_string(c.architecture) + "," + to_string(c.representation) + "," +
           to_string(c.objective) + "," + (single ? "-" : to_string(c.metric)) + "," +
           (single ? "-" : to_string(c.strategy)) + "," + fmt(lambda) + "," + fmt(r.oa) + "," + fmt(r.final_lc) +
           "," + fmt(r.final_lr) + "," + r.status + "\n";
  }
  return out;
}

}  // namespace pcnet
