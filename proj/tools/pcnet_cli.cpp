// pcnet command-line front end. Talks to the library only through pcnet.h.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcnet/pcnet.h"

namespace {

struct CString {
  char* p = nullptr;
  ~CString() { pcnet_free_string(p); }
  std::string str() const { return p ? p : ""; }
};

using ConfigPtr = std::unique_ptr<pcnet_config, decltype(&pcnet_config_free)>;

int report(pcnet_status status) {
  if (status != PCNET_OK) std::cerr << "pcnet: error: " << pcnet_last_error() << "\n";
  return static_cast<int>(status);
}

std::vector<std::string> config_keys() {
  CString keys;
  pcnet_config_keys(&keys.p);
  std::vector<std::string> out;
  std::istringstream in(keys.str());
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// --config FILE, one --<key> flag per config key and repeatable --set k=v.
// Flags apply after the file, --set last.
struct ConfigArgs {
  std::string file;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd, const std::vector<std::string>& keys, const std::vector<std::string>& skip = {}) {
    cmd->add_option("--config", file, "config file (key = value lines)");
    for (const auto& key : keys) {
      if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
      cmd->add_option("--" + key, flags[key], "config key " + key)
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    cmd->add_option("--set", sets, "override key=value (repeatable)");
  }

  pcnet_status build(ConfigPtr& cfg, CLI::App* cmd) const {
    pcnet_config* raw = nullptr;
    if (pcnet_status s = pcnet_config_new(&raw); s != PCNET_OK) return s;
    cfg.reset(raw);
    if (!file.empty()) {
      if (pcnet_status s = pcnet_config_load_file(raw, file.c_str()); s != PCNET_OK) return s;
    }
    for (const auto& [key, value] : flags) {
      if (cmd->count("--" + key) == 0) continue;
      if (pcnet_status s = pcnet_config_set(raw, key.c_str(), value.c_str()); s != PCNET_OK) return s;
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "pcnet: error: --set expects key=value, got '" << kv << "'\n";
        return PCNET_ERR_CONFIG;
      }
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      const std::string key = trim(kv.substr(0, eq));
      const std::string value = trim(kv.substr(eq + 1));
      if (pcnet_status s = pcnet_config_set(raw, key.c_str(), value.c_str()); s != PCNET_OK) return s;
    }
    return PCNET_OK;
  }
};

void print_run_dir(const CString& dir) {
  if (dir.p) std::cout << dir.str() << "\n";
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PCNet: pairwise comparison network for scene classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", pcnet_version());
  std::string out_dir;
  bool quiet = false;
  app.add_option("--out-dir", out_dir, "output root (default: $PCNET_OUT, else ./runs)");
  app.add_flag("-q,--quiet", quiet, "suppress progress lines");

  const auto keys = config_keys();

  ConfigArgs train_cfg;
  std::string resume;
  auto* train = app.add_subcommand("train", "train a model");
  train_cfg.attach(train, keys);
  train->add_option("--resume", resume, "checkpoint to resume from");

  std::string eval_ckpt, eval_dataset;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--dataset", eval_dataset, "'synth' or a dataset directory (default: the checkpoint's)");

  ConfigArgs pairs_cfg;
  std::string pairs_ckpt;
  auto* pairs = app.add_subcommand("pairs", "dump the pair assignment of one sampled batch");
  pairs_cfg.attach(pairs, keys);
  pairs->add_option("--checkpoint", pairs_ckpt, "checkpoint whose weights give the features");

  std::size_t synth_classes = 8, synth_per_class = 150, synth_size = 64;
  std::uint64_t synth_seed = 7;
  std::string synth_root;
  auto* synth = app.add_subcommand("synth", "write a synthetic texture dataset tree");
  synth->add_option("--classes", synth_classes, "number of classes")->capture_default_str();
  synth->add_option("--per-class", synth_per_class, "images per class")->capture_default_str();
  synth->add_option("--size", synth_size, "image side in pixels")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--out", synth_root, "destination directory")->required();

  ConfigArgs ablate_cfg;
  std::string ablate_rows = "all", ablate_resume;
  bool ablate_plain = false;
  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  ablate_cfg.attach(ablate, keys);
  ablate->add_option("--rows", ablate_rows, "'all' or comma-separated row-id prefixes")->capture_default_str();
  ablate->add_flag("--with-plain", ablate_plain, "add the no-attention single-branch row");
  ablate->add_option("--resume-dir", ablate_resume, "existing ablate-* directory to continue");

  std::size_t gc_instances = 20;
  std::uint64_t gc_seed = 1;
  std::string gc_csv;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gradcheck->add_option("--instances", gc_instances, "random instances per op")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "seed")->capture_default_str();
  gradcheck->add_option("--csv", gc_csv, "also write the table to this file");

  std::string attn_ckpt;
  std::size_t attn_i = 0, attn_j = 1;
  auto* attn = app.add_subcommand("export-attn", "export attention maps for a pair of test images");
  attn->add_option("--checkpoint", attn_ckpt, "checkpoint file")->required();
  attn->add_option("--i", attn_i, "first test item")->capture_default_str();
  attn->add_option("--j", attn_j, "second test item")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(PCNET_ERR_CONFIG);
  }

  if (!quiet) {
    pcnet_set_logger([](const char* line, void*) { std::cerr << line << "\n"; }, nullptr);
  }
  const char* root = opt(out_dir);
  CString run_dir;
  ConfigPtr cfg(nullptr, &pcnet_config_free);

  if (train->parsed()) {
    if (pcnet_status s = train_cfg.build(cfg, train); s != PCNET_OK) return report(s);
    const pcnet_status s = pcnet_train(cfg.get(), root, opt(resume), &run_dir.p);
    print_run_dir(run_dir);
    return report(s);
  }
  if (eval->parsed()) {
    double oa = 0;
    const pcnet_status s = pcnet_eval(eval_ckpt.c_str(), opt(eval_dataset), root, &oa, &run_dir.p);
    print_run_dir(run_dir);
    return report(s);
  }
  if (pairs->parsed()) {
    if (pcnet_status s = pairs_cfg.build(cfg, pairs); s != PCNET_OK) return report(s);
    const pcnet_status s = pcnet_pairs(cfg.get(), opt(pairs_ckpt), root, &run_dir.p);
    print_run_dir(run_dir);
    return report(s);
  }
  if (synth->parsed()) {
    return report(pcnet_synth(synth_classes, synth_per_class, synth_size, synth_seed, synth_root.c_str()));
  }
  if (ablate->parsed()) {
    if (pcnet_status s = ablate_cfg.build(cfg, ablate); s != PCNET_OK) return report(s);
    const pcnet_status s =
        pcnet_ablate(cfg.get(), ablate_rows.c_str(), ablate_plain ? 1 : 0, root, opt(ablate_resume), &run_dir.p);
    print_run_dir(run_dir);
    return report(s);
  }
  if (gradcheck->parsed()) {
    CString csv;
    int all_passed = 0;
    const pcnet_status s = pcnet_gradcheck(gc_instances, gc_seed, &csv.p, &all_passed);
    if (s != PCNET_OK) return report(s);
    std::cout << csv.str();
    if (!gc_csv.empty()) {
      std::ofstream f(gc_csv, std::ios::binary);
      f << csv.str();
      if (!f) {
        std::cerr << "pcnet: error: cannot write '" << gc_csv << "'\n";
        return PCNET_ERR_IO;
      }
    }
    if (!all_passed) {
      std::cerr << "pcnet: error: gradient check failed\n";
      return PCNET_ERR_NUMERIC;
    }
    return 0;
  }
  if (attn->parsed()) {
    const pcnet_status s = pcnet_export_attention(attn_ckpt.c_str(), attn_i, attn_j, root, &run_dir.p);
    print_run_dir(run_dir);
    return report(s);
  }
  return PCNET_ERR_CONFIG;
}
