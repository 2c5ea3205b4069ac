#include "pcnet/pcnet.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <new>
#include <optional>
#include <string>
#include <variant>

#include "pcnet/ablation.hpp"
#include "pcnet/checkpoint.hpp"
#include "pcnet/errors.hpp"
#include "pcnet/gradcheck.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/runner.hpp"

namespace fs = std::filesystem;
using namespace pcnet;

struct pcnet_config {
  TrainConfig config;
};

struct pcnet_model {
  TrainConfig config;
  std::vector<std::string> class_names;
  std::variant<Model<float>, Model<double>> model;
};

namespace {

thread_local std::string g_last_error;
std::mutex g_log_mutex;
pcnet_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void emit_log(const std::string& line) {
  std::lock_guard lock(g_log_mutex);
  if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** out, const std::string& value) {
  if (out) *out = dup_string(value);
}

template <typename F>
pcnet_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return PCNET_OK;
  } catch (const pcnet::Error& e) {
    g_last_error = e.what();
    switch (e.category()) {
      case ErrorCategory::kUsage: return PCNET_ERR_CONFIG;
      case ErrorCategory::kNumerical: return PCNET_ERR_NUMERIC;
      case ErrorCategory::kIo: return PCNET_ERR_IO;
    }
    return PCNET_ERR_INTERNAL;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return PCNET_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return PCNET_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error: unknown exception";
    return PCNET_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw UsageError(std::string(what) + " must not be NULL");
}

fs::path output_root(const char* out_root) { return out_root && *out_root ? fs::path(out_root) : default_output_root(); }

pcnet_model load_model(const fs::path& checkpoint) {
  const CheckpointFile file = read_checkpoint(checkpoint);
  const CheckpointInfo info = checkpoint_info(file);
  pcnet_model m{info.config, info.class_names, Model<float>{}};
  if (info.config.precision == Precision::kFloat64) {
    m.model = state_from_checkpoint<double>(file).model;
  } else {
    m.model = state_from_checkpoint<float>(file).model;
  }
  return m;
}

// Prepared data for a checkpoint, optionally on another dataset; the class
// count must match the checkpoint.
PreparedData data_for(const pcnet_model& m, const char* dataset) {
  TrainConfig cfg = m.config;
  if (dataset && *dataset) cfg.dataset = dataset;
  PreparedData data = prepare_data(cfg);
  if (data.train.num_classes() != m.class_names.size()) {
    throw ConfigError("checkpoint has " + std::to_string(m.class_names.size()) + " classes but dataset '" +
                      cfg.dataset + "' has " + std::to_string(data.train.num_classes()));
  }
  return data;
}

}  // namespace

extern "C" {

const char* pcnet_version(void) { return "1.0.0"; }
const char* pcnet_last_error(void) { return g_last_error.c_str(); }
void pcnet_free_string(char* s) { std::free(s); }

void pcnet_set_logger(pcnet_log_fn fn, void* user) {
  std::lock_guard lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

pcnet_status pcnet_config_new(pcnet_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new pcnet_config{};
  });
}

void pcnet_config_free(pcnet_config* cfg) { delete cfg; }

pcnet_status pcnet_config_load_file(pcnet_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    cfg->config = TrainConfig::from_file(path);
  });
}

pcnet_status pcnet_config_set(pcnet_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->config.set(key, value);
  });
}

pcnet_status pcnet_config_get(const pcnet_config* cfg, const char* key, char** value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    const std::string prefix = std::string(key) + " = ";
    const std::string text = cfg->config.to_text();
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t end = text.find('\n', pos);
      const std::string line = text.substr(pos, end - pos);
      if (line.rfind(prefix, 0) == 0) {
        set_out(value, line.substr(prefix.size()));
        return;
      }
      pos = end + 1;
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  });
}

pcnet_status pcnet_config_validate(const pcnet_config* cfg) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->config.validate();
  });
}

pcnet_status pcnet_config_to_text(const pcnet_config* cfg, char** text) {
  return guarded([&] {
    require(cfg, "cfg");
    set_out(text, cfg->config.to_text());
  });
}

pcnet_status pcnet_config_keys(char** keys) {
  return guarded([&] {
    std::string out;
    for (const auto& k : config_keys()) out += k + "\n";
    set_out(keys, out);
  });
}

pcnet_status pcnet_default_output_root(char** path) {
  return guarded([&] { set_out(path, default_output_root().string()); });
}

pcnet_status pcnet_train(const pcnet_config* cfg, const char* out_root, const char* resume_checkpoint,
                         char** run_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->config.validate();
    if (cfg->config.dataset != "synth" && !fs::is_directory(cfg->config.dataset)) {
      throw ConfigError("config key 'dataset': '" + cfg->config.dataset + "' is neither 'synth' nor a directory");
    }
    const PreparedData data = prepare_data(cfg->config);
    std::string note;
    const TrainConfig resolved = resolve_config(cfg->config, data, &note);
    if (!note.empty()) emit_log("note: " + note);

    const fs::path root = output_root(out_root);
    DirectoryLock lock(root);
    const fs::path dir = create_run_directory(root, "train");
    set_out(run_dir, dir.string());
    write_text_file(dir / "manifest.txt",
                    manifest_text(resolved, data.fingerprint,
                                  {{"metrics", "metrics.csv"},
                                   {"split", "split.csv"},
                                   {"final_checkpoint", "final.pcn"}}));
    write_text_file(dir / "split.csv", split_manifest_csv(data.train, data.test));
    emit_log("run directory " + dir.string());

    RunOptions opts;
    opts.out_dir = dir;
    if (resume_checkpoint && *resume_checkpoint) opts.resume_from = resume_checkpoint;
    opts.log = emit_log;
    const RunResult result = run_training(resolved, data, opts);
    char line[128];
    std::snprintf(line, sizeof line, "final test OA %.6f", result.final_oa);
    emit_log(line);
  });
}

pcnet_status pcnet_eval(const char* checkpoint, const char* dataset, const char* out_root, double* overall_accuracy,
                        char** run_dir) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    const pcnet_model m = load_model(checkpoint);
    const PreparedData data = data_for(m, dataset);
    const EvalReport report =
        std::visit([&](const auto& model) { return evaluate(model, data.test); }, m.model);
    if (overall_accuracy) *overall_accuracy = report.overall_accuracy;

    const fs::path root = output_root(out_root);
    DirectoryLock lock(root);
    const fs::path dir = create_run_directory(root, "eval");
    set_out(run_dir, dir.string());
    write_text_file(dir / "confusion.csv", report.confusion_csv(m.class_names));
    write_text_file(dir / "summary.txt", report.summary() + "\n");
    TrainConfig cfg = m.config;
    if (dataset && *dataset) cfg.dataset = dataset;
    write_text_file(dir / "manifest.txt",
                    manifest_text(cfg, data.fingerprint,
                                  {{"checkpoint", fs::absolute(checkpoint).string()},
                                   {"confusion", "confusion.csv"}}));
    emit_log(report.summary());
  });
}

pcnet_status pcnet_pairs(const pcnet_config* cfg, const char* checkpoint, const char* out_root, char** run_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    TrainConfig config = cfg->config;
    std::optional<pcnet_model> loaded;
    if (checkpoint && *checkpoint) {
      loaded = load_model(checkpoint);
      // Weights and data come from the checkpoint; selection settings from cfg.
      config.dataset = loaded->config.dataset;
      config.synth_classes = loaded->config.synth_classes;
      config.synth_per_class = loaded->config.synth_per_class;
      config.input_size = loaded->config.input_size;
      config.widths = loaded->config.widths;
      config.precision = loaded->config.precision;
    }
    config.validate();
    const PreparedData data = prepare_data(config);
    const TrainConfig resolved = resolve_config(config, data);
    if (loaded && loaded->class_names.size() != data.train.num_classes()) {
      throw ConfigError("checkpoint class count does not match the dataset");
    }
    if (!loaded) {
      RngStreams streams(resolved.seed);
      const ModelConfig mc = resolved.model_config(data.train.num_classes());
      if (resolved.precision == Precision::kFloat64) {
        loaded = pcnet_model{resolved, data.train.class_names, Model<double>::create(mc, streams.stream("init"))};
      } else {
        loaded = pcnet_model{resolved, data.train.class_names, Model<float>::create(mc, streams.stream("init"))};
      }
    }
    RngStreams streams(resolved.seed);
    const BatchSample batch =
        sample_batch(data.train.labels, {resolved.classes_per_batch, resolved.images_per_class, resolved.seed},
                     streams.stream("sampler"));
    std::vector<const Image*> images;
    for (std::size_t idx : batch.indices) images.push_back(&data.train.images[idx]);
    const PairAssignment pairs = std::visit(
        [&]<typename T>(const Model<T>& model) {
          NoGradScope<T> no_grad;
          const auto pooled = global_average_pool(model.backbone.forward(images_to_tensor<T>(images)));
          return select_pairs(pooled, batch.labels, resolved.metric, resolved.strategy, streams.stream("selection"));
        },
        loaded->model);

    const fs::path root = output_root(out_root);
    DirectoryLock lock(root);
    const fs::path dir = create_run_directory(root, "pairs");
    set_out(run_dir, dir.string());
    write_text_file(dir / "pairs.csv", pairs_to_csv(pairs, batch.indices));
    std::string listing = "id,label,source\n";
    for (std::size_t idx : batch.indices) {
      listing += std::to_string(idx) + "," + std::to_string(data.train.labels[idx]) + "," + data.train.sources[idx] + "\n";
    }
    write_text_file(dir / "batch.csv", listing);
    write_text_file(dir / "manifest.txt",
                    manifest_text(resolved, data.fingerprint, {{"pairs", "pairs.csv"}}));
    emit_log("wrote " + std::to_string(pairs.size()) + " anchors to " + (dir / "pairs.csv").string());
  });
}

pcnet_status pcnet_synth(size_t num_classes, size_t per_class, size_t size, uint64_t seed, const char* root) {
  return guarded([&] {
    require(root, "root");
    if (fs::exists(root) && !fs::is_empty(root)) {
      throw UsageError("synth: output directory '" + std::string(root) + "' exists and is not empty");
    }
    const Dataset ds = generate_synthetic(num_classes, per_class, size, size, seed);
    write_dataset_tree(ds, root);
    emit_log("wrote " + std::to_string(ds.size()) + " images in " + std::to_string(ds.num_classes()) +
             " classes to " + root);
  });
}

pcnet_status pcnet_ablate(const pcnet_config* base, const char* rows, int with_plain, const char* out_root,
                          const char* resume_dir, char** run_dir) {
  return guarded([&] {
    require(base, "base");
    base->config.validate();
    const auto grid = filter_grid(default_grid(base->config, with_plain != 0), rows ? rows : "all");
    const PreparedData data = prepare_data(base->config);

    const fs::path root = resume_dir && *resume_dir ? fs::path(resume_dir).parent_path() : output_root(out_root);
    DirectoryLock lock(root);
    fs::path dir;
    if (resume_dir && *resume_dir) {
      dir = resume_dir;
      if (!fs::is_directory(dir)) throw UsageError("ablate: resume directory '" + dir.string() + "' does not exist");
    } else {
      dir = create_run_directory(root, "ablate");
    }
    set_out(run_dir, dir.string());
    write_text_file(dir / "manifest.txt",
                    manifest_text(base->config, data.fingerprint, {{"ablation", "ablation.csv"}}));
    write_text_file(dir / "split.csv", split_manifest_csv(data.train, data.test));
    const auto results = run_ablation(grid, data, dir, emit_log);
    write_text_file(dir / "ablation.csv", ablation_csv(results));
    emit_log("wrote " + std::to_string(results.size()) + " rows to " + (dir / "ablation.csv").string());
  });
}

pcnet_status pcnet_gradcheck(size_t instances, uint64_t seed, char** csv, int* all_passed) {
  return guarded([&] {
    GradcheckOptions opt;
    opt.instances = instances;
    opt.seed = seed;
    const auto cases = run_gradcheck(opt);
    bool ok = true;
    for (const auto& c : cases) ok = ok && c.passed();
    if (all_passed) *all_passed = ok ? 1 : 0;
    set_out(csv, gradcheck_csv(cases));
  });
}

pcnet_status pcnet_export_attention(const char* checkpoint, size_t i, size_t j, const char* out_root,
                                    char** run_dir) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    const pcnet_model m = load_model(checkpoint);
    const PreparedData data = data_for(m, nullptr);
    if (i >= data.test.size() || j >= data.test.size()) {
      throw UsageError("export-attn: item index out of range (test split has " + std::to_string(data.test.size()) +
                       " items)");
    }
    const AttentionMaps maps = std::visit(
        [&](const auto& model) { return attention_maps(model, data.test.images[i], data.test.images[j]); }, m.model);
    const fs::path root = output_root(out_root);
    DirectoryLock lock(root);
    const fs::path dir = create_run_directory(root, "export-attn");
    set_out(run_dir, dir.string());
    write_attention_maps(maps, dir);
    write_text_file(dir / "pair.txt", "image1," + data.test.sources[i] + "\nimage2," + data.test.sources[j] + "\n");
    emit_log("wrote attention maps to " + dir.string());
  });
}

pcnet_status pcnet_model_load(const char* checkpoint, pcnet_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    *out = new pcnet_model(load_model(checkpoint));
  });
}

void pcnet_model_free(pcnet_model* model) { delete model; }

pcnet_status pcnet_model_num_classes(const pcnet_model* model, size_t* n) {
  return guarded([&] {
    require(model, "model");
    require(n, "n");
    *n = model->class_names.size();
  });
}

pcnet_status pcnet_model_input_size(const pcnet_model* model, size_t* size) {
  return guarded([&] {
    require(model, "model");
    require(size, "size");
    *size = model->config.input_size;
  });
}

pcnet_status pcnet_model_num_parameters(const pcnet_model* model, size_t* n) {
  return guarded([&] {
    require(model, "model");
    require(n, "n");
    *n = std::visit([](const auto& m) { return count_parameters(m.backbone, m.classifier, m.eca, m.mutual); },
                    model->model);
  });
}

pcnet_status pcnet_model_predict(const pcnet_model* model, const float* chw, size_t channels, size_t height,
                                 size_t width, double* probabilities) {
  return guarded([&] {
    require(model, "model");
    require(chw, "chw");
    require(probabilities, "probabilities");
    if (channels != 3 || height != model->config.input_size || width != model->config.input_size) {
      throw DimensionError("predict: expected a 3x" + std::to_string(model->config.input_size) + "x" +
                           std::to_string(model->config.input_size) + " image");
    }
    Image img(channels, height, width);
    std::memcpy(img.pixels.data(), chw, img.pixels.size() * sizeof(float));
    std::visit(
        [&](const auto& m) {
          const auto q = score_image(m, img);
          for (std::size_t c = 0; c < q.numel(); ++c) probabilities[c] = static_cast<double>(q[c]);
        },
        model->model);
  });
}

}  // extern "C"
