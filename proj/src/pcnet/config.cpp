#include "pcnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pcnet/errors.hpp"

namespace pcnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': invalid value '" + value + "' (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "true|false");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (v == name) return value;
    names += (names.empty() ? "" : "|") + std::string(name);
  }
  bad_value(key, v, names);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

// Ordered so serialization is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = TrainConfig;
  auto size_field = [](std::size_t C::*m) {
    return Field{[m](C& c, const std::string& v) { c.*m = parse_u64("", v); },
                 [m](const C& c) { return std::to_string(c.*m); }};
  };
  auto double_field = [](double C::*m) {
    return Field{[m](C& c, const std::string& v) { c.*m = parse_double("", v); },
                 [m](const C& c) { return fmt_double(c.*m); }};
  };
  auto bool_field = [](bool C::*m) {
    return Field{[m](C& c, const std::string& v) { c.*m = parse_bool("", v); },
                 [m](const C& c) { return std::string(c.*m ? "true" : "false"); }};
  };
  static const std::vector<std::pair<std::string, Field>> table = {
      {"dataset", {[](C& c, const std::string& v) { c.dataset = v; }, [](const C& c) { return c.dataset; }}},
      {"synth_classes", size_field(&C::synth_classes)},
      {"synth_per_class", size_field(&C::synth_per_class)},
      {"input_size", size_field(&C::input_size)},
      {"train_fraction", double_field(&C::train_fraction)},
      {"widths",
       {[](C& c, const std::string& v) {
          c.widths.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) c.widths.push_back(parse_u64("", trim(item)));
        },
        [](const C& c) {
          std::string s;
          for (std::size_t w : c.widths) s += (s.empty() ? "" : ",") + std::to_string(w);
          return s;
        }}},
      {"eca_k", size_field(&C::eca_k)},
      {"attention", bool_field(&C::attention)},
      {"mutual_attention",
       {[](C& c, const std::string& v) {
          c.mutual_attention = parse_enum<MutualAttention>(
              "", v, {{"eca", MutualAttention::kEca}, {"fc", MutualAttention::kFcOnly}});
        },
        [](const C& c) { return to_string(c.mutual_attention); }}},
      {"eval_eca", bool_field(&C::eval_eca)},
      {"architecture",
       {[](C& c, const std::string& v) {
          c.architecture =
              parse_enum<Architecture>("", v, {{"single", Architecture::kSingle}, {"multi", Architecture::kMulti}});
        },
        [](const C& c) { return to_string(c.architecture); }}},
      {"representation",
       {[](C& c, const std::string& v) {
          c.representation = parse_enum<Representation>(
              "", v,
              {{"self", Representation::kSelf}, {"mutual", Representation::kMutual}, {"both", Representation::kBoth}});
        },
        [](const C& c) { return to_string(c.representation); }}},
      {"objective",
       {[](C& c, const std::string& v) {
          c.objective = parse_enum<Objective>("", v, {{"Lc", Objective::kLc}, {"Lc+Lr", Objective::kLcLr}});
        },
        [](const C& c) { return to_string(c.objective); }}},
      {"metric", {[](C& c, const std::string& v) { c.metric = parse_metric(v); },
                  [](const C& c) { return to_string(c.metric); }}},
      {"strategy", {[](C& c, const std::string& v) { c.strategy = parse_strategy(v); },
                    [](const C& c) { return to_string(c.strategy); }}},
      {"pair_mode",
       {[](C& c, const std::string& v) {
          c.pair_mode = parse_enum<PairMode>("", v, {{"both", PairMode::kBoth}, {"inter_only", PairMode::kInterOnly}});
        },
        [](const C& c) { return to_string(c.pair_mode); }}},
      {"epochs", size_field(&C::epochs)},
      {"lr0", double_field(&C::lr0)},
      {"lr_min", double_field(&C::lr_min)},
      {"momentum", double_field(&C::momentum)},
      {"weight_decay", double_field(&C::weight_decay)},
      {"lambda", double_field(&C::lambda)},
      {"epsilon", double_field(&C::epsilon)},
      {"classes_per_batch", size_field(&C::classes_per_batch)},
      {"images_per_class", size_field(&C::images_per_class)},
      {"rotate_max_deg", double_field(&C::rotate_max_deg)},
      {"fixed_rotation", bool_field(&C::fixed_rotation)},
      {"hflip", bool_field(&C::hflip)},
      {"vflip", bool_field(&C::vflip)},
      {"precision",
       {[](C& c, const std::string& v) {
          c.precision = parse_enum<Precision>("", v, {{"float32", Precision::kFloat32}, {"float64", Precision::kFloat64}});
        },
        [](const C& c) { return to_string(c.precision); }}},
      {"seed", {[](C& c, const std::string& v) { c.seed = parse_u64("", v); },
                [](const C& c) { return std::to_string(c.seed); }}},
      {"checkpoint_every", size_field(&C::checkpoint_every)},
  };
  return table;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields()) {
    if (k != key) continue;
    try {
      f.set(*this, trim(value));
    } catch (const ConfigError& e) {
      // Field parsers do not know their own key; re-raise with it.
      std::string msg = e.what();
      const std::string prefix = "config key '': ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      throw ConfigError("config key '" + key + "': " + msg);
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (dataset.empty()) fail("dataset", "must be 'synth' or a dataset directory");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (input_size < 8) fail("input_size", "must be >= 8");
  if (widths.empty()) fail("widths", "at least one stage is required");
  for (std::size_t w : widths)
    if (w == 0) fail("widths", "stage widths must be positive");
  if (eca_k == 0 || eca_k % 2 == 0) fail("eca_k", "must be odd");
  if (!(train_fraction > 0 && train_fraction < 1)) fail("train_fraction", "must be in (0,1)");
  if (lr0 < 0) fail("lr0", "must be >= 0");
  if (lr_min < 0) fail("lr_min", "must be >= 0");
  if (momentum < 0) fail("momentum", "must be >= 0");
  if (weight_decay < 0) fail("weight_decay", "must be >= 0");
  if (lambda < 0) fail("lambda", "must be >= 0");
  if (epsilon < 0) fail("epsilon", "must be >= 0");
  if (classes_per_batch < 2) fail("classes_per_batch", "must be >= 2");
  if (images_per_class < 2) fail("images_per_class", "must be >= 2");
  if (rotate_max_deg < 0) fail("rotate_max_deg", "must be >= 0");
  if (dataset == "synth" && (synth_classes < 4 || synth_classes > 16)) fail("synth_classes", "must be in [4,16]");
  if (dataset == "synth" && synth_per_class < 2) fail("synth_per_class", "must be >= 2");
  if (objective == Objective::kLcLr && (architecture != Architecture::kMulti || representation != Representation::kBoth)) {
    fail("objective", "Lc+Lr needs architecture = multi and representation = both");
  }
  if (architecture == Architecture::kSingle && representation != Representation::kSelf) {
    fail("representation", "a single-branch run only has the self representation");
  }
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

ModelConfig TrainConfig::model_config(std::size_t num_classes) const {
  ModelConfig m;
  m.backbone.widths = widths;
  m.backbone.input_height = input_size;
  m.backbone.input_width = input_size;
  m.num_classes = num_classes;
  m.eca_k = eca_k;
  m.mutual_attention = mutual_attention;
  m.self_attention = attention;
  m.eval_eca = eval_eca;
  return m;
}

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }
std::string to_string(Architecture a) { return a == Architecture::kSingle ? "single" : "multi"; }
std::string to_string(Objective o) { return o == Objective::kLc ? "Lc" : "Lc+Lr"; }
std::string to_string(PairMode m) { return m == PairMode::kBoth ? "both" : "inter_only"; }
std::string to_string(MutualAttention m) { return m == MutualAttention::kEca ? "eca" : "fc"; }
std::string to_string(Representation r) {
  switch (r) {
    case Representation::kSelf: return "self";
    case Representation::kMutual: return "mutual";
    case Representation::kBoth: return "both";
  }
  return "?";
}

}  // namespace pcnet
