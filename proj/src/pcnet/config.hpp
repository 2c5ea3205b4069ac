#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcnet/attention.hpp"
#include "pcnet/model.hpp"
#include "pcnet/pairing.hpp"

namespace pcnet {

enum class Precision { kFloat32, kFloat64 };
enum class Architecture { kSingle, kMulti };
enum class Objective { kLc, kLcLr };
enum class PairMode { kBoth, kInterOnly };

// Every knob of a run. Text form is line-oriented `key = value`; `#` starts
// a comment. Unknown keys and malformed values raise ConfigError naming the key.
struct TrainConfig {
  // data
  std::string dataset = "synth";  // "synth" or a class-per-folder root
  std::size_t synth_classes = 8;
  std::size_t synth_per_class = 150;
  std::size_t input_size = 64;
  double train_fraction = 2.0 / 3.0;

  // model
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t eca_k = 5;
  bool attention = true;  // ECA on the self representation
  MutualAttention mutual_attention = MutualAttention::kEca;
  bool eval_eca = false;

  // method
  Architecture architecture = Architecture::kMulti;
  Representation representation = Representation::kBoth;
  Objective objective = Objective::kLcLr;
  Metric metric = Metric::kEuclidean;
  Strategy strategy = Strategy::kSS;
  PairMode pair_mode = PairMode::kBoth;

  // optimisation
  std::size_t epochs = 100;
  double lr0 = 0.01;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lambda = 1.0;
  double epsilon = 0.05;
  std::size_t classes_per_batch = 30;
  std::size_t images_per_class = 6;

  // augmentation
  double rotate_max_deg = 30.0;
  bool fixed_rotation = false;
  bool hflip = true;
  bool vflip = true;

  Precision precision = Precision::kFloat32;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  // Throws ConfigError for the first violated constraint.
  void validate() const;

  // Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig from_file(const std::string& path);

  ModelConfig model_config(std::size_t num_classes) const;
};

std::vector<std::string> config_keys();

std::string to_string(Precision p);
std::string to_string(Architecture a);
std::string to_string(Objective o);
std::string to_string(Representation r);
std::string to_string(PairMode m);
std::string to_string(MutualAttention m);

}  // namespace pcnet
