#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pcnet/image_io.hpp"
#include "pcnet/rng.hpp"

namespace pcnet {

struct Dataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;    // dense 0..N-1
  std::vector<std::string> sources;   // file path, or synth/<class>/<index>.png
  std::vector<std::string> class_names;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return images.size(); }
  std::size_t num_classes() const { return class_names.size(); }
};

// root/<class>/<image>, classes and files in lexicographic order, every image
// resized to height x width and scaled to [0,1].
Dataset load_folder_dataset(const std::filesystem::path& root, std::size_t height, std::size_t width);

// Procedural texture scenes. Classes come in confusable pairs that share a
// pattern family and differ in scale (coarse/fine stripes, dense/sparse
// dots, ...); orientation, phase, colours and noise vary within a class.
Dataset generate_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t height, std::size_t width,
                           std::uint64_t seed);

inline constexpr std::size_t kMinSyntheticClasses = 4;
inline constexpr std::size_t kMaxSyntheticClasses = 16;

// Writes the dataset as root/<class>/<index>.png.
void write_dataset_tree(const Dataset& dataset, const std::filesystem::path& root);

struct AugmentationPolicy {
  double rotate_max_deg = 30.0;
  bool hflip = true;
  bool vflip = true;
  // false: angle ~ U[-max, max]; true: rotate by exactly +max with probability 1/2.
  bool fixed_rotation = false;
};

// Rotation (bilinear, reflect padding) then independent fair-coin flips.
// Always consumes three draws from `rng` so disabling a step does not shift
// the stream.
Image augment(const Image& image, const AugmentationPolicy& policy, Rng& rng);

Image rotate_reflect(const Image& image, double degrees);
Image flip_horizontal(const Image& image);
Image flip_vertical(const Image& image);

// Stratified partition; per class round(count * fraction) items go to train.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

struct ChannelStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};
};

ChannelStats compute_channel_stats(const Dataset& dataset);
void standardize(Dataset& dataset, const ChannelStats& stats);

// path,label,split rows for both halves of a split.
std::string split_manifest_csv(const Dataset& train, const Dataset& test);

// SHA-256 (hex) over class names, labels and pixel buffers.
std::string dataset_fingerprint(const Dataset& dataset);

}  // namespace pcnet
