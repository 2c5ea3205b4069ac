#include "pcnet/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>

#include "pcnet/errors.hpp"

namespace fs = std::filesystem;

namespace pcnet {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm" || ext == ".bmp";
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Wraps v into [0, period).
double wrap(double v, double period) {
  const double r = std::fmod(v, period);
  return r < 0 ? r + period : r;
}

enum class Family { kStripes, kDots, kChecker, kRings, kHatch, kBlobs, kZigzag, kSquares };

struct ClassSpec {
  const char* name;
  Family family;
  double scale;  // period / spacing at 64 px
};

// Consecutive entries form the confusable pairs.
constexpr ClassSpec kClasses[kMaxSyntheticClasses] = {
    {"stripes_coarse", Family::kStripes, 12}, {"stripes_fine", Family::kStripes, 6},
    {"dots_sparse", Family::kDots, 16},       {"dots_dense", Family::kDots, 8},
    {"checker_large", Family::kChecker, 12},  {"checker_small", Family::kChecker, 6},
    {"blobs_large", Family::kBlobs, 10},      {"blobs_small", Family::kBlobs, 3},
    {"rings_wide", Family::kRings, 12},       {"rings_narrow", Family::kRings, 6},
    {"hatch_coarse", Family::kHatch, 12},     {"hatch_fine", Family::kHatch, 6},
    {"zigzag_coarse", Family::kZigzag, 12},   {"zigzag_fine", Family::kZigzag, 6},
    {"squares_wide", Family::kSquares, 12},   {"squares_narrow", Family::kSquares, 6},
};

Image render_texture(const ClassSpec& spec, std::size_t height, std::size_t width, Rng& rng) {
  constexpr double kTwoPi = 2 * std::numbers::pi;
  const double unit = std::min(height, width) / 64.0;
  const double theta = uniform(rng, 0, std::numbers::pi);
  const double phase = uniform(rng, 0, kTwoPi);
  const double period = spec.scale * unit * uniform(rng, 0.9, 1.1);
  const double cx = width * uniform(rng, 0.25, 0.75);
  const double cy = height * uniform(rng, 0.25, 0.75);
  const double offset_u = uniform(rng, 0, period), offset_w = uniform(rng, 0, period);
  std::array<double, 3> fg{}, bg{};
  for (std::size_t c = 0; c < 3; ++c) {
    bg[c] = uniform(rng, 0.0, 0.35);
    fg[c] = uniform(rng, 0.65, 1.0);
  }
  if (uniform(rng, 0, 1) < 0.5) std::swap(fg, bg);

  struct Blob {
    double x, y;
  };
  std::vector<Blob> blobs;
  if (spec.family == Family::kBlobs) {
    const std::size_t count = spec.scale > 5 ? 5 : 28;
    for (std::size_t i = 0; i < count; ++i) blobs.push_back({uniform(rng, 0, width), uniform(rng, 0, height)});
  }

  const double ct = std::cos(theta), st = std::sin(theta);
  auto intensity = [&](double x, double y) -> double {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * ct + dy * st;
    const double w = -dx * st + dy * ct;
    switch (spec.family) {
      case Family::kStripes:
        return 0.5 + 0.5 * std::sin(kTwoPi * u / period + phase);
      case Family::kDots: {
        const double du = wrap(u + offset_u, period) - period / 2;
        const double dw = wrap(w + offset_w, period) - period / 2;
        const double r = 2.2 * unit;
        return 1.0 - smoothstep(r - 0.75, r + 0.75, std::hypot(du, dw));
      }
      case Family::kChecker: {
        const double s = std::sin(std::numbers::pi * (u + offset_u) / period) *
                         std::sin(std::numbers::pi * (w + offset_w) / period);
        return std::clamp(0.5 + 2.0 * s, 0.0, 1.0);
      }
      case Family::kRings:
        return 0.5 + 0.5 * std::sin(kTwoPi * std::hypot(dx, dy) / period + phase);
      case Family::kHatch:
        return 0.25 * (2 + std::sin(kTwoPi * u / period + phase) + std::sin(kTwoPi * w / period + phase));
      case Family::kBlobs: {
        double acc = 0;
        const double sigma = spec.scale * unit;
        for (const Blob& b : blobs) {
          const double r2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
          acc += std::exp(-r2 / (2 * sigma * sigma));
        }
        return std::min(acc, 1.0);
      }
      case Family::kZigzag: {
        const double warp = 0.35 * period * std::sin(kTwoPi * w / (1.5 * period));
        return 0.5 + 0.5 * std::sin(kTwoPi * (u + warp) / period + phase);
      }
      case Family::kSquares:
        return 0.5 + 0.5 * std::sin(kTwoPi * std::max(std::abs(u), std::abs(w)) / period + phase);
    }
    return 0.0;
  };

  std::normal_distribution<double> noise(0.0, 0.04);
  Image img(3, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double v = intensity(x + 0.5, y + 0.5);
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = bg[c] + (fg[c] - bg[c]) * v + noise(rng);
        img.at(c, y, x) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  return img;
}

// numpy-style "reflect": ... c b | a b c d | c b ...
long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

Dataset load_folder_dataset(const fs::path& root, std::size_t height, std::size_t width) {
  if (!fs::is_directory(root)) throw IoError("dataset root '" + root.string() + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IoError("dataset root '" + root.string() + "' has no class folders");

  Dataset ds;
  ds.height = height;
  ds.width = width;
  for (const fs::path& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("class folder '" + dir.string() + "' contains no images");
    const std::size_t label = ds.class_names.size();
    ds.class_names.push_back(dir.filename().string());
    for (const fs::path& file : files) {
      ds.images.push_back(resize_bilinear(read_image(file), height, width));
      ds.labels.push_back(label);
      ds.sources.push_back(file.string());
    }
  }
  return ds;
}

Dataset generate_synthetic(std::size_t num_classes, std::size_t per_class, std::size_t height, std::size_t width,
                           std::uint64_t seed) {
  if (num_classes < kMinSyntheticClasses || num_classes > kMaxSyntheticClasses) {
    throw ConfigError("synthetic: num_classes must be in [" + std::to_string(kMinSyntheticClasses) + "," +
                      std::to_string(kMaxSyntheticClasses) + "], got " + std::to_string(num_classes));
  }
  if (per_class == 0 || height == 0 || width == 0) throw ConfigError("synthetic: sizes must be positive");
  Dataset ds;
  ds.height = height;
  ds.width = width;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ds.class_names.push_back(kClasses[c].name);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(seed, "synthetic/" + std::to_string(c) + "/" + std::to_string(i)));
      ds.images.push_back(render_texture(kClasses[c], height, width, rng));
      ds.labels.push_back(c);
      char name[64];
      std::snprintf(name, sizeof name, "%04zu.png", i);
      ds.sources.push_back("synth/" + ds.class_names.back() + "/" + name);
    }
  }
  return ds;
}

void write_dataset_tree(const Dataset& dataset, const fs::path& root) {
  std::vector<std::size_t> counter(dataset.num_classes(), 0);
  for (const auto& name : dataset.class_names) fs::create_directories(root / name);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t label = dataset.labels[i];
    char name[64];
    std::snprintf(name, sizeof name, "%04zu.png", counter[label]++);
    write_png(root / dataset.class_names[label] / name, dataset.images[i]);
  }
}

Image rotate_reflect(const Image& image, double degrees) {
  if (degrees == 0.0) return image;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (image.height - 1) / 2.0, cx = (image.width - 1) / 2.0;
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  Image out(image.channels, image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x) {
      // Inverse map: source = R(-angle) * (dest - centre) + centre.
      const double dx = x - cx, dy = y - cy;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      const long x0 = reflect_index(static_cast<long>(fx), w), x1 = reflect_index(static_cast<long>(fx) + 1, w);
      const long y0 = reflect_index(static_cast<long>(fy), h), y1 = reflect_index(static_cast<long>(fy) + 1, h);
      for (std::size_t ch = 0; ch < image.channels; ++ch) {
        const double top = image.at(ch, y0, x0) * (1 - wx) + image.at(ch, y0, x1) * wx;
        const double bottom = image.at(ch, y1, x0) * (1 - wx) + image.at(ch, y1, x1) * wx;
        out.at(ch, y, x) = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

Image flip_vertical(const Image& image) {
  Image out = image;
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, image.height - 1 - y, x);
  return out;
}

Image augment(const Image& image, const AugmentationPolicy& policy, Rng& rng) {
  const double u = uniform(rng, 0, 1);
  const bool hflip_coin = uniform(rng, 0, 1) < 0.5;
  const bool vflip_coin = uniform(rng, 0, 1) < 0.5;
  double angle = 0;
  if (policy.rotate_max_deg > 0) {
    angle = policy.fixed_rotation ? (u < 0.5 ? policy.rotate_max_deg : 0.0)
                                  : -policy.rotate_max_deg + 2 * policy.rotate_max_deg * u;
  }
  Image out = rotate_reflect(image, angle);
  if (policy.hflip && hflip_coin) out = flip_horizontal(out);
  if (policy.vflip && vflip_coin) out = flip_vertical(out);
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train_fraction must be in (0,1), got " + std::to_string(train_fraction));
  }
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) members[dataset.labels[i]].push_back(i);
  Rng rng(derive_seed(seed, "split"));
  std::vector<bool> in_train(dataset.size(), false);
  for (auto& [label, items] : members) {
    const auto n_train = static_cast<std::size_t>(std::llround(items.size() * train_fraction));
    if (n_train == 0 || n_train == items.size()) {
      throw ConfigError("split: class '" + dataset.class_names.at(label) + "' with " +
                        std::to_string(items.size()) + " items would get " + std::to_string(n_train) +
                        " train and " + std::to_string(items.size() - n_train) + " test items");
    }
    for (std::size_t i = 0; i < n_train; ++i) {
      std::swap(items[i], items[i + uniform_index(rng, items.size() - i)]);
      in_train[items[i]] = true;
    }
  }
  Dataset train, test;
  for (Dataset* part : {&train, &test}) {
    part->class_names = dataset.class_names;
    part->height = dataset.height;
    part->width = dataset.width;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Dataset& part = in_train[i] ? train : test;
    part.images.push_back(dataset.images[i]);
    part.labels.push_back(dataset.labels[i]);
    part.sources.push_back(dataset.sources[i]);
  }
  return {std::move(train), std::move(test)};
}

ChannelStats compute_channel_stats(const Dataset& dataset) {
  ChannelStats stats;
  if (dataset.size() == 0) return stats;
  for (std::size_t c = 0; c < 3; ++c) {
    double total = 0;
    std::size_t count = 0;
    for (const Image& img : dataset.images) {
      const std::size_t plane = img.height * img.width;
      for (std::size_t i = 0; i < plane; ++i) total += img.pixels[c * plane + i];
      count += plane;
    }
    const double mean = total / count;
    double sq = 0;
    for (const Image& img : dataset.images) {
      const std::size_t plane = img.height * img.width;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = img.pixels[c * plane + i] - mean;
        sq += d * d;
      }
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(sq / count), 1e-8);
  }
  return stats;
}

void standardize(Dataset& dataset, const ChannelStats& stats) {
  for (Image& img : dataset.images) {
    const std::size_t plane = img.height * img.width;
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        float& v = img.pixels[c * plane + i];
        v = static_cast<float>((v - stats.mean[c]) / stats.stddev[c]);
      }
  }
}

std::string split_manifest_csv(const Dataset& train, const Dataset& test) {
  std::string out = "path,label,split\n";
  auto emit = [&](const Dataset& part, const char* name) {
    for (std::size_t i = 0; i < part.size(); ++i)
      out += part.sources[i] + "," + std::to_string(part.labels[i]) + "," + name + "\n";
  };
  emit(train, "train");
  emit(test, "test");
  return out;
}

std::string dataset_fingerprint(const Dataset& dataset) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const auto& name : dataset.class_names) EVP_DigestUpdate(ctx, name.data(), name.size() + 1);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::uint64_t label = dataset.labels[i];
    EVP_DigestUpdate(ctx, &label, sizeof label);
    const auto& px = dataset.images[i].pixels;
    EVP_DigestUpdate(ctx, px.data(), px.size() * sizeof(float));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

}  // namespace pcnet
