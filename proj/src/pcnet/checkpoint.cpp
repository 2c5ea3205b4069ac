#include "pcnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pcnet/errors.hpp"

namespace pcnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'C', 'N', '1'};

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(size)));
}

class Writer {
 public:
  template <typename U>
  void put(U value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + size);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::size_t end, std::string origin)
      : bytes_(bytes), end_(end), origin_(std::move(origin)) {}

  template <typename U>
  U get(const char* what) {
    U value;
    std::memcpy(&value, take(sizeof(U), what), sizeof(U));
    return value;
  }
  const unsigned char* take(std::size_t size, const char* what) {
    if (size > end_ - pos_) throw IoError("checkpoint '" + origin_ + "': truncated while reading " + what);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += size;
    return p;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::size_t dtype_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kFloat32 : DType::kFloat64;
}

template <typename T>
StoredTensor store(const std::string& name, const Tensor<T>& t) {
  StoredTensor s;
  s.name = name;
  s.dtype = dtype_of<T>();
  for (std::size_t e : t.shape()) s.extents.push_back(e);
  s.payload.resize(t.numel() * sizeof(T));
  if (t.numel()) std::memcpy(s.payload.data(), t.data().data(), s.payload.size());
  return s;
}

template <typename T>
void restore(const StoredTensor& s, Tensor<T>& t) {
  Shape shape(s.extents.begin(), s.extents.end());
  if (shape != t.shape()) {
    throw ConfigError("checkpoint tensor '" + s.name + "' has shape " + shape_to_string(shape) + ", model expects " +
                      shape_to_string(t.shape()));
  }
  auto dst = t.data();
  if (s.dtype == dtype_of<T>()) {
    if (!dst.empty()) std::memcpy(dst.data(), s.payload.data(), s.payload.size());
  } else if (s.dtype == DType::kFloat32) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float v;
      std::memcpy(&v, s.payload.data() + 4 * i, 4);
      dst[i] = static_cast<T>(v);
    }
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double v;
      std::memcpy(&v, s.payload.data() + 8 * i, 8);
      dst[i] = static_cast<T>(v);
    }
  }
}

struct StateText {
  std::string config;
  std::size_t epoch = 0;
  std::vector<std::string> classes;
  std::string rng;
  std::vector<std::string> metrics;
};

StateText split_text(const std::string& text) {
  StateText st;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section.empty()) {
      st.config += line + "\n";
    } else if (section == "state") {
      if (line.rfind("epoch = ", 0) == 0) st.epoch = std::stoull(line.substr(8));
    } else if (section == "classes") {
      if (!line.empty()) st.classes.push_back(line);
    } else if (section == "rng") {
      st.rng += line + "\n";
    } else if (section == "metrics") {
      if (!line.empty()) st.metrics.push_back(line);
    }
  }
  return st;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(file.version);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.text.size()));
  w.put_bytes(file.text.data(), file.text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
  for (const StoredTensor& t : file.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.extents.size()));
    for (std::uint64_t e : t.extents) w.put<std::uint64_t>(e);
    w.put_bytes(t.payload.data(), t.payload.size());
  }
  w.put<std::uint32_t>(crc_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

CheckpointFile decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("'" + origin + "' is not a checkpoint (bad magic)");
  }
  if (bytes.size() < 4 + 4 + 4) throw ChecksumError("checkpoint '" + origin + "' is truncated");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (crc_of(bytes.data(), body) != stored) {
    throw ChecksumError("checkpoint '" + origin + "' failed its CRC32 check (truncated or corrupted)");
  }
  Reader r(bytes, body, origin);
  r.take(4, "magic");
  CheckpointFile file;
  file.version = r.get<std::uint32_t>("version");
  if (file.version != kCheckpointVersion) {
    throw VersionError("checkpoint '" + origin + "' has format version " + std::to_string(file.version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const unsigned char* text = r.take(text_len, "config text");
  file.text.assign(reinterpret_cast<const char*>(text), text_len);
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const unsigned char* name = r.take(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto tag = r.get<std::uint8_t>("dtype");
    if (tag != 1 && tag != 2) throw IoError("checkpoint '" + origin + "': tensor '" + t.name + "' has unknown dtype");
    t.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint32_t>("rank");
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.extents.push_back(r.get<std::uint64_t>("extent"));
      numel *= t.extents.back();
    }
    const unsigned char* payload = r.take(numel * dtype_size(t.dtype), "tensor payload");
    t.payload.assign(payload, payload + numel * dtype_size(t.dtype));
    file.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IoError("checkpoint '" + origin + "': trailing bytes after the tensor table");
  return file;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  const auto bytes = encode_checkpoint(file);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes, path.string());
}

template <typename T>
CheckpointFile checkpoint_from_state(const TrainState<T>& state) {
  CheckpointFile file;
  file.text = state.config.to_text();
  file.text += "[state]\nepoch = " + std::to_string(state.epoch) + "\n[classes]\n";
  for (const auto& c : state.class_names) file.text += c + "\n";
  file.text += "[rng]\n" + state.rng.serialize() + "[metrics]\n";
  for (const auto& m : state.history) file.text += metrics_csv_row(m);
  const auto params = state.model.parameters();
  for (const auto& [name, t] : params) file.tensors.push_back(store(name, t));
  for (std::size_t i = 0; i < params.size(); ++i)
    file.tensors.push_back(store("velocity/" + params[i].first, state.velocity[i]));
  return file;
}

CheckpointInfo checkpoint_info(const CheckpointFile& file) {
  const StateText st = split_text(file.text);
  CheckpointInfo info;
  info.config = TrainConfig::from_text(st.config);
  info.epoch = st.epoch;
  info.class_names = st.classes;
  return info;
}

template <typename T>
TrainState<T> state_from_checkpoint(const CheckpointFile& file) {
  const StateText st = split_text(file.text);
  const TrainConfig config = TrainConfig::from_text(st.config);
  if (st.classes.size() < 2) throw IoError("checkpoint lists " + std::to_string(st.classes.size()) + " classes");
  TrainState<T> state = TrainState<T>::create(config, st.classes);
  state.epoch = st.epoch;
  state.rng = RngStreams(config.seed);
  state.rng.deserialize(st.rng);
  for (const auto& row : st.metrics) state.history.push_back(parse_metrics_row(row));

  const auto params = state.model.parameters();
  auto find = [&](const std::string& name) -> const StoredTensor& {
    for (const auto& t : file.tensors)
      if (t.name == name) return t;
    throw IoError("checkpoint is missing tensor '" + name + "'");
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    restore(find(params[i].first), p);
    restore(find("velocity/" + params[i].first), state.velocity[i]);
  }
  return state;
}

template CheckpointFile checkpoint_from_state(const TrainState<float>&);
template CheckpointFile checkpoint_from_state(const TrainState<double>&);
template TrainState<float> state_from_checkpoint<float>(const CheckpointFile&);
template TrainState<double> state_from_checkpoint<double>(const CheckpointFile&);

}  // namespace pcnet
