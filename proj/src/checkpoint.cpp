#include "vprop/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

namespace vprop {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'R', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n) throw std::runtime_error("checkpoint: truncated record data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

constexpr const char* kConfigPrefix = "config.";

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_records(const std::vector<TensorRecord>& records) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (static_cast<std::size_t>(numel(r.shape)) != r.values.size()) {
      throw std::invalid_argument("checkpoint: record '" + r.name + "' shape does not match its values");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (int d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

std::vector<TensorRecord> decode_records(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 4 + 8) throw std::runtime_error("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic (expected VPRP)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) throw std::runtime_error("checkpoint: checksum mismatch, refusing to load");

  Reader in(bytes, body);
  in.str(4);
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto count = in.u32();
  std::vector<TensorRecord> records;
  for (std::uint32_t k = 0; k < count; ++k) {
    TensorRecord r;
    r.name = in.str(in.u32());
    const auto ndim = in.u32();
    if (ndim > 8) throw std::runtime_error("checkpoint: record '" + r.name + "' has too many dimensions");
    for (std::uint32_t d = 0; d < ndim; ++d) r.shape.push_back(static_cast<int>(in.u32()));
    const auto n = numel(r.shape);
    r.values.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) r.values.push_back(std::bit_cast<float>(in.u32()));
    records.push_back(std::move(r));
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes after records");
  return records;
}

std::vector<std::uint8_t> encode_checkpoint(const PlannerConfig& config, const PlannerParams<float>& params) {
  std::vector<TensorRecord> records;
  auto scalar = [&](const char* name, int v) {
    records.push_back({std::string(kConfigPrefix) + name, {1}, {static_cast<float>(v)}});
  };
  scalar("variant", static_cast<int>(config.variant));
  scalar("hidden_channels", config.hidden_channels);
  scalar("d_rew", config.d_rew);
  scalar("input_channels", config.input_channels);
  scalar("embed_kernel", config.embed_kernel);
  auto copy = params.clone();
  for (const auto& [name, array] : copy.named()) {
    records.push_back({name, array->shape(), {array->values().begin(), array->values().end()}});
  }
  return encode_records(records);
}

PlannerParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes, PlannerConfig* config_out) {
  const auto records = decode_records(bytes);
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  auto scalar = [&](const char* name) {
    const auto it = by_name.find(std::string(kConfigPrefix) + name);
    if (it == by_name.end() || it->second->values.size() != 1) {
      throw std::runtime_error(std::string("checkpoint: missing config record '") + kConfigPrefix + name + "'");
    }
    return static_cast<int>(it->second->values[0]);
  };
  PlannerConfig config;
  const int variant = scalar("variant");
  if (variant < 0 || variant > static_cast<int>(Variant::MVProp)) throw std::runtime_error("checkpoint: bad variant");
  config.variant = static_cast<Variant>(variant);
  config.hidden_channels = scalar("hidden_channels");
  config.d_rew = scalar("d_rew");
  config.input_channels = scalar("input_channels");
  config.embed_kernel = scalar("embed_kernel");
  if (config.embed_kernel != 0 && config.embed_kernel != 1 && config.embed_kernel != 3) {
    throw std::runtime_error("checkpoint: bad embed_kernel " + std::to_string(config.embed_kernel));
  }

  auto params = init_params<float>(config, 0);
  std::size_t used = 5;
  for (auto& [name, array] : params.named()) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (it->second->shape != array->shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second->shape) +
                               ", expected " + shape_str(array->shape()));
    }
    *array = Array::from(it->second->shape, it->second->values, true);
    ++used;
  }
  if (used != records.size()) throw std::runtime_error("checkpoint: unexpected extra tensors");
  if (config_out) *config_out = config;
  return params;
}

void save_checkpoint(const std::string& path, const PlannerConfig& config, const PlannerParams<float>& params) {
  const auto bytes = encode_checkpoint(config, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

PlannerParams<float> load_checkpoint(const std::string& path, PlannerConfig* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, config);
}

}  // namespace vprop
