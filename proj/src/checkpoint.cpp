#include "almrr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "almrr/error.hpp"

namespace almrr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename U>
  void put(U v) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    out.insert(out.end(), b, b + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out.insert(out.end(), c, c + n);
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : buf(b) {}
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, buf.data() + pos, sizeof(U));
    pos += sizeof(U);
    return v;
  }
  void need(std::uint64_t n, const char* what) {
    if (n > buf.size() - pos)
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " (need " + std::to_string(n) +
                            " bytes, " + std::to_string(buf.size() - pos) + " left)",
                        pos);
  }
  std::vector<unsigned char> take(std::uint64_t n, const char* what) {
    need(n, what);
    std::vector<unsigned char> v(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                 buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return v;
  }
  const std::vector<unsigned char>& buf;
  std::uint64_t pos = 0;
};

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

}  // namespace

std::vector<double> CheckpointEntry::values() const {
  const std::size_t n = numel(shape);
  std::vector<double> v(n);
  if (dtype == DType::f32) {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + 4 * i, 4);
      v[i] = f;
    }
  } else {
    std::memcpy(v.data(), bytes.data(), 8 * n);
  }
  return v;
}

std::vector<unsigned char> Checkpoint::serialize() const {
  Writer w;
  w.bytes("ALMR", 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(blob.size());
  w.bytes(blob.data(), blob.size());
  w.put<std::uint64_t>(entries.size());
  for (const auto& e : entries) {
    if (e.name.size() > UINT16_MAX) throw ArgumentError("checkpoint entry name too long: " + e.name);
    if (e.shape.size() > UINT8_MAX) throw ArgumentError("checkpoint entry has too many dims: " + e.name);
    if (e.bytes.size() != numel(e.shape) * dtype_size(e.dtype))
      throw ArgumentError("checkpoint entry '" + e.name + "' byte count does not match its shape");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint64_t>(d);
    w.bytes(e.bytes.data(), e.bytes.size());
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::parse(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "ALMR", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint64_t version_at = r.pos;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  Checkpoint c;
  const auto blob_len = r.get<std::uint64_t>("config length");
  const auto blob = r.take(blob_len, "config blob");
  c.blob.assign(blob.begin(), blob.end());
  const auto count = r.get<std::uint64_t>("entry count");
  for (std::uint64_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto name_len = r.get<std::uint16_t>("entry name length");
    const auto name = r.take(name_len, "entry name");
    e.name.assign(name.begin(), name.end());
    const std::uint64_t dtype_at = r.pos;
    const auto dt = r.get<std::uint8_t>("dtype");
    if (dt > 1) throw FormatError("unknown dtype code " + std::to_string(dt) + " for '" + e.name + "'", dtype_at);
    e.dtype = static_cast<DType>(dt);
    const auto nd = r.get<std::uint8_t>("ndim");
    std::uint64_t n = 1;
    for (int i = 0; i < nd; ++i) {
      const std::uint64_t dim_at = r.pos;
      const auto d = r.get<std::uint64_t>("dims");
      if (d != 0 && n > UINT64_MAX / d / 8) throw FormatError("entry '" + e.name + "' is implausibly large", dim_at);
      n *= d;
      e.shape.push_back(static_cast<std::size_t>(d));
    }
    e.bytes = r.take(n * dtype_size(e.dtype), "entry values");
    c.entries.push_back(std::move(e));
  }
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after the last entry", r.pos);
  return c;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename T>
Checkpoint make_checkpoint(const ParamStore<T>& store, const std::string& config_json) {
  nlohmann::json meta = nlohmann::json::object();
  meta["config"] = nlohmann::json::parse(config_json);
  meta["step"] = store.step_count();
  Checkpoint c;
  c.blob = meta.dump();
  for (const auto& [name, entry] : store.entries()) {
    CheckpointEntry e;
    e.name = name;
    e.dtype = sizeof(T) == 4 ? DType::f32 : DType::f64;
    e.shape = entry.value.shape();
    e.bytes.resize(entry.value.numel() * sizeof(T));
    std::memcpy(e.bytes.data(), entry.value.data().data(), e.bytes.size());
    c.entries.push_back(std::move(e));
  }
  return c;
}

template <typename T>
void restore_params(const Checkpoint& ckpt, ParamStore<T>& store) {
  for (const auto& e : ckpt.entries) {
    std::vector<T> v;
    if (e.dtype == (sizeof(T) == 4 ? DType::f32 : DType::f64)) {
      v.resize(numel(e.shape));
      std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    } else {
      for (double x : e.values()) v.push_back(static_cast<T>(x));
    }
    if (store.contains(e.name)) {
      auto& entry = store.entry(e.name);
      if (entry.value.shape() != e.shape)
        throw ShapeError("checkpoint entry '" + e.name + "' has shape " + shape_str(e.shape) + ", model expects " +
                         shape_str(entry.value.shape()));
      std::copy(v.begin(), v.end(), entry.value.mutable_data().begin());
    } else {
      store.add(e.name, e.shape, std::move(v), e.name.rfind("backbone.", 0) == 0);
    }
  }
  store.set_step_count(checkpoint_step(ckpt));
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = ckpt.serialize();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Checkpoint::parse(bytes);
}

std::string checkpoint_config_json(const Checkpoint& ckpt) {
  try {
    const auto j = nlohmann::json::parse(ckpt.blob);
    return j.at("config").dump();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config blob is not valid: ") + e.what(), 16);
  }
}

std::uint64_t checkpoint_step(const Checkpoint& ckpt) {
  try {
    const auto j = nlohmann::json::parse(ckpt.blob);
    return j.value("step", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config blob is not valid: ") + e.what(), 16);
  }
}

template Checkpoint make_checkpoint(const ParamStore<float>&, const std::string&);
template Checkpoint make_checkpoint(const ParamStore<double>&, const std::string&);
template void restore_params(const Checkpoint&, ParamStore<float>&);
template void restore_params(const Checkpoint&, ParamStore<double>&);

}  // namespace almrr
