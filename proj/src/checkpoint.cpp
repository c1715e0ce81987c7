#include "gazeattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gazeattn/dataset.hpp"
#include "gazeattn/error.hpp"

namespace gazeattn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'Z', 'A', 'C', 'K', 'P', 'T', '\0'};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::Float32: return 4;
    case DType::Float64: return 8;
    case DType::Int64: return 8;
    case DType::UInt8: return 1;
  }
  throw ValidationError("unknown checkpoint dtype");
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::Float32: return "float32";
    case DType::Float64: return "float64";
    case DType::Int64: return "int64";
    case DType::UInt8: return "uint8";
  }
  return "?";
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::Float32;
  else return DType::Float64;
}

template <typename T>
NamedArray to_entry(const std::string& name, const Tensor<T>& t) {
  NamedArray e{name, dtype_of<T>(), t.shape(), std::vector<std::uint8_t>(t.size() * sizeof(T))};
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  return e;
}

template <typename U>
void put_pod(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename U>
  U pod() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ValidationError("checkpoint is truncated");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor<float>& t) { entries.push_back(to_entry(name, t)); }
void Checkpoint::put(const std::string& name, const Tensor<double>& t) { entries.push_back(to_entry(name, t)); }

void Checkpoint::put_int(const std::string& name, std::int64_t value) {
  NamedArray e{name, DType::Int64, {1}, std::vector<std::uint8_t>(8)};
  std::memcpy(e.bytes.data(), &value, 8);
  entries.push_back(std::move(e));
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  entries.push_back({name, DType::UInt8, {int(text.size())}, std::vector<std::uint8_t>(text.begin(), text.end())});
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

const NamedArray& Checkpoint::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw ValidationError("checkpoint has no entry '" + name + "'");
}

template <typename T>
Tensor<T> Checkpoint::get(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != dtype_of<T>()) {
    throw ValidationError("checkpoint entry '" + name + "' is " + dtype_name(e.dtype));
  }
  Tensor<T> t(e.shape);
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

std::int64_t Checkpoint::get_int(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != DType::Int64 || e.bytes.size() != 8) throw ValidationError("entry '" + name + "' is not an int64");
  std::int64_t v;
  std::memcpy(&v, e.bytes.data(), 8);
  return v;
}

std::string Checkpoint::get_text(const std::string& name) const {
  const auto& e = at(name);
  if (e.dtype != DType::UInt8) throw ValidationError("entry '" + name + "' is not text");
  return std::string(e.bytes.begin(), e.bytes.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_pod<std::uint32_t>(out, version);
  put_pod<std::uint32_t>(out, std::uint32_t(entries.size()));
  for (const auto& e : entries) {
    put_pod<std::uint32_t>(out, std::uint32_t(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_pod<std::uint8_t>(out, std::uint8_t(e.dtype));
    put_pod<std::uint32_t>(out, std::uint32_t(e.shape.size()));
    for (int d : e.shape) put_pod<std::uint64_t>(out, std::uint64_t(d));
    put_pod<std::uint64_t>(out, std::uint64_t(e.bytes.size()));
    out.insert(out.end(), e.bytes.begin(), e.bytes.end());
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(8), kMagic, 8) != 0) throw ValidationError("not a checkpoint file (bad magic)");
  Checkpoint ck;
  ck.version = r.pod<std::uint32_t>();
  if (ck.version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray e;
    const auto len = r.pod<std::uint32_t>();
    const auto* name = r.take(len);
    e.name.assign(reinterpret_cast<const char*>(name), len);
    const auto dt = r.pod<std::uint8_t>();
    if (dt > 3) throw ValidationError("entry '" + e.name + "' has unknown dtype");
    e.dtype = DType(dt);
    const auto rank = r.pod<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(int(r.pod<std::uint64_t>()));
    const auto nbytes = r.pod<std::uint64_t>();
    if (nbytes != shape_size(e.shape) * dtype_size(e.dtype)) {
      throw ValidationError("entry '" + e.name + "' byte count does not match its shape");
    }
    const auto* data = r.take(nbytes);
    e.bytes.assign(data, data + nbytes);
    ck.entries.push_back(std::move(e));
  }
  if (!r.done()) throw ValidationError("trailing bytes after checkpoint entries");
  return ck;
}

std::string Checkpoint::manifest() const {
  std::ostringstream os;
  os << "# gazeattn checkpoint, format version " << version << '\n';
  for (const auto& e : entries) os << e.name << ' ' << dtype_name(e.dtype) << ' ' << shape_string(e.shape) << '\n';
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = ckpt.serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
  out.close();
  write_text_file(path.string() + ".manifest", ckpt.manifest());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Checkpoint::deserialize(bytes);
}

template <typename T>
Checkpoint make_checkpoint(Backbone<T>& model, const SgdState<T>* state, std::int64_t iteration,
                           const std::string& config_text) {
  Checkpoint ck;
  const auto params = model.params();
  for (auto* p : params) ck.put(p->name, p->value);
  for (auto* b : model.buffers()) ck.put(b->name, b->value);
  if (state && !state->momentum.empty()) {
    if (state->momentum.size() != params.size()) throw ShapeError("optimizer state does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) ck.put("momentum/" + params[i]->name, state->momentum[i]);
  }
  ck.put_int("meta/iteration", iteration);
  ck.put_text("meta/config", config_text);
  return ck;
}

template <typename T>
std::int64_t restore_checkpoint(const Checkpoint& ckpt, Backbone<T>& model, SgdState<T>* state) {
  const auto params = model.params();
  auto load_into = [&](Param<T>& p) {
    Tensor<T> v = ckpt.get<T>(p.name);
    require_shape(v.shape(), p.value.shape(), "checkpoint entry " + p.name);
    p.value = std::move(v);
  };
  for (auto* p : params) load_into(*p);
  for (auto* b : model.buffers()) load_into(*b);
  if (state) {
    state->momentum.clear();
    for (auto* p : params) {
      const std::string key = "momentum/" + p->name;
      state->momentum.push_back(ckpt.contains(key) ? ckpt.get<T>(key) : Tensor<T>(p->value.shape()));
    }
  }
  return ckpt.contains("meta/iteration") ? ckpt.get_int("meta/iteration") : 0;
}

template Tensor<float> Checkpoint::get<float>(const std::string&) const;
template Tensor<double> Checkpoint::get<double>(const std::string&) const;
template Checkpoint make_checkpoint<float>(Backbone<float>&, const SgdState<float>*, std::int64_t, const std::string&);
template Checkpoint make_checkpoint<double>(Backbone<double>&, const SgdState<double>*, std::int64_t,
                                            const std::string&);
template std::int64_t restore_checkpoint<float>(const Checkpoint&, Backbone<float>&, SgdState<float>*);
template std::int64_t restore_checkpoint<double>(const Checkpoint&, Backbone<double>&, SgdState<double>*);

}  // namespace gazeattn
