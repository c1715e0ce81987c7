#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   magic    8 bytes  "GZACKPT\0"
//   version  u32
//   count    u32
//   count x entry:
//     name_len u32, name bytes (UTF-8)
//     dtype    u8   0 = float32, 1 = float64, 2 = int64, 3 = uint8
//     rank     u32, dims u64 x rank
//     nbytes   u64, raw element bytes
//
// A text manifest "<file>.manifest" lists one "name dtype shape" line per entry.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gazeattn/backbone.hpp"
#include "gazeattn/tensor.hpp"

namespace gazeattn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1, Int64 = 2, UInt8 = 3 };

struct NamedArray {
  std::string name;
  DType dtype = DType::Float32;
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

class Checkpoint {
 public:
  std::uint32_t version = kCheckpointVersion;
  std::vector<NamedArray> entries;

  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);
  void put_int(const std::string& name, std::int64_t value);
  void put_text(const std::string& name, const std::string& text);

  const NamedArray& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  template <typename T>
  Tensor<T> get(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);
  std::string manifest() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Momentum buffers keyed like the parameters they belong to.
template <typename T>
struct SgdState {
  std::vector<Tensor<T>> momentum;
};

/// Parameters, buffers, momentum ("momentum/<name>"), "meta/iteration", "meta/config".
template <typename T>
Checkpoint make_checkpoint(Backbone<T>& model, const SgdState<T>* state, std::int64_t iteration,
                           const std::string& config_text);

/// Loads parameters and buffers (and momentum when `state` is given). Returns the iteration.
template <typename T>
std::int64_t restore_checkpoint(const Checkpoint& ckpt, Backbone<T>& model, SgdState<T>* state);

}  // namespace gazeattn
