#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sq/calib.hpp"
#include "sq/graph.hpp"
#include "sq/smooth.hpp"
#include "sq/tensor.hpp"

namespace sq {

// SQTC binary tensor container, little-endian throughout:
//
//   magic   "SQTC"          4 bytes
//   version u32             (currently 1)
//   count   u32             number of entries
//   entry:
//     name_len u16, name bytes (UTF-8, unique within a file)
//     dtype    u8           0 = float32, 1 = int8, 2 = int32
//     rank     u8
//     extents  u64 x rank
//     payload  product(extents) * sizeof(dtype) raw bytes
//
// docs/container-format.md carries the same description.
enum class DType : std::uint8_t { F32 = 0, I8 = 1, I32 = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::variant<std::vector<float>, std::vector<std::int8_t>, std::vector<std::int32_t>> payload;

  DType dtype() const { return static_cast<DType>(payload.index()); }
  std::uint64_t element_count() const;

  static ContainerEntry from_tensor(std::string name, const Tensor& t);
  static ContainerEntry scalar_f32(std::string name, float v);
  static ContainerEntry scalar_i32(std::string name, std::int32_t v);
  static ContainerEntry vector_f32(std::string name, std::span<const float> v);

  Tensor to_tensor() const;
  float as_scalar_f32() const;
  std::int32_t as_scalar_i32() const;
  const std::vector<float>& as_f32() const;
  const std::vector<std::int8_t>& as_i8() const;
};

std::vector<std::byte> encode_container(const std::vector<ContainerEntry>& entries);

// Throws FormatError (with byte offset) on any malformed input; never reads
// past the declared lengths or the end of the buffer.
std::vector<ContainerEntry> parse_container(std::span<const std::byte> bytes);

// Atomic write: temp file in the same directory, then rename.
void save_container(const std::string& path, const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> load_container(const std::string& path);

// Artifact <-> entry mappings used by the CLI pipeline stages.
std::vector<ContainerEntry> plan_to_entries(const SmoothingPlan& plan);
SmoothingPlan plan_from_entries(const std::vector<ContainerEntry>& entries);

std::vector<ContainerEntry> calib_to_entries(const CalibResult& calib);
CalibResult calib_from_entries(const std::vector<ContainerEntry>& entries);

std::vector<ContainerEntry> model_to_entries(const ModelGraph& model);
ModelGraph model_from_entries(const std::vector<ContainerEntry>& entries);

// Per-tensor int8 weights plus scales and float leftovers for a quantized
// model artifact.
std::vector<ContainerEntry> quantized_model_to_entries(const ModelGraph& model,
                                                       SettingLevel level,
                                                       const CalibResult& calib);

}  // namespace sq
