#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsattn/tensor.hpp"

namespace bsattn {

// BSTR layout, all fields little-endian:
//   "BSTR" | u16 version (=1) | u8 dtype (0 = f32) | u8 ndim | ndim x u64 dims | f32 payload
inline constexpr char kBstrMagic[4] = {'B', 'S', 'T', 'R'};
inline constexpr std::uint16_t kBstrVersion = 1;
inline constexpr std::uint8_t kBstrDtypeF32 = 0;

class FormatError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kUnsupportedDtype, kBadHeader, kTruncated };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<std::uint8_t> encode_tensor(const TensorF32& t);
TensorF32 decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const TensorF32& t, const std::filesystem::path& path);
TensorF32 load_tensor(const std::filesystem::path& path);

}  // namespace bsattn
