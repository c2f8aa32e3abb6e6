#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bsattn/quantize.hpp"

namespace bsattn {

/// MSB-first two's-complement bit planes of every Key row. Plane r of key j
/// holds bit (N-1-r) of each of the H elements, so r = 0 is the sign plane.
/// Each plane is packed into ceil(H/64) little-endian 64-bit words.
class BitPlaneStore {
 public:
  BitPlaneStore() = default;
  BitPlaneStore(std::size_t num_keys, std::size_t head_dim, int bits);

  std::size_t num_keys() const { return num_keys_; }
  std::size_t head_dim() const { return head_dim_; }
  int bits() const { return bits_; }
  std::size_t words_per_plane() const { return words_per_plane_; }

  std::span<const std::uint64_t> plane(std::size_t key, int round) const;
  std::span<std::uint64_t> plane(std::size_t key, int round);

  bool bit(std::size_t key, int round, std::size_t h) const {
    return (plane(key, round)[h / 64] >> (h % 64)) & 1u;
  }

  /// Reassembles the integer row of `key` from its planes.
  Vector<std::int32_t> reconstruct_row(std::size_t key) const;

  /// Bytes moved by one plane fetch (H bits, rounded up to whole bytes).
  std::size_t plane_bytes() const { return (head_dim_ + 7) / 8; }

 private:
  std::size_t offset(std::size_t key, int round) const;

  std::size_t num_keys_ = 0;
  std::size_t head_dim_ = 0;
  int bits_ = 0;
  std::size_t words_per_plane_ = 0;
  std::vector<std::uint64_t> words_;
};

BitPlaneStore decompose_bitplanes(const QuantizedMatrix& keys);

}  // namespace bsattn
