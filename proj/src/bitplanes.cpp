#include "bsattn/bitplanes.hpp"

#include <stdexcept>
#include <string>

namespace bsattn {

BitPlaneStore::BitPlaneStore(std::size_t num_keys, std::size_t head_dim, int bits)
    : num_keys_(num_keys),
      head_dim_(head_dim),
      bits_(bits),
      words_per_plane_((head_dim + 63) / 64),
      words_(num_keys * static_cast<std::size_t>(bits) * words_per_plane_, 0) {
  validate_bits(bits);
}

std::size_t BitPlaneStore::offset(std::size_t key, int round) const {
  if (key >= num_keys_ || round < 0 || round >= bits_) {
    throw std::out_of_range("bit plane (" + std::to_string(key) + ", " + std::to_string(round) +
                            ") out of range");
  }
  return (key * static_cast<std::size_t>(bits_) + static_cast<std::size_t>(round)) *
         words_per_plane_;
}

std::span<const std::uint64_t> BitPlaneStore::plane(std::size_t key, int round) const {
  return {words_.data() + offset(key, round), words_per_plane_};
}

std::span<std::uint64_t> BitPlaneStore::plane(std::size_t key, int round) {
  return {words_.data() + offset(key, round), words_per_plane_};
}

Vector<std::int32_t> BitPlaneStore::reconstruct_row(std::size_t key) const {
  Vector<std::int32_t> row(static_cast<Eigen::Index>(head_dim_));
  for (std::size_t h = 0; h < head_dim_; ++h) {
    std::int32_t x = bit(key, 0, h) ? -(std::int32_t{1} << (bits_ - 1)) : 0;
    for (int r = 1; r < bits_; ++r) {
      if (bit(key, r, h)) x += std::int32_t{1} << (bits_ - 1 - r);
    }
    row[static_cast<Eigen::Index>(h)] = x;
  }
  return row;
}

BitPlaneStore decompose_bitplanes(const QuantizedMatrix& keys) {
  keys.validate();
  const int bits = keys.params.bits;
  BitPlaneStore store(static_cast<std::size_t>(keys.rows()), static_cast<std::size_t>(keys.cols()),
                      bits);
  const std::uint32_t mask = (std::uint32_t{1} << bits) - 1;
  for (Eigen::Index j = 0; j < keys.rows(); ++j) {
    for (Eigen::Index h = 0; h < keys.cols(); ++h) {
      const std::uint32_t code = static_cast<std::uint32_t>(keys.values(j, h)) & mask;
      for (int r = 0; r < bits; ++r) {
        if ((code >> (bits - 1 - r)) & 1u) {
          store.plane(static_cast<std::size_t>(j), r)[static_cast<std::size_t>(h) / 64] |=
              std::uint64_t{1} << (static_cast<std::size_t>(h) % 64);
        }
      }
    }
  }
  return store;
}

}  // namespace bsattn
