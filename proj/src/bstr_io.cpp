#include "bsattn/bstr_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bsattn {
namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  U u;
  std::memcpy(&u, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  }
  T value;
  std::memcpy(&value, &u, sizeof(T));
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const TensorF32& t) {
  if (t.rank() > 255) throw std::invalid_argument("BSTR supports at most 255 dimensions");
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kBstrMagic), std::end(kBstrMagic));
  put_le<std::uint16_t>(out, kBstrVersion);
  out.push_back(kBstrDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) put_le<std::uint64_t>(out, d);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) {
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t.data()[i]));
  }
  return out;
}

TensorF32 decode_tensor(const std::vector<std::uint8_t>& bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 8) throw FormatError(K::kTruncated, "BSTR header truncated");
  if (std::memcmp(bytes.data(), kBstrMagic, 4) != 0) {
    throw FormatError(K::kBadMagic, "bad magic: expected \"BSTR\"");
  }
  const auto version = get_le<std::uint16_t>(bytes.data() + 4);
  if (version != kBstrVersion) {
    throw FormatError(K::kVersionMismatch,
                      "unsupported BSTR version " + std::to_string(version) + " (expected 1)");
  }
  const auto dtype = bytes[6];
  if (dtype != kBstrDtypeF32) {
    throw FormatError(K::kUnsupportedDtype, "unsupported dtype code " + std::to_string(dtype));
  }
  const std::size_t ndim = bytes[7];
  if (ndim == 0) throw FormatError(K::kBadHeader, "BSTR tensor has zero dimensions");
  const std::size_t header = 8 + 8 * ndim;
  if (bytes.size() < header) throw FormatError(K::kTruncated, "BSTR dims truncated");

  Dims dims(ndim);
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = get_le<std::uint64_t>(bytes.data() + 8 + 8 * i);
    if (dims[i] == 0) throw FormatError(K::kBadHeader, "BSTR dimension " + std::to_string(i) + " is zero");
    if (count > (std::size_t{1} << 40) / dims[i]) {
      throw FormatError(K::kBadHeader, "BSTR dims product too large");
    }
    count *= dims[i];
  }
  const std::size_t payload = bytes.size() - header;
  if (payload != 4 * count) {
    throw FormatError(K::kTruncated, "payload is " + std::to_string(payload) + " bytes but dims need " +
                                         std::to_string(4 * count));
  }
  Vector<float> data(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    data[static_cast<Eigen::Index>(i)] =
        std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + header + 4 * i));
  }
  return TensorF32(std::move(dims), std::move(data));
}

void save_tensor(const TensorF32& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError(FormatError::Kind::kIo, "write failed: " + path.string());
}

TensorF32 load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace bsattn
