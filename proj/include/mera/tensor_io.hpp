#pragma once
// Binary container for complex tensors.
//
//   bytes 0..7   ASCII magic "MERATNSR"
//   bytes 8..15  header length h, uint64 little-endian
//   next h bytes JSON header: {"shape":[...],"dtype":"c128","layout":"row-major",
//                              "metadata":{...}}
//   remainder    prod(shape) pairs of little-endian float64 (re, im)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "mera/tensor.hpp"

namespace mera {

namespace detail {

inline constexpr char kTensorMagic[8] = {'M', 'E', 'R', 'A', 'T', 'N', 'S', 'R'};

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ValidationError("tensor container truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace detail

struct StoredTensor {
  CTensor tensor;
  nlohmann::json metadata = nlohmann::json::object();
};

inline void write_tensor(std::ostream& os, const CTensor& t,
                         const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json header;
  header["shape"] = t.shape();
  header["dtype"] = "c128";
  header["layout"] = "row-major";
  header["metadata"] = metadata;
  const std::string h = header.dump();
  os.write(detail::kTensorMagic, 8);
  detail::put_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const cplx& z : t.data()) {
    detail::put_f64(os, z.real());
    detail::put_f64(os, z.imag());
  }
  if (!os) throw Error("failed writing tensor container");
}

inline StoredTensor read_tensor(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kTensorMagic, 8) != 0)
    throw ValidationError("not a tensor container (bad magic)");
  const std::uint64_t hlen = detail::get_u64(is);
  if (hlen > (1u << 24)) throw ValidationError("tensor container header too large");
  std::string h(hlen, '\0');
  if (!is.read(h.data(), static_cast<std::streamsize>(hlen)))
    throw ValidationError("tensor container truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tensor container header is not JSON: ") + e.what());
  }
  if (header.value("dtype", "") != "c128" || header.value("layout", "") != "row-major")
    throw ValidationError("tensor container must be dtype c128, layout row-major");
  const auto shape = header.at("shape").get<std::vector<std::size_t>>();
  std::vector<cplx> data(detail::volume(shape));
  for (cplx& z : data) {
    const double re = detail::get_f64(is);
    const double im = detail::get_f64(is);
    z = {re, im};
  }
  StoredTensor out{CTensor(shape, std::move(data)), nlohmann::json::object()};
  if (header.contains("metadata")) out.metadata = header["metadata"];
  return out;
}

inline void save_tensor(const std::filesystem::path& path, const CTensor& t,
                        const nlohmann::json& metadata = nlohmann::json::object()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so a reader never sees a partial file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    write_tensor(os, t, metadata);
  }
  std::filesystem::rename(tmp, path);
}

inline StoredTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open tensor file " + path.string());
  return read_tensor(is);
}

}  // namespace mera
