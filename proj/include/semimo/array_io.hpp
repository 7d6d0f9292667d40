// SPDX-License-Identifier: Apache-2.0
//
// Array container: a single-file format holding named arrays with a
// human-readable JSON manifest followed by raw little-endian payloads.
// Used for model checkpoints and generated datasets.
//
// Layout: 8-byte magic "SEMIMOA1" | u64 LE manifest length | manifest JSON |
// payloads concatenated in manifest order, each row-major.

#ifndef SEMIMO_ARRAY_IO_HPP
#define SEMIMO_ARRAY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "semimo/common.hpp"

namespace semimo::io {

using json = nlohmann::ordered_json;

inline constexpr char kMagic[8] = {'S', 'E', 'M', 'I', 'M', 'O', 'A', '1'};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::string dtype;  // "f64" | "f32" | "c64" (complex64: interleaved f32 re/im)
  std::vector<std::uint8_t> bytes;  // raw little-endian payload

  std::uint64_t n_elems() const {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  std::uint64_t elem_size() const {
    if (dtype == "f64") return 8;
    if (dtype == "f32") return 4;
    if (dtype == "c64") return 8;
    throw IoError("NamedArray: unknown dtype " + dtype);
  }
};

struct ArrayContainer {
  json meta;  // free-form: seeds, config echo, scaling constants
  std::vector<NamedArray> arrays;

  const NamedArray& find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw IoError("ArrayContainer: missing array " + name);
  }
  bool contains(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }
};

namespace detail {
inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f64_le(std::vector<std::uint8_t>& out, double d) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}
inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline double get_f64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}
inline float get_f32_le(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}
}  // namespace detail

// ---- Eigen adapters (row-major element order on disk) ----

inline NamedArray from_rmat(const std::string& name, const RMat& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.dtype = "f64";
  a.bytes.reserve(m.size() * 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) detail::put_f64_le(a.bytes, m(i, j));
  return a;
}

inline RMat to_rmat(const NamedArray& a) {
  if (a.dtype != "f64" || a.shape.size() != 2) throw IoError("to_rmat: expected 2-D f64 array");
  RMat m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  const std::uint8_t* p = a.bytes.data();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = detail::get_f64_le(p);
      p += 8;
    }
  return m;
}

/// Complex matrices stored as interleaved real/imag 32-bit floats.
inline NamedArray from_cmat_f32(const std::string& name, const CMat& m) {
  NamedArray a;
  a.name = name;
  a.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.dtype = "c64";
  a.bytes.reserve(m.size() * 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      detail::put_f32_le(a.bytes, static_cast<float>(m(i, j).real()));
      detail::put_f32_le(a.bytes, static_cast<float>(m(i, j).imag()));
    }
  return a;
}

inline CMat to_cmat(const NamedArray& a) {
  if (a.dtype != "c64" || a.shape.size() != 2) throw IoError("to_cmat: expected 2-D c64 array");
  CMat m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  const std::uint8_t* p = a.bytes.data();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float re = detail::get_f32_le(p);
      float im = detail::get_f32_le(p + 4);
      m(i, j) = cplx(re, im);
      p += 8;
    }
  return m;
}

inline void save_container(const ArrayContainer& c, const std::string& path) {
  json manifest;
  manifest["format"] = "semimo-array-v1";
  manifest["endianness"] = "little";
  manifest["arrays"] = json::array();
  for (const auto& a : c.arrays) {
    if (a.bytes.size() != a.n_elems() * a.elem_size())
      throw IoError("save_container: payload size mismatch for " + a.name);
    manifest["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", a.dtype}});
  }
  manifest["meta"] = c.meta.is_null() ? json::object() : c.meta;
  const std::string mstr = manifest.dump(2);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_container: cannot open " + path + " for writing");
  f.write(kMagic, 8);
  std::vector<std::uint8_t> len;
  detail::put_u64_le(len, mstr.size());
  f.write(reinterpret_cast<const char*>(len.data()), 8);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& a : c.arrays)
    f.write(reinterpret_cast<const char*>(a.bytes.data()),
            static_cast<std::streamsize>(a.bytes.size()));
  if (!f) throw IoError("save_container: write failed for " + path);
}

inline ArrayContainer load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_container: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("load_container: bad magic in " + path);
  std::uint8_t lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw IoError("load_container: truncated manifest in " + path);
  json manifest = json::parse(mstr);
  if (manifest.value("format", "") != "semimo-array-v1")
    throw IoError("load_container: unsupported format in " + path);

  ArrayContainer c;
  c.meta = manifest.value("meta", json::object());
  for (const auto& e : manifest["arrays"]) {
    NamedArray a;
    a.name = e.at("name").get<std::string>();
    a.shape = e.at("shape").get<std::vector<std::uint64_t>>();
    a.dtype = e.at("dtype").get<std::string>();
    a.bytes.resize(a.n_elems() * a.elem_size());
    f.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
    if (!f) throw IoError("load_container: truncated payload for " + a.name);
    c.arrays.push_back(std::move(a));
  }
  return c;
}

}  // namespace semimo::io

#endif  // SEMIMO_ARRAY_IO_HPP
