#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "horcrux/error.hpp"
#include "horcrux/matrix.hpp"

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace horcrux::npy {

/// A C-ordered numeric array as read from disk, widened to double.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

/// Serializes `data` as version-1.0 NPY with dtype '<f4'.
inline std::string encode_f32(std::span<const double> data, std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  require(n == data.size(), ErrorKind::invalid_input, "npy: shape does not match data size");

  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dims += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dims += ",";
    if (i + 1 < shape.size()) dims += " ";
  }
  std::string header =
      "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t preamble = 10;
  const std::size_t total = ((preamble + header.size() + 1 + 63) / 64) * 64;
  header.append(total - preamble - header.size() - 1, ' ');
  header.push_back('\n');

  std::string out("\x93NUMPY\x01\x00", 8);
  const auto hlen = static_cast<std::uint16_t>(header.size());
  out.push_back(static_cast<char>(hlen & 0xff));
  out.push_back(static_cast<char>(hlen >> 8));
  out += header;
  const std::size_t off = out.size();
  out.resize(off + 4 * data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto v = static_cast<float>(data[i]);
    std::memcpy(out.data() + off + 4 * i, &v, 4);
  }
  return out;
}

inline Array decode(const std::string& bytes, const std::string& what = "npy") {
  const auto bad = [&](const std::string& why) { fail(ErrorKind::invalid_input, what + ": " + why); };
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) bad("not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t hlen = 0, hstart = 0;
  if (major == 1) {
    hlen = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    hstart = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) bad("truncated header");
    hlen = 0;
    for (int i = 3; i >= 0; --i) hlen = (hlen << 8) | static_cast<unsigned char>(bytes[8 + i]);
    hstart = 12;
  } else {
    bad("unsupported NPY version");
  }
  if (bytes.size() < hstart + hlen) bad("truncated header");
  const std::string header = bytes.substr(hstart, hlen);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']*)')"))) bad("missing descr");
  const std::string descr = m[1];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")) &&
      m[1] == "True")
    bad("Fortran-ordered arrays are not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) bad("missing shape");

  Array a;
  const std::string dims = m[1];
  const std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator();
       ++it)
    a.shape.push_back(std::stoull(it->str()));

  std::size_t width = 0;
  if (descr == "<f4" || descr == "f4") {
    width = 4;
  } else if (descr == "<f8" || descr == "f8") {
    width = 8;
  } else {
    bad("unsupported dtype '" + descr + "' (expected <f4 or <f8)");
  }
  const std::size_t n = a.count();
  const std::size_t off = hstart + hlen;
  if (bytes.size() < off + n * width) bad("truncated data");
  a.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (width == 4) {
      float v;
      std::memcpy(&v, bytes.data() + off + 4 * i, 4);
      a.data[i] = v;
    } else {
      std::memcpy(&a.data[i], bytes.data() + off + 8 * i, 8);
    }
  }
  return a;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + p.string());
}

inline Array load(const std::filesystem::path& p) { return decode(read_bytes(p), p.string()); }

inline void save(const std::filesystem::path& p, std::span<const double> data) {
  const std::size_t shape[] = {data.size()};
  write_bytes(p, encode_f32(data, shape));
}

inline void save(const std::filesystem::path& p, const Matrix& m) {
  const std::size_t shape[] = {m.rows(), m.cols()};
  write_bytes(p, encode_f32(m.values(), shape));
}

inline Matrix load_matrix(const std::filesystem::path& p) {
  Array a = load(p);
  require(a.shape.size() == 2, ErrorKind::invalid_input, p.string() + ": expected a 2-D array");
  return Matrix(a.shape[0], a.shape[1], std::move(a.data));
}

inline std::vector<double> load_vector(const std::filesystem::path& p) {
  Array a = load(p);
  require(a.shape.size() == 1 || (a.shape.size() == 2 && (a.shape[0] == 1 || a.shape[1] == 1)),
          ErrorKind::invalid_input, p.string() + ": expected a 1-D array");
  return std::move(a.data);
}

}  // namespace horcrux::npy
