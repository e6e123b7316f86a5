#pragma once

// Matrix persistence (CSV and a small binary container) and grayscale PGM
// ingestion for stacking image sets into data matrices.
//
// Binary layout, all little-endian:
//   offset  0  "RPCA"            4 bytes magic
//   offset  4  version (u32)     currently 1
//   offset  8  rows (u64)
//   offset 16  cols (u64)
//   offset 24  rows*cols f64     row-major payload
//
// CSV: '.' decimal separator, ',' delimiter, '\n' row terminator, no header.
// Values are written with shortest round-trip formatting.

#include "rpca/types.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace rpca {

enum class MatrixFormat { csv, binary };

inline constexpr std::array<char, 4> kBinaryMagic{'R', 'P', 'C', 'A'};
inline constexpr std::uint32_t kBinaryVersion = 1;
inline constexpr std::size_t kBinaryHeaderBytes = 24;

/// Picks the format from the file extension: ".csv" is CSV, anything else binary.
inline MatrixFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? MatrixFormat::csv : MatrixFormat::binary;
}

namespace detail {

template <class T>
T load_le(const unsigned char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&value);
    std::reverse(b, b + sizeof(T));
  }
  return value;
}

template <class T>
void store_le(std::vector<unsigned char>& out, T value) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("I/O failure writing '" + path.string() + "'");
}

inline DenseMatrix parse_binary(std::span<const unsigned char> bytes) {
  if (bytes.size() < kBinaryHeaderBytes) {
    throw Error("malformed header at byte 0: file holds " + std::to_string(bytes.size()) +
                " bytes, header needs " + std::to_string(kBinaryHeaderBytes));
  }
  if (!std::equal(kBinaryMagic.begin(), kBinaryMagic.end(), bytes.begin())) {
    throw Error("malformed header at byte 0: bad magic");
  }
  const auto version = load_le<std::uint32_t>(bytes.data() + 4);
  if (version != kBinaryVersion) {
    throw Error("malformed header at byte 4: unsupported version " + std::to_string(version));
  }
  const auto rows = load_le<std::uint64_t>(bytes.data() + 8);
  const auto cols = load_le<std::uint64_t>(bytes.data() + 16);
  if (rows == 0 || cols == 0) throw Error("malformed header at byte 8: zero dimension");
  if (rows > (std::uint64_t{1} << 32) || cols > (std::uint64_t{1} << 32)) {
    throw Error("malformed header at byte 8: implausible dimensions");
  }
  const std::uint64_t expected = rows * cols * sizeof(double);
  const std::uint64_t payload = bytes.size() - kBinaryHeaderBytes;
  if (payload != expected) {
    throw Error("dimension/payload mismatch at byte " + std::to_string(kBinaryHeaderBytes) +
                ": header declares " + std::to_string(expected) + " payload bytes, found " +
                std::to_string(payload));
  }
  DenseMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  const unsigned char* p = bytes.data() + kBinaryHeaderBytes;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j, p += sizeof(double)) {
      const double v = load_le<double>(p);
      if (!std::isfinite(v)) {
        throw Error("non-finite value at byte " + std::to_string(p - bytes.data()));
      }
      m(i, j) = v;
    }
  }
  return m;
}

inline std::vector<unsigned char> encode_binary(const DenseMatrix& m) {
  std::vector<unsigned char> out;
  out.reserve(kBinaryHeaderBytes + static_cast<std::size_t>(m.size()) * sizeof(double));
  out.insert(out.end(), kBinaryMagic.begin(), kBinaryMagic.end());
  store_le<std::uint32_t>(out, kBinaryVersion);
  store_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  store_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) store_le<double>(out, m(i, j));
  return out;
}

inline DenseMatrix parse_csv(std::string_view text) {
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      // Only trailing blank lines are tolerated.
      if (text.find_first_not_of("\r\n", pos) == std::string_view::npos) break;
      throw Error("malformed row at line " + std::to_string(line_no) + ": empty line");
    }
    Index count = 0;
    std::size_t field_start = 0;
    while (true) {
      std::size_t comma = line.find(',', field_start);
      std::string_view field =
          line.substr(field_start, comma == std::string_view::npos ? std::string_view::npos
                                                                   : comma - field_start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw Error("unparsable value '" + std::string(field) + "' at line " +
                    std::to_string(line_no) + ", column " + std::to_string(count + 1));
      }
      if (!std::isfinite(v)) {
        throw Error("non-finite value at line " + std::to_string(line_no) + ", column " +
                    std::to_string(count + 1));
      }
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      field_start = comma + 1;
    }
    if (cols < 0) {
      cols = count;
    } else if (count != cols) {
      throw Error("dimension mismatch at line " + std::to_string(line_no) + ": expected " +
                  std::to_string(cols) + " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  if (rows == 0) throw Error("malformed header at line 1: no data rows");
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

inline std::string encode_csv(const DenseMatrix& m) {
  std::string out;
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof(buf), m(i, j));
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace detail

inline DenseMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  const auto bytes = detail::read_all(path);
  try {
    if (format == MatrixFormat::binary) return detail::parse_binary(bytes);
    return detail::parse_csv(
        std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline DenseMatrix load_matrix(const std::filesystem::path& path) {
  return load_matrix(path, format_from_path(path));
}

inline void save_matrix(const DenseMatrix& m, const std::filesystem::path& path,
                        MatrixFormat format) {
  if (format == MatrixFormat::binary) {
    detail::write_all(path, detail::encode_binary(m));
  } else {
    const std::string text = detail::encode_csv(m);
    detail::write_all(path, std::span(reinterpret_cast<const unsigned char*>(text.data()),
                                      text.size()));
  }
}

inline void save_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  save_matrix(m, path, format_from_path(path));
}

// ---------------------------------------------------------------------------
// PGM images

/// A grayscale image; pixel(i, j) is row i (top to bottom), column j. Values
/// are rescaled to [0, 255] on load.
struct GrayImage {
  DenseMatrix pixels;

  Index height() const { return pixels.rows(); }
  Index width() const { return pixels.cols(); }
};

namespace detail {

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
inline std::uint64_t pgm_token(std::span<const unsigned char> bytes, std::size_t& pos,
                               const std::string& name) {
  while (pos < bytes.size()) {
    const unsigned char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  std::uint64_t v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > (std::uint64_t{1} << 32)) break;
    ++pos;
  }
  if (pos == start) throw Error(name + ": not a PGM (bad header at byte " + std::to_string(start) + ")");
  return v;
}

}  // namespace detail

/// Reads a binary (P5) PGM. 16-bit images (maxval > 255) are big-endian per
/// the Netpbm convention.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  const std::string name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw Error(name + ": not a PGM (expected P5 magic at byte 0)");
  }
  std::size_t pos = 2;
  const auto width = detail::pgm_token(bytes, pos, name);
  const auto height = detail::pgm_token(bytes, pos, name);
  const auto maxval = detail::pgm_token(bytes, pos, name);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw Error(name + ": not a PGM (invalid header values)");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw Error(name + ": not a PGM (missing separator at byte " + std::to_string(pos) + ")");
  }
  ++pos;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t need = width * height * bpp;
  if (bytes.size() - pos < need) {
    throw Error(name + ": truncated PGM payload at byte " + std::to_string(pos));
  }
  GrayImage img{DenseMatrix(static_cast<Index>(height), static_cast<Index>(width))};
  const double scale = 255.0 / static_cast<double>(maxval);
  for (Index i = 0; i < img.height(); ++i) {
    for (Index j = 0; j < img.width(); ++j) {
      unsigned v = bytes[pos];
      if (bpp == 2) v = (v << 8) | bytes[pos + 1];
      pos += bpp;
      img.pixels(i, j) = maxval == 255 ? static_cast<double>(v) : v * scale;
    }
  }
  return img;
}

/// Writes an 8-bit P5 PGM, clamping to [0, 255] and rounding.
inline void write_pgm(const DenseMatrix& pixels, const std::filesystem::path& path) {
  const std::string header = "P5\n" + std::to_string(pixels.cols()) + " " +
                             std::to_string(pixels.rows()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(pixels.size()));
  for (Index i = 0; i < pixels.rows(); ++i) {
    for (Index j = 0; j < pixels.cols(); ++j) {
      const double v = std::isfinite(pixels(i, j)) ? std::clamp(pixels(i, j), 0.0, 255.0) : 0.0;
      out.push_back(static_cast<unsigned char>(std::lround(v)));
    }
  }
  detail::write_all(path, out);
}

/// Column-major vectorization: entry (i, j) of an h-by-w image goes to row
/// i + j*h. This order is frozen; column_to_image inverts it.
inline Vector vectorize(const DenseMatrix& image) {
  return Eigen::Map<const Vector>(image.data(), image.size());
}

inline DenseMatrix column_to_image(const Eigen::Ref<const Vector>& column, Index height,
                                   Index width) {
  if (column.size() != height * width) throw Error("column length does not match image shape");
  return Eigen::Map<const DenseMatrix>(column.data(), height, width);
}

/// Stacks images as columns of a (height*width) x count matrix.
inline DenseMatrix stack_images(const std::vector<GrayImage>& images) {
  if (images.empty()) throw Error("stack_images: no images");
  const Index h = images.front().height();
  const Index w = images.front().width();
  DenseMatrix out(h * w, static_cast<Index>(images.size()));
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].height() != h || images[k].width() != w) {
      throw Error("stack_images: image " + std::to_string(k) + " is " +
                  std::to_string(images[k].height()) + "x" + std::to_string(images[k].width()) +
                  ", expected " + std::to_string(h) + "x" + std::to_string(w));
    }
    out.col(static_cast<Index>(k)) = vectorize(images[k].pixels);
  }
  return out;
}

inline DenseMatrix stack_images(const std::vector<std::filesystem::path>& paths) {
  std::vector<GrayImage> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(read_pgm(p));
  if (images.empty()) throw Error("stack_images: no images");
  try {
    return stack_images(images);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " (dimension mismatch)");
  }
}

}  // namespace rpca
