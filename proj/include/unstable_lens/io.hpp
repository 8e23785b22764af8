#pragma once

#include "unstable_lens/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ulens {

// Native format: one JSON header line {"h":H,"w":W,"domain":TAG,"dtype":"c128"}
// followed by H*W interleaved (re, im) little-endian float64 pairs.
void save_image(const Image& image, const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);
std::string encode_image(const Image& image);
Image decode_image(std::string_view bytes);

// 8-bit grayscale PNG of |x| clamped to [0, peak], rounded half up.
void save_png(const Image& image, const std::filesystem::path& path, double peak);
void save_png(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> quantize_magnitude(const Image& image, double peak);

// Shortest round-trip decimal representation; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

// RFC-4180 writer with a mandatory header row.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(const std::vector<std::string>& fields);
  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_; }
  std::string str() const { return out_; }
  void save(const std::filesystem::path& path) const;

  static std::string escape(std::string_view field);

 private:
  void append(const std::vector<std::string>& fields);

  std::vector<std::string> header_;
  std::string out_;
  std::size_t rows_ = 0;
};

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// Little-endian float64 packing of complex vectors (re, im interleaved).
std::string pack_complex(const Eigen::VectorXcd& v);
Eigen::VectorXcd unpack_complex(std::string_view bytes);

}  // namespace ulens
