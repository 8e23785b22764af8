#include "unstable_lens/io.hpp"

#include <json.hpp>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ulens {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

double get_f64(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

constexpr std::int64_t kMaxSide = std::int64_t{1} << 24;

}  // namespace

std::string pack_complex(const Eigen::VectorXcd& v) {
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 16);
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    put_f64(out, v[k].real());
    put_f64(out, v[k].imag());
  }
  return out;
}

Eigen::VectorXcd unpack_complex(std::string_view bytes) {
  if (bytes.size() % 16 != 0) throw FormatError("complex payload length is not a multiple of 16");
  Eigen::VectorXcd v(static_cast<Eigen::Index>(bytes.size() / 16));
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const char* p = bytes.data() + 16 * k;
    v[k] = Complex(get_f64(p), get_f64(p + 8));
  }
  return v;
}

std::string encode_image(const Image& image) {
  nlohmann::ordered_json header;
  header["h"] = image.height();
  header["w"] = image.width();
  header["domain"] = to_string(image.domain());
  header["dtype"] = "c128";
  std::string out = header.dump();
  out.push_back('\n');
  out += pack_complex(image.flat());
  return out;
}

Image decode_image(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw FormatError("malformed header: missing newline");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("h") || !header.contains("w") ||
      !header["h"].is_number_integer() || !header["w"].is_number_integer()) {
    throw FormatError("malformed header: integer fields h and w are required");
  }
  if (header.value("dtype", std::string("c128")) != "c128") {
    throw FormatError("malformed header: unsupported dtype");
  }
  const auto h = header["h"].get<std::int64_t>();
  const auto w = header["w"].get<std::int64_t>();
  if (h < 0 || w < 0 || h > kMaxSide || w > kMaxSide) throw FormatError("dimension overflow");
  std::int64_t count = 0;
  std::int64_t payload = 0;
  if (__builtin_mul_overflow(h, w, &count) || __builtin_mul_overflow(count, std::int64_t{16}, &payload)) {
    throw FormatError("dimension overflow");
  }
  const Domain domain = domain_from_string(header.value("domain", std::string("image")));
  const auto body = bytes.substr(newline + 1);
  if (static_cast<std::int64_t>(body.size()) < payload) throw FormatError("truncated payload");
  if (static_cast<std::int64_t>(body.size()) > payload) throw FormatError("trailing bytes after payload");
  Image image(h, w, domain);
  image.flat() = unpack_complex(body);
  return image;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  write_text(path, encode_image(image));
}

Image load_image(const std::filesystem::path& path) { return decode_image(read_text(path)); }

std::vector<std::uint8_t> quantize_magnitude(const Image& image, double peak) {
  if (!(peak > 0.0)) throw ArgumentError("png peak must be positive");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.size()));
  const auto& v = image.values();
  for (Eigen::Index k = 0; k < image.size(); ++k) {
    const double m = std::clamp(std::abs(v.data()[k]), 0.0, peak);
    out[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(std::floor(m / peak * 255.0 + 0.5));
  }
  return out;
}

namespace {

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

void png_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void save_png(const Image& image, const std::filesystem::path& path, double peak) {
  const auto pixels = quantize_magnitude(image, peak);
  const auto h = static_cast<std::size_t>(image.height());
  const auto w = static_cast<std::size_t>(image.width());

  std::string raw;
  raw.reserve(h * (w + 1));
  for (std::size_t r = 0; r < h; ++r) {
    raw.push_back('\0');  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data() + r * w), w);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_len,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw FormatError("png compression failed");
  }
  packed.resize(packed_len);

  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr += std::string{'\x08', '\x00', '\x00', '\x00', '\x00'};  // 8-bit gray

  std::string out("\x89PNG\r\n\x1a\n", 8);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", packed);
  png_chunk(out, "IEND", "");
  write_text(path, out);
}

void save_png(const Image& image, const std::filesystem::path& path) {
  const double peak = image.size() ? image.magnitude().maxCoeff() : 0.0;
  save_png(image, path, peak > 0.0 ? peak : 1.0);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw ArgumentError("csv header row is mandatory");
  append(header_);
}

std::string CsvWriter::escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void CsvWriter::append(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_.push_back(',');
    out_ += escape(fields[i]);
  }
  out_ += "\r\n";
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != header_.size()) throw ShapeError("csv row width differs from header");
  append(fields);
  ++rows_;
  return *this;
}

void CsvWriter::save(const std::filesystem::path& path) const { write_text(path, out_); }

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest.data());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw FormatError("invalid base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

}  // namespace ulens
