#include "ess/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ess {

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw std::runtime_error("ppm: truncated header");
  return std::string(bytes.substr(start, pos - start));
}

int parse_positive(const std::string& tok, const char* what) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || v <= 0 || v > 1 << 16) {
    throw std::runtime_error(std::string("ppm: bad ") + what + " '" + tok + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

Image decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw std::runtime_error("ppm: not a binary P6 file");
  const int w = parse_positive(next_token(bytes, pos), "width");
  const int h = parse_positive(next_token(bytes, pos), "height");
  if (parse_positive(next_token(bytes, pos), "maxval") != 255) throw std::runtime_error("ppm: maxval must be 255");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw std::runtime_error("ppm: missing raster separator");
  }
  ++pos;
  Image img(w, h);
  if (bytes.size() - pos != img.rgb.size()) {
    throw std::runtime_error("ppm: raster has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                             std::to_string(img.rgb.size()));
  }
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.rgb.begin());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_ppm(img);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_ppm(ss.str());
}

}  // namespace ess
