#pragma once

#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbp/errors.hpp"

namespace qbp {

/// q-level image, channel planes stored one after another, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::size_t q = 8;
  std::vector<int> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::size_t levels, int fill = 0)
      : width(w), height(h), channels(c), q(levels), data(w * h * c, fill) {
    require(c == 1 || c == 3, "images have 1 or 3 channels");
    require(levels >= 2, "need at least two intensity levels");
  }

  std::size_t pixels() const { return width * height; }
  int& at(std::size_t c, std::size_t i) { return data[c * pixels() + i]; }
  int at(std::size_t c, std::size_t i) const { return data[c * pixels() + i]; }

  void validate() const {
    require(channels == 1 || channels == 3, "images have 1 or 3 channels");
    require(data.size() == pixels() * channels, "image buffer size mismatch");
    for (int v : data) require(v >= 0 && static_cast<std::size_t>(v) < q, "intensity out of range");
  }
};

/// h = I + noise, same layout as Image.
struct DegradedImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> values;

  std::size_t pixels() const { return width * height; }
  double at(std::size_t c, std::size_t i) const { return values[c * pixels() + i]; }
};

namespace detail {

inline std::string pnm_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  if (tok.empty()) throw ParseError("unexpected end of image file");
  return tok;
}

inline long pnm_number(std::istream& in) {
  const auto tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v < 0) throw ParseError("bad number in image file: " + tok);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad number in image file: " + tok);
  }
}

}  // namespace detail

/// Plain PGM (P2) or PPM (P3). maxval q-1 is read as is; any other maxval is
/// quantised with round(v (q - 1) / maxval).
inline Image read_pnm(std::istream& in, std::size_t q = 8) {
  const auto magic = detail::pnm_token(in);
  std::size_t channels = 0;
  if (magic == "P2") channels = 1;
  else if (magic == "P3") channels = 3;
  else throw ParseError("only plain PGM (P2) and PPM (P3) are supported, got " + magic);
  const long w = detail::pnm_number(in);
  const long h = detail::pnm_number(in);
  const long maxval = detail::pnm_number(in);
  if (w <= 0 || h <= 0 || maxval <= 0) throw ParseError("bad image header");
  Image img(static_cast<std::size_t>(w), static_cast<std::size_t>(h), channels, q);
  const bool native = static_cast<std::size_t>(maxval) == q - 1;
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const long v = detail::pnm_number(in);
      if (v > maxval) throw ParseError("sample exceeds maxval");
      img.at(c, i) = native ? static_cast<int>(v)
                            : static_cast<int>(std::lround(static_cast<double>(v) * static_cast<double>(q - 1) /
                                                           static_cast<double>(maxval)));
    }
  }
  return img;
}

inline Image read_pnm(const std::string& path, std::size_t q = 8) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_pnm(in, q);
}

inline void write_pnm(std::ostream& out, const Image& img) {
  img.validate();
  out << (img.channels == 1 ? "P2" : "P3") << '\n' << img.width << ' ' << img.height << '\n' << img.q - 1 << '\n';
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        if (x + c > 0) out << ' ';
        out << img.at(c, y * img.width + x);
      }
    }
    out << '\n';
  }
}

inline void write_pnm(const std::string& path, const Image& img) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_pnm(out, img);
}

}  // namespace qbp
