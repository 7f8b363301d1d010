#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "facedepth/image.hpp"

// Binary PGM (P5). 8-bit for gray images, 16-bit big-endian (maxval 65535)
// for depth maps, per the netpbm convention of most-significant byte first.

namespace facedepth {

namespace detail {

inline int pgm_read_token(std::istream& in) {
  // Skips whitespace and '#' comment lines.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw std::runtime_error("pgm: malformed header");
  return value;
}

}  // namespace detail

inline void write_pgm(const std::string& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!out) throw std::runtime_error("pgm: write failed: " + path);
}

inline void write_pgm(const std::string& path, const ImageU16& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("pgm: cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<uint8_t> bytes(img.px.size() * 2);
  for (size_t i = 0; i < img.px.size(); ++i) {
    bytes[2 * i] = static_cast<uint8_t>(img.px[i] >> 8);
    bytes[2 * i + 1] = static_cast<uint8_t>(img.px[i] & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("pgm: write failed: " + path);
}

inline bool pgm_is_16bit(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: not a binary PGM: " + path);
  detail::pgm_read_token(in);
  detail::pgm_read_token(in);
  return detail::pgm_read_token(in) > 255;
}

inline ImageU8 read_pgm8(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: not a binary PGM: " + path);
  const int w = detail::pgm_read_token(in);
  const int h = detail::pgm_read_token(in);
  const int maxval = detail::pgm_read_token(in);
  if (maxval != 255) throw std::runtime_error("pgm: expected 8-bit image: " + path);
  in.get();  // single whitespace after maxval
  ImageU8 img(h, w);
  in.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.px.size())) {
    throw std::runtime_error("pgm: truncated pixel data: " + path);
  }
  return img;
}

inline ImageU16 read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: not a binary PGM: " + path);
  const int w = detail::pgm_read_token(in);
  const int h = detail::pgm_read_token(in);
  const int maxval = detail::pgm_read_token(in);
  if (maxval <= 255) throw std::runtime_error("pgm: expected 16-bit image: " + path);
  in.get();
  ImageU16 img(h, w);
  std::vector<uint8_t> bytes(img.px.size() * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("pgm: truncated pixel data: " + path);
  }
  for (size_t i = 0; i < img.px.size(); ++i) {
    img.px[i] = static_cast<uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return img;
}

}  // namespace facedepth
