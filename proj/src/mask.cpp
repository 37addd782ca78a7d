#include "lift3d/mask.hpp"

#include <fstream>

#include "lift3d/errors.hpp"

namespace lift3d {

std::int64_t Mask::count() const {
  std::int64_t n = 0;
  for (bool b : bits) n += b ? 1 : 0;
  return n;
}

void save_pbm(const Mask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << "P4\n" << mask.width << " " << mask.height << "\n";
  const int row_bytes = (mask.width + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < mask.height; ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) row[x / 8] |= static_cast<unsigned char>(0x80u >> (x % 8));
    out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
  }
  if (!out) throw ParseError("write failed: " + path.string());
}

namespace {

// Skips whitespace and '#' comments in the PBM header.
int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  if (c == EOF) throw ParseError("truncated PBM header: " + path.string());
  in.unget();
  int value = 0;
  in >> value;
  if (!in || value <= 0) throw ParseError("bad PBM header: " + path.string());
  return value;
}

}  // namespace

Mask load_pbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::is_directory(path)) throw ParseError("cannot open: " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '4') throw ParseError("not a P4 PBM: " + path.string());
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  in.get();  // single whitespace byte before the raster
  Mask mask(w, h);
  const int row_bytes = (w + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row_bytes);
    if (!in) throw ParseError("truncated PBM raster: " + path.string());
    for (int x = 0; x < w; ++x)
      mask.set(x, y, (row[x / 8] >> (7 - x % 8)) & 1u);
  }
  return mask;
}

}  // namespace lift3d
