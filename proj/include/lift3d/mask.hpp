#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lift3d {

// Binary foreground mask. (0,0) is the top-left pixel, x grows right, y down.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<bool> bits;  // row-major, true = foreground

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<size_t>(w) * h, false) {}

  bool at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, bool v) { bits[static_cast<size_t>(y) * width + x] = v; }
  std::int64_t count() const;
  bool operator==(const Mask&) const = default;
};

// Raw PBM (P4). Foreground is written as the PBM "black" bit (1).
void save_pbm(const Mask& mask, const std::filesystem::path& path);
Mask load_pbm(const std::filesystem::path& path);

}  // namespace lift3d
