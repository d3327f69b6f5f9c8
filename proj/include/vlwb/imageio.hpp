#pragma once

#include <filesystem>
#include <stdexcept>

#include "vlwb/tensor.hpp"

namespace vlwb {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ".imgf32": magic "VLIF", u32 H, u32 W, u32 C, f32 little-endian row-major.
void write_imgf32(const std::filesystem::path& path, const Tensor& image);
Tensor read_imgf32(const std::filesystem::path& path);

/// Rounds every value to the nearest float, as storage in .imgf32 would.
Tensor round_to_f32(const Tensor& image);

/// Binary 8-bit PPM (P6) of an H x W x 3 image, for viewing.
void write_ppm(const std::filesystem::path& path, const Tensor& image);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace vlwb
