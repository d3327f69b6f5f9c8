#include "vlwb/imageio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

namespace vlwb {

namespace {

constexpr char kImageMagic[4] = {'V', 'L', 'I', 'F'};

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint32_t get_u32(const std::vector<char>& buf, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  }
  return v;
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, const char* data, std::size_t n) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data, static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_imgf32(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("write_imgf32: expected HxWxC, got " + to_string(image.shape()));
  std::vector<char> buf(kImageMagic, kImageMagic + 4);
  for (std::size_t axis = 0; axis < 3; ++axis) put_u32(buf, static_cast<std::uint32_t>(image.dim(axis)));
  buf.reserve(buf.size() + 4 * image.size());
  for (double v : image.values()) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_bytes(path, buf.data(), buf.size());
}

Tensor read_imgf32(const std::filesystem::path& path) {
  const auto buf = read_bytes(path);
  if (buf.size() < 16 || !std::equal(kImageMagic, kImageMagic + 4, buf.begin())) {
    throw IoError("not a VLIF image: " + path.string());
  }
  const Shape shape{get_u32(buf, 4), get_u32(buf, 8), get_u32(buf, 12)};
  const auto n = element_count(shape);
  if (n == 0 || buf.size() != 16 + 4 * n) throw IoError("truncated VLIF image: " + path.string());
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(buf, 16 + 4 * i));
  return Tensor(shape, std::move(data));
}

Tensor round_to_f32(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("write_ppm: expected HxWx3, got " + to_string(image.shape()));
  }
  std::ostringstream header;
  header << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::string bytes = header.str();
  for (double v : image.values()) {
    const double c = std::clamp(v, 0.0, 1.0);
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  write_bytes(path, bytes.data(), bytes.size());
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  write_bytes(path, contents.data(), contents.size());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace vlwb
