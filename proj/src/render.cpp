#include "selfgmad/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "selfgmad/error.hpp"
#include "selfgmad/rng.hpp"

namespace selfgmad {

namespace {

using Plane = std::vector<double>;

// Concentric rings over a diagonal colour ramp; values in [40, 200].
std::array<Plane, 3> base_pattern(int size) {
  std::array<Plane, 3> rgb;
  for (auto& p : rgb) p.assign(static_cast<std::size_t>(size) * size, 0.0);
  const double c = 0.5 * (size - 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double r = std::hypot(x - c, y - c) / size;
      const double ring = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * 6.0 * r);
      const double ramp = static_cast<double>(x + y) / (2.0 * (size - 1));
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      rgb[0][i] = 40.0 + 160.0 * (0.6 * ring + 0.4 * ramp);
      rgb[1][i] = 40.0 + 160.0 * (0.5 * ring + 0.5 * (1.0 - ramp));
      rgb[2][i] = 40.0 + 160.0 * (0.3 * ring + 0.7 * std::abs(ramp - 0.5) * 2.0);
    }
  }
  return rgb;
}

Plane box_blur(const Plane& in, int size, int radius) {
  if (radius <= 0) return in;
  Plane tmp(in.size()), out(in.size());
  auto at = [size](int v) { return std::clamp(v, 0, size - 1); };
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += in[static_cast<std::size_t>(y) * size + at(x + k)];
      tmp[static_cast<std::size_t>(y) * size + x] = s * norm;
    }
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += tmp[static_cast<std::size_t>(at(y + k)) * size + x];
      out[static_cast<std::size_t>(y) * size + x] = s * norm;
    }
  }
  return out;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace

double RgbImage::mean_intensity() const {
  if (pixels.empty()) return 0.0;
  double sum = 0.0;
  for (auto p : pixels) sum += p;
  return sum / static_cast<double>(pixels.size());
}

RgbImage render_latents(const Latents& latents, const std::string& sample_id, int size) {
  auto rgb = base_pattern(size);
  const int blur_radius = static_cast<int>(std::lround(4.0 * latents[Attribute::Blur] + 2.0 * latents[Attribute::Sharpness]));
  for (auto& plane : rgb) plane = box_blur(plane, size, blur_radius);

  const double contrast = 1.0 - 0.8 * latents[Attribute::Contrast];
  const double saturation = 1.0 - latents[Attribute::Colorfulness];
  const double brighten = 120.0 * latents[Attribute::Exposure];
  const double noise_sd = 60.0 * latents[Attribute::Noise];
  Rng rng(mix_seed(fnv1a("stimulus"), sample_id));

  RgbImage image;
  image.width = size;
  image.height = size;
  image.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (std::size_t i = 0; i < rgb[0].size(); ++i) {
    const double gray = (rgb[0][i] + rgb[1][i] + rgb[2][i]) / 3.0;
    for (int ch = 0; ch < 3; ++ch) {
      double v = gray + saturation * (rgb[ch][i] - gray);
      v = 120.0 + contrast * (v - 120.0);
      v += brighten;
      if (noise_sd > 0.0) v += noise_sd * rng.normal();
      image.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return image;
}

std::vector<std::uint8_t> encode_bmp(const RgbImage& image) {
  const std::uint32_t row_bytes = (static_cast<std::uint32_t>(image.width) * 3 + 3) & ~3u;
  const std::uint32_t data_size = row_bytes * static_cast<std::uint32_t>(image.height);
  std::vector<std::uint8_t> out;
  out.reserve(54 + data_size);
  out.push_back('B');
  out.push_back('M');
  put_u32(out, 54 + data_size);
  put_u32(out, 0);
  put_u32(out, 54);
  put_u32(out, 40);
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u16(out, 1);
  put_u16(out, 24);
  put_u32(out, 0);
  put_u32(out, data_size);
  put_u32(out, 2835);
  put_u32(out, 2835);
  put_u32(out, 0);
  put_u32(out, 0);
  // Bottom-up rows, BGR order.
  for (int y = image.height - 1; y >= 0; --y) {
    const std::size_t row = static_cast<std::size_t>(y) * image.width * 3;
    for (int x = 0; x < image.width; ++x) {
      const std::size_t p = row + static_cast<std::size_t>(x) * 3;
      out.push_back(image.pixels[p + 2]);
      out.push_back(image.pixels[p + 1]);
      out.push_back(image.pixels[p]);
    }
    for (std::uint32_t pad = static_cast<std::uint32_t>(image.width) * 3; pad < row_bytes; ++pad) out.push_back(0);
  }
  return out;
}

Stimulus render_sample(const Sample& sample) {
  if (sample.latents) return {"image/bmp", encode_bmp(render_latents(*sample.latents, sample.id))};
  if (sample.image_ref) {
    std::ifstream in(*sample.image_ref, std::ios::binary);
    if (!in) throw DataError("cannot read image " + *sample.image_ref);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto ext = std::filesystem::path(*sample.image_ref).extension().string();
    std::string type = "application/octet-stream";
    if (ext == ".png") type = "image/png";
    if (ext == ".jpg" || ext == ".jpeg") type = "image/jpeg";
    if (ext == ".bmp") type = "image/bmp";
    return {type, std::move(bytes)};
  }
  throw DataError("sample " + sample.id + " has neither latents nor an image reference");
}

}  // namespace selfgmad
