#include <doctest.h>

#include <cmath>
#include <fstream>

#include "scratch.hpp"
#include "selfgmad/error.hpp"
#include "selfgmad/render.hpp"

using namespace selfgmad;

namespace {

double pixel_sd(const RgbImage& img) {
  const double mean = img.mean_intensity();
  double ss = 0;
  for (auto p : img.pixels) ss += (p - mean) * (p - mean);
  return std::sqrt(ss / img.pixels.size());
}

// Mean absolute difference between horizontal neighbours.
double roughness(const RgbImage& img) {
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 1; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * img.width + x) * 3 + c;
        sum += std::abs(img.pixels[i] - img.pixels[i - 3]);
        ++n;
      }
  return sum / n;
}

}  // namespace

TEST_CASE("rendering is deterministic per sample id") {
  Latents l;
  l[Attribute::Noise] = 0.5;
  CHECK(render_latents(l, "a").pixels == render_latents(l, "a").pixels);
  CHECK(render_latents(l, "a").pixels != render_latents(l, "b").pixels);
  const auto img = render_latents(l, "a", 32);
  CHECK(img.width == 32);
  CHECK(img.pixels.size() == 32u * 32u * 3u);
}

TEST_CASE("degradations move the image the expected way") {
  const Latents clean;
  const auto base = render_latents(clean, "x");
  Latents noisy;
  noisy[Attribute::Noise] = 1.0;
  CHECK(roughness(render_latents(noisy, "x")) > 2 * roughness(base));
  Latents blurred;
  blurred[Attribute::Blur] = 1.0;
  CHECK(roughness(render_latents(blurred, "x")) < roughness(base));
  Latents bright;
  bright[Attribute::Exposure] = 1.0;
  CHECK(render_latents(bright, "x").mean_intensity() > base.mean_intensity() + 30);
  Latents flat;
  flat[Attribute::Contrast] = 1.0;
  CHECK(pixel_sd(render_latents(flat, "x")) < 0.5 * pixel_sd(base));
}

TEST_CASE("bmp layout") {
  RgbImage img{2, 1, {255, 0, 0, 0, 0, 255}};
  const auto bmp = encode_bmp(img);
  // 2 pixels * 3 bytes padded to 8.
  REQUIRE(bmp.size() == 54u + 8u);
  CHECK(bmp[0] == 'B');
  CHECK(bmp[1] == 'M');
  CHECK(bmp[2] == 62);
  CHECK(bmp[10] == 54);
  CHECK(bmp[18] == 2);
  CHECK(bmp[22] == 1);
  CHECK(bmp[28] == 24);
  // BGR order.
  CHECK(bmp[54] == 0);
  CHECK(bmp[56] == 255);
  CHECK(bmp[57] == 255);
  CHECK(bmp[59] == 0);
}

TEST_CASE("stimuli from latents or files") {
  const auto dir = scratch_dir("render_files");
  Sample synthetic{"s", {0.0}, Latents{}, std::nullopt};
  const auto a = render_sample(synthetic);
  CHECK(a.content_type == "image/bmp");
  CHECK(a.bytes.size() == 54u + kStimulusSize * kStimulusSize * 3u);
  {
    std::ofstream out(dir / "pic.png", std::ios::binary);
    out << "PNGDATA";
  }
  Sample file{"f", {0.0}, std::nullopt, (dir / "pic.png").string()};
  const auto b = render_sample(file);
  CHECK(b.content_type == "image/png");
  CHECK(std::string(b.bytes.begin(), b.bytes.end()) == "PNGDATA");
  Sample missing{"m", {0.0}, std::nullopt, (dir / "nope.png").string()};
  CHECK_THROWS_AS(render_sample(missing), DataError);
  Sample bare{"b", {0.0}, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(render_sample(bare), DataError);
}
