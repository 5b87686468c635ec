#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfgmad/datapool.hpp"

namespace selfgmad {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB, top row first

  double mean_intensity() const;
};

inline constexpr int kStimulusSize = 96;

/// Procedural stimulus for a synthetic sample: a fixed base pattern degraded
/// by its latents (box blur, additive noise, brightening, contrast loss,
/// desaturation, softening). Deterministic per sample id.
RgbImage render_latents(const Latents& latents, const std::string& sample_id, int size = kStimulusSize);

/// 24-bit uncompressed BMP encoding.
std::vector<std::uint8_t> encode_bmp(const RgbImage& image);

struct Stimulus {
  std::string content_type;
  std::vector<std::uint8_t> bytes;
};

/// Rendered BMP for synthetic samples; the file behind image_ref otherwise.
/// Throws DataError when neither is available.
Stimulus render_sample(const Sample& sample);

}  // namespace selfgmad
