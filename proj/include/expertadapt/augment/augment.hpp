#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "expertadapt/core/rng.hpp"
#include "expertadapt/data/dataset.hpp"

namespace expertadapt::augment {

using data::AnnotatedCase;
using data::BinaryMask;
using data::ImageGrid;

/// Joint image/mask augmentation settings. Geometric ops apply to image and
/// masks alike; intensity ops touch the image only. Each op fires with
/// probability `prob`, with magnitudes drawn from the ranges below.
struct AugmentConfig {
  double translate_frac = 0.10;     // ± fraction of each dimension
  double zoom_min = 0.9;
  double zoom_max = 1.1;
  double rotate_deg = 15.0;         // ± degrees
  double noise_sigma_min = 0.0;
  double noise_sigma_max = 0.05;
  double blur_sigma_min = 0.5;
  double blur_sigma_max = 1.0;
  double brightness = 0.1;          // ± additive shift
  double prob = 0.5;
  int crop_h = 192;
  int crop_w = 192;

  bool operator==(const AugmentConfig&) const = default;

  void validate() const {
    if (translate_frac < 0.0 || rotate_deg < 0.0 || brightness < 0.0)
      throw ConfigError("augmentation ranges must be non-negative");
    if (!(zoom_min > 0.0) || zoom_max < zoom_min)
      throw ConfigError("zoom range must satisfy 0 < min <= max");
    if (noise_sigma_min < 0.0 || noise_sigma_max < noise_sigma_min)
      throw ConfigError("noise sigma range must satisfy 0 <= min <= max");
    if (blur_sigma_min < 0.0 || blur_sigma_max < blur_sigma_min)
      throw ConfigError("blur sigma range must satisfy 0 <= min <= max");
    if (prob < 0.0 || prob > 1.0) throw ConfigError("probability must be in [0, 1]");
    if (crop_h < 1 || crop_w < 1) throw ConfigError("crop size must be positive");
  }
};

/// Crops (or zero-pads) to `out_h` x `out_w`, center-aligned; a negative
/// start offset means symmetric padding.
inline ImageGrid center_crop(const ImageGrid& img, int out_h, int out_w) {
  ImageGrid out(out_h, out_w, 0.0f);
  const int r0 = (img.height() - out_h) / 2;
  const int c0 = (img.width() - out_w) / 2;
  for (int r = 0; r < out_h; ++r) {
    const int sr = r + r0;
    if (sr < 0 || sr >= img.height()) continue;
    for (int c = 0; c < out_w; ++c) {
      const int sc = c + c0;
      if (sc >= 0 && sc < img.width()) out.at(r, c) = img.at(sr, sc);
    }
  }
  return out;
}

inline BinaryMask center_crop(const BinaryMask& mask, int out_h, int out_w) {
  BinaryMask out(out_h, out_w, 0);
  const int r0 = (mask.height() - out_h) / 2;
  const int c0 = (mask.width() - out_w) / 2;
  for (int r = 0; r < out_h; ++r) {
    const int sr = r + r0;
    if (sr < 0 || sr >= mask.height()) continue;
    for (int c = 0; c < out_w; ++c) {
      const int sc = c + c0;
      if (sc >= 0 && sc < mask.width()) out.at(r, c) = mask.at(sr, sc);
    }
  }
  return out;
}

namespace aug_detail {

/// Affine map used in inverse form: for each output pixel we compute the
/// source location and resample.
struct InverseAffine {
  double cos_t = 1.0, sin_t = 0.0, inv_zoom = 1.0;
  double ctr_r = 0.0, ctr_c = 0.0, shift_r = 0.0, shift_c = 0.0;

  void source(double out_r, double out_c, double& in_r, double& in_c) const {
    const double dr = out_r - ctr_r - shift_r;
    const double dc = out_c - ctr_c - shift_c;
    const double rr = cos_t * dr + sin_t * dc;
    const double rc = -sin_t * dr + cos_t * dc;
    in_r = rr * inv_zoom + ctr_r;
    in_c = rc * inv_zoom + ctr_c;
  }
};

inline ImageGrid warp_bilinear(const ImageGrid& img, const InverseAffine& aff) {
  ImageGrid out(img.height(), img.width(), 0.0f);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      double sr, sc;
      aff.source(r, c, sr, sc);
      const int r0 = static_cast<int>(std::floor(sr));
      const int c0 = static_cast<int>(std::floor(sc));
      const double fr = sr - r0, fc = sc - c0;
      double acc = 0.0;
      for (int dr = 0; dr <= 1; ++dr) {
        for (int dc = 0; dc <= 1; ++dc) {
          const int rr = r0 + dr, cc = c0 + dc;
          if (rr < 0 || rr >= img.height() || cc < 0 || cc >= img.width()) continue;
          const double w = (dr ? fr : 1.0 - fr) * (dc ? fc : 1.0 - fc);
          acc += w * static_cast<double>(img.at(rr, cc));
        }
      }
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

inline BinaryMask warp_nearest(const BinaryMask& mask, const InverseAffine& aff) {
  BinaryMask out(mask.height(), mask.width(), 0);
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      double sr, sc;
      aff.source(r, c, sr, sc);
      const int rr = static_cast<int>(std::lround(sr));
      const int cc = static_cast<int>(std::lround(sc));
      if (rr >= 0 && rr < mask.height() && cc >= 0 && cc < mask.width())
        out.at(r, c) = mask.at(rr, cc);
    }
  }
  return out;
}

/// Separable Gaussian blur; the kernel is renormalized over in-bounds taps
/// so edges keep their mean level.
inline ImageGrid gaussian_blur(const ImageGrid& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));

  ImageGrid tmp(img.height(), img.width(), 0.0f);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      double acc = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = c + i;
        if (cc < 0 || cc >= img.width()) continue;
        const double w = kernel[static_cast<size_t>(i + radius)];
        acc += w * static_cast<double>(img.at(r, cc));
        wsum += w;
      }
      tmp.at(r, c) = static_cast<float>(acc / wsum);
    }
  ImageGrid out(img.height(), img.width(), 0.0f);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      double acc = 0.0, wsum = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = r + i;
        if (rr < 0 || rr >= img.height()) continue;
        const double w = kernel[static_cast<size_t>(i + radius)];
        acc += w * static_cast<double>(tmp.at(rr, c));
        wsum += w;
      }
      out.at(r, c) = static_cast<float>(acc / wsum);
    }
  return out;
}

}  // namespace aug_detail

/// One stochastic augmentation draw, deterministic in `rng_key`: a single
/// combined geometric warp (translation/zoom/rotation, drawn in fixed order)
/// applied to the image (bilinear) and every mask (nearest), then a center
/// crop, then image-only intensity ops (blur, additive Gaussian noise,
/// brightness shift) with values clipped back to [0, 1].
inline AnnotatedCase augment_sample(const AnnotatedCase& sample, const AugmentConfig& cfg,
                                    std::uint64_t rng_key) {
  cfg.validate();
  const int h = sample.image.height(), w = sample.image.width();
  if (cfg.crop_h > h || cfg.crop_w > w)
    throw ConfigError(detail::strprintf("crop %dx%d exceeds image %dx%d", cfg.crop_h,
                                        cfg.crop_w, h, w));

  Rng rng = Rng::keyed(rng_key, {0xa46u});

  // Fixed-order unconditional draws keep the stream aligned regardless of
  // which ops fire.
  const bool do_translate = rng.uniform() < cfg.prob;
  const double shift_r = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h;
  const double shift_c = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w;
  const bool do_zoom = rng.uniform() < cfg.prob;
  const double zoom = rng.uniform(cfg.zoom_min, cfg.zoom_max);
  const bool do_rotate = rng.uniform() < cfg.prob;
  const double angle = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg) * (std::numbers::pi / 180.0);
  const bool do_noise = rng.uniform() < cfg.prob;
  const double noise_sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);
  const bool do_blur = rng.uniform() < cfg.prob;
  const double blur_sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  const bool do_brightness = rng.uniform() < cfg.prob;
  const double brightness = rng.uniform(-cfg.brightness, cfg.brightness);

  aug_detail::InverseAffine aff;
  aff.ctr_r = (h - 1) / 2.0;
  aff.ctr_c = (w - 1) / 2.0;
  if (do_translate) {
    aff.shift_r = shift_r;
    aff.shift_c = shift_c;
  }
  if (do_zoom) aff.inv_zoom = 1.0 / zoom;
  if (do_rotate) {
    aff.cos_t = std::cos(angle);
    aff.sin_t = std::sin(angle);
  }
  const bool identity_warp = aff.shift_r == 0.0 && aff.shift_c == 0.0 &&
                             aff.inv_zoom == 1.0 && aff.sin_t == 0.0 && aff.cos_t == 1.0;

  AnnotatedCase out;
  out.case_index = sample.case_index;
  ImageGrid img = identity_warp ? sample.image : aug_detail::warp_bilinear(sample.image, aff);
  img = center_crop(img, cfg.crop_h, cfg.crop_w);
  for (const auto& [expert, mask] : sample.masks) {
    BinaryMask m = identity_warp ? mask : aug_detail::warp_nearest(mask, aff);
    out.masks.emplace(expert, center_crop(m, cfg.crop_h, cfg.crop_w));
  }

  if (do_blur && blur_sigma > 0.0) img = aug_detail::gaussian_blur(img, blur_sigma);
  if (do_noise && noise_sigma > 0.0)
    for (auto& v : img.pixels()) v = static_cast<float>(v + rng.normal() * noise_sigma);
  if (do_brightness)
    for (auto& v : img.pixels()) v = static_cast<float>(v + brightness);
  for (auto& v : img.pixels()) v = std::min(1.0f, std::max(0.0f, v));

  out.image = std::move(img);
  return out;
}

/// Evaluation-time preprocessing: the center crop alone.
inline AnnotatedCase test_time_crop(const AnnotatedCase& sample, int crop_h, int crop_w) {
  AnnotatedCase out;
  out.case_index = sample.case_index;
  out.image = center_crop(sample.image, crop_h, crop_w);
  for (const auto& [expert, mask] : sample.masks)
    out.masks.emplace(expert, center_crop(mask, crop_h, crop_w));
  return out;
}

}  // namespace expertadapt::augment
