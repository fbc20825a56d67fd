#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numbers>
#include <vector>

#include "expertadapt/core/edt.hpp"
#include "expertadapt/core/rng.hpp"
#include "expertadapt/data/dataset.hpp"

namespace expertadapt::synth {

using data::AnnotatedCase;
using data::BinaryMask;
using data::ExpertId;
using data::ImageGrid;
using data::MultiExpertDataset;

/// Systematic annotation style of one simulated expert: a signed boundary
/// offset (dilation/erosion bias) plus a smooth angular wobble of the
/// contour, both in pixels.
struct ExpertStyle {
  int expert_id = 0;
  int bias_radius = 0;           // >0 annotates larger, <0 smaller
  double wobble_amplitude = 0.0; // peak contour displacement
  int wobble_frequency = 3;      // highest angular harmonic
  std::uint64_t style_seed = 0;

  bool operator==(const ExpertStyle&) const = default;

  void validate(int height, int width) const {
    const int limit = std::min(height, width) / 8;
    if (expert_id < 1) throw ConfigError("style expert_id must be >= 1");
    if (std::abs(bias_radius) > limit)
      throw ConfigError(detail::strprintf("style %d: |bias_radius| %d exceeds %d", expert_id,
                                          std::abs(bias_radius), limit));
    if (wobble_amplitude < 0.0 || wobble_amplitude > limit)
      throw ConfigError(detail::strprintf("style %d: wobble_amplitude outside [0, %d]",
                                          expert_id, limit));
    if (wobble_frequency < 1) throw ConfigError("wobble_frequency must be >= 1");
  }
};

enum class ForegroundKind { ellipse, blob };

struct SynthConfig {
  int n_cases = 39;
  int height = 64;
  int width = 64;
  std::vector<ExpertStyle> styles;
  std::uint64_t base_seed = 0;
  ForegroundKind foreground = ForegroundKind::blob;

  bool operator==(const SynthConfig&) const = default;

  void validate() const {
    if (n_cases < 1) throw ConfigError("n_cases must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
    if (styles.size() < 2) throw ConfigError("a multi-expert set needs at least 2 styles");
    for (size_t i = 0; i < styles.size(); ++i) {
      styles[i].validate(height, width);
      for (size_t j = 0; j < i; ++j)
        if (styles[j].expert_id == styles[i].expert_id)
          throw ConfigError(detail::strprintf("duplicate style expert_id %d",
                                              styles[i].expert_id));
    }
  }
};

/// Seven styles mirroring the reference roster: experts 1-5 with small
/// distinct biases, experts 6 and 7 with biases outside that envelope
/// (7 being the stronger outlier, with the noisiest contours).
inline std::vector<ExpertStyle> default_reference_styles() {
  // Experts 1-5 span biases -2..+2; the adaptation targets sit outside that
  // envelope, expert 7 far outside it and with the noisiest contours.
  return {
      {1, 0, 1.0, 3, 101},  {2, +1, 1.2, 3, 102}, {3, -1, 1.2, 4, 103},
      {4, +2, 1.5, 3, 104}, {5, -2, 1.5, 4, 105},
      {6, +5, 0.8, 3, 106},  // moderate outlier: 3 px beyond the envelope
      {7, -6, 2.5, 5, 107},  // strong outlier: 4 px beyond, largest wobble
  };
}

namespace synth_detail {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Star-convex base shape: radius as a function of angle about a center.
struct BaseShape {
  double ctr_r = 0.0, ctr_c = 0.0;
  double mean_radius = 0.0;
  // radius(φ) = mean_radius * (1 + Σ_k a_k cos(kφ) + b_k sin(kφ)), k from 2
  std::vector<double> cos_amp, sin_amp;
  double ellipse_ratio = 1.0;  // 1.0 = circle-based blob
  double ellipse_tilt = 0.0;

  double radius(double phi) const {
    double rad;
    if (ellipse_ratio != 1.0) {
      const double a = mean_radius * ellipse_ratio;
      const double b = mean_radius / ellipse_ratio;
      const double p = phi - ellipse_tilt;
      const double cx = b * std::cos(p), sy = a * std::sin(p);
      rad = a * b / std::sqrt(cx * cx + sy * sy);
    } else {
      rad = mean_radius;
    }
    double mod = 1.0;
    for (size_t k = 0; k < cos_amp.size(); ++k) {
      const double kk = static_cast<double>(k + 2);
      mod += cos_amp[k] * std::cos(kk * phi) + sin_amp[k] * std::sin(kk * phi);
    }
    return rad * mod;
  }
};

inline BaseShape draw_base_shape(const SynthConfig& cfg, int case_index, int attempt) {
  Rng rng = Rng::keyed(cfg.base_seed, {0xba5eu, static_cast<std::uint64_t>(case_index),
                                       static_cast<std::uint64_t>(attempt)});
  BaseShape shape;
  const double m = std::min(cfg.height, cfg.width);
  shape.ctr_r = cfg.height / 2.0 + rng.uniform(-0.08, 0.08) * cfg.height;
  shape.ctr_c = cfg.width / 2.0 + rng.uniform(-0.08, 0.08) * cfg.width;
  shape.mean_radius = m * rng.uniform(0.22, 0.30) * std::pow(0.92, attempt);
  if (cfg.foreground == ForegroundKind::ellipse) {
    shape.ellipse_ratio = rng.uniform(0.85, 1.15);
    shape.ellipse_tilt = rng.uniform(0.0, kTwoPi);
  } else {
    for (int k = 2; k <= 4; ++k) {
      shape.cos_amp.push_back(rng.uniform(-0.10, 0.10));
      shape.sin_amp.push_back(rng.uniform(-0.10, 0.10));
    }
  }
  return shape;
}

/// Smooth periodic boundary displacement with peak magnitude `amplitude`,
/// built from harmonics 1..frequency of the angle.
struct WobbleField {
  std::vector<double> cos_amp, sin_amp;
  double scale = 0.0;

  double value(double phi) const {
    double u = 0.0;
    for (size_t k = 0; k < cos_amp.size(); ++k) {
      const double kk = static_cast<double>(k + 1);
      u += cos_amp[k] * std::cos(kk * phi) + sin_amp[k] * std::sin(kk * phi);
    }
    return u * scale;
  }
};

inline WobbleField draw_wobble(const ExpertStyle& style, std::uint64_t base_seed,
                               int case_index, int attempt) {
  Rng rng = Rng::keyed(style.style_seed,
                       {0x30bbu, base_seed, static_cast<std::uint64_t>(case_index),
                        static_cast<std::uint64_t>(attempt)});
  WobbleField field;
  for (int k = 1; k <= style.wobble_frequency; ++k) {
    field.cos_amp.push_back(rng.normal());
    field.sin_amp.push_back(rng.normal());
  }
  double peak = 0.0;
  for (int i = 0; i < 720; ++i) {
    field.scale = 1.0;
    peak = std::max(peak, std::abs(field.value(kTwoPi * i / 720.0)));
  }
  field.scale = peak > 1e-12 ? style.wobble_amplitude / peak : 0.0;
  return field;
}

/// Signed distance to the foreground boundary: negative inside, positive
/// outside, from two exact distance transforms.
inline std::vector<double> signed_distance(const BinaryMask& mask) {
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> fg(mask.pixels().begin(), mask.pixels().end());
  std::vector<std::uint8_t> bg(fg.size());
  for (size_t i = 0; i < fg.size(); ++i) bg[i] = fg[i] ? 0 : 1;
  std::vector<double> d_to_fg = squared_edt(fg.data(), h, w);
  std::vector<double> d_to_bg = squared_edt(bg.data(), h, w);
  std::vector<double> sd(fg.size());
  for (size_t i = 0; i < fg.size(); ++i)
    sd[i] = fg[i] ? -std::sqrt(d_to_bg[i]) : std::sqrt(d_to_fg[i]);
  return sd;
}

}  // namespace synth_detail

/// Generates one case: a smooth star-convex foreground rendered with a soft
/// edge, plus one mask per style, each the base contour offset by the
/// style's bias and wobble field. Appearance varies strongly from case to
/// case (contrast polarity and magnitude, edge softness, noise, shading,
/// low-frequency texture, and faint distractor blobs kept clear of every
/// mask), so a handful of cases never covers the whole appearance family.
/// Degenerate draws (empty masks or masks touching the border) trigger a
/// shrunken retry, at most 10 times. Deterministic in (config, case_index).
inline AnnotatedCase generate_case(const SynthConfig& cfg, int case_index) {
  cfg.validate();
  if (case_index < 1 || case_index > cfg.n_cases)
    throw DataError(detail::strprintf("case_index %d outside [1, %d]", case_index, cfg.n_cases));

  const int h = cfg.height, w = cfg.width;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    synth_detail::BaseShape shape = synth_detail::draw_base_shape(cfg, case_index, attempt);

    BinaryMask base(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dr = r - shape.ctr_r, dc = c - shape.ctr_c;
        const double dist = std::sqrt(dr * dr + dc * dc);
        const double phi = std::atan2(dr, dc);
        if (dist <= shape.radius(phi)) base.at(r, c) = 1;
      }
    if (base.is_empty_mask() || base.touches_border()) continue;

    std::vector<double> sd = synth_detail::signed_distance(base);

    bool all_valid = true;
    std::map<ExpertId, BinaryMask> masks;
    for (const ExpertStyle& style : cfg.styles) {
      synth_detail::WobbleField field =
          synth_detail::draw_wobble(style, cfg.base_seed, case_index, attempt);
      BinaryMask m(h, w);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double phi = std::atan2(r - shape.ctr_r, c - shape.ctr_c);
          if (sd[static_cast<size_t>(r) * w + c] <= style.bias_radius + field.value(phi))
            m.at(r, c) = 1;
        }
      if (m.is_empty_mask() || m.touches_border()) {
        all_valid = false;
        break;
      }
      masks.emplace(ExpertId(style.expert_id), std::move(m));
    }
    if (!all_valid) continue;

    Rng img_rng = Rng::keyed(cfg.base_seed, {0x113a6eu, static_cast<std::uint64_t>(case_index),
                                             static_cast<std::uint64_t>(attempt)});
    // Per-case appearance family: signed contrast (the foreground may be
    // brighter or darker than the background), variable edge softness,
    // shading, texture, and noise level.
    double contrast = img_rng.uniform(0.22, 0.56);
    if (img_rng.uniform(0.0, 1.0) < 0.5) contrast = -contrast;
    const double mid = img_rng.uniform(0.38, 0.62);
    const double fg_level = mid + contrast / 2.0;
    const double bg_level = mid - contrast / 2.0;
    const double softness = img_rng.uniform(0.9, 2.8);
    const double noise_sigma = img_rng.uniform(0.008, 0.045);
    const double grad_r = img_rng.uniform(-0.08, 0.08);
    const double grad_c = img_rng.uniform(-0.08, 0.08);
    const double tex_amp = img_rng.uniform(0.0, 0.05);
    const double tex_fr = img_rng.uniform(1.0, 3.0);
    const double tex_fc = img_rng.uniform(1.0, 3.0);
    const double tex_pr = img_rng.uniform(0.0, synth_detail::kTwoPi);
    const double tex_pc = img_rng.uniform(0.0, synth_detail::kTwoPi);

    // Faint distractor blobs in the background, kept clear of every mask so
    // labels stay consistent; an intensity shortcut would segment them too.
    double max_extent = 0.0;
    for (const ExpertStyle& style : cfg.styles)
      max_extent = std::max(max_extent, style.bias_radius + style.wobble_amplitude);
    struct Distractor {
      double r, c, rad, strength, soft;
    };
    std::vector<Distractor> distractors;
    const int n_distract = static_cast<int>(img_rng.next_below(3));
    for (int d = 0; d < n_distract; ++d) {
      for (int attempt_d = 0; attempt_d < 20; ++attempt_d) {
        const double dr0 = img_rng.uniform(2.0, h - 3.0);
        const double dc0 = img_rng.uniform(2.0, w - 3.0);
        const double rad = img_rng.uniform(0.06, 0.11) * std::min(h, w);
        const size_t at = static_cast<size_t>(std::lround(dr0)) * static_cast<size_t>(w) +
                          static_cast<size_t>(std::lround(dc0));
        if (sd[at] > max_extent + rad + 3.0) {
          distractors.push_back({dr0, dc0, rad, img_rng.uniform(0.40, 0.75),
                                 img_rng.uniform(0.8, 2.0)});
          break;
        }
      }
    }

    ImageGrid img(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dr = r - shape.ctr_r, dc = c - shape.ctr_c;
        const double dist = std::sqrt(dr * dr + dc * dc);
        const double phi = std::atan2(dr, dc);
        const double g = dist - shape.radius(phi);  // signed boundary offset
        const double edge = 1.0 / (1.0 + std::exp(g / softness));
        double v = bg_level + (fg_level - bg_level) * edge;
        v += grad_r * (2.0 * r / h - 1.0) + grad_c * (2.0 * c / w - 1.0);
        v += tex_amp * std::cos(synth_detail::kTwoPi * tex_fr * r / h + tex_pr) *
             std::cos(synth_detail::kTwoPi * tex_fc * c / w + tex_pc);
        for (const Distractor& ds : distractors) {
          const double dd = std::sqrt((r - ds.r) * (r - ds.r) + (c - ds.c) * (c - ds.c));
          v += (fg_level - bg_level) * ds.strength /
               (1.0 + std::exp((dd - ds.rad) / ds.soft));
        }
        v += img_rng.normal() * noise_sigma;
        v = std::min(1.0, std::max(0.0, v));
        // Snap to the 16-bit grid so the on-disk dataset round-trips exactly.
        img.at(r, c) = static_cast<float>(std::lround(v * 65535.0) / 65535.0);
      }

    AnnotatedCase out;
    out.case_index = case_index;
    out.image = std::move(img);
    out.masks = std::move(masks);
    out.validate();
    return out;
  }
  throw DataError(detail::strprintf(
      "case %d: could not generate valid masks within 10 retries", case_index));
}

inline MultiExpertDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  MultiExpertDataset out;
  for (const ExpertStyle& s : cfg.styles) out.expert_roster.insert(ExpertId(s.expert_id));
  for (int k = 1; k <= cfg.n_cases; ++k) out.cases.push_back(generate_case(cfg, k));
  out.validate();
  return out;
}

}  // namespace expertadapt::synth
