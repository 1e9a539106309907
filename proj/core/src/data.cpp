/* Copyright 2026 The vidseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "vidseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vidseg/errors.hpp"
#include "vidseg/rng.hpp"

namespace vidseg {

const char* class_name(int class_id) {
  static const char* const kNames[kNumClasses] = {"BG", "SF", "TS", "IP", "CR", "OCR", "OP"};
  if (class_id < 0 || class_id >= kNumClasses) throw ValidationError("class id out of range");
  return kNames[class_id];
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(on.begin(), on.end(), std::uint8_t{1}));
}

void GenConfig::validate() const {
  if (width < 16 || height < 16) throw ConfigError("frame size must be at least 16x16");
  if (width % 16 != 0 || height % 16 != 0) throw ConfigError("frame size must be a multiple of 16");
  if (frames < 1) throw ConfigError("frames must be positive");
  for (int c : classes) {
    if (c < 1 || c >= kNumClasses) throw ConfigError("class id out of range: " + std::to_string(c));
  }
  if (!(rare_class_probability >= 0.0 && rare_class_probability <= 1.0)) {
    throw ConfigError("rare_class_probability must be in [0, 1]");
  }
  if (!(bleeding_probability >= 0.0 && bleeding_probability <= 1.0)) {
    throw ConfigError("bleeding_probability must be in [0, 1]");
  }
  if (!(pan_amplitude >= 0.0) || !(noise >= 0.0)) throw ConfigError("negative amplitude");
  if (!(max_step > 0.0)) throw ConfigError("max_step must be positive");
}

const char* to_string(InstrumentKind kind) {
  switch (kind) {
    case InstrumentKind::SuctionTube: return "suction_tube";
    case InstrumentKind::Rongeur: return "rongeur";
    case InstrumentKind::CuttingForceps: return "cutting_forceps";
    case InstrumentKind::CupForceps: return "cup_forceps";
    case InstrumentKind::BipolarElectrode: return "bipolar_electrode";
    case InstrumentKind::Freer: return "freer";
    case InstrumentKind::Scissors: return "scissors";
  }
  return "unknown";
}

namespace {

using Rgb = std::array<double, 3>;

constexpr Rgb kTissue = {0.78, 0.48, 0.42};
constexpr Rgb kClassColor[kNumClasses] = {
    {0.78, 0.48, 0.42},  // unused
    {0.90, 0.74, 0.58},  // SF
    {0.60, 0.52, 0.74},  // TS
    {0.84, 0.26, 0.30},  // IP
    {0.50, 0.32, 0.46},  // CR
    {0.40, 0.28, 0.22},  // OCR
    {0.52, 0.78, 0.80},  // OP
};
constexpr Rgb kBlood = {0.55, 0.06, 0.06};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Anatomy region: a rotated ellipse with a slowly travelling harmonic
// boundary perturbation.
struct Region {
  int class_id = 0;
  double cx = 0, cy = 0, rx = 1, ry = 1, theta = 0;
  double a1 = 0, a2 = 0, p1 = 0, p2 = 0, w = 0;
  double drift = 0, drift_freq = 0, drift_phase = 0;
  Rgb color{};
  double tex_kx = 0, tex_ky = 0, tex_phase = 0;

  std::pair<double, double> centre(double t, double pan_x, double pan_y) const {
    const double d = drift * std::sin(drift_freq * t + drift_phase);
    return {cx + pan_x + d * std::cos(theta), cy + pan_y + d * std::sin(theta)};
  }

  // Returns true and the local coordinates when (px, py) falls inside.
  bool contains(double px, double py, double t, double pan_x, double pan_y, double* u_out,
                double* v_out) const {
    const auto [ox, oy] = centre(t, pan_x, pan_y);
    const double dx = px - ox, dy = py - oy;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    const double rho = std::hypot(u / rx, v / ry);
    const double ang = std::atan2(v / ry, u / rx);
    const double bound = 1.0 + a1 * std::cos(ang - p1 - w * t) + a2 * std::cos(2.0 * ang - p2 + 0.7 * w * t);
    if (u_out) *u_out = u;
    if (v_out) *v_out = v;
    return rho <= bound;
  }
};

struct Anchor {
  double cx, cy, rx, ry;
};

// Canonical layout on a 32x32 canvas. IP and OCR sit on one side, OP on the
// other.
Anchor anchor_for(int class_id, bool mirrored) {
  const auto side = [&](double x) { return mirrored ? 32.0 - x : x; };
  switch (class_id) {
    case kSellaFloor: return {16.0, 17.0, 5.2, 4.2};
    case kTuberculumSella: return {16.0, 6.8, 4.2, 2.4};
    case kClivalRecess: return {16.0, 27.2, 4.2, 2.4};
    case kIcaProminence: return {side(5.4), 17.0, 2.6, 3.6};
    case kOpticCarotidRecess: return {side(6.4), 6.6, 2.5, 2.5};
    case kOpticProminence: return {side(25.6), 6.8, 2.7, 2.3};
    default: break;
  }
  throw ValidationError("no anchor for class");
}

double pan(double amplitude, double t, double phase) {
  return amplitude * (std::sin(0.35 * t + phase) - std::sin(phase));
}

std::vector<BinaryMask> region_masks(const Region& r, const GenConfig& cfg,
                                     const std::vector<std::pair<double, double>>& pans) {
  std::vector<BinaryMask> out;
  out.reserve(pans.size());
  for (std::size_t t = 0; t < pans.size(); ++t) {
    BinaryMask m(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        m.on[static_cast<std::size_t>(y) * cfg.width + x] =
            r.contains(x + 0.5, y + 0.5, static_cast<double>(t), pans[t].first, pans[t].second,
                       nullptr, nullptr);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Two masks are too close when any pixel of one touches (8-neighbourhood)
// a pixel of the other.
bool touches(const BinaryMask& a, const BinaryMask& b) {
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.on[static_cast<std::size_t>(y) * a.width + x]) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= b.width || yy >= b.height) continue;
          if (b.on[static_cast<std::size_t>(yy) * b.width + xx]) return true;
        }
      }
    }
  }
  return false;
}

std::vector<int> choose_classes(const GenConfig& cfg, Rng& rng) {
  if (!cfg.classes.empty()) {
    std::vector<int> out = cfg.classes;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  std::vector<int> out = {kSellaFloor, kTuberculumSella, kClivalRecess};
  for (int c : {kIcaProminence, kOpticCarotidRecess, kOpticProminence}) {
    if (rng.bernoulli(cfg.rare_class_probability)) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

VideoSample generate_synthetic_case(std::uint64_t seed, const GenConfig& cfg, std::string case_id) {
  cfg.validate();
  Rng rng(seed);
  const double sx = cfg.width / 32.0;
  const double sy = cfg.height / 32.0;
  const double scale = std::min(sx, sy);

  const std::vector<int> classes = choose_classes(cfg, rng);
  const bool mirrored = rng.bernoulli(0.5);

  // Global camera pan, bounded so the per-frame step stays well below
  // max_step.
  const double pan_amp = std::min(cfg.pan_amplitude * scale, cfg.max_step / 0.35 * 0.5);
  const double phx = rng.uniform(0.0, 2.0 * M_PI);
  const double phy = rng.uniform(0.0, 2.0 * M_PI);
  std::vector<std::pair<double, double>> pans(cfg.frames);
  for (int t = 0; t < cfg.frames; ++t) {
    pans[t] = {pan(pan_amp, t, phx), pan(pan_amp * 0.6, t, phy)};
  }

  const double illum = rng.uniform(0.88, 1.12);
  Rgb tissue = kTissue;
  for (double& c : tissue) c = c + rng.uniform(-0.03, 0.03);

  std::vector<Region> regions;
  std::vector<std::vector<BinaryMask>> masks;
  double shrink = 1.0;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0 && attempt % 25 == 0) shrink *= 0.9;
    if (attempt > 400) throw ValidationError("could not place non-overlapping regions");
    Rng place = rng.fork(static_cast<std::uint64_t>(attempt));
    regions.clear();
    masks.clear();
    for (int c : classes) {
      const Anchor a = anchor_for(c, mirrored);
      Region r;
      r.class_id = c;
      r.cx = (a.cx + place.uniform(-1.2, 1.2)) * sx;
      r.cy = (a.cy + place.uniform(-1.2, 1.2)) * sy;
      const double size = place.uniform(0.85, 1.15) * shrink;
      r.rx = a.rx * size * sx;
      r.ry = a.ry * size * sy;
      r.theta = place.uniform(-0.3, 0.3);
      r.a1 = place.uniform(0.0, 0.08);
      r.a2 = place.uniform(0.0, 0.06);
      r.p1 = place.uniform(0.0, 2.0 * M_PI);
      r.p2 = place.uniform(0.0, 2.0 * M_PI);
      r.w = place.uniform(0.1, 0.3);
      r.drift = place.uniform(0.0, 0.4) * scale;
      r.drift_freq = place.uniform(0.3, 0.5);
      r.drift_phase = place.uniform(0.0, 2.0 * M_PI);
      for (int k = 0; k < 3; ++k) {
        r.color[k] = std::clamp(kClassColor[c][k] + place.uniform(-0.03, 0.03), 0.0, 1.0);
      }
      r.tex_kx = place.uniform(0.8, 1.6);
      r.tex_ky = place.uniform(0.8, 1.6);
      r.tex_phase = place.uniform(0.0, 2.0 * M_PI);
      regions.push_back(r);
      masks.push_back(region_masks(r, cfg, pans));
    }
    bool ok = true;
    for (std::size_t i = 0; i < regions.size() && ok; ++i) {
      for (int t = 0; t < cfg.frames && ok; ++t) {
        if (masks[i][t].count() == 0) ok = false;
      }
      for (std::size_t j = i + 1; j < regions.size() && ok; ++j) {
        for (int t = 0; t < cfg.frames && ok; ++t) {
          if (touches(masks[i][t], masks[j][t])) ok = false;
        }
      }
    }
    if (ok) break;
  }

  // Bleeding splotch that grows over time; cosmetic only.
  const bool bleed = rng.bernoulli(cfg.bleeding_probability);
  const double bx = rng.uniform(0.2, 0.8) * cfg.width;
  const double by = rng.uniform(0.2, 0.8) * cfg.height;
  const int b_start = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.frames)));
  const double b_r0 = rng.uniform(1.5, 3.0) * scale;

  const double tissue_kx = rng.uniform(0.5, 1.2), tissue_ky = rng.uniform(0.5, 1.2);
  const double tissue_ph = rng.uniform(0.0, 2.0 * M_PI);
  const double cxm = cfg.width / 2.0, cym = cfg.height / 2.0;
  const double rmax2 = cxm * cxm + cym * cym;

  VideoSample out;
  out.case_id = std::move(case_id);
  out.seed = seed;
  out.provenance = "synthetic";
  Rng noise = rng.fork(0xA11CE);
  for (int t = 0; t < cfg.frames; ++t) {
    Image img(cfg.width, cfg.height);
    LabelMap lab(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        Rgb col = tissue;
        double tex = 0.04 * std::sin(tissue_kx * (px - pans[t].first) + tissue_ky * (py - pans[t].second) + tissue_ph);
        for (std::size_t i = 0; i < regions.size(); ++i) {
          if (!masks[i][t].on[static_cast<std::size_t>(y) * cfg.width + x]) continue;
          const Region& r = regions[i];
          double u = 0, v = 0;
          r.contains(px, py, t, pans[t].first, pans[t].second, &u, &v);
          col = r.color;
          tex = 0.05 * std::sin(r.tex_kx * u + r.tex_ky * v + r.tex_phase);
          lab.at(x, y) = static_cast<std::uint8_t>(r.class_id);
          break;
        }
        const double dx = px - cxm, dy = py - cym;
        const double vignette = 1.0 - 0.3 * (dx * dx + dy * dy) / rmax2;
        double blood = 0.0;
        if (bleed && t >= b_start) {
          const double radius = b_r0 + 0.4 * scale * (t - b_start);
          if (std::hypot(px - bx - pans[t].first, py - by - pans[t].second) <= radius) blood = 0.65;
        }
        std::uint8_t* p = img.pixel(x, y);
        for (int k = 0; k < 3; ++k) {
          double v = (1.0 - blood) * col[k] + blood * kBlood[k];
          v = (v + tex) * illum * vignette + cfg.noise * noise.normal();
          p[k] = quantize(v);
        }
      }
    }
    out.frames.push_back(std::move(img));
    out.labels.push_back(std::move(lab));
  }
  out.present = presence_from_labels(out.labels);
  return out;
}

// ---------------------------------------------------------------------------
// Instruments

namespace {

struct Segment {
  double x0, y0, x1, y1, half_width;
};

double segment_distance(double px, double py, const Segment& s, double* along = nullptr) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double u = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  if (along) *along = u;
  return std::hypot(px - (s.x0 + u * dx), py - (s.y0 + u * dy));
}

struct Shape2 {
  std::vector<Segment> shaft;
  std::vector<Segment> tip;
};

double shaft_half_width(InstrumentKind kind) {
  switch (kind) {
    case InstrumentKind::SuctionTube: return 1.0;
    case InstrumentKind::Rongeur: return 1.6;
    case InstrumentKind::CuttingForceps: return 1.3;
    case InstrumentKind::CupForceps: return 1.3;
    case InstrumentKind::BipolarElectrode: return 0.7;
    case InstrumentKind::Freer: return 1.1;
    case InstrumentKind::Scissors: return 1.2;
  }
  return 1.0;
}

Shape2 instrument_shape(InstrumentKind kind, double ex, double ey, double tx, double ty, double scale) {
  const double hw = shaft_half_width(kind) * scale;
  const double len = std::max(std::hypot(tx - ex, ty - ey), 1e-9);
  const double ux = (tx - ex) / len, uy = (ty - ey) / len;  // towards the tip
  const double nx = -uy, ny = ux;
  const auto rot = [&](double ang, double length, double width) {
    const double c = std::cos(ang), s = std::sin(ang);
    const double dx = ux * c - uy * s, dy = ux * s + uy * c;
    return Segment{tx, ty, tx + dx * length * scale, ty + dy * length * scale, width * scale};
  };
  Shape2 sh;
  switch (kind) {
    case InstrumentKind::BipolarElectrode: {
      const double off = 1.2 * scale;
      sh.shaft.push_back({ex + nx * off, ey + ny * off, tx + nx * off * 0.5, ty + ny * off * 0.5, hw});
      sh.shaft.push_back({ex - nx * off, ey - ny * off, tx - nx * off * 0.5, ty - ny * off * 0.5, hw});
      break;
    }
    default:
      sh.shaft.push_back({ex, ey, tx, ty, hw});
      break;
  }
  switch (kind) {
    case InstrumentKind::SuctionTube:
      sh.tip.push_back({tx, ty, tx, ty, 1.2 * scale});
      break;
    case InstrumentKind::Rongeur:
      sh.tip.push_back({tx, ty, tx + ux * 1.0 * scale, ty + uy * 1.0 * scale, 2.0 * scale});
      break;
    case InstrumentKind::CuttingForceps:
      sh.tip.push_back(rot(0.45, 2.5, 0.6));
      sh.tip.push_back(rot(-0.45, 2.5, 0.6));
      break;
    case InstrumentKind::CupForceps:
      sh.tip.push_back({tx, ty, tx + ux * 1.2 * scale, ty + uy * 1.2 * scale, 1.8 * scale});
      break;
    case InstrumentKind::BipolarElectrode: {
      const double off = 0.6 * scale;
      sh.tip.push_back({tx + nx * off, ty + ny * off, tx + nx * off + ux * 1.5 * scale,
                        ty + ny * off + uy * 1.5 * scale, 0.6 * scale});
      sh.tip.push_back({tx - nx * off, ty - ny * off, tx - nx * off + ux * 1.5 * scale,
                        ty - ny * off + uy * 1.5 * scale, 0.6 * scale});
      break;
    }
    case InstrumentKind::Freer:
      sh.tip.push_back({tx + nx * 1.6 * scale, ty + ny * 1.6 * scale, tx - nx * 1.6 * scale,
                        ty - ny * 1.6 * scale, 0.8 * scale});
      break;
    case InstrumentKind::Scissors:
      sh.tip.push_back(rot(0.5, 3.0, 0.5));
      sh.tip.push_back(rot(-0.5, 3.0, 0.5));
      break;
  }
  return sh;
}

}  // namespace

InstrumentClip generate_instrument_clip(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const double scale = std::min(cfg.width, cfg.height) / 32.0;
  InstrumentClip clip;
  clip.kind = static_cast<InstrumentKind>(rng.below(kInstrumentKinds));

  // Entry point on the left, right or bottom edge.
  const int edge = static_cast<int>(rng.below(3));
  const double W = cfg.width, H = cfg.height;
  double ex = 0, ey = 0, inx = 0, iny = 0;
  switch (edge) {
    case 0: ex = -1.0; ey = rng.uniform(0.35, 0.75) * H; inx = 1; break;
    case 1: ex = W + 1.0; ey = rng.uniform(0.35, 0.75) * H; inx = -1; break;
    default: ex = rng.uniform(0.3, 0.7) * W; ey = H + 1.0; iny = -1; break;
  }
  const double depth = rng.uniform(8.0, 13.0) * scale;
  const double spread = rng.uniform(-0.4, 0.4);
  double tx = ex + depth * (inx * std::cos(spread) - iny * std::sin(spread));
  double ty = ey + depth * (inx * std::sin(spread) + iny * std::cos(spread));

  // Tip velocity bounded by half of max_step, plus a small wobble.
  const double speed = rng.uniform(0.2, 0.5) * cfg.max_step;
  const double heading = rng.uniform(0.0, 2.0 * M_PI);
  double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
  const double wob_amp = 0.2 * cfg.max_step;
  const double wob_ph = rng.uniform(0.0, 2.0 * M_PI);
  const double entry_speed = rng.uniform(-0.3, 0.3) * scale;

  const double margin = 2.0 * scale;
  const Rgb metal = {0.60 + rng.uniform(-0.04, 0.04), 0.62 + rng.uniform(-0.04, 0.04),
                     0.66 + rng.uniform(-0.04, 0.04)};
  const Rgb tip_col = {0.44, 0.44, 0.47};
  Rng noise = rng.fork(0xB0B);

  for (int t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      const double w = wob_amp * (std::sin(0.9 * t + wob_ph) - std::sin(0.9 * (t - 1) + wob_ph));
      double nx = tx + vx + w * -std::sin(heading);
      double ny = ty + vy + w * std::cos(heading);
      // Reflect off the margins to stay in view.
      if (nx < margin || nx > W - margin) { vx = -vx; nx = std::clamp(nx, margin, W - margin); }
      if (ny < margin || ny > H - margin) { vy = -vy; ny = std::clamp(ny, margin, H - margin); }
      tx = nx;
      ty = ny;
      if (edge == 2) {
        ex = std::clamp(ex + entry_speed, 0.0, W);
      } else {
        ey = std::clamp(ey + entry_speed, 0.0, H);
      }
    } else {
      tx = std::clamp(tx, margin, W - margin);
      ty = std::clamp(ty, margin, H - margin);
    }
    const Shape2 sh = instrument_shape(clip.kind, ex, ey, tx, ty, scale);
    Image img(cfg.width, cfg.height);
    BinaryMask mask(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double shade = -1.0;
        bool tip = false;
        for (const Segment& s : sh.tip) {
          const double d = segment_distance(px, py, s);
          if (d <= s.half_width) {
            shade = std::max(shade, 1.0 - d / s.half_width);
            tip = true;
          }
        }
        if (!tip) {
          for (const Segment& s : sh.shaft) {
            const double d = segment_distance(px, py, s);
            if (d <= s.half_width) shade = std::max(shade, 1.0 - d / s.half_width);
          }
        }
        if (shade < 0.0) continue;
        mask.on[static_cast<std::size_t>(y) * cfg.width + x] = 1;
        const Rgb& base = tip ? tip_col : metal;
        const double f = 0.65 + 0.45 * shade;
        std::uint8_t* p = img.pixel(x, y);
        for (int k = 0; k < 3; ++k) p[k] = quantize(base[k] * f + 0.5 * cfg.noise * noise.normal());
      }
    }
    clip.frames.push_back(std::move(img));
    clip.masks.push_back(std::move(mask));
    clip.tip_path.emplace_back(tx, ty);
  }
  return clip;
}

std::pair<Image, LabelMap> composite_instrument(const Image& frame, const LabelMap& label,
                                                const Image& instrument, const BinaryMask& mask) {
  if (frame.width != label.width || frame.height != label.height || frame.width != instrument.width ||
      frame.height != instrument.height || frame.width != mask.width || frame.height != mask.height) {
    throw DimensionError("composite: frame, label, instrument and mask sizes differ");
  }
  Image out = frame;
  LabelMap lab = label;
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      if (!mask.on[static_cast<std::size_t>(y) * mask.width + x]) continue;
      std::copy_n(instrument.pixel(x, y), 3, out.pixel(x, y));
      lab.at(x, y) = kBackground;
    }
  }
  return {std::move(out), std::move(lab)};
}

std::vector<std::size_t> align_clip_indices(std::size_t target_len, std::size_t clip_len) {
  if (clip_len == 0) throw ValidationError("instrument clip is empty");
  std::vector<std::size_t> idx(target_len, 0);
  if (target_len <= 1) return idx;
  for (std::size_t t = 0; t < target_len; ++t) {
    idx[t] = static_cast<std::size_t>(std::llround(static_cast<double>(t) * static_cast<double>(clip_len - 1) /
                                                   static_cast<double>(target_len - 1)));
  }
  return idx;
}

VideoSample occlude_case(const VideoSample& target, const InstrumentClip& clip,
                         const std::string& provenance) {
  if (target.frames.size() != target.labels.size()) throw DimensionError("frames and labels differ in length");
  if (clip.frames.size() != clip.masks.size()) throw DimensionError("clip frames and masks differ in length");
  const auto idx = align_clip_indices(target.size(), clip.size());
  VideoSample out;
  out.case_id = target.case_id;
  out.seed = target.seed;
  out.provenance = provenance;
  for (std::size_t t = 0; t < target.size(); ++t) {
    auto [img, lab] = composite_instrument(target.frames[t], target.labels[t], clip.frames[idx[t]], clip.masks[idx[t]]);
    out.frames.push_back(std::move(img));
    out.labels.push_back(std::move(lab));
  }
  // A class can vanish only if the instrument covers it in every frame.
  out.present = presence_from_labels(out.labels);
  return out;
}

VideoSample augment_case(const VideoSample& target, const InstrumentClip& clip) {
  if (!target.present[kIcaProminence] && !target.present[kOpticCarotidRecess]) {
    throw EligibilityError("case " + target.case_id + " contains neither IP nor OCR");
  }
  VideoSample out = occlude_case(target, clip, "augmented");
  out.case_id = target.case_id + "_aug";
  return out;
}

bool is_augmented(const VideoSample& video) { return video.provenance == "augmented"; }

ClassPresence presence_from_labels(const std::vector<LabelMap>& labels) {
  ClassPresence p{};
  for (const LabelMap& l : labels) {
    for (std::uint8_t v : l.labels) {
      if (v >= kNumClasses) throw ValidationError("label value out of range");
      p[v] = true;
    }
  }
  p[kBackground] = false;
  return p;
}

std::array<double, kNumClasses> class_distribution(std::span<const VideoSample* const> cases) {
  if (cases.empty()) throw ValidationError("class distribution of an empty dataset");
  std::array<double, kNumClasses> dist{};
  for (const VideoSample* v : cases) {
    const ClassPresence actual = presence_from_labels(v->labels);
    if (actual != v->present) {
      throw ValidationError("presence metadata of case " + v->case_id + " disagrees with its labels");
    }
    for (int c = 1; c < kNumClasses; ++c) dist[c] += actual[c] ? 1.0 : 0.0;
  }
  for (int c = 1; c < kNumClasses; ++c) dist[c] /= static_cast<double>(cases.size());
  return dist;
}

std::array<double, kNumClasses> class_distribution(std::span<const VideoSample> cases) {
  std::vector<const VideoSample*> ptrs;
  ptrs.reserve(cases.size());
  for (const VideoSample& v : cases) ptrs.push_back(&v);
  return class_distribution(std::span<const VideoSample* const>(ptrs));
}

// ---------------------------------------------------------------------------
// Datasets

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split: " + name);
}

void SplitRatios::validate() const {
  for (double r : {train, val, test}) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::array<int, 3> split_counts(int num_cases, const SplitRatios& ratios) {
  ratios.validate();
  if (num_cases < 0) throw ConfigError("num_cases must be non-negative");
  const std::array<double, 3> r = {ratios.train, ratios.val, ratios.test};
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = r[i] * num_cases;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    rem[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
  for (int k = 0; assigned < num_cases; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

std::vector<const VideoSample*> Dataset::split(Split which) const {
  std::vector<const VideoSample*> out;
  for (const DatasetCase& c : cases) {
    if (c.split == which) out.push_back(&c.video);
  }
  return out;
}

namespace {

std::string case_name(int i) {
  std::string s = std::to_string(i);
  return "case_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

Dataset generate_dataset(std::uint64_t seed, const DatasetConfig& config) {
  config.gen.validate();
  const auto counts = split_counts(config.num_cases, config.ratios);
  Dataset ds;
  ds.seed = seed;
  ds.config = config;
  int i = 0;
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < counts[s]; ++k, ++i) {
      DatasetCase c;
      c.split = static_cast<Split>(s);
      c.video = generate_synthetic_case(mix_seed(seed, static_cast<std::uint64_t>(i)), config.gen, case_name(i));
      if (c.split == Split::Test && config.occlude_test) {
        const InstrumentClip clip =
            generate_instrument_clip(mix_seed(seed ^ 0x7E57ULL, static_cast<std::uint64_t>(i)), config.gen);
        const std::uint64_t case_seed = c.video.seed;
        c.video = occlude_case(c.video, clip, "occluded");
        c.video.seed = case_seed;
      }
      ds.cases.push_back(std::move(c));
    }
  }
  return ds;
}

std::size_t augment_dataset(Dataset& dataset, std::uint64_t seed) {
  std::vector<DatasetCase> added;
  std::size_t index = 0;
  for (const DatasetCase& c : dataset.cases) {
    ++index;
    if (c.split != Split::Train || is_augmented(c.video)) continue;
    if (!c.video.present[kIcaProminence] && !c.video.present[kOpticCarotidRecess]) continue;
    const GenConfig& gen = dataset.config.gen;
    GenConfig clip_cfg = gen;
    clip_cfg.frames = static_cast<int>(c.video.size());
    const InstrumentClip clip = generate_instrument_clip(mix_seed(seed, index), clip_cfg);
    added.push_back({augment_case(c.video, clip), Split::Train});
  }
  for (DatasetCase& c : added) {
    const bool duplicate = std::any_of(dataset.cases.begin(), dataset.cases.end(), [&](const DatasetCase& d) {
      return d.video.case_id == c.video.case_id;
    });
    if (duplicate) throw ValidationError("augmented case already present: " + c.video.case_id);
  }
  const std::size_t n = added.size();
  for (DatasetCase& c : added) dataset.cases.push_back(std::move(c));
  return n;
}

}  // namespace vidseg
