#include "jepa/data/render.hpp"

#include "jepa/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jepa::env {

namespace {

constexpr float kBgBase[3] = {0.13f, 0.15f, 0.17f};
constexpr float kObjectColors[kNumColors][3] = {
    {0.85f, 0.15f, 0.15f}, {0.15f, 0.80f, 0.20f}, {0.20f, 0.35f, 0.90f}, {0.90f, 0.85f, 0.20f}};
constexpr float kZoneColors[kNumZones][3] = {
    {0.95f, 0.55f, 0.20f}, {0.20f, 0.85f, 0.90f}, {0.85f, 0.25f, 0.85f}, {0.55f, 0.95f, 0.35f}};
constexpr float kGripOpen[3] = {0.92f, 0.92f, 0.95f};
constexpr float kGripClosed[3] = {0.95f, 0.30f, 0.90f};
constexpr float kDistractorDrift = 0.10f;

constexpr std::uint64_t kSubJitter = 0x6a69ull;
constexpr std::uint64_t kSubFlicker = 0x666cull;
constexpr std::uint64_t kSubDrift = 0x6472ull;
constexpr std::uint64_t kSubMotion = 0x6d6full;

struct ViewXform {
  float origin_x, origin_y, scale;  // scene = origin + pixel_center/HW * scale
};

ViewXform view_xform(const EnvState& s, int view) {
  if (view == 0) return {0.0f, 0.0f, 1.0f};
  if (view == 1) {
    float cx = std::clamp(s.gripper[0], kCropHalf, 1.0f - kCropHalf);
    float cy = std::clamp(s.gripper[1], kCropHalf, 1.0f - kCropHalf);
    return {cx - kCropHalf, cy - kCropHalf, 2.0f * kCropHalf};
  }
  throw std::invalid_argument("render: view must be 0 or 1, got " + std::to_string(view));
}

bool in_shape(int shape, float px, float py, float cx, float cy, float r) {
  float dx = px - cx, dy = py - cy;
  switch (shape) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::max(std::abs(dx), std::abs(dy)) <= r;
    default: return dy >= -r && dy <= r && std::abs(dx) <= (r - dy) * 0.5f;
  }
}

bool in_gripper(float px, float py, float cx, float cy) {
  constexpr float arm = 0.035f, thick = 0.012f;
  float dx = std::abs(px - cx), dy = std::abs(py - cy);
  return (dx <= arm && dy <= thick) || (dy <= arm && dx <= thick);
}

bool in_zone_ring(float px, float py, float cx, float cy) {
  constexpr float thick = 0.018f;
  float dx = std::abs(px - cx), dy = std::abs(py - cy);
  float outer = std::max(dx, dy);
  return outer <= kZoneHalf && outer >= kZoneHalf - thick;
}

std::array<float, 2> distractor_pos(const ObjectSpec& d, size_t index, std::uint64_t step_seed) {
  std::uint64_t k = rng::key(step_seed, kSubMotion, index);
  float ox = float(rng::uniform_in(k, 0, -0.5, 0.5)) * kDistractorDrift;
  float oy = float(rng::uniform_in(k, 1, -0.5, 0.5)) * kDistractorDrift;
  return {std::clamp(d.pos[0] + ox, kSceneMin, kSceneMax),
          std::clamp(d.pos[1] + oy, kSceneMin, kSceneMax)};
}

// Scene color at a point, before global lighting and jitter.
void scene_color(const EnvState& s, const std::vector<std::array<float, 2>>& dpos, float px,
                 float py, float flicker_amp, std::uint64_t step_seed, int bx, int by,
                 float out[3]) {
  // Background: faint checker plus per-block flicker.
  float bg_boost = ((bx + by) % 2 == 0) ? 0.02f : 0.0f;
  float flick = 0.0f;
  if (flicker_amp > 0.0f) {
    std::uint64_t fk = rng::key(step_seed, kSubFlicker, std::uint64_t(by) * 64 + std::uint64_t(bx));
    flick = flicker_amp * 0.4f * float(rng::uniform(fk, 0) - 0.5);
  }
  for (int c = 0; c < 3; ++c) out[c] = kBgBase[c] + bg_boost + flick;

  const auto& zc = kZoneCenters[size_t(s.zone)];
  if (in_zone_ring(px, py, zc[0], zc[1]))
    for (int c = 0; c < 3; ++c) out[c] = kZoneColors[size_t(s.zone)][c];

  for (size_t d = 0; d < s.distractors.size(); ++d)
    if (in_shape(s.distractors[d].shape, px, py, dpos[d][0], dpos[d][1], kDistractorRadius))
      for (int c = 0; c < 3; ++c) out[c] = kObjectColors[s.distractors[d].color][c] * 0.75f;

  if (in_shape(s.object.shape, px, py, s.object.pos[0], s.object.pos[1], kObjectRadius))
    for (int c = 0; c < 3; ++c) out[c] = kObjectColors[s.object.color][c];

  if (in_gripper(px, py, s.gripper[0], s.gripper[1])) {
    const float* g = s.closed ? kGripClosed : kGripOpen;
    for (int c = 0; c < 3; ++c) out[c] = g[c];
  }
}

}  // namespace

std::uint64_t step_render_seed(std::uint64_t nuisance_seed, int step_index) {
  return rng::key(nuisance_seed, 0x7374ull, std::uint64_t(step_index));
}

std::array<int, 2> jitter_offset(const NuisanceConfig& nuisance, std::uint64_t step_seed,
                                 int view) {
  if (nuisance.camera_jitter_px <= 0) return {0, 0};
  std::uint64_t k = rng::key(step_seed, kSubJitter, std::uint64_t(view));
  int span = 2 * nuisance.camera_jitter_px + 1;
  return {int(rng::index(k, 0, std::uint64_t(span))) - nuisance.camera_jitter_px,
          int(rng::index(k, 1, std::uint64_t(span))) - nuisance.camera_jitter_px};
}

Tensor render(const EnvState& s, int view, const NuisanceConfig& nuisance,
              std::uint64_t step_seed) {
  nuisance.validate();
  ViewXform xf = view_xform(s, view);
  const int hw = kFrameHW;

  std::vector<std::array<float, 2>> dpos(s.distractors.size());
  for (size_t d = 0; d < s.distractors.size(); ++d)
    dpos[d] = distractor_pos(s.distractors[d], d, step_seed);

  float drift = 0.0f;
  if (nuisance.lighting_drift_amp > 0.0f)
    drift = nuisance.lighting_drift_amp * 0.3f *
            float(rng::uniform(rng::key(step_seed, kSubDrift), 0) - 0.5) * 2.0f;

  Tensor frame = Tensor::zeros({hw, hw, 3});
  Scalar* px = frame.data();
  for (int y = 0; y < hw; ++y)
    for (int x = 0; x < hw; ++x) {
      float sx = xf.origin_x + (float(x) + 0.5f) / float(hw) * xf.scale;
      float sy = xf.origin_y + (float(y) + 0.5f) / float(hw) * xf.scale;
      float col[3];
      scene_color(s, dpos, sx, sy, nuisance.background_flicker_amp, step_seed, x / 8, y / 8, col);
      for (int c = 0; c < 3; ++c)
        px[(y * hw + x) * 3 + c] = std::clamp(col[c] * (1.0f + drift), 0.0f, 1.0f);
    }

  auto [jx, jy] = jitter_offset(nuisance, step_seed, view);
  if (jx != 0 || jy != 0) {
    Tensor shifted = Tensor::zeros({hw, hw, 3});
    Scalar* out = shifted.data();
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x) {
        int ux = x - jx, uy = y - jy;
        bool inside = ux >= 0 && ux < hw && uy >= 0 && uy < hw;
        for (int c = 0; c < 3; ++c)
          out[(y * hw + x) * 3 + c] = inside ? px[(uy * hw + ux) * 3 + c] : kBgBase[c];
      }
    return shifted;
  }
  return frame;
}

std::vector<std::uint8_t> object_patch_mask(const EnvState& s, int view, int patch) {
  if (patch <= 0 || kFrameHW % patch != 0)
    throw std::invalid_argument("object_patch_mask: patch must divide the frame size");
  ViewXform xf = view_xform(s, view);
  int grid = kFrameHW / patch;
  std::vector<std::uint8_t> mask(size_t(grid) * size_t(grid), 0);
  for (int y = 0; y < kFrameHW; ++y)
    for (int x = 0; x < kFrameHW; ++x) {
      float sx = xf.origin_x + (float(x) + 0.5f) / float(kFrameHW) * xf.scale;
      float sy = xf.origin_y + (float(y) + 0.5f) / float(kFrameHW) * xf.scale;
      if (in_shape(s.object.shape, sx, sy, s.object.pos[0], s.object.pos[1], kObjectRadius))
        mask[size_t(y / patch) * size_t(grid) + size_t(x / patch)] = 1;
    }
  return mask;
}

}  // namespace jepa::env
