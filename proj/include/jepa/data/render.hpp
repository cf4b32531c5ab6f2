#pragma once

#include "jepa/core/tensor.hpp"
#include "jepa/data/env.hpp"

#include <cstdint>
#include <vector>

namespace jepa::env {

// One frame [H, W, 3] in [0,1]. view 0 is the global camera, view 1 a 2x crop
// following the gripper. All stochastic nuisance draws key off step_seed, so a
// (state, view, nuisance, step_seed) tuple always renders the same pixels.
Tensor render(const EnvState& s, int view, const NuisanceConfig& nuisance,
              std::uint64_t step_seed);

std::uint64_t step_render_seed(std::uint64_t nuisance_seed, int step_index);

// The jitter offset render() applies for this (step_seed, view), in pixels.
std::array<int, 2> jitter_offset(const NuisanceConfig& nuisance, std::uint64_t step_seed,
                                 int view);

// Per-patch indicator of the task object's silhouette (no nuisance, no
// jitter), row-major over the (H/patch) x (W/patch) grid.
std::vector<std::uint8_t> object_patch_mask(const EnvState& s, int view, int patch);

}  // namespace jepa::env
