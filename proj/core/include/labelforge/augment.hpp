#pragma once

#include "labelforge/dataset.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/tensor.hpp"

namespace labelforge {

struct AugmentPolicy {
  float max_rotation_deg = 40.f;
  float hflip_prob = 0.5f;
  float vflip_prob = 0.5f;
  float shear = 0.2f;   // x-shear coefficient bound, sampled in [-shear, shear]
  int target_h = 32;
  int target_w = 32;
};

// One affine resample: scale to target size, shear, rotate, flip, with
// bilinear interpolation and zero fill outside the source. x runs along
// columns and y along rows; rotation by +a sends (x, y) to
// (x cos a - y sin a, x sin a + y cos a) about the image center. With all
// parameters at identity and target equal to the source size the output is
// bit-identical to the input.
Tensor affine_resample(const Tensor& hwc, double angle_deg, double shear,
                       bool hflip, bool vflip, int target_h, int target_w);

// Randomized policy application. Draws exactly four variates from rng
// (angle, shear, two flips), so a stream yields the same transform
// regardless of image content.
Tensor augment_pixels(const Tensor& hwc, const AugmentPolicy& policy,
                      RngStream rng);

// Same transform applied to a sample's pixels; labels and id pass through.
Sample augment(const Sample& sample, const AugmentPolicy& policy,
               RngStream rng);

}  // namespace labelforge
