#include "labelforge/augment.hpp"

#include <cmath>

#include "labelforge/errors.hpp"

namespace labelforge {

Tensor affine_resample(const Tensor& hwc, double angle_deg, double shear,
                       bool hflip, bool vflip, int target_h, int target_w) {
  if (hwc.rank() != 3 || hwc.empty())
    throw InputError("augment expects a non-empty rank-3 HWC image");
  const int ih = hwc.dim(0), iw = hwc.dim(1), c = hwc.dim(2);
  const int th = target_h, tw = target_w;
  if (th < 1 || tw < 1) throw InputError("augment target size must be >= 1");

  // Output pixel -> input pixel. The forward chain is scale, shear, rotate,
  // flip about the image center; the composed inverse is applied here.
  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double fx = hflip ? -1.0 : 1.0, fy = vflip ? -1.0 : 1.0;
  const double sx = static_cast<double>(tw) / iw;
  const double sy = static_cast<double>(th) / ih;
  // M = Sc^-1 * Sh^-1 * R(-a) * F
  const double r00 = cs * fx, r01 = sn * fy;
  const double r10 = -sn * fx, r11 = cs * fy;
  const double m00 = (r00 - shear * r10) / sx, m01 = (r01 - shear * r11) / sx;
  const double m10 = r10 / sy, m11 = r11 / sy;

  const double cx_t = (tw - 1) * 0.5, cy_t = (th - 1) * 0.5;
  const double cx_i = (iw - 1) * 0.5, cy_i = (ih - 1) * 0.5;

  Tensor out({th, tw, c});
  auto tap = [&](int y, int x, int k) -> double {
    if (x < 0 || x >= iw || y < 0 || y >= ih) return 0.0;
    return hwc[(static_cast<std::size_t>(y) * iw + x) * c + k];
  };
  for (int ro = 0; ro < th; ++ro) {
    const double yo = ro - cy_t;
    for (int co = 0; co < tw; ++co) {
      const double xo = co - cx_t;
      const double xi = m00 * xo + m01 * yo + cx_i;
      const double yi = m10 * xo + m11 * yo + cy_i;
      const double xf = std::floor(xi), yf = std::floor(yi);
      const int x0 = static_cast<int>(xf), y0 = static_cast<int>(yf);
      const double ax = xi - xf, ay = yi - yf;
      for (int k = 0; k < c; ++k) {
        double v = (1.0 - ax) * (1.0 - ay) * tap(y0, x0, k) +
                   ax * (1.0 - ay) * tap(y0, x0 + 1, k) +
                   (1.0 - ax) * ay * tap(y0 + 1, x0, k) +
                   ax * ay * tap(y0 + 1, x0 + 1, k);
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        out[(static_cast<std::size_t>(ro) * tw + co) * c + k] =
            static_cast<float>(v);
      }
    }
  }
  return out;
}

Tensor augment_pixels(const Tensor& hwc, const AugmentPolicy& policy,
                      RngStream rng) {
  const double angle =
      rng.uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
  const double shear = rng.uniform(-policy.shear, policy.shear);
  const bool hflip = rng.bernoulli(policy.hflip_prob);
  const bool vflip = rng.bernoulli(policy.vflip_prob);
  return affine_resample(hwc, angle, shear, hflip, vflip, policy.target_h,
                         policy.target_w);
}

Sample augment(const Sample& sample, const AugmentPolicy& policy,
               RngStream rng) {
  Sample out = sample;
  out.pixels = augment_pixels(sample.pixels, policy, rng);
  return out;
}

}  // namespace labelforge
