#include "labelforge/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "labelforge/errors.hpp"
#include "labelforge/image.hpp"
#include "labelforge/rng.hpp"

namespace labelforge {

namespace {

void add_blob(Tensor& img, double cx, double cy, double radius,
              double intensity) {
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const double denom = 2.0 * (radius / 1.7) * (radius / 1.7);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      double v = intensity * std::exp(-d2 / denom);
      if (v < 1e-4) continue;
      for (int k = 0; k < c; ++k)
        img[(static_cast<std::size_t>(y) * w + x) * c + k] +=
            static_cast<float>(v);
    }
}

}  // namespace

Dataset generate_synthetic_corpus(int n, std::uint64_t seed,
                                  const SynthParams& params) {
  if (n < 1) throw ConfigError("synthetic corpus needs at least 1 sample");
  if (params.size < 8) throw ConfigError("synthetic image size must be >= 8");
  if (params.separability < 0.f || params.separability > 1.f)
    throw ConfigError("separability must lie in [0,1]");
  const int sz = params.size;
  const double scale = sz / 32.0;
  const double sep = params.separability;
  const RngStream root(seed);

  Dataset ds;
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngStream rng = root.derive("synth", static_cast<std::uint64_t>(i));
    const int cls = i % 2;
    Tensor img({sz, sz, 3});

    // dim noisy background
    RngStream bg = rng.derive("bg");
    for (std::size_t p = 0; p < img.size(); ++p)
      img[p] = 0.08f + 0.02f * bg.uniform();

    const double mid = (sz - 1) * 0.5;
    RngStream shape = rng.derive("shape");
    if (cls == kBenign) {
      double cx = mid + 1.5 * shape.normal() * scale;
      double cy = mid + 1.5 * shape.normal() * scale;
      double r = shape.uniform(8.f, 11.f) * scale;
      add_blob(img, cx, cy, r, 0.72);
    } else {
      // morphology drifts toward the benign one as separability drops
      int nb = 3 + static_cast<int>(shape.index(3));
      double scatter = 9.0 * sep * scale;
      double r_small = (9.5 + sep * (2.8 - 9.5)) * scale;
      double intensity = 1.15 / nb + 0.18;
      for (int b = 0; b < nb; ++b) {
        double cx = mid + shape.uniform(-1.f, 1.f) * scatter;
        double cy = mid + shape.uniform(-1.f, 1.f) * scatter;
        double r = r_small * shape.uniform(0.8f, 1.2f);
        add_blob(img, cx, cy, r, intensity);
      }
      // speckle texture, malignant only, strength follows separability
      RngStream spk = rng.derive("speckle");
      float amp = static_cast<float>(0.12 * sep);
      for (std::size_t p = 0; p < img.size(); p += 3) {
        float v = spk.uniform(-amp, amp);
        img[p] += v;
        img[p + 1] += v;
        img[p + 2] += v;
      }
    }

    // class-independent nuisances: brightness jitter and color tint
    RngStream nui = rng.derive("nuisance");
    float bright = nui.uniform(-0.03f, 0.03f);
    float gain[3];
    for (int k = 0; k < 3; ++k)
      gain[k] = 1.f - params.tint_strength * nui.uniform();
    for (std::size_t p = 0; p < img.size(); p += 3)
      for (int k = 0; k < 3; ++k) {
        float v = (img[p + k] + bright) * gain[k];
        img[p + k] = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
      }

    Sample s;
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%06d", i);
    s.id = buf;
    s.pixels = std::move(img);
    s.set_ground_truth(cls);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string write_corpus(const Dataset& ds, const std::string& dir,
                         const std::string& format) {
  if (format != "lfim" && format != "png")
    throw ConfigError("corpus format must be lfim or png");
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("cannot create corpus directory: " + dir);

  std::vector<std::string> rel_paths;
  rel_paths.reserve(ds.size());
  for (const Sample& s : ds.samples) {
    std::string rel = "images/" + s.id + "." + format;
    if (format == "lfim")
      write_lfim((root / rel).string(), s.pixels);
    else
      write_png((root / rel).string(), s.pixels);
    rel_paths.push_back(rel);
  }
  std::string manifest = (root / "manifest.csv").string();
  save_manifest(ds, manifest, rel_paths, false);
  return manifest;
}

}  // namespace labelforge
