#pragma once

#include <cstdint>
#include <string>

#include "labelforge/dataset.hpp"

namespace labelforge {

// Two-class blob/texture corpus. Benign images carry one large smooth blob;
// malignant images carry several small scattered blobs plus speckle. The
// separability knob scales how far the malignant morphology departs from
// the benign one. Every image also gets a class-independent color tint, a
// nuisance factor that survives geometric augmentation and therefore leaks
// into contrastive embeddings by design.
struct SynthParams {
  int size = 32;
  float separability = 0.9f;
  // strong enough that contrastive clusters are visibly polluted by the
  // nuisance factor, weak enough that they stay well above chance
  float tint_strength = 0.2f;
};

// Deterministic per (seed, params); classes alternate B,M,B,M,...
Dataset generate_synthetic_corpus(int n, std::uint64_t seed,
                                  const SynthParams& params = {});

// Writes dir/images/<id>.<ext> plus dir/manifest.csv and returns the
// manifest path. format is "lfim" or "png".
std::string write_corpus(const Dataset& ds, const std::string& dir,
                         const std::string& format = "lfim");

}  // namespace labelforge
