#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "labelforge/tensor.hpp"

namespace labelforge {

// Class indices: 0 = Benign, 1 = Malignant. Malignant is the positive class.
inline constexpr int kBenign = 0;
inline constexpr int kMalignant = 1;

int class_from_token(const std::string& token);  // "B" / "M"
const char* class_token(int cls);

enum class LabelSource { none, ground_truth, pseudo, cluster };

const char* label_source_token(LabelSource s);
LabelSource label_source_from_token(const std::string& token);

// One image with its label bookkeeping. The ground-truth class is private:
// training code may only reach it through Dataset::true_label, which counts
// reads of non-ground-truth samples on a tripwire.
class Sample {
 public:
  std::string id;
  Tensor pixels;  // HWC in [0,1]
  std::optional<int> assigned_label;
  LabelSource label_source = LabelSource::none;

  void set_ground_truth(int cls) {
    truth_ = cls;
    assigned_label = cls;
    label_source = LabelSource::ground_truth;
  }
  // Keeps the hidden class but removes the visible label.
  void strip_label() {
    assigned_label.reset();
    label_source = LabelSource::none;
  }
  void set_hidden_truth(std::optional<int> cls) { truth_ = cls; }
  bool has_truth() const { return truth_.has_value(); }

 private:
  friend class Dataset;
  std::optional<int> truth_;
};

// Sample collection sharing one tripwire counter. Subsets keep pointing at
// the parent's counter so firewall accounting survives curation.
class Dataset {
 public:
  Dataset() : tripwire_(std::make_shared<std::atomic<std::uint64_t>>(0)) {}

  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  Dataset subset(const std::vector<std::size_t>& indices) const;

  // Guarded ground-truth read. Reading a sample whose visible label is not
  // ground truth increments the tripwire; learners must never cause that.
  int true_label(std::size_t i) const;

  // Unguarded read for ledgers, evaluation scoring, and tests. Never used
  // inside training code.
  std::optional<int> audit_true_label(std::size_t i) const {
    return samples[i].truth_;
  }

  std::uint64_t tripwire_count() const { return tripwire_->load(); }
  void reset_tripwire() { tripwire_->store(0); }
  // Detaches this dataset (and future subsets of it) onto a fresh counter.
  void rebind_tripwire();
  // Joins another dataset's counter so both report into one tally.
  void adopt_tripwire(const Dataset& other) { tripwire_ = other.tripwire_; }
  std::shared_ptr<std::atomic<std::uint64_t>> tripwire() const {
    return tripwire_;
  }

  // Counts over assigned labels; unlabeled samples are not counted.
  int count_assigned(int cls) const;
  bool all_labeled() const;

 private:
  std::shared_ptr<std::atomic<std::uint64_t>> tripwire_;
};

// Manifest CSV with header id,path,label and an optional label_source
// column. Image paths are resolved relative to the manifest's directory.
// Every row must carry a B/M label; those become ground truth.
Dataset load_corpus(const std::string& manifest_path);

// Lenient variant for relabeled or stripped manifests: empty label tokens
// yield unlabeled samples, and a label_source column is honored.
Dataset load_manifest(const std::string& manifest_path);

// Writes id,path,label[,label_source]. Pixel files are not written; paths
// must already exist (pass the directory that holds them).
void save_manifest(const Dataset& ds, const std::string& manifest_path,
                   const std::vector<std::string>& image_paths,
                   bool with_source);

// Assembles [n, C, H, W] training input from HWC samples.
Tensor make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
Tensor to_chw(const Tensor& hwc);

}  // namespace labelforge
