#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "labelforge/augment.hpp"
#include "labelforge/curation.hpp"
#include "labelforge/dataset.hpp"
#include "labelforge/errors.hpp"
#include "labelforge/image.hpp"
#include "labelforge/rng.hpp"
#include "labelforge/synth.hpp"

using namespace labelforge;
namespace fs = std::filesystem;

namespace {

// in-memory corpus with one-pixel images, for arithmetic-only checks
Dataset flat_corpus(int benign, int malignant) {
  Dataset ds;
  ds.samples.reserve(benign + malignant);
  for (int i = 0; i < benign + malignant; ++i) {
    Sample s;
    s.id = "f" + std::to_string(i);
    s.pixels = Tensor({1, 1, 1}, {0.5f});
    s.set_ground_truth(i < benign ? kBenign : kMalignant);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

fs::path temp_dir(const char* stem) {
  fs::path p = fs::temp_directory_path() / (std::string("labelforge_") + stem);
  fs::create_directories(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------- rng

TEST_CASE("random streams are deterministic and derivation is independent") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream parent(42);
  const std::uint64_t before = parent.state();
  RngStream c1 = parent.derive("child", 1);
  RngStream c2 = parent.derive("child", 2);
  RngStream other = parent.derive("other", 1);
  CHECK(parent.state() == before);  // derive never advances the parent
  CHECK(c1.state() != c2.state());
  CHECK(c1.state() != other.state());
  CHECK(parent.derive("child", 1).state() == c1.state());
}

TEST_CASE("uniform draws stay inside their interval") {
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    float u = rng.uniform();
    CHECK(u >= 0.f);
    CHECK(u < 1.f);
  }
  RngStream rng2(8);
  for (int i = 0; i < 1000; ++i) {
    float v = rng2.uniform(-3.f, 5.f);
    CHECK(v >= -3.f);
    CHECK(v < 5.f);
  }
  RngStream rng3(9);
  double mean = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += rng3.uniform_double();
  mean /= n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal draws have roughly standard moments") {
  RngStream rng(11);
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("index stays in range and covers all values") {
  RngStream rng(13);
  std::set<std::size_t> seen;
  for (int i = 0; i < 1000; ++i) {
    std::size_t v = rng.index(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("shuffle permutes without losing elements") {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  RngStream rng(17);
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  // same seed, same order
  std::vector<int> w(100);
  std::iota(w.begin(), w.end(), 0);
  RngStream rng2(17);
  rng2.shuffle(w);
  CHECK(v == w);
}

// ---------------------------------------------------------------- images

TEST_CASE("raw tensor image files roundtrip bit exactly") {
  RngStream rng(19);
  Tensor img({5, 4, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  const fs::path dir = temp_dir("img");
  const std::string path = (dir / "a.lfim").string();
  write_lfim(path, img);
  Tensor back = read_lfim(path);
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);
  // the generic reader dispatches on magic bytes
  Tensor dispatched = read_image(path);
  CHECK(dispatched.values() == img.values());
}

TEST_CASE("png roundtrip is exact for 8-bit-quantized values") {
  for (int channels : {1, 3}) {
    Tensor img({6, 7, channels});
    RngStream rng(23 + channels);
    for (std::size_t i = 0; i < img.size(); ++i)
      img[i] = static_cast<float>(rng.index(256)) / 255.f;
    const fs::path dir = temp_dir("img");
    const std::string path = (dir / ("b" + std::to_string(channels) + ".png")).string();
    write_png(path, img);
    Tensor back = read_png(path);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));
  }
}

// ---------------------------------------------------------------- dataset

TEST_CASE("tripwire fires on guarded truth reads of non-ground-truth samples") {
  Dataset ds = flat_corpus(2, 2);
  CHECK(ds.true_label(0) == kBenign);
  CHECK(ds.tripwire_count() == 0);  // ground-truth reads are free

  ds.samples[2].strip_label();
  CHECK(ds.true_label(2) == kMalignant);
  CHECK(ds.tripwire_count() == 1);
  CHECK(*ds.audit_true_label(2) == kMalignant);  // audits never count
  CHECK(ds.tripwire_count() == 1);

  Dataset sub = ds.subset({2, 3});
  (void)sub.true_label(0);
  CHECK(ds.tripwire_count() == 2);  // subsets share the parent counter

  sub.rebind_tripwire();
  (void)sub.true_label(0);
  CHECK(ds.tripwire_count() == 2);
  CHECK(sub.tripwire_count() == 1);

  ds.reset_tripwire();
  CHECK(ds.tripwire_count() == 0);
}

TEST_CASE("pseudo and cluster labels also trip the guarded read") {
  Dataset ds = flat_corpus(1, 1);
  ds.samples[0].strip_label();
  ds.samples[0].assigned_label = kMalignant;
  ds.samples[0].label_source = LabelSource::pseudo;
  (void)ds.true_label(0);
  CHECK(ds.tripwire_count() == 1);
}

TEST_CASE("manifest save and load roundtrip labels and sources") {
  const fs::path dir = temp_dir("manifest");
  Dataset ds = generate_synthetic_corpus(6, 5, {16, 0.9f, 0.35f});
  ds.samples[2].strip_label();
  ds.samples[3].assigned_label = kBenign;
  ds.samples[3].label_source = LabelSource::pseudo;

  std::vector<std::string> paths;
  for (const Sample& s : ds.samples) {
    const std::string p = (dir / (s.id + ".lfim")).string();
    write_lfim(p, s.pixels);
    paths.push_back(p);
  }
  const std::string manifest = (dir / "m.csv").string();
  save_manifest(ds, manifest, paths, true);

  Dataset back = load_manifest(manifest);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].assigned_label == ds.samples[i].assigned_label);
    CHECK(back.samples[i].label_source == ds.samples[i].label_source);
    CHECK(back.samples[i].pixels.values() == ds.samples[i].pixels.values());
  }
  // the strict reader refuses rows without labels
  CHECK_THROWS_AS(load_corpus(manifest), IngestError);
}

TEST_CASE("corpus ingestion rejects duplicates and missing files") {
  const fs::path dir = temp_dir("ingest");
  Tensor img({2, 2, 1}, {0.1f, 0.2f, 0.3f, 0.4f});
  write_lfim((dir / "x.lfim").string(), img);
  auto write_manifest = [&](const std::string& body) {
    const std::string p = (dir / "bad.csv").string();
    std::ofstream os(p);
    os << body;
    os.close();
    return p;
  };
  CHECK_THROWS_AS(
      load_corpus(write_manifest("id,path,label\na,x.lfim,B\na,x.lfim,M\n")),
      IngestError);
  CHECK_THROWS_AS(
      load_corpus(write_manifest("id,path,label\na,gone.lfim,B\n")),
      IngestError);
  CHECK_THROWS_AS(load_corpus(write_manifest("id,path,label\na,x.lfim,Q\n")),
                  IngestError);
  CHECK_THROWS_AS(load_corpus(write_manifest("nope,nope\n")), IngestError);
}

TEST_CASE("batch assembly transposes HWC to NCHW") {
  Dataset ds;
  Sample s;
  s.id = "t";
  s.pixels = Tensor({2, 2, 3});
  for (int i = 0; i < 12; ++i) s.pixels[i] = static_cast<float>(i);
  s.set_ground_truth(kBenign);
  ds.samples.push_back(s);
  Tensor batch = make_batch(ds, {0});
  REQUIRE(batch.shape() == std::vector<int>{1, 3, 2, 2});
  // channel 0 collects every third interleaved value
  CHECK(batch.at(0, 0, 0, 0) == 0.f);
  CHECK(batch.at(0, 0, 0, 1) == 3.f);
  CHECK(batch.at(0, 1, 0, 0) == 1.f);
  CHECK(batch.at(0, 2, 1, 1) == 11.f);
}

// ---------------------------------------------------------------- split and curation

TEST_CASE("split matches the exact floor count with stratified classes") {
  Dataset ds = flat_corpus(2480, 5429);  // 7909 total
  auto [train, eval] = split_train_eval(ds, 0.8, 42);
  CHECK(train.size() == 6327);
  CHECK(eval.size() == 1582);
  int tb = 0, tm = 0;
  for (std::size_t i = 0; i < train.size(); ++i)
    (*train.audit_true_label(i) == kBenign ? tb : tm)++;
  CHECK(tb == 1984);  // floor(0.8 * 2480)
  CHECK(tm == 4343);  // floor + largest remainder keeps the total exact
  // no sample in both halves
  std::set<std::string> ids;
  for (const Sample& s : train.samples) ids.insert(s.id);
  for (const Sample& s : eval.samples) CHECK(ids.count(s.id) == 0);
}

TEST_CASE("split of the desk-scale corpus gives 500 train and 125 eval") {
  Dataset ds = flat_corpus(313, 312);
  auto [train, eval] = split_train_eval(ds, 0.8, 42);
  CHECK(train.size() == 500);
  CHECK(eval.size() == 125);
  int eb = 0, em = 0;
  for (std::size_t i = 0; i < eval.size(); ++i)
    (*eval.audit_true_label(i) == kBenign ? eb : em)++;
  CHECK(eb + em == 125);
  CHECK(std::abs(eb - em) <= 1);  // stratification within one sample
}

TEST_CASE("the seven training sets cover the documented label budgets") {
  const auto& specs = training_set_specs();
  REQUIRE(specs.size() == 7);
  CHECK(specs[0].name == "TS1");
  CHECK(specs[0].labeled_fraction == 1.f);
  CHECK(specs[0].setting == Setting::supervised);
  const float fractions[] = {1.f, 0.5f, 0.4f, 0.3f, 0.2f, 0.1f, 0.f};
  for (int i = 0; i < 7; ++i)
    CHECK(specs[i].labeled_fraction == doctest::Approx(fractions[i]));
  for (int i = 1; i < 6; ++i)
    CHECK(specs[i].setting == Setting::semi_supervised);
  CHECK(specs[6].setting == Setting::self_supervised);
  CHECK_THROWS_AS(training_set_spec("TS8"), ConfigError);
}

TEST_CASE("curation strips the documented counts from a 6327-sample split") {
  Dataset ds = flat_corpus(2480, 5429);
  auto [train, eval] = split_train_eval(ds, 0.8, 42);
  const int expected_unlabeled[] = {0, 3164, 3796, 4429, 5062, 5694, 6327};
  const auto& specs = training_set_specs();
  for (int i = 0; i < 7; ++i) {
    CuratedSet cur = curate_training_set(train, specs[i], 42);
    CHECK(static_cast<int>(cur.unlabeled.size()) == expected_unlabeled[i]);
    CHECK(cur.labeled.size() + cur.unlabeled.size() == train.size());
    CHECK(cur.ledger.before_total() ==
          static_cast<int>(cur.unlabeled.size()));
    CHECK(cur.ledger.labeled_total() == static_cast<int>(cur.labeled.size()));
    for (const Sample& s : cur.unlabeled.samples) {
      CHECK(!s.assigned_label.has_value());
      CHECK(s.label_source == LabelSource::none);
      CHECK(s.has_truth());  // hidden class kept for scoring
    }
    for (const Sample& s : cur.labeled.samples)
      CHECK(s.label_source == LabelSource::ground_truth);
  }
}

TEST_CASE("curation is deterministic per seed and varies across seeds") {
  Dataset ds = flat_corpus(40, 40);
  auto [train, eval] = split_train_eval(ds, 0.8, 1);
  const TrainingSetSpec& spec = training_set_spec("TS4");
  CuratedSet a = curate_training_set(train, spec, 5);
  CuratedSet b = curate_training_set(train, spec, 5);
  CuratedSet c = curate_training_set(train, spec, 6);
  auto ids = [](const Dataset& d) {
    std::vector<std::string> v;
    for (const Sample& s : d.samples) v.push_back(s.id);
    return v;
  };
  CHECK(ids(a.labeled) == ids(b.labeled));
  CHECK(ids(a.labeled) != ids(c.labeled));
}

TEST_CASE("curated subsets report into the parent tripwire") {
  Dataset ds = flat_corpus(10, 10);
  auto [train, eval] = split_train_eval(ds, 0.8, 3);
  CuratedSet cur = curate_training_set(train, training_set_spec("TS4"), 3);
  (void)cur.unlabeled.true_label(0);
  CHECK(ds.tripwire_count() == 1);
}

TEST_CASE("merging pseudo-labels preserves totals and records classes") {
  Dataset ds = flat_corpus(20, 20);
  auto [train, eval] = split_train_eval(ds, 0.8, 4);
  CuratedSet cur = curate_training_set(train, training_set_spec("TS4"), 4);
  Dataset relabeled = cur.unlabeled;
  for (Sample& s : relabeled.samples) {
    s.assigned_label = kMalignant;
    s.label_source = LabelSource::pseudo;
  }
  CurationLedger ledger = cur.ledger;
  Dataset merged = merge_pseudo(cur.labeled, relabeled, &ledger);
  CHECK(merged.size() == train.size());
  CHECK(ledger.has_predictions);
  CHECK(ledger.totals_preserved());
  CHECK(ledger.predicted_after_malignant ==
        static_cast<int>(relabeled.size()));
  // a sample without an assigned label cannot be merged
  relabeled.samples[0].assigned_label.reset();
  CHECK_THROWS_AS(merge_pseudo(cur.labeled, relabeled, nullptr), UsageError);
}

// ---------------------------------------------------------------- augmentation

TEST_CASE("identity augmentation is bit exact") {
  RngStream rng(29);
  Tensor img({9, 7, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  Tensor out = affine_resample(img, 0.0, 0.0, false, false, 9, 7);
  REQUIRE(out.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == img[i]);
}

TEST_CASE("quarter-turn rotation permutes pixels exactly") {
  // odd square so the center is a pixel; 90 degrees maps (x, y) to (-y, x)
  Tensor img({5, 5, 1});
  RngStream rng(31);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  Tensor out = affine_resample(img, 90.0, 0.0, false, false, 5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      // inverse mapping: source = rotate(dest - center, -90) + center
      const int sx = (y - 2) + 2;
      const int sy = -(x - 2) + 2;
      CHECK(out.at(y, x, 0) == doctest::Approx(img.at(sy, sx, 0)).epsilon(1e-5));
    }
}

TEST_CASE("flips mirror the image") {
  // values stay inside [0,1] so the output clamp is a no-op
  Tensor img({2, 3, 1}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f});
  Tensor h = affine_resample(img, 0.0, 0.0, true, false, 2, 3);
  CHECK(h.at(0, 0, 0) == doctest::Approx(0.3f));
  CHECK(h.at(0, 2, 0) == doctest::Approx(0.1f));
  CHECK(h.at(1, 1, 0) == doctest::Approx(0.5f));
  Tensor v = affine_resample(img, 0.0, 0.0, false, true, 2, 3);
  CHECK(v.at(0, 0, 0) == doctest::Approx(0.4f));
  CHECK(v.at(1, 0, 0) == doctest::Approx(0.1f));
}

TEST_CASE("one stream yields one transform, independent of pixel content") {
  // the transform is content-blind and resampling is linear in the pixels,
  // so T(a) + T(b) must equal T(a + b) when the same stream drives all three
  RngStream rng(37);
  Tensor a({8, 8, 1}), b({8, 8, 1}), sum({8, 8, 1});
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(0.f, 0.4f);
    b[i] = rng.uniform(0.f, 0.4f);
    sum[i] = a[i] + b[i];
  }
  AugmentPolicy policy;
  policy.target_h = policy.target_w = 8;
  Tensor ta = augment_pixels(a, policy, RngStream(43));
  Tensor tb = augment_pixels(b, policy, RngStream(43));
  Tensor tsum = augment_pixels(sum, policy, RngStream(43));
  Tensor again = augment_pixels(a, policy, RngStream(43));
  CHECK(ta.values() == again.values());
  for (std::size_t i = 0; i < ta.size(); ++i)
    CHECK(ta[i] + tb[i] == doctest::Approx(tsum[i]).epsilon(1e-4));
}

TEST_CASE("augmented samples keep labels and stay inside the value range") {
  Dataset ds = generate_synthetic_corpus(4, 77, {16, 0.9f, 0.35f});
  AugmentPolicy policy;
  policy.target_h = policy.target_w = 16;
  for (const Sample& s : ds.samples) {
    Sample out = augment(s, policy, RngStream(99).derive(s.id));
    CHECK(out.id == s.id);
    CHECK(out.assigned_label == s.assigned_label);
    CHECK(out.pixels.shape() == s.pixels.shape());
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      CHECK(out.pixels[i] >= 0.f);
      CHECK(out.pixels[i] <= 1.f);
    }
  }
}

// ---------------------------------------------------------------- synthetic corpus

TEST_CASE("synthetic corpus alternates classes and is seed deterministic") {
  SynthParams params{16, 0.9f, 0.35f};
  Dataset a = generate_synthetic_corpus(10, 5, params);
  Dataset b = generate_synthetic_corpus(10, 5, params);
  Dataset c = generate_synthetic_corpus(10, 6, params);
  REQUIRE(a.size() == 10);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(*a.audit_true_label(i) == static_cast<int>(i % 2));
    CHECK(a.samples[i].label_source == LabelSource::ground_truth);
    CHECK(a.samples[i].pixels.shape() == std::vector<int>{16, 16, 3});
    CHECK(a.samples[i].pixels.values() == b.samples[i].pixels.values());
    any_diff = any_diff || a.samples[i].pixels.values() !=
                               c.samples[i].pixels.values();
    for (float v : a.samples[i].pixels.values()) {
      CHECK(v >= 0.f);
      CHECK(v <= 1.f);
    }
  }
  CHECK(any_diff);
}

TEST_CASE("written corpus loads back identically") {
  const fs::path dir = temp_dir("corpus");
  fs::remove_all(dir);
  Dataset ds = generate_synthetic_corpus(8, 3, {16, 0.9f, 0.35f});
  const std::string manifest = write_corpus(ds, dir.string(), "lfim");
  Dataset back = load_corpus(manifest);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(*back.audit_true_label(i) == *ds.audit_true_label(i));
    CHECK(back.samples[i].pixels.values() == ds.samples[i].pixels.values());
  }
}
