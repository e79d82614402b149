#include "labelforge/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "labelforge/errors.hpp"
#include "labelforge/image.hpp"

namespace labelforge {

int class_from_token(const std::string& token) {
  if (token == "B") return kBenign;
  if (token == "M") return kMalignant;
  throw IngestError("unknown label token '" + token + "'");
}

const char* class_token(int cls) {
  if (cls == kBenign) return "B";
  if (cls == kMalignant) return "M";
  throw InputError("class index out of range");
}

const char* label_source_token(LabelSource s) {
  switch (s) {
    case LabelSource::none: return "none";
    case LabelSource::ground_truth: return "ground-truth";
    case LabelSource::pseudo: return "pseudo";
    case LabelSource::cluster: return "cluster";
  }
  throw InputError("bad label source");
}

LabelSource label_source_from_token(const std::string& token) {
  if (token == "none") return LabelSource::none;
  if (token == "ground-truth") return LabelSource::ground_truth;
  if (token == "pseudo") return LabelSource::pseudo;
  if (token == "cluster") return LabelSource::cluster;
  throw IngestError("unknown label_source token '" + token + "'");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.tripwire_ = tripwire_;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw UsageError("subset index out of range");
    out.samples.push_back(samples[i]);
  }
  return out;
}

int Dataset::true_label(std::size_t i) const {
  const Sample& s = samples[i];
  if (s.label_source != LabelSource::ground_truth)
    tripwire_->fetch_add(1);  // firewall breach, recorded not blocked
  if (!s.truth_.has_value())
    throw UsageError("sample " + s.id + " has no ground-truth class");
  return *s.truth_;
}

void Dataset::rebind_tripwire() {
  tripwire_ = std::make_shared<std::atomic<std::uint64_t>>(0);
}

int Dataset::count_assigned(int cls) const {
  int n = 0;
  for (const Sample& s : samples)
    if (s.assigned_label && *s.assigned_label == cls) ++n;
  return n;
}

bool Dataset::all_labeled() const {
  for (const Sample& s : samples)
    if (!s.assigned_label) return false;
  return true;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct ManifestRow {
  std::string id, path, label, source;
  int line_no;
};

std::vector<ManifestRow> parse_manifest(const std::string& manifest_path,
                                        bool* has_source_col) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path);
  std::string line;
  if (!std::getline(is, line))
    throw IngestError("empty corpus: " + manifest_path + " has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_row(line);
  bool with_source = false;
  if (header.size() == 4 && header[3] == "label_source")
    with_source = true;
  else if (header.size() != 3 || header[0] != "id" || header[1] != "path" ||
           header[2] != "label")
    throw IngestError("manifest header must be id,path,label[,label_source]");
  if (has_source_col) *has_source_col = with_source;

  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_row(line);
    if (fields.size() != header.size())
      throw IngestError("manifest row " + std::to_string(line_no) +
                        " has wrong number of fields");
    ManifestRow r;
    r.id = fields[0];
    r.path = fields[1];
    r.label = fields[2];
    r.source = with_source ? fields[3] : "";
    r.line_no = line_no;
    rows.push_back(std::move(r));
  }
  if (rows.empty())
    throw IngestError("empty corpus: " + manifest_path + " has no rows");
  return rows;
}

std::string resolve(const std::string& manifest_path, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return rel;
  return (std::filesystem::path(manifest_path).parent_path() / p).string();
}

Dataset load_impl(const std::string& manifest_path, bool strict_labels) {
  bool with_source = false;
  auto rows = parse_manifest(manifest_path, &with_source);
  Dataset ds;
  std::unordered_set<std::string> seen;
  for (const ManifestRow& r : rows) {
    if (!seen.insert(r.id).second)
      throw IngestError("duplicate id '" + r.id + "' at manifest row " +
                        std::to_string(r.line_no));
    Sample s;
    s.id = r.id;
    std::string full = resolve(manifest_path, r.path);
    if (!std::filesystem::exists(full))
      throw IngestError("missing image file '" + r.path + "' at manifest row " +
                        std::to_string(r.line_no));
    try {
      s.pixels = read_image(full);
    } catch (const Error& e) {
      throw IngestError("unreadable image at manifest row " +
                        std::to_string(r.line_no) + ": " + e.what());
    }
    if (r.label.empty()) {
      if (strict_labels)
        throw IngestError("missing label at manifest row " +
                          std::to_string(r.line_no));
    } else {
      int cls;
      try {
        cls = class_from_token(r.label);
      } catch (const IngestError&) {
        throw IngestError("unknown label token '" + r.label +
                          "' at manifest row " + std::to_string(r.line_no));
      }
      LabelSource src = LabelSource::ground_truth;
      if (with_source && !r.source.empty())
        src = label_source_from_token(r.source);
      if (src == LabelSource::ground_truth) {
        s.set_ground_truth(cls);
      } else {
        s.assigned_label = cls;
        s.label_source = src;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

Dataset load_corpus(const std::string& manifest_path) {
  return load_impl(manifest_path, true);
}

Dataset load_manifest(const std::string& manifest_path) {
  return load_impl(manifest_path, false);
}

void save_manifest(const Dataset& ds, const std::string& manifest_path,
                   const std::vector<std::string>& image_paths,
                   bool with_source) {
  if (image_paths.size() != ds.size())
    throw UsageError("one image path per sample required");
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) throw IoError("cannot open manifest for writing: " + manifest_path);
  os << "id,path,label" << (with_source ? ",label_source" : "") << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[i];
    os << s.id << ',' << image_paths[i] << ',';
    if (s.assigned_label) os << class_token(*s.assigned_label);
    if (with_source) os << ',' << label_source_token(s.label_source);
    os << "\n";
  }
  if (!os) throw IoError("manifest write failed: " + manifest_path);
}

Tensor to_chw(const Tensor& hwc) {
  if (hwc.rank() != 3) throw InputError("image tensor must be rank-3 HWC");
  int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  Tensor out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        out[(static_cast<std::size_t>(k) * h + y) * w + x] =
            hwc[(static_cast<std::size_t>(y) * w + x) * c + k];
  return out;
}

Tensor make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("cannot build an empty batch");
  const Tensor& first = ds.samples[indices[0]].pixels;
  if (first.rank() != 3) throw InputError("sample pixels must be rank-3 HWC");
  int h = first.dim(0), w = first.dim(1), c = first.dim(2);
  Tensor out({static_cast<int>(indices.size()), c, h, w});
  std::size_t plane = static_cast<std::size_t>(c) * h * w;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const Tensor& px = ds.samples[indices[n]].pixels;
    if (px.rank() != 3 || px.dim(0) != h || px.dim(1) != w || px.dim(2) != c)
      throw InputError("batch samples must share one image shape");
    Tensor chw = to_chw(px);
    std::copy(chw.data(), chw.data() + plane, out.data() + n * plane);
  }
  return out;
}

}  // namespace labelforge
