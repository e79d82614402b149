#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "labelforge/errors.hpp"
#include "labelforge/experiment.hpp"

namespace labelforge {

namespace {

namespace fs = std::filesystem;

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string fmt2(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

nlohmann::json num_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json ttest_to_json(const TTestResult& r) {
  return {{"t", r.t}, {"df", r.df}, {"p", r.p}, {"infinite_t", r.infinite_t}};
}

std::string cell_losses_file(const CellResult& c) {
  return "losses/" + c.training_set + "_" + c.preset + ".csv";
}

std::string prep_losses_file(const SetResult& s) {
  if (s.prep_losses.empty()) return "";
  return "losses/" + s.name +
         (s.setting == Setting::semi_supervised ? "_teacher.csv"
                                                : "_pretrain.csv");
}

// Display-unit summary. Row value = mean over that setting's training sets
// at two decimals; the Mean column aggregates the row the same way the
// overall-performance table does.
struct SummaryData {
  std::vector<std::string> settings;  // present ones, fixed order
  std::map<std::string, std::vector<double>> rows;  // percent or NaN
  std::map<std::string, double> means;              // NaN when incomplete
};

SummaryData build_summary(const ExperimentReport& rep) {
  struct Slot {
    std::vector<double> percents;
    bool complete = true;
  };
  std::map<std::string, std::map<std::string, Slot>> acc;
  for (const CellResult& c : rep.cells) {
    Slot& s = acc[c.setting][c.preset];
    if (c.ok)
      s.percents.push_back(round2(c.metrics.accuracy * 100.0));
    else
      s.complete = false;
  }

  const double nan = std::nan("");
  SummaryData out;
  for (const char* name : {"SL", "Semi-SL", "Self-SL"}) {
    auto it = acc.find(name);
    if (it == acc.end()) continue;
    out.settings.push_back(name);
    std::vector<double> row;
    bool full = true;
    for (const std::string& p : rep.config.presets) {
      auto pit = it->second.find(p);
      if (pit == it->second.end() || !pit->second.complete ||
          pit->second.percents.empty()) {
        row.push_back(nan);
        full = false;
      } else {
        row.push_back(mean_accuracy(pit->second.percents));
      }
    }
    out.means[name] = full && !row.empty() ? mean_accuracy(row) : nan;
    out.rows[name] = std::move(row);
  }
  return out;
}

nlohmann::json summary_to_json(const ExperimentReport& rep) {
  const SummaryData s = build_summary(rep);
  nlohmann::json rows = nlohmann::json::array();
  for (const std::string& name : s.settings) {
    nlohmann::json vals = nlohmann::json::array();
    for (double v : s.rows.at(name)) vals.push_back(num_or_null(v));
    rows.push_back({{"setting", name},
                    {"accuracy_percent", vals},
                    {"mean", num_or_null(s.means.at(name))}});
  }

  nlohmann::json tests = nlohmann::json::array();
  const std::pair<const char*, const char*> pairs[] = {
      {"SL", "Semi-SL"}, {"SL", "Self-SL"}, {"Semi-SL", "Self-SL"}};
  for (const auto& pr : pairs) {
    const bool have_a = s.rows.count(pr.first) != 0;
    const bool have_b = s.rows.count(pr.second) != 0;
    if (!have_a || !have_b) continue;
    nlohmann::json entry = {{"a", pr.first}, {"b", pr.second}};
    const std::vector<double>& ra = s.rows.at(pr.first);
    const std::vector<double>& rb = s.rows.at(pr.second);
    auto finite = [](const std::vector<double>& v) {
      for (double x : v)
        if (!std::isfinite(x)) return false;
      return !v.empty();
    };
    if (ra.size() < 2) {
      entry["skipped"] = "needs at least two backbone presets";
    } else if (!finite(ra) || !finite(rb)) {
      entry["skipped"] = "incomplete accuracy vectors";
    } else {
      entry["test"] = ttest_to_json(paired_t_test(ra, rb));
    }
    tests.push_back(entry);
  }

  nlohmann::json j;
  j["presets"] = rep.config.presets;
  j["rows"] = rows;
  j["t_tests"] = tests;
  return j;
}

}  // namespace

nlohmann::json report_to_json(const ExperimentReport& rep) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["provenance"] = {{"artifact_version", kArtifactVersion},
                     {"config", config_to_json(rep.config)},
                     {"config_digest", config_digest(rep.config)},
                     {"seed", rep.config.seed}};
  j["corpus"] = {{"source", rep.config.corpus.source},
                 {"total", rep.corpus.total},
                 {"train", rep.corpus.train},
                 {"eval", rep.corpus.eval},
                 {"train_benign", rep.corpus.train_benign},
                 {"train_malignant", rep.corpus.train_malignant},
                 {"eval_benign", rep.corpus.eval_benign},
                 {"eval_malignant", rep.corpus.eval_malignant}};

  nlohmann::json sets = nlohmann::json::array();
  for (const SetResult& s : rep.sets) {
    sets.push_back(
        {{"name", s.name},
         {"setting", setting_name(s.setting)},
         {"labeled_fraction", s.labeled_fraction},
         {"ledger",
          {{"labeled_benign", s.ledger.labeled_benign},
           {"labeled_malignant", s.ledger.labeled_malignant},
           {"unlabeled_before_benign", s.ledger.unlabeled_before_benign},
           {"unlabeled_before_malignant", s.ledger.unlabeled_before_malignant},
           {"predicted_after_benign", s.ledger.predicted_after_benign},
           {"predicted_after_malignant", s.ledger.predicted_after_malignant},
           {"has_predictions", s.ledger.has_predictions},
           {"totals_preserved", s.ledger.totals_preserved()}}},
         {"prep_ok", s.prep_ok},
         {"prep_error", s.prep_error},
         {"prep_losses_file", prep_losses_file(s)},
         {"prep_tripwire", s.prep_tripwire}});
  }
  j["sets"] = sets;

  nlohmann::json cells = nlohmann::json::array();
  for (const CellResult& c : rep.cells) {
    nlohmann::json cj = {{"id", c.id()},
                         {"training_set", c.training_set},
                         {"preset", c.preset},
                         {"setting", c.setting},
                         {"ok", c.ok},
                         {"error", c.error}};
    if (c.ok) {
      cj["accuracy"] = c.metrics.accuracy;
      cj["precision"] = c.metrics.precision;
      cj["recall"] = c.metrics.recall;
      cj["f1"] = c.metrics.f1;
      cj["degenerate"] = {{"precision", c.metrics.precision_degenerate},
                          {"recall", c.metrics.recall_degenerate},
                          {"f1", c.metrics.f1_degenerate}};
      cj["confusion"] = {{"t_pos", c.counts.t_pos},
                         {"t_neg", c.counts.t_neg},
                         {"f_pos", c.counts.f_pos},
                         {"f_neg", c.counts.f_neg}};
      cj["labels"] = {{"ground_truth", c.labels_ground_truth},
                      {"pseudo", c.labels_pseudo},
                      {"cluster", c.labels_cluster}};
      cj["train_size"] = c.train_size;
      cj["parameters"] = c.parameters;
      cj["tripwire"] = c.tripwire;
      cj["losses_file"] = cell_losses_file(c);
    }
    cells.push_back(cj);
  }
  j["cells"] = cells;
  j["summary"] = summary_to_json(rep);
  return j;
}

namespace {

void write_text(const std::string& path, const std::string& text,
                std::vector<std::string>* written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
  if (written) written->push_back(path);
}

}  // namespace

std::vector<std::string> emit_report(const ExperimentReport& rep,
                                     const std::string& out_dir,
                                     const std::vector<std::string>& formats) {
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "losses", ec);
  if (ec)
    throw IoError("cannot create output directory '" + out_dir +
                  "': " + ec.message());
  std::vector<std::string> written;
  auto under = [&](const std::string& rel) {
    return (fs::path(out_dir) / rel).string();
  };
  auto has = [&](const char* f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  };

  // Loss histories are referenced from the report, so they are written
  // regardless of the chosen formats.
  for (const SetResult& s : rep.sets) {
    const std::string rel = prep_losses_file(s);
    if (rel.empty()) continue;
    std::string text = s.prep_alphas.empty() ? "epoch,loss\n"
                                             : "epoch,loss,alpha\n";
    for (std::size_t e = 0; e < s.prep_losses.size(); ++e) {
      text += std::to_string(e) + "," + fmt_loss(s.prep_losses[e]);
      if (!s.prep_alphas.empty())
        text += "," + fmt_loss(e < s.prep_alphas.size() ? s.prep_alphas[e] : 0);
      text += "\n";
    }
    write_text(under(rel), text, &written);
  }
  for (const CellResult& c : rep.cells) {
    if (!c.ok) continue;
    std::string text = "epoch,loss\n";
    for (std::size_t e = 0; e < c.losses.size(); ++e)
      text += std::to_string(e) + "," + fmt_loss(c.losses[e]) + "\n";
    write_text(under(cell_losses_file(c)), text, &written);
  }

  if (has("json"))
    write_text(under("report.json"), report_to_json(rep).dump(2) + "\n",
               &written);

  std::map<std::string, const CellResult*> by_id;
  for (const CellResult& c : rep.cells) by_id[c.id()] = &c;

  if (has("csv")) {
    std::string text = "backbone";
    for (const std::string& ts : rep.config.training_sets)
      text += "," + ts + "_Ac," + ts + "_Rc";
    text += "\n";
    for (const std::string& p : rep.config.presets) {
      text += p;
      for (const std::string& ts : rep.config.training_sets) {
        auto it = by_id.find(ts + "/" + p);
        if (it != by_id.end() && it->second->ok) {
          text += "," + fmt2(it->second->metrics.accuracy * 100.0);
          text += "," + fmt2(it->second->metrics.recall * 100.0);
        } else {
          text += ",NA,NA";
        }
      }
      text += "\n";
    }
    write_text(under("results.csv"), text, &written);

    const SummaryData s = build_summary(rep);
    std::string sum = "setting";
    for (const std::string& p : rep.config.presets) sum += "," + p;
    sum += ",mean\n";
    for (const std::string& name : s.settings) {
      sum += name;
      for (double v : s.rows.at(name)) sum += "," + fmt2(v);
      sum += "," + fmt2(s.means.at(name)) + "\n";
    }
    write_text(under("summary.csv"), sum, &written);
  }

  if (has("plotdata")) {
    std::string text = "training_set,backbone,accuracy\n";
    for (const CellResult& c : rep.cells) {
      if (!c.ok) continue;
      text += c.training_set + "," + c.preset + "," +
              fmt2(c.metrics.accuracy * 100.0) + "\n";
    }
    write_text(under("plotdata.csv"), text, &written);
  }

  // Wall-clock and CPU accounting is intentionally kept out of report.json
  // (which must be byte-stable); it lives in this sidecar instead.
  nlohmann::json t;
  t["threads"] = rep.threads_used;
  t["wall_seconds"] = rep.wall_seconds;
  double total = 0;
  nlohmann::json prep = nlohmann::json::object();
  for (const SetResult& s : rep.sets) {
    prep[s.name] = s.prep_cpu_seconds;
    total += s.prep_cpu_seconds;
  }
  nlohmann::json cellj = nlohmann::json::object();
  for (const CellResult& c : rep.cells) {
    cellj[c.id()] = c.cpu_seconds;
    total += c.cpu_seconds;
  }
  t["prep_cpu_seconds"] = prep;
  t["cell_cpu_seconds"] = cellj;
  t["total_cpu_seconds"] = total;
  write_text(under("timings.json"), t.dump(2) + "\n", &written);

  return written;
}

namespace {

struct CellView {
  double accuracy;
  std::string setting;
};

std::map<std::string, CellView> ok_cells(const nlohmann::json& report,
                                         const char* which) {
  if (!report.is_object() || !report.contains("cells") ||
      !report["cells"].is_array())
    throw FormatError(std::string("report ") + which +
                      " has no cells array; not an experiment report");
  if (report.value("schema_version", -1) != kReportSchemaVersion)
    throw FormatError(std::string("report ") + which +
                      " has an unsupported schema_version");
  std::map<std::string, CellView> out;
  for (const nlohmann::json& c : report["cells"]) {
    if (!c.value("ok", false)) continue;
    out[c.value("id", "")] = {c.value("accuracy", 0.0),
                              c.value("setting", "")};
  }
  return out;
}

}  // namespace

nlohmann::json compare_reports(const nlohmann::json& a,
                               const nlohmann::json& b) {
  const auto ca = ok_cells(a, "A");
  const auto cb = ok_cells(b, "B");

  std::vector<double> va, vb;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      by_setting;
  for (const auto& [id, cell] : ca) {
    auto it = cb.find(id);
    if (it == cb.end()) continue;
    va.push_back(cell.accuracy);
    vb.push_back(it->second.accuracy);
    auto& grp = by_setting[cell.setting];
    grp.first.push_back(cell.accuracy);
    grp.second.push_back(it->second.accuracy);
  }
  if (va.size() < 2)
    throw UsageError(
        "comparison needs at least two successful cells shared by both "
        "reports");

  nlohmann::json out;
  out["schema_version"] = kReportSchemaVersion;
  out["cells_compared"] = va.size();
  out["overall"] = ttest_to_json(paired_t_test(va, vb));
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [setting, grp] : by_setting) {
    if (grp.first.size() < 2) continue;
    per[setting] = ttest_to_json(paired_t_test(grp.first, grp.second));
  }
  out["per_setting"] = per;
  auto percents = [](const std::vector<double>& v) {
    std::vector<double> p;
    p.reserve(v.size());
    for (double x : v) p.push_back(round2(x * 100.0));
    return p;
  };
  out["mean_accuracy_percent"] = {{"a", mean_accuracy(percents(va))},
                                  {"b", mean_accuracy(percents(vb))}};
  return out;
}

}  // namespace labelforge
