#include "firediff/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "firediff/dataset.hpp"
#include "firediff/error.hpp"
#include "firediff/metrics.hpp"
#include "firediff/morphology.hpp"
#include "firediff/parallel.hpp"
#include "firediff/pipeline.hpp"

namespace firediff::eval {

using nlohmann::json;

namespace {

struct Acc {
  double sum = 0.0;
  long long samples = 0;
  long long degenerate = 0;
  void add(double v) {
    sum += v;
    ++samples;
  }
};

struct ClipEval {
  std::string id;
  std::map<std::string, Acc> metrics;
  std::vector<double> iou_by_horizon;
  bool has_infrared = false;
  std::vector<double> pred_features;
  std::vector<double> gt_features;
};

std::string tol_key(const char* base, int e) { return std::string(base) + "_e" + std::to_string(e); }

ClipEval evaluate_clip(const std::filesystem::path& dataset_dir, const data::ClipEntry& entry,
                       const std::filesystem::path& result_dir, const EvalOptions& o) {
  ClipEval c;
  c.id = entry.id;
  const auto stored = pipeline::read_result(result_dir);
  const auto clip = data::load_clip(dataset_dir, entry);
  const auto targets = stored.sidecar["target_frames"].get<std::vector<int>>();
  if (targets.size() != stored.masks.size()) {
    throw DataError("result " + entry.id + ": " + std::to_string(stored.masks.size()) + " masks for " +
                    std::to_string(targets.size()) + " target frames");
  }
  if (stored.infrared && stored.infrared->length() != static_cast<int>(targets.size())) {
    throw DataError("result " + entry.id + ": infrared frame count differs from target count");
  }
  std::vector<BinaryMask> gt_masks;
  ClipTensor gt_ir;
  gt_ir.frame_interval = stored.infrared ? stored.infrared->frame_interval : 1.0;
  for (int f : targets) {
    if (f < 0 || f >= clip.entry.frames) {
      throw DataError("result " + entry.id + ": target frame " + std::to_string(f) + " outside the clip");
    }
    gt_masks.push_back(clip.masks[static_cast<std::size_t>(f)]);
    gt_ir.frames.push_back(clip.infrared.frames[static_cast<std::size_t>(f)]);
  }
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (stored.masks[k].width() != gt_masks[k].width() || stored.masks[k].height() != gt_masks[k].height()) {
      throw DataError("result " + entry.id + ": mask size differs from the dataset");
    }
  }

  auto& m = c.metrics;
  c.has_infrared = stored.infrared.has_value();
  if (c.has_infrared) {
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto& p = stored.infrared->frames[k];
      const auto& g = gt_ir.frames[k];
      const auto ps = metrics::psnr(p, g);
      m["psnr"].add(std::min(ps.db, metrics::kPsnrCap));
      if (ps.saturated) ++m["psnr"].degenerate;
      m["ssim"].add(metrics::ssim(p, g));
      m["perceptual_proxy"].add(metrics::perceptual_proxy(p, g));
    }
    if (targets.size() >= 2) {
      c.pred_features = metrics::clip_features(*stored.infrared);
      c.gt_features = metrics::clip_features(gt_ir);
    }
  }
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto s = metrics::f1_iou_mse(stored.masks[k], gt_masks[k]);
    for (const auto& [name, v] : {std::pair{"f1", s.f1}, {"iou", s.iou}, {"mse", s.mse},
                                  {"precision", s.precision}, {"recall", s.recall}}) {
      m[name].add(v);
      if (s.degenerate) ++m[name].degenerate;
    }
    c.iou_by_horizon.push_back(s.iou);
    if (gt_masks[k].any()) {
      std::vector<double> scores(gt_masks[k].pixel_count());
      for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = c.has_infrared ? stored.infrared->frames[k].values()[i] : (stored.masks[k].bits()[i] ? 1.0 : 0.0);
      }
      m["auprc"].add(metrics::auprc(scores, gt_masks[k]));
    } else {
      ++m["auprc"].degenerate;
    }
    const bool gt_line = boundary(gt_masks[k]).any();
    for (int e : o.tolerances) {
      if (!gt_line) {
        ++m[tol_key("line_accuracy", e)].degenerate;
        ++m[tol_key("line_symmetric", e)].degenerate;
        continue;
      }
      const auto la = metrics::fire_line_accuracy(stored.masks[k], gt_masks[k], e);
      m[tol_key("line_accuracy", e)].add(la.accuracy);
      m[tol_key("line_symmetric", e)].add(la.symmetric);
    }
  }
  const auto gt_points = metrics::fire_points(gt_masks);
  const auto pred_points = metrics::fire_points(stored.masks);
  for (int e : o.tolerances) {
    if (gt_points.empty()) {
      ++m[tol_key("point_accuracy", e)].degenerate;
      continue;
    }
    m[tol_key("point_accuracy", e)].add(metrics::fire_point_accuracy(pred_points, gt_points, e));
  }
  return c;
}

json summary(const std::vector<double>& v, long long degenerate) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x;
  if (!v.empty()) mean /= n;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return {{"mean", v.empty() ? json(nullptr) : json(mean)},
          {"std", v.empty() ? json(nullptr) : json(sd)},
          {"n", v.size()},
          {"degenerate", degenerate}};
}

const std::vector<std::string>& headline() {
  static const std::vector<std::string> names{"psnr", "ssim", "perceptual_proxy", "fvd_proxy",
                                              "auprc", "f1", "iou", "mse"};
  return names;
}

std::string fmt(const json& v, int precision = 4) {
  if (v.is_null()) return "";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v.get<double>();
  return s.str();
}

double aggregate_mean(const json& report, const std::string& name) {
  if (name == "fvd_proxy") return report["fvd_proxy"]["value"].is_null() ? NAN : report["fvd_proxy"]["value"].get<double>();
  const auto& a = report["aggregate"];
  if (!a.contains(name) || a[name]["mean"].is_null()) return NAN;
  return a[name]["mean"].get<double>();
}

std::string cell(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

json evaluate(const std::filesystem::path& dataset_dir, const std::filesystem::path& results_dir,
              const EvalOptions& o) {
  const auto manifest = data::read_manifest(dataset_dir);
  const auto index_path = results_dir / "index.json";
  std::vector<std::string> ids;
  json index;
  if (std::filesystem::exists(index_path)) {
    std::ifstream in(index_path);
    index = json::parse(in, nullptr, false);
    if (index.is_discarded() || !index.contains("clips")) throw DataError("malformed " + index_path.string());
    ids = index["clips"].get<std::vector<std::string>>();
  } else {
    for (const auto& d : std::filesystem::directory_iterator(results_dir)) {
      if (d.is_directory() && std::filesystem::exists(d.path() / "result.json")) ids.push_back(d.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw DataError("no results under " + results_dir.string());
  std::vector<const data::ClipEntry*> entries;
  for (const auto& id : ids) {
    const auto it = std::find_if(manifest.clips.begin(), manifest.clips.end(),
                                 [&](const data::ClipEntry& e) { return e.id == id; });
    if (it == manifest.clips.end()) throw DataError("mismatched clip sets: result clip " + id + " is not in the dataset");
    entries.push_back(&*it);
  }

  std::vector<ClipEval> clips(entries.size());
  parallel_for(entries.size(), o.jobs, [&](std::size_t i) {
    clips[i] = evaluate_clip(dataset_dir, *entries[i], results_dir / entries[i]->id, o);
  });

  std::string predictor = index.value("predictor", "");
  if (predictor.empty()) {
    std::ifstream in(results_dir / ids.front() / "result.json");
    predictor = json::parse(in).value("predictor", "unknown");
  }

  json report;
  report["format"] = "firediff-metrics";
  report["version"] = 1;
  report["predictor"] = predictor;
  report["dataset_config_hash"] = manifest.config_hash;
  report["clip_count"] = clips.size();
  report["tolerances"] = o.tolerances;
  report["labels"] = {
      {"psnr", "dB, saturated frames counted as 100 dB"},
      {"perceptual_proxy", "proxy: RMS difference of handcrafted multi-scale intensity and gradient features"},
      {"fvd_proxy", "proxy: Frechet distance (formula verbatim) over 12-d handcrafted clip features"},
      {"line_accuracy", "verbatim |P' n G^| / |G^| * 100, G^ = boundary(gt) dilated by e"},
      {"line_symmetric", "supplementary |P' n G^| / |P'| * 100"},
      {"point_accuracy", "fire points are centroids of first-appearance connected components"},
      {"std", "sample standard deviation over clips"}};

  std::map<std::string, std::vector<double>> per_metric;
  std::map<std::string, long long> degenerate;
  json per_clip = json::array();
  std::size_t horizon = 0;
  for (const auto& c : clips) {
    json jm = json::object();
    for (const auto& [name, a] : c.metrics) {
      const json value = a.samples ? json(a.sum / static_cast<double>(a.samples)) : json(nullptr);
      jm[name] = {{"value", value}, {"samples", a.samples}, {"degenerate", a.degenerate}};
      if (a.samples) per_metric[name].push_back(a.sum / static_cast<double>(a.samples));
      degenerate[name] += a.degenerate;
    }
    per_clip.push_back({{"clip_id", c.id}, {"metrics", jm}, {"iou_by_horizon", c.iou_by_horizon}});
    horizon = std::max(horizon, c.iou_by_horizon.size());
  }
  report["per_clip"] = per_clip;
  json agg = json::object();
  for (const auto& [name, d] : degenerate) agg[name] = summary(per_metric[name], d);
  report["aggregate"] = agg;

  json by_h = json::array();
  for (std::size_t k = 0; k < horizon; ++k) {
    std::vector<double> v;
    for (const auto& c : clips) {
      if (k < c.iou_by_horizon.size()) v.push_back(c.iou_by_horizon[k]);
    }
    json s = summary(v, 0);
    s["horizon"] = k + 1;
    by_h.push_back(s);
  }
  report["iou_by_horizon"] = by_h;

  json sweep = json::array();
  for (int e : o.tolerances) {
    const auto mean_of = [&](const char* base) {
      const auto k = tol_key(base, e);
      return agg.contains(k) ? agg[k]["mean"] : json(nullptr);
    };
    sweep.push_back({{"e", e},
                     {"point_accuracy", mean_of("point_accuracy")},
                     {"line_accuracy", mean_of("line_accuracy")},
                     {"line_symmetric", mean_of("line_symmetric")}});
  }
  report["tolerance_sweep"] = sweep;

  std::vector<std::vector<double>> pf, gf;
  for (const auto& c : clips) {
    if (!c.pred_features.empty()) {
      pf.push_back(c.pred_features);
      gf.push_back(c.gt_features);
    }
  }
  if (pf.size() >= 2) {
    const auto fr = metrics::frechet_distance(metrics::gaussian_stats(gf), metrics::gaussian_stats(pf));
    report["fvd_proxy"] = {{"value", fr.distance}, {"regularized", fr.regularized}, {"samples", pf.size()}};
  } else {
    report["fvd_proxy"] = {{"value", nullptr}, {"regularized", false}, {"samples", pf.size()},
                           {"reason", "needs infrared results with >= 2 frames on >= 2 clips"}};
  }
  return report;
}

void require_same_clips(std::span<const json> reports) {
  if (reports.empty()) return;
  const auto ids = [](const json& r) {
    std::set<std::string> s;
    for (const auto& c : r["per_clip"]) s.insert(c["clip_id"].get<std::string>());
    return s;
  };
  const auto first = ids(reports.front());
  for (const auto& r : reports) {
    if (ids(r) != first) {
      throw DataError("mismatched clip sets between predictors " + reports.front()["predictor"].get<std::string>() +
                      " and " + r["predictor"].get<std::string>());
    }
  }
}

std::string comparison_csv(std::span<const json> reports) {
  std::ostringstream s;
  s << "predictor";
  for (const auto& n : headline()) s << ',' << n;
  s << '\n';
  for (const auto& r : reports) {
    s << r["predictor"].get<std::string>();
    for (const auto& n : headline()) s << ',' << cell(aggregate_mean(r, n));
    s << '\n';
  }
  return s.str();
}

std::string tolerance_csv(std::span<const json> reports) {
  std::ostringstream s;
  s << "predictor,e,point_accuracy,line_accuracy,line_symmetric\n";
  for (const auto& r : reports) {
    for (const auto& row : r["tolerance_sweep"]) {
      s << r["predictor"].get<std::string>() << ',' << row["e"].get<int>() << ',' << fmt(row["point_accuracy"], 2) << ','
        << fmt(row["line_accuracy"], 2) << ',' << fmt(row["line_symmetric"], 2) << '\n';
    }
  }
  return s.str();
}

std::string horizon_csv(std::span<const json> reports) {
  std::ostringstream s;
  s << "predictor,horizon,iou_mean,iou_std,n\n";
  for (const auto& r : reports) {
    for (const auto& row : r["iou_by_horizon"]) {
      s << r["predictor"].get<std::string>() << ',' << row["horizon"].get<int>() << ',' << fmt(row["mean"]) << ','
        << fmt(row["std"]) << ',' << row["n"].get<int>() << '\n';
    }
  }
  return s.str();
}

std::string markdown_report(std::span<const json> reports) {
  std::ostringstream s;
  s << "# Forecast evaluation\n\n";
  s << "| predictor |";
  for (const auto& n : headline()) s << ' ' << n << " |";
  s << "\n|---|";
  for (std::size_t i = 0; i < headline().size(); ++i) s << "---|";
  s << '\n';
  for (const auto& r : reports) {
    s << "| " << r["predictor"].get<std::string>() << " |";
    for (const auto& n : headline()) {
      const double v = aggregate_mean(r, n);
      std::string c = cell(v);
      if (n != "fvd_proxy" && !std::isnan(v)) c += " ± " + fmt(r["aggregate"][n]["std"]);
      s << ' ' << (c.empty() ? "n/a" : c) << " |";
    }
    s << '\n';
  }
  s << "\nperceptual_proxy and fvd_proxy use handcrafted features in place of pretrained networks.\n";
  s << "\n## Tolerance sweep\n\n| predictor | e | point % | line % | line (symmetric) % |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    for (const auto& row : r["tolerance_sweep"]) {
      s << "| " << r["predictor"].get<std::string>() << " | " << row["e"].get<int>() << " | "
        << fmt(row["point_accuracy"], 1) << " | " << fmt(row["line_accuracy"], 1) << " | "
        << fmt(row["line_symmetric"], 1) << " |\n";
    }
  }
  s << "\n## IoU by horizon\n\n| predictor |";
  std::size_t h = 0;
  for (const auto& r : reports) h = std::max(h, r["iou_by_horizon"].size());
  for (std::size_t k = 1; k <= h; ++k) s << " h" << k << " |";
  s << "\n|---|";
  for (std::size_t k = 0; k < h; ++k) s << "---|";
  s << '\n';
  for (const auto& r : reports) {
    s << "| " << r["predictor"].get<std::string>() << " |";
    for (const auto& row : r["iou_by_horizon"]) s << ' ' << fmt(row["mean"], 3) << " |";
    s << '\n';
  }
  return s.str();
}

bool is_metrics_report(const json& j, std::string* why) {
  const auto fail = [&](const std::string& m) {
    if (why) *why = m;
    return false;
  };
  if (!j.is_object()) return fail("not an object");
  if (j.value("format", "") != "firediff-metrics") return fail("format is not firediff-metrics");
  for (const char* k : {"version", "predictor", "clip_count", "per_clip", "aggregate", "iou_by_horizon",
                        "tolerance_sweep", "fvd_proxy", "labels"}) {
    if (!j.contains(k)) return fail(std::string("missing key ") + k);
  }
  if (!j["per_clip"].is_array() || j["per_clip"].size() != j["clip_count"].get<std::size_t>()) {
    return fail("per_clip size differs from clip_count");
  }
  for (const char* k : {"f1", "iou", "mse", "auprc"}) {
    if (!j["aggregate"].contains(k)) return fail(std::string("aggregate lacks ") + k);
    for (const char* f : {"mean", "std", "n", "degenerate"}) {
      if (!j["aggregate"][k].contains(f)) return fail(std::string("aggregate.") + k + " lacks " + f);
    }
  }
  return true;
}

}  // namespace firediff::eval
