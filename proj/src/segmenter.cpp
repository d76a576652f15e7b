#include "firediff/segmenter.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "firediff/error.hpp"
#include "firediff/morphology.hpp"

namespace firediff::seg {

void PromptSet::validate(int width, int height) const {
  bool any_positive = false;
  for (const auto& p : points) {
    if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
      throw std::invalid_argument("prompt (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                  ") outside the " + std::to_string(width) + "x" +
                                  std::to_string(height) + " grid");
    }
    any_positive = any_positive || p.positive;
  }
  if (!any_positive) throw std::invalid_argument("prompt set has no positive point");
}

namespace {

std::set<int> labels_under(const ComponentLabels& cl, const PromptSet& prompts, bool positive) {
  std::set<int> out;
  for (const auto& p : prompts.points) {
    if (p.positive != positive) continue;
    const int l = cl.label_at(p.x, p.y);
    if (l > 0) out.insert(l);
  }
  return out;
}

/// Labels selected in `cl` given the previous frame's selected region.
std::set<int> select(const ComponentLabels& cl, const PromptSet& prompts, const ComponentLabels* prev,
                     const std::set<int>& prev_selected) {
  std::set<int> chosen = labels_under(cl, prompts, true);
  if (prev) {
    for (int pl : prev_selected) {
      std::map<int, int> overlap;
      for (const Pixel& px : prev->components[static_cast<std::size_t>(pl - 1)].pixels) {
        const int l = cl.label_at(px.x, px.y);
        if (l > 0) ++overlap[l];
      }
      int best = 0, best_n = 0;
      for (const auto& [l, n] : overlap) {
        if (n > best_n) {
          best = l;
          best_n = n;
        }
      }
      if (best > 0) chosen.insert(best);
    }
  }
  for (int l : labels_under(cl, prompts, false)) chosen.erase(l);
  return chosen;
}

BinaryMask render(const ComponentLabels& cl, const std::set<int>& chosen) {
  BinaryMask m(cl.width, cl.height);
  for (int l : chosen) {
    for (const Pixel& px : cl.components[static_cast<std::size_t>(l - 1)].pixels) m.set(px.x, px.y);
  }
  return m;
}

}  // namespace

SegmentResult segment_clip(const ClipTensor& frames, const PromptSet& prompts,
                           const SegmentConfig& config) {
  frames.validate();
  SegmentResult r;
  const int n = frames.length();
  if (n == 0) return r;
  const int w = frames.width(), h = frames.height();
  prompts.validate(w, h);
  if (prompts.anchor_frame < 0 || prompts.anchor_frame >= n) {
    throw std::invalid_argument("prompt anchor frame " + std::to_string(prompts.anchor_frame) +
                                " outside the clip");
  }

  std::vector<BinaryMask> sup;
  std::vector<ComponentLabels> comps;
  for (const auto& f : frames.frames) {
    sup.push_back(threshold(f, config.threshold));
    comps.push_back(connected_components(sup.back(), Connectivity::Eight));
  }

  const int a = prompts.anchor_frame;
  if (labels_under(comps[static_cast<std::size_t>(a)], prompts, true).empty()) {
    r.degenerate = true;
    r.warnings.push_back("no positive prompt lands on an above-threshold pixel of anchor frame " +
                         std::to_string(a) + "; masks are empty");
    r.masks.assign(static_cast<std::size_t>(n), BinaryMask(w, h));
    return r;
  }

  std::vector<std::set<int>> chosen(static_cast<std::size_t>(n));
  chosen[static_cast<std::size_t>(a)] = select(comps[static_cast<std::size_t>(a)], prompts, nullptr, {});
  for (int k = a + 1; k < n; ++k) {
    chosen[static_cast<std::size_t>(k)] =
        select(comps[static_cast<std::size_t>(k)], prompts, &comps[static_cast<std::size_t>(k - 1)],
               chosen[static_cast<std::size_t>(k - 1)]);
  }
  for (int k = a - 1; k >= 0; --k) {
    chosen[static_cast<std::size_t>(k)] =
        select(comps[static_cast<std::size_t>(k)], prompts, &comps[static_cast<std::size_t>(k + 1)],
               chosen[static_cast<std::size_t>(k + 1)]);
  }

  const StructuringElement se(config.closing_radius);
  for (int k = 0; k < n; ++k) {
    const BinaryMask region = render(comps[static_cast<std::size_t>(k)], chosen[static_cast<std::size_t>(k)]);
    r.masks.push_back(mask_and(close(region, se), sup[static_cast<std::size_t>(k)]));
  }
  return r;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_size(pred, gt, "confusion");
  ConfusionCounts c;
  const auto& p = pred.bits();
  const auto& g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) ++c.tp;
    else if (p[i]) ++c.fp;
    else if (g[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MaskQualityReport mask_quality(const ConfusionCounts& c) {
  MaskQualityReport r;
  auto ratio = [&r](long long num, long long den) {
    if (den == 0) {
      r.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(c.tp + c.tn, c.total());
  r.fire_iou = ratio(c.tp, c.tp + c.fp + c.fn);
  r.background_iou = ratio(c.tn, c.tn + c.fn + c.fp);
  r.miou = (r.fire_iou + r.background_iou) / r.class_count;
  r.commission_error = ratio(c.fp, c.tp + c.fp);
  r.omission_error = ratio(c.fn, c.tp + c.fn);
  return r;
}

MaskQualityReport mask_quality(const BinaryMask& pred, const BinaryMask& gt) {
  return mask_quality(confusion(pred, gt));
}

QcRow qc_region(const std::string& region, std::span<const BinaryMask> pred,
                std::span<const BinaryMask> gt) {
  if (pred.size() != gt.size()) {
    throw DataError("qc: region " + region + " has " + std::to_string(pred.size()) +
                    " predicted and " + std::to_string(gt.size()) + " reference masks");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) c += confusion(pred[i], gt[i]);
  return {region, mask_quality(c), c.total()};
}

QcRow qc_mean(std::span<const QcRow> rows) {
  if (rows.empty()) throw UsageError("qc: empty region set");
  QcRow m;
  m.region = "Mean";
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    m.quality.accuracy += r.quality.accuracy / n;
    m.quality.miou += r.quality.miou / n;
    m.quality.fire_iou += r.quality.fire_iou / n;
    m.quality.background_iou += r.quality.background_iou / n;
    m.quality.commission_error += r.quality.commission_error / n;
    m.quality.omission_error += r.quality.omission_error / n;
    m.quality.degenerate = m.quality.degenerate || r.quality.degenerate;
    m.pixels += r.pixels;
  }
  return m;
}

nlohmann::json to_json(const MaskQualityReport& r) {
  return {{"accuracy", r.accuracy},
          {"miou", r.miou},
          {"fire_iou", r.fire_iou},
          {"background_iou", r.background_iou},
          {"commission_error", r.commission_error},
          {"omission_error", r.omission_error},
          {"class_count", r.class_count},
          {"degenerate", r.degenerate}};
}

nlohmann::json qc_table_json(std::span<const QcRow> rows) {
  nlohmann::json j;
  j["regions"] = nlohmann::json::array();
  for (const auto& r : rows) {
    auto q = to_json(r.quality);
    q["region"] = r.region;
    q["pixels"] = r.pixels;
    j["regions"].push_back(q);
  }
  auto m = to_json(qc_mean(rows).quality);
  m["region"] = "Mean";
  j["mean"] = m;
  return j;
}

std::string qc_table_csv(std::span<const QcRow> rows) {
  std::string out = "region,accuracy,miou,commission_error,omission_error\n";
  char buf[256];
  auto line = [&](const QcRow& r) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f\n", r.region.c_str(), r.quality.accuracy,
                  r.quality.miou, r.quality.commission_error, r.quality.omission_error);
    out += buf;
  };
  for (const auto& r : rows) line(r);
  line(qc_mean(rows));
  return out;
}

}  // namespace firediff::seg
