#include <fstream>

#include "doctest.h"
#include "firediff/error.hpp"
#include "firediff/evaluate.hpp"
#include "firediff/fsrt.hpp"
#include "firediff/metrics.hpp"
#include "firediff/pipeline.hpp"
#include "util.hpp"

using namespace firediff;
using namespace firediff::pipeline;

namespace {

/// Ten 32x32 clips of 24 frames, written once per process.
const std::filesystem::path& small_dataset() {
  static const std::filesystem::path dir = [] {
    const auto d = testutil::temp_dir("pipeline-data");
    data::DatasetConfig cfg;
    cfg.clips = 10;
    cfg.sim.width = cfg.sim.height = 32;
    cfg.frames = 24;
    cfg.warmup_steps = 6;
    std::vector<data::ClipRecord> recs;
    for (int i = 0; i < cfg.clips; ++i) recs.push_back(data::simulate_clip(cfg, i));
    data::write_dataset(recs, cfg, d);
    return d;
  }();
  return dir;
}

data::LoadedClip test_clip(const PredictContext& ctx, int k = 0) {
  const auto entries = ctx.manifest.split(data::Split::Test);
  REQUIRE(static_cast<int>(entries.size()) > k);
  return data::load_clip(ctx.dataset_dir, *entries[static_cast<std::size_t>(k)]);
}

/// Untrained stage-1 model with L = L' = 2 and a short schedule.
std::filesystem::path tiny_model(const std::string& name) {
  const auto dir = testutil::temp_dir(name);
  nn::ModelArtifact m;
  m.arch.frames_in = 2;
  m.arch.frames_out = 2;
  m.arch.levels = 2;
  m.arch.base_width = 4;
  m.arch.groups = 2;
  m.arch.time_dim = 8;
  m.arch.em_hidden = 4;
  m.arch.zero_init_output = false;
  m.arch.mean_head = true;
  m.diffusion_steps = 8;
  const auto r = ddpm::scaled_beta_range(m.diffusion_steps);
  m.beta_min = r.min;
  m.beta_max = r.max;
  m.net = nn::Denoiser<float>(m.arch, 11);
  nn::save_model(dir / "model.fdm", m);
  return dir / "model.fdm";
}

}  // namespace

TEST_CASE("request validation") {
  ForecastRequest r;
  CHECK_NOTHROW(r.validate());
  r.stride = 7;
  CHECK_THROWS_AS(r.validate(), UsageError);
  r.stride = 1;
  r.horizon = 0;
  CHECK_THROWS_AS(r.validate(), UsageError);
  r.horizon = 1;
  r.observed = 0;
  CHECK_THROWS_AS(r.validate(), UsageError);
  CHECK_THROWS_AS(predictor_from_string("ground-truth"), UsageError);
  CHECK(predictor_from_string("persistence") == Predictor::Persistence);
}

TEST_CASE("persistence repeats the last observed frame and its mask") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  const auto clip = test_clip(ctx);
  ForecastRequest req;
  req.observed = 6;
  req.horizon = 5;
  const auto r = persistence_predict(ctx, clip, req);
  REQUIRE(r.masks.size() == 5);
  REQUIRE(r.infrared);
  CHECK(r.observed_frames == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(r.target_frames == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(r.target_times.front() == clip.entry.frame_time(6));
  for (int k = 0; k < 5; ++k) {
    CHECK(r.masks[k] == r.masks[0]);
    CHECK(r.infrared->frames[k].values() == clip.infrared.frames[5].values());
  }
}

TEST_CASE("stride bookkeeping and unavailable strides") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  const auto clip = test_clip(ctx);
  ForecastRequest req;
  req.observed = 2;
  req.horizon = 3;
  req.stride = 30;
  CHECK_THROWS_AS(persistence_predict(ctx, clip, req), DataError);
  req.stride = 1;
  req.start = 4;
  const auto r = persistence_predict(ctx, clip, req);
  CHECK(r.observed_frames == std::vector<int>{4, 5});
  CHECK(r.target_frames == std::vector<int>{6, 7, 8});
  req.start = -1;
  CHECK_THROWS_AS(persistence_predict(ctx, clip, req), UsageError);
}

TEST_CASE("ground-truth self-evaluation is perfect and complement masks score zero IoU") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  const auto out = testutil::temp_dir("pipeline-gt");
  RunOptions o;
  o.predictor = Predictor::GroundTruth;
  o.base.observed = 4;
  o.base.horizon = 6;
  const auto ids = run_predictions(ctx, o, out);
  CHECK(ids.size() == 1);
  const auto rep = eval::evaluate(small_dataset(), out);
  std::string why;
  CHECK(eval::is_metrics_report(rep, &why));
  const auto& a = rep["aggregate"];
  CHECK(a["iou"]["mean"].get<double>() == 1.0);
  CHECK(a["f1"]["mean"].get<double>() == 1.0);
  CHECK(a["mse"]["mean"].get<double>() == 0.0);
  CHECK(a["ssim"]["mean"].get<double>() == doctest::Approx(1.0));
  CHECK(a["perceptual_proxy"]["mean"].get<double>() == 0.0);
  // Cooled scars are in the mask but dim in the infrared, so the ranking is not perfect.
  CHECK(a["auprc"]["mean"].get<double>() > 0.5);
  CHECK(a["psnr"]["mean"].get<double>() == metrics::kPsnrCap);
  for (int e : {3, 4, 5, 6}) {
    const std::string k = std::to_string(e);
    CHECK(a["point_accuracy_e" + k]["mean"].get<double>() == 100.0);
    CHECK(a["line_symmetric_e" + k]["mean"].get<double>() == 100.0);
  }

  for (const auto& id : ids) {
    auto masks = fsrt::read_masks(out / id / "masks.fsrt");
    for (auto& m : masks)
      for (auto& b : m.bits()) b = !b;
    fsrt::write_masks(out / id / "masks.fsrt", masks, 2.0);
  }
  const auto flipped = eval::evaluate(small_dataset(), out);
  CHECK(flipped["aggregate"]["iou"]["mean"].get<double>() == 0.0);
  CHECK(flipped["aggregate"]["mse"]["mean"].get<double>() == 1.0);
}

TEST_CASE("run_predictions output is byte-identical across runs and job counts") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  RunOptions o;
  o.predictor = Predictor::Persistence;
  o.split = data::Split::Train;
  o.base.observed = 4;
  o.base.horizon = 4;
  const auto a = testutil::temp_dir("pipeline-det-a"), b = testutil::temp_dir("pipeline-det-b");
  run_predictions(ctx, o, a);
  o.jobs = 3;
  run_predictions(ctx, o, b);
  CHECK(testutil::same_tree(a, b));
}

TEST_CASE("physics predictor yields synthetic infrared and one mask per horizon step") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  const auto clip = test_clip(ctx);
  ForecastRequest req;
  req.observed = 6;
  req.horizon = 4;
  const auto r = physics_predict(ctx, clip, req);
  CHECK(r.masks.size() == 4);
  REQUIRE(r.infrared);
  CHECK(r.infrared->length() == 4);
  CHECK(r.infrared_synthetic);
  CHECK(r.provenance.contains("physics"));
}

TEST_CASE("firediff: chained blocks, decoupled segmentation, seeded determinism") {
  const auto model = tiny_model("pipeline-model");
  const auto ctx = make_context(small_dataset(), model);
  REQUIRE(ctx.model);
  const auto clip = test_clip(ctx);
  ForecastRequest req;
  req.observed = 2;
  req.horizon = 5;
  req.seed = 3;
  const auto r = firediff_predict(ctx, clip, req);
  CHECK(r.provenance["blocks"] == 3);
  REQUIRE(r.infrared);
  CHECK(r.infrared->length() == 5);
  CHECK(r.masks.size() == 5);
  for (const auto& f : r.infrared->frames)
    for (float v : f.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }

  // Masks come from the segmenter applied to the generated infrared alone.
  const auto prompts = manifest_prompts(clip.entry, r.target_times.front(), 0);
  const auto seg = seg::segment_clip(*r.infrared, prompts, ctx.segment);
  CHECK(seg.masks == r.masks);

  const auto again = firediff_predict(ctx, clip, req);
  CHECK(again.infrared->frames.front().values() == r.infrared->frames.front().values());
  req.seed = 4;
  const auto other = firediff_predict(ctx, clip, req);
  CHECK(other.infrared->frames.front().values() != r.infrared->frames.front().values());

  req.drop_em = true;
  const auto dropped = firediff_predict(ctx, clip, req);
  CHECK(dropped.provenance["drop_em"] == true);

  req.observed = 3;
  CHECK_THROWS_AS(firediff_predict(ctx, clip, req), UsageError);
  CHECK_THROWS_AS(direct_mask_predict(ctx, clip, ForecastRequest{}), UsageError);
  const auto no_model = make_context(small_dataset(), std::nullopt);
  CHECK_THROWS_AS(firediff_predict(no_model, clip, ForecastRequest{}), UsageError);
}

TEST_CASE("evaluate rejects results for clips outside the dataset") {
  const auto ctx = make_context(small_dataset(), std::nullopt);
  const auto out = testutil::temp_dir("pipeline-bad");
  RunOptions o;
  o.predictor = Predictor::Persistence;
  o.base.observed = 4;
  o.base.horizon = 2;
  run_predictions(ctx, o, out);
  std::filesystem::rename(out / "index.json", out / "index.old");
  {
    std::ofstream idx(out / "index.json");
    idx << R"({"predictor": "persistence", "clips": ["clip_999"]})";
  }
  CHECK_THROWS_AS(eval::evaluate(small_dataset(), out), DataError);
}
