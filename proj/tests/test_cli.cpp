#include <cstdlib>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" FIREDIFF_BENCH_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) { return json::parse(testutil::read_file(p)); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Ten 24x24 clips of 32 frames, generated once per process.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const auto root = testutil::temp_dir("cli-data");
    REQUIRE(run("gen-data --out " + q(root / "d") + " --clips 10 --size 24 --frames 32 --warmup 4 --seed 5") == 0);
    return root / "d";
  }();
  return dir;
}

std::string tiny_train(const fs::path& out, const std::string& extra = "") {
  return "train --data " + q(dataset()) + " --out " + q(out) +
         " --epochs 1 --steps-per-epoch 2 --batch 2 --diffusion-steps 6 --frames-in 1 --frames-out 1"
         " --base-width 4 --levels 2 --val-samples 2 " + extra;
}

}  // namespace

TEST_CASE("gen-data: split sizes, determinism, seed fallback, infeasible split") {
  const auto m = read_json(dataset() / "manifest.json");
  int counts[3] = {0, 0, 0};
  for (const auto& c : m["clips"]) {
    const auto s = c["split"].get<std::string>();
    ++counts[s == "train" ? 0 : s == "val" ? 1 : 2];
  }
  CHECK(counts[0] == 8);
  CHECK(counts[1] == 1);
  CHECK(counts[2] == 1);
  CHECK(fs::exists(dataset() / "effective-config.json"));

  const auto root = testutil::temp_dir("cli-gen");
  REQUIRE(run("gen-data --out " + q(root / "a") + " --clips 10 --size 24 --frames 32 --warmup 4 --seed 5") == 0);
  CHECK(testutil::same_tree(dataset(), root / "a"));
  REQUIRE(run("gen-data --out " + q(root / "b") + " --clips 10 --size 24 --frames 32 --warmup 4", "FIREDIFF_SEED=5") == 0);
  CHECK(read_json(root / "b" / "manifest.json")["clips"] == m["clips"]);

  CHECK(run("gen-data --out " + q(root / "c") + " --clips 5") == 1);
  CHECK(run("gen-data --out " + q(root / "c") + " --no-such-flag") == 1);
  CHECK(run("bogus-command") == 1);
}

TEST_CASE("train: determinism, ablation provenance, zero epochs, missing data") {
  const auto root = testutil::temp_dir("cli-train");
  REQUIRE(run(tiny_train(root / "a")) == 0);
  REQUIRE(run(tiny_train(root / "b")) == 0);
  CHECK(testutil::same_tree(root / "a", root / "b"));

  REQUIRE(run(tiny_train(root / "em", "--drop em")) == 0);
  const auto cfg = read_json(root / "em" / "effective-config.json");
  CHECK(cfg.dump().find("\"em\"") != std::string::npos);
  CHECK(testutil::read_file(root / "em" / "model.fdm").find("\"drop_em\":true") != std::string::npos);

  REQUIRE(run(tiny_train(root / "zero", "--epochs 0")) == 0);
  const auto curve = testutil::read_file(root / "zero" / "loss_curve.csv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 1);

  CHECK(run("train --data " + q(root / "missing") + " --out " + q(root / "x")) == 2);
  CHECK(run(tiny_train(root / "x", "--drop wind")) == 1);
  CHECK(run(tiny_train(root / "x", "--lr -1")) == 1);
  CHECK(run(tiny_train(root / "x", "--target delta")) == 1);

  REQUIRE(run(tiny_train(root / "abs", "--target frames")) == 0);
  CHECK(testutil::read_file(root / "abs" / "model.fdm").find("\"target\":\"frames\"") != std::string::npos);
  CHECK(testutil::read_file(root / "a" / "model.fdm").find("\"target\":\"residual\"") != std::string::npos);
}

TEST_CASE("predict and evaluate: exit codes, stride bookkeeping, identical trees") {
  const auto root = testutil::temp_dir("cli-predict");
  REQUIRE(run(tiny_train(root / "m")) == 0);
  const auto model = root / "m" / "model.fdm";

  const std::string pers = "predict --data " + q(dataset()) + " --predictor persistence --observed 4 --horizon 4";
  REQUIRE(run(pers + " --out " + q(root / "p1")) == 0);
  REQUIRE(run(pers + " --out " + q(root / "p2") + " --jobs 2") == 0);
  CHECK(testutil::same_tree(root / "p1", root / "p2"));

  const std::string fd = "predict --data " + q(dataset()) + " --model " + q(model) +
                         " --predictor firediff --observed 1 --horizon 1 --stride 30 --seed 4";
  REQUIRE(run(fd + " --out " + q(root / "f1")) == 0);
  REQUIRE(run(fd + " --out " + q(root / "f2")) == 0);
  CHECK(testutil::same_tree(root / "f1", root / "f2"));
  const auto index = read_json(root / "f1" / "index.json");
  const auto id = index["clips"][0].get<std::string>();
  const auto side = read_json(root / "f1" / id / "result.json");
  CHECK(side["stride"] == 30);
  CHECK(side["observed_frames"] == json::array({0}));
  CHECK(side["target_frames"] == json::array({30}));
  const double t0 = side["observed_times"][0].get<double>(), t1 = side["target_times"][0].get<double>();
  CHECK(t1 - t0 == doctest::Approx(30.0));

  CHECK(run(pers + " --out " + q(root / "s") + " --stride 60") == 2);
  CHECK(run(pers + " --out " + q(root / "s") + " --stride 7") == 1);
  CHECK(run("predict --data " + q(dataset()) + " --predictor oracle --out " + q(root / "s")) == 1);
  CHECK(run("predict --data " + q(dataset()) + " --predictor firediff --out " + q(root / "s")) == 1);

  REQUIRE(run(pers + " --split val --out " + q(root / "pv")) == 0);
  const std::string ev = "evaluate --data " + q(dataset()) + " --results " + q(root / "p1") + " --results " +
                         q(root / "pv");
  CHECK(run(ev + " --out " + q(root / "e")) == 2);
  const std::string ev1 = "evaluate --data " + q(dataset()) + " --results " + q(root / "p1");
  REQUIRE(run(ev1 + " --out " + q(root / "e1")) == 0);
  REQUIRE(run(ev1 + " --out " + q(root / "e2")) == 0);
  CHECK(testutil::same_tree(root / "e1", root / "e2"));
  const auto rep = read_json(root / "e1" / "metrics-persistence.json");
  CHECK(rep["format"] == "firediff-metrics");
  CHECK(rep["tolerances"] == json::array({3, 4, 5, 6}));

  REQUIRE(run("report --in " + q(root / "e1") + " --out " + q(root / "r1")) == 0);
  REQUIRE(run("report --in " + q(root / "e1") + " --out " + q(root / "r2")) == 0);
  CHECK(testutil::same_tree(root / "r1", root / "r2"));
  CHECK(run("report --in " + q(root / "nothing") + " --out " + q(root / "r3")) == 2);
}

TEST_CASE("qc-masks: identical sets, published rows, empty region set") {
  const auto root = testutil::temp_dir("cli-qc");
  const std::string gt = "predict --data " + q(dataset()) + " --predictor persistence --observed 4 --horizon 4";
  REQUIRE(run(gt + " --out " + q(root / "p")) == 0);
  REQUIRE(run("qc-masks --pred " + q(root / "p") + " --data " + q(dataset()) + " --out " + q(root / "q")) == 0);
  CHECK(read_json(root / "q" / "qc.json")["regions"].size() == 1);

  {
    std::ofstream rows(root / "rows.json");
    rows << R"({"regions": [
      {"region": "A", "accuracy": 0.923, "miou": 0.665, "commission_error": 0.101, "omission_error": 0.023},
      {"region": "B", "accuracy": 0.955, "miou": 0.781, "commission_error": 0.068, "omission_error": 0.002},
      {"region": "C", "accuracy": 0.948, "miou": 0.631, "commission_error": 0.100, "omission_error": 0.015},
      {"region": "D", "accuracy": 0.835, "miou": 0.782, "commission_error": 0.045, "omission_error": 0.013},
      {"region": "E", "accuracy": 0.966, "miou": 0.623, "commission_error": 0.064, "omission_error": 0.023}]})";
  }
  REQUIRE(run("qc-masks --rows " + q(root / "rows.json") + " --out " + q(root / "t")) == 0);
  const auto mean = read_json(root / "t" / "qc.json")["mean"];
  CHECK(std::abs(mean["accuracy"].get<double>() - 0.925) <= 0.0005);
  CHECK(std::abs(mean["miou"].get<double>() - 0.696) <= 0.0005);

  {
    std::ofstream rows(root / "empty.json");
    rows << R"({"regions": []})";
  }
  CHECK(run("qc-masks --rows " + q(root / "empty.json") + " --out " + q(root / "u")) == 1);
  CHECK(run("qc-masks --out " + q(root / "u")) == 1);
}
