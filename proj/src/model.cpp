#include "firediff/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "firediff/error.hpp"

namespace firediff::nn {

static_assert(std::endian::native == std::endian::little, "artifact IO assumes a little-endian host");

ddpm::NoiseSchedule ModelArtifact::schedule() const {
  return ddpm::linear_schedule(diffusion_steps, beta_min, beta_max);
}

void ModelArtifact::bind_mean_prior() { net.set_mean_prior(MeanPrior(schedule(), x0_mean, x0_mean_var)); }

nlohmann::json ModelArtifact::header() const {
  nlohmann::json j;
  j["version"] = kVersion;
  j["architecture"] = to_json(arch);
  j["schedule"] = {{"T", diffusion_steps}, {"beta_min", beta_min}, {"beta_max", beta_max},
                   {"kind", "linear"}};
  j["clamp_x0"] = clamp_x0;
  j["mean_prior"] = {{"mean", x0_mean}, {"var", x0_mean_var}};
  j["modality"] = to_string(modality);
  j["target"] = to_string(target);
  j["drop_em"] = drop_em;
  j["drop_lv"] = drop_lv;
  j["normalization"] = {{"infrared", "2v-1"},
                        {"mask", "{0,1}->{-1,1}"},
                        {"land_veg_max", kLandVegMax},
                        {"telemetry", to_json(telemetry)}};
  j["seed"] = seed;
  j["training"] = training;
  nlohmann::json params = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : net.params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size();
  }
  j["parameters"] = params;
  j["parameter_count"] = offset;
  return j;
}

void save_model(const std::filesystem::path& path, const ModelArtifact& m) {
  const std::string header = m.header().dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write model artifact " + path.string());
  f.write(kModelMagic, static_cast<std::streamsize>(std::strlen(kModelMagic)));
  const std::uint64_t len = header.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof len);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : m.net.params()) {
    f.write(reinterpret_cast<const char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!f) throw DataError("write failed: " + path.string());
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("model artifact not found: " + path.string());
  const std::size_t mlen = std::strlen(kModelMagic);
  std::string magic(mlen, '\0');
  f.read(magic.data(), static_cast<std::streamsize>(mlen));
  if (!f || magic != kModelMagic) throw DataError("not a firediff model artifact: " + path.string());
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!f || len > (1u << 26)) throw DataError("corrupt model header length in " + path.string());
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  if (!f) throw DataError("truncated model header in " + path.string());

  ModelArtifact m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.arch = denoiser_config_from_json(j.at("architecture"));
    m.diffusion_steps = j.at("schedule").at("T").get<int>();
    m.beta_min = j.at("schedule").at("beta_min").get<double>();
    m.beta_max = j.at("schedule").at("beta_max").get<double>();
    m.clamp_x0 = j.at("clamp_x0").get<bool>();
    m.modality = modality_from_string(j.at("modality").get<std::string>());
    m.target = target_from_string(j.value("target", std::string("frames")));
    m.drop_em = j.at("drop_em").get<bool>();
    m.drop_lv = j.at("drop_lv").get<bool>();
    m.telemetry = telemetry_stats_from_json(j.at("normalization").at("telemetry"));
    if (j.contains("mean_prior")) {
      m.x0_mean = j["mean_prior"].at("mean").get<double>();
      m.x0_mean_var = j["mean_prior"].at("var").get<double>();
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.training = j.at("training");
    m.net = Denoiser<float>(m.arch, 0);
    const auto& plist = j.at("parameters");
    if (plist.size() != m.net.params().size()) throw DataError("parameter list does not match architecture");
    std::vector<Parameter<float>> values;
    for (const auto& pj : plist) {
      Parameter<float> p;
      p.name = pj.at("name").get<std::string>();
      p.value = Tensor<float>(pj.at("shape").get<std::vector<int>>());
      f.read(reinterpret_cast<char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.size() * sizeof(float)));
      if (!f) throw DataError("truncated parameter blob '" + p.name + "' in " + path.string());
      values.push_back(std::move(p));
    }
    m.net.load_values(values);
    if (m.arch.mean_head) m.bind_mean_prior();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model header in " + path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw DataError("invalid model header in " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace firediff::nn
