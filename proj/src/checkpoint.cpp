// SPDX-License-Identifier: Apache-2.0
#include "saeforge/checkpoint.hpp"

#include <fstream>

#include "saeforge/byteio.hpp"
#include "saeforge/error.hpp"

namespace saeforge {

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  return path.string() + ".json";
}

void save_checkpoint(const SaeModel& model, const std::filesystem::path& path,
                     const nlohmann::json& training_summary) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  const std::size_t d = model.dim();
  const std::size_t n = model.latents();
  byteio::put_u32(out, kCheckpointMagic);
  byteio::put_u32(out, kCheckpointVersion);
  byteio::put_u32(out, static_cast<std::uint32_t>(d));
  byteio::put_u32(out, static_cast<std::uint32_t>(n));
  byteio::put_u32(out, static_cast<std::uint32_t>(model.config().k));
  byteio::put_f32s(out, model.encoder.values);
  byteio::put_f32s(out, model.encoder_bias);
  std::vector<float> transposed(d * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) transposed[c * n + i] = model.decoder(i, c);
  }
  byteio::put_f32s(out, transposed);
  byteio::put_f32s(out, model.decoder_bias);
  if (!out) throw FormatError("write failed: " + path.string());

  nlohmann::json sidecar{{"config", model.config()}, {"training", training_summary}};
  std::ofstream meta(checkpoint_sidecar(path), std::ios::trunc);
  meta << sidecar.dump(2) << '\n';
}

std::optional<nlohmann::json> load_checkpoint_sidecar(const std::filesystem::path& path) {
  const auto sidecar = checkpoint_sidecar(path);
  if (!std::filesystem::exists(sidecar)) return std::nullopt;
  std::ifstream in(sidecar);
  return nlohmann::json::parse(in);
}

SaeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::uint32_t magic = 0, version = 0, d = 0, n = 0, k = 0;
  if (!byteio::get_u32(in, magic) || !byteio::get_u32(in, version) || !byteio::get_u32(in, d) ||
      !byteio::get_u32(in, n) || !byteio::get_u32(in, k)) {
    throw FormatError("truncated checkpoint header: " + path.string());
  }
  if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic: " + path.string());
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version");

  SaeConfig config;
  if (auto sidecar = load_checkpoint_sidecar(path)) {
    config = sidecar->at("config").get<SaeConfig>();
  }
  config.n = n;
  config.k = k;
  if (config.effective_k_aux() > n) config.k_aux = n;

  SaeModel model(config, d);
  std::vector<float> transposed(static_cast<std::size_t>(d) * n);
  if (!byteio::get_f32s(in, model.encoder.values) || !byteio::get_f32s(in, model.encoder_bias) ||
      !byteio::get_f32s(in, transposed) || !byteio::get_f32s(in, model.decoder_bias)) {
    throw FormatError("truncated checkpoint payload: " + path.string());
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) model.decoder(i, c) = transposed[c * n + i];
  }
  return model;
}

}  // namespace saeforge
