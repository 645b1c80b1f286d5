// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/encoder.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace encmark {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(part);
  return parts;
}

int to_int(const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("architecture id: bad integer '" + s + "'");
  }
  return v;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& p : split(s, ',')) out.push_back(to_int(p));
  return out;
}

struct Conv4Spec {
  int height, width, channels;
  std::vector<int> stages;
  int dim;
};

Conv4Spec parse_conv4(const std::string& id) {
  const auto parts = split(id, ':');
  if (parts.size() != 4 || parts[0] != "conv4") {
    throw std::invalid_argument("bad conv4 architecture id: " + id);
  }
  const auto shape = split(parts[1], 'x');
  if (shape.size() != 3) {
    throw std::invalid_argument("bad conv4 input shape in: " + id);
  }
  Conv4Spec spec;
  spec.height = to_int(shape[0]);
  spec.width = to_int(shape[1]);
  spec.channels = to_int(shape[2]);
  spec.stages = to_ints(parts[2]);
  spec.dim = to_int(parts[3]);
  if (spec.stages.size() != 4) {
    throw std::invalid_argument("conv4 needs 4 stage widths: " + id);
  }
  return spec;
}

constexpr char kParamsMagic[8] = {'E', 'N', 'C', 'P', 'A', 'R', 'M', '1'};

}  // namespace

nn::Network make_network_from_architecture(const std::string& id,
                                           std::uint64_t seed) {
  if (id.rfind("conv4:", 0) == 0) {
    const auto spec = parse_conv4(id);
    return nn::make_conv4_encoder(spec.height, spec.width, spec.channels,
                                  spec.stages, spec.dim, seed);
  }
  if (id.rfind("mlp:", 0) == 0) {
    return nn::make_mlp(to_ints(id.substr(4)), seed);
  }
  throw std::invalid_argument("unknown architecture id: " + id);
}

int architecture_output_dim(const std::string& id) {
  if (id.rfind("conv4:", 0) == 0) return parse_conv4(id).dim;
  if (id.rfind("mlp:", 0) == 0) return to_ints(id.substr(4)).back();
  throw std::invalid_argument("unknown architecture id: " + id);
}

shadow::EncoderFn as_encoder_fn(EncoderHandle& encoder) {
  return [&encoder](const Matrix& x) { return encoder.encode(x); };
}

void save_encoder(const EncoderHandle& encoder, const std::string& params_path,
                  const std::string& manifest_path,
                  const std::string& config_hash) {
  std::ofstream out(params_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + params_path);
  out.write(kParamsMagic, sizeof(kParamsMagic));
  const Vector params = encoder.network.parameters();
  const std::int64_t n = params.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + params_path);

  json manifest;
  manifest["format"] = "encmark-encoder-v1";
  manifest["architecture"] = encoder.architecture;
  manifest["dim"] = encoder.dim;
  manifest["provenance"] = encoder.provenance;
  manifest["param_count"] = n;
  manifest["content_hash"] = encoder.network.checksum();
  if (!config_hash.empty()) manifest["config_hash"] = config_hash;
  std::ofstream mout(manifest_path);
  if (!mout) throw std::runtime_error("cannot write " + manifest_path);
  mout << manifest.dump(2) << '\n';
}

EncoderHandle load_encoder(const std::string& params_path,
                           const std::string& manifest_path) {
  std::ifstream min(manifest_path);
  if (!min) throw std::runtime_error("cannot open " + manifest_path);
  json manifest = json::parse(min);
  if (manifest.value("format", "") != "encmark-encoder-v1") {
    throw std::runtime_error("unexpected encoder manifest format");
  }

  EncoderHandle handle;
  handle.architecture = manifest.at("architecture").get<std::string>();
  handle.dim = manifest.at("dim").get<int>();
  handle.provenance = manifest.at("provenance").get<std::string>();
  handle.network = make_network_from_architecture(handle.architecture, 0);

  std::ifstream in(params_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + params_path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kParamsMagic)) {
    throw std::runtime_error("not an encoder parameter archive: " + params_path);
  }
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != handle.network.param_count()) {
    throw std::runtime_error("parameter count mismatch loading " + params_path);
  }
  Vector params(n);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("truncated parameter archive");
  handle.network.set_parameters(params);

  if (manifest.contains("content_hash") &&
      manifest["content_hash"].get<std::uint64_t>() !=
          handle.network.checksum()) {
    throw std::runtime_error("encoder content hash mismatch: " + params_path);
  }
  return handle;
}

}  // namespace encmark
