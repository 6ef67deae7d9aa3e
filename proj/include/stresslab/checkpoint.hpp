#pragma once

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stresslab/models.hpp"

namespace stresslab {

struct TrainingMeta {
  int epochs = 0;
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  double target_scale = 1.0;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'S', 'N', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void append_payload(std::ostream& out, const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

template <typename T>
void read_payload(std::istream& in, Tensor<T>& t, const std::string& name) {
  std::vector<float> buf(t.size());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    fail("truncated-payload", "checkpoint tensor '" + name + "'");
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(buf[i]);
}

}  // namespace detail

/// Writes the SNCK container: magic, u32 header length, text header with the
/// architecture config and the ordered tensor manifest, then f32 LE payloads
/// in manifest order (trainable parameters first, then running statistics).
template <typename T>
void save_checkpoint(const SurrogateModel<T>& model, const TrainingMeta& meta,
                     const std::string& path) {
  const ArchitectureConfig& cfg = model.config();
  std::ostringstream hdr;
  hdr << "version=" << detail::kCheckpointVersion << "\n"
      << "arch=" << arch_name(cfg.arch) << "\n"
      << "height=" << cfg.height << "\n"
      << "width=" << cfg.width << "\n";
  hdr << "widths=";
  for (size_t i = 0; i < cfg.widths.size(); ++i)
    hdr << (i ? "," : "") << cfg.widths[i];
  hdr << "\n"
      << "se_reduction=" << cfg.se_reduction << "\n"
      << "res_blocks=" << cfg.res_blocks << "\n"
      << "seed=" << cfg.seed << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", meta.target_scale);
  hdr << "target_scale=" << buf << "\n"
      << "epochs=" << meta.epochs << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", meta.final_train_mse);
  hdr << "final_train_mse=" << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", meta.final_test_mse);
  hdr << "final_test_mse=" << buf << "\n";

  auto manifest_line = [&hdr](const std::string& name, bool trainable,
                              const std::vector<int>& shape) {
    hdr << "tensor " << name << " " << (trainable ? 1 : 0) << " "
        << shape.size();
    for (int d : shape) hdr << " " << d;
    hdr << "\n";
  };
  for (const Parameter<T>& p : model.params())
    manifest_line(p.name, true, p.tensor().shape());
  for (const auto& a : model.aux_state())
    manifest_line(a.name, false, a.tensor->shape());

  const std::string header = hdr.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out.write(detail::kCheckpointMagic, 4);
  const uint32_t hlen = static_cast<uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Parameter<T>& p : model.params())
    detail::append_payload(out, p.tensor());
  for (const auto& a : model.aux_state()) detail::append_payload(out, *a.tensor);
  if (!out) fail("io-error", "short write to '" + path + "'");
}

template <typename T>
struct LoadedCheckpoint {
  ArchitectureConfig config;
  TrainingMeta meta;
  std::unique_ptr<SurrogateModel<T>> model;
};

/// Rebuilds the model from the stored config and fills every named tensor.
/// The manifest must match the freshly built model exactly.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
    fail("bad-magic", "'" + path + "' is not a checkpoint file");
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (in.gcount() != sizeof(hlen)) fail("truncated-payload", "checkpoint header");
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (static_cast<uint32_t>(in.gcount()) != hlen)
    fail("truncated-payload", "checkpoint header");

  LoadedCheckpoint<T> ck;
  uint32_t version = 0;
  struct ManifestEntry {
    std::string name;
    bool trainable;
    std::vector<int> shape;
  };
  std::vector<ManifestEntry> manifest;

  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ls(line);
      std::string tag;
      ManifestEntry e;
      int trainable = 0, ndim = 0;
      ls >> tag >> e.name >> trainable >> ndim;
      for (int i = 0; i < ndim; ++i) {
        int d = 0;
        ls >> d;
        e.shape.push_back(d);
      }
      if (!ls) fail("truncated-payload", "bad manifest line '" + line + "'");
      e.trainable = trainable != 0;
      manifest.push_back(std::move(e));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "version") version = std::stoul(value);
    else if (key == "arch") ck.config.arch = arch_from_name(value);
    else if (key == "height") ck.config.height = std::stoi(value);
    else if (key == "width") ck.config.width = std::stoi(value);
    else if (key == "se_reduction") ck.config.se_reduction = std::stoi(value);
    else if (key == "res_blocks") ck.config.res_blocks = std::stoi(value);
    else if (key == "seed") ck.config.seed = std::stoull(value);
    else if (key == "target_scale") ck.meta.target_scale = std::stod(value);
    else if (key == "epochs") ck.meta.epochs = std::stoi(value);
    else if (key == "final_train_mse") ck.meta.final_train_mse = std::stod(value);
    else if (key == "final_test_mse") ck.meta.final_test_mse = std::stod(value);
    else if (key == "widths") {
      std::istringstream ws(value);
      std::string tok;
      while (std::getline(ws, tok, ',')) ck.config.widths.push_back(std::stoi(tok));
    }
  }
  if (version != detail::kCheckpointVersion)
    fail("version-mismatch",
         "checkpoint version " + std::to_string(version) + " is not supported");

  ck.model = build_model<T>(ck.config);

  size_t mi = 0;
  auto expect = [&](const std::string& name, const std::vector<int>& shape,
                    bool trainable) -> const ManifestEntry& {
    require(mi < manifest.size(), "config-mismatch",
            "checkpoint manifest is shorter than the model");
    const ManifestEntry& e = manifest[mi++];
    require(e.name == name && e.trainable == trainable && e.shape == shape,
            "config-mismatch",
            "checkpoint tensor '" + e.name + "' does not match model tensor '" +
                name + "'");
    return e;
  };
  for (Parameter<T>& p : ck.model->params()) {
    expect(p.name, p.tensor().shape(), true);
    detail::read_payload(in, p.tensor(), p.name);
  }
  for (const auto& a : ck.model->aux_state()) {
    expect(a.name, a.tensor->shape(), false);
    detail::read_payload(in, *a.tensor, a.name);
  }
  require(mi == manifest.size(), "config-mismatch",
          "checkpoint manifest is longer than the model");
  return ck;
}

}  // namespace stresslab
