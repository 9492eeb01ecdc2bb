#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vex/common.hpp"
#include "vex/dynamics.hpp"
#include "vex/mlp.hpp"
#include "vex/sac.hpp"

namespace vex {

// Checkpoint container: 8-byte magic, little-endian u32 manifest length, a
// JSON manifest (dtype, architecture fingerprint, tensor names and shapes in
// blob order), then the raw coefficients. Values are stored little-endian in
// the tensor's column-major coefficient order; x86 writes them natively.
inline constexpr char kCheckpointMagic[8] = {'V', 'E', 'X', 'C', 'K', 'P', '0', '1'};

namespace detail {

template <typename T>
void append_tensor(nlohmann::json& manifest, std::string& blob, const std::string& name,
                   const Mat<T>& m) {
  manifest["tensors"].push_back(
      {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  const auto bytes = static_cast<std::size_t>(m.size()) * sizeof(T);
  const auto off = blob.size();
  blob.resize(off + bytes);
  std::memcpy(blob.data() + off, m.data(), bytes);
}

template <typename T>
void append_tensor(nlohmann::json& manifest, std::string& blob, const std::string& name,
                   const Vec<T>& v) {
  append_tensor<T>(manifest, blob, name, Mat<T>(v));
}

template <typename T>
class TensorReader {
 public:
  TensorReader(const nlohmann::json& manifest, const std::string& blob)
      : manifest_(manifest), blob_(blob) {}

  Mat<T> next(const std::string& expect_name) {
    const auto& t = manifest_.at("tensors").at(index_++);
    if (t.at("name").get<std::string>() != expect_name)
      throw ConfigError("checkpoint: expected tensor " + expect_name + ", found " +
                        t.at("name").get<std::string>());
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(T);
    if (offset_ + bytes > blob_.size()) throw IoError("checkpoint: truncated blob");
    Mat<T> m(rows, cols);
    std::memcpy(m.data(), blob_.data() + offset_, bytes);
    offset_ += bytes;
    return m;
  }

 private:
  const nlohmann::json& manifest_;
  const std::string& blob_;
  std::size_t index_ = 0;
  std::size_t offset_ = 0;
};

template <typename T>
void append_mlp(nlohmann::json& manifest, std::string& blob, const std::string& prefix,
                const MlpParams<T>& p) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    append_tensor(manifest, blob, prefix + ".w" + std::to_string(l), p.layers[l].weight);
    append_tensor(manifest, blob, prefix + ".b" + std::to_string(l), p.layers[l].bias);
  }
}

template <typename T>
void read_mlp(TensorReader<T>& reader, const std::string& prefix, MlpParams<T>& p) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    p.layers[l].weight = reader.next(prefix + ".w" + std::to_string(l));
    p.layers[l].bias = Vec<T>(reader.next(prefix + ".b" + std::to_string(l)));
  }
}

inline void write_checkpoint_file(const std::string& path, const nlohmann::json& manifest,
                                  const std::string& blob) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string m = manifest.dump();
  const auto len = static_cast<std::uint32_t>(m.size());
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(m.data(), static_cast<std::streamsize>(m.size()));
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("checkpoint: write failed: " + path);
}

inline std::pair<nlohmann::json, std::string> read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("checkpoint: bad magic: " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string m(len, '\0');
  f.read(m.data(), len);
  if (!f) throw IoError("checkpoint: truncated manifest: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return {nlohmann::json::parse(m), std::move(blob)};
}

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace detail

template <typename T>
void save_agent(const std::string& path, const Agent<T>& agent) {
  nlohmann::json manifest = {{"kind", "agent"},
                             {"dtype", detail::dtype_name<T>()},
                             {"byte_order", "little"},
                             {"fingerprint", agent.fingerprint()},
                             {"tensors", nlohmann::json::array()}};
  std::string blob;
  detail::append_mlp(manifest, blob, "policy", agent.policy);
  detail::append_mlp(manifest, blob, "q1", agent.q1);
  detail::append_mlp(manifest, blob, "q2", agent.q2);
  detail::append_mlp(manifest, blob, "q1_target", agent.q1_target);
  detail::append_mlp(manifest, blob, "q2_target", agent.q2_target);
  Vec<T> alpha(1);
  alpha(0) = agent.log_alpha;
  detail::append_tensor(manifest, blob, "log_alpha", alpha);
  detail::write_checkpoint_file(path, manifest, blob);
}

/// Loads into an agent of the expected architecture; fingerprint or dtype
/// mismatches are rejected.
template <typename T>
void load_agent(const std::string& path, Agent<T>& agent) {
  auto [manifest, blob] = detail::read_checkpoint_file(path);
  if (manifest.at("fingerprint").get<std::string>() != agent.fingerprint())
    throw ConfigError("checkpoint: architecture fingerprint mismatch: expected " +
                      agent.fingerprint());
  if (manifest.at("dtype").get<std::string>() != detail::dtype_name<T>())
    throw ConfigError("checkpoint: dtype mismatch");
  detail::TensorReader<T> reader(manifest, blob);
  detail::read_mlp(reader, "policy", agent.policy);
  detail::read_mlp(reader, "q1", agent.q1);
  detail::read_mlp(reader, "q2", agent.q2);
  detail::read_mlp(reader, "q1_target", agent.q1_target);
  detail::read_mlp(reader, "q2_target", agent.q2_target);
  agent.log_alpha = reader.next("log_alpha")(0, 0);
}

template <typename T>
void save_model(const std::string& path, const EnsembleModel<T>& model) {
  nlohmann::json manifest = {{"kind", "ensemble"},
                             {"dtype", detail::dtype_name<T>()},
                             {"byte_order", "little"},
                             {"fingerprint", model.fingerprint()},
                             {"tensors", nlohmann::json::array()}};
  std::string blob;
  detail::append_tensor(manifest, blob, "in_mean", model.in_mean);
  detail::append_tensor(manifest, blob, "in_std", model.in_std);
  for (int k = 0; k < model.cfg.members; ++k) {
    const auto& mem = model.members[static_cast<std::size_t>(k)];
    const std::string prefix = "member" + std::to_string(k);
    detail::append_mlp(manifest, blob, prefix, mem.net);
    detail::append_tensor(manifest, blob, prefix + ".max_logvar", mem.max_logvar);
    detail::append_tensor(manifest, blob, prefix + ".min_logvar", mem.min_logvar);
  }
  detail::write_checkpoint_file(path, manifest, blob);
}

template <typename T>
void load_model(const std::string& path, EnsembleModel<T>& model) {
  auto [manifest, blob] = detail::read_checkpoint_file(path);
  if (manifest.at("fingerprint").get<std::string>() != model.fingerprint())
    throw ConfigError("checkpoint: architecture fingerprint mismatch: expected " +
                      model.fingerprint());
  if (manifest.at("dtype").get<std::string>() != detail::dtype_name<T>())
    throw ConfigError("checkpoint: dtype mismatch");
  detail::TensorReader<T> reader(manifest, blob);
  model.in_mean = Vec<T>(reader.next("in_mean"));
  model.in_std = Vec<T>(reader.next("in_std"));
  for (int k = 0; k < model.cfg.members; ++k) {
    auto& mem = model.members[static_cast<std::size_t>(k)];
    const std::string prefix = "member" + std::to_string(k);
    detail::read_mlp(reader, prefix, mem.net);
    mem.max_logvar = Vec<T>(reader.next(prefix + ".max_logvar"));
    mem.min_logvar = Vec<T>(reader.next(prefix + ".min_logvar"));
  }
}

}  // namespace vex
