#pragma once

#include <bit>
#include <cmath>
#include <limits>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcg/errors.hpp"
#include "dcg/numgrad/params.hpp"
#include "dcg/trainer.hpp"

namespace dcg::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in native (little-endian) order");

namespace detail {

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("short write to " + p.string());
}

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw CheckpointError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  template <class T>
  void put_vec(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <class T>
  std::vector<T> get_vec() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> v(n);
    std::memcpy(v.data(), buf_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw CheckpointError("truncated binary file");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

inline json manifest_of(const ng::ParamStore& ps) {
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& e : ps.entries()) {
    params.push_back({{"name", e.name}, {"shape", e.value.shape}, {"offset", offset}});
    offset += e.value.size() * sizeof(double);
  }
  return {{"format", "dcg-params-v1"}, {"dtype", "f64-le"}, {"params", params}, {"bytes", offset}};
}

inline std::string blob_of(const std::vector<const ng::Tensor*>& tensors) {
  std::string out;
  for (const auto* t : tensors) out.append(reinterpret_cast<const char*>(t->data.data()), t->data.size() * sizeof(double));
  return out;
}

inline std::vector<const ng::Tensor*> values_of(const ng::ParamStore& ps) {
  std::vector<const ng::Tensor*> v;
  for (const auto& e : ps.entries()) v.push_back(&e.value);
  return v;
}

// Fills tensors laid out as in `manifest` from a blob.
inline std::vector<ng::Tensor> tensors_from(const json& manifest, const std::string& blob) {
  if (manifest.at("bytes").get<std::size_t>() != blob.size()) throw CheckpointError("blob size does not match manifest");
  std::vector<ng::Tensor> out;
  for (const auto& p : manifest.at("params")) {
    ng::Tensor t(p.at("shape").get<ng::Shape>());
    const auto off = p.at("offset").get<std::size_t>();
    if (off + t.size() * sizeof(double) > blob.size()) throw CheckpointError("parameter '" + p.at("name").get<std::string>() + "' out of blob range");
    std::memcpy(t.data.data(), blob.data() + off, t.size() * sizeof(double));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

/// Writes manifest.json and params.bin into dir (created if needed).
inline void save_params(const fs::path& dir, const ng::ParamStore& ps) {
  fs::create_directories(dir);
  detail::write_file(dir / "manifest.json", detail::manifest_of(ps).dump(2));
  detail::write_file(dir / "params.bin", detail::blob_of(detail::values_of(ps)));
}

inline ng::ParamStore load_params(const fs::path& dir) {
  const json manifest = json::parse(detail::read_file(dir / "manifest.json"));
  auto tensors = detail::tensors_from(manifest, detail::read_file(dir / "params.bin"));
  ng::ParamStore ps;
  std::size_t k = 0;
  for (const auto& p : manifest.at("params")) ps.add(p.at("name").get<std::string>(), std::move(tensors[k++]));
  return ps;
}

namespace detail {

inline void copy_values(ng::ParamStore& dst, std::vector<ng::Tensor> src, const char* what) {
  auto& entries = dst.entries();
  if (src.size() != entries.size()) throw CheckpointError(std::string(what) + ": parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].shape != entries[i].value.shape) throw CheckpointError(std::string(what) + ": shape mismatch for '" + entries[i].name + "'");
    entries[i].value = std::move(src[i]);
  }
}

inline std::string encode_buffer(const train::ReplayBuffer& buf) {
  Writer w;
  w.put<std::uint64_t>(buf.capacity());
  w.put<std::uint64_t>(buf.size());
  for (const auto& ep : buf.episodes()) {
    for (std::uint64_t v : {ep.n_agents, ep.n_actions, ep.obs_dim, ep.state_dim, ep.length}) w.put(v);
    w.put<std::uint8_t>(ep.terminal);
    w.put<std::uint8_t>(ep.truncated);
    w.put_vec(ep.obs);
    w.put_vec(ep.avail);
    w.put_vec(ep.states);
    w.put_vec(ep.actions);
    w.put_vec(ep.rewards);
  }
  return w.bytes();
}

inline train::ReplayBuffer decode_buffer(std::string bytes) {
  Reader r(std::move(bytes));
  train::ReplayBuffer buf(r.get<std::uint64_t>());
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < n; ++k) {
    train::Episode ep;
    ep.n_agents = r.get<std::uint64_t>();
    ep.n_actions = r.get<std::uint64_t>();
    ep.obs_dim = r.get<std::uint64_t>();
    ep.state_dim = r.get<std::uint64_t>();
    ep.length = r.get<std::uint64_t>();
    ep.terminal = r.get<std::uint8_t>() != 0;
    ep.truncated = r.get<std::uint8_t>() != 0;
    ep.obs = r.get_vec<float>();
    ep.avail = r.get_vec<std::uint8_t>();
    ep.states = r.get_vec<float>();
    ep.actions = r.get_vec<std::uint16_t>();
    ep.rewards = r.get_vec<double>();
    buf.push(std::move(ep));
  }
  if (!r.done()) throw CheckpointError("trailing bytes in replay file");
  return buf;
}

}  // namespace detail

/// Full training state: online params (manifest.json + params.bin), target
/// params, RMSprop statistics, replay buffer, counters and RNG streams.
/// `extra` is stored verbatim for the caller (run bookkeeping).
inline void save_trainer(const fs::path& dir, const train::TrainerState& st, const json& extra) {
  save_params(dir, st.online);
  detail::write_file(dir / "target.bin", detail::blob_of(detail::values_of(st.target)));
  std::vector<const ng::Tensor*> ms;
  for (const auto& t : st.optim.mean_square) ms.push_back(&t);
  detail::write_file(dir / "optim.bin", detail::blob_of(ms));
  detail::write_file(dir / "replay.bin", detail::encode_buffer(st.buffer));
  json state = {{"seed", st.seed},
                {"t_env", st.t_env},
                {"episodes", st.episodes},
                {"gradient_steps", st.gradient_steps},
                {"target_updates", st.target_updates},
                {"last_loss", std::isnan(st.last_loss) ? json(nullptr) : json(st.last_loss)},
                {"env_rng", st.env_rng.serialize()},
                {"explore_rng", st.explore_rng.serialize()},
                {"extra", extra}};
  detail::write_file(dir / "state.json", state.dump(2));
}

/// Restores into `st`, which must have been built from the same configuration.
/// Returns the stored `extra` object.
inline json load_trainer(const fs::path& dir, train::TrainerState& st) {
  const json manifest = json::parse(detail::read_file(dir / "manifest.json"));
  if (manifest != detail::manifest_of(st.online)) throw CheckpointError("checkpoint parameters do not match the configured model");
  detail::copy_values(st.online, detail::tensors_from(manifest, detail::read_file(dir / "params.bin")), "params");
  detail::copy_values(st.target, detail::tensors_from(manifest, detail::read_file(dir / "target.bin")), "target");
  auto ms = detail::tensors_from(manifest, detail::read_file(dir / "optim.bin"));
  if (ms.size() != st.optim.mean_square.size()) throw CheckpointError("optimizer state mismatch");
  st.optim.mean_square = std::move(ms);
  st.buffer = detail::decode_buffer(detail::read_file(dir / "replay.bin"));
  const json state = json::parse(detail::read_file(dir / "state.json"));
  if (state.at("seed").get<std::uint64_t>() != st.seed) throw CheckpointError("checkpoint belongs to a different seed");
  st.t_env = state.at("t_env").get<std::size_t>();
  st.episodes = state.at("episodes").get<std::size_t>();
  st.gradient_steps = state.at("gradient_steps").get<std::size_t>();
  st.target_updates = state.at("target_updates").get<std::size_t>();
  st.last_loss = state.at("last_loss").is_null() ? std::numeric_limits<double>::quiet_NaN() : state.at("last_loss").get<double>();
  st.env_rng.deserialize(state.at("env_rng").get<std::string>());
  st.explore_rng.deserialize(state.at("explore_rng").get<std::string>());
  return state.at("extra");
}

}  // namespace dcg::ckpt
