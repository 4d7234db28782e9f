#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cisnet/nn.hpp"

namespace cisnet {

constexpr uint32_t kCheckpointMagic = 0x43495331;  // "CIS1"
constexpr uint32_t kCheckpointVersion = 1;

// Named parameter arrays + a flat key=value config snapshot + step counter +
// serialized rng state. Written atomically (tmp file + rename) and immutable
// once on disk.
struct Checkpoint {
  std::map<std::string, std::string> config;  // includes "variant" metadata
  int64_t step = 0;
  std::string rng_state;
  // name -> (shape, raw doubles); parameters of all submodels, prefixed
  // "map.", "gen.", "adv.", "ext."
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> params;

  template <class T>
  void put_store(const ParamStore<T>& store, const std::string& prefix = "") {
    for (const auto& p : store.params) {
      std::vector<double> v(p->value.data.begin(), p->value.data.end());
      params[prefix + p->name] = {p->value.shape, std::move(v)};
    }
  }

  // Restores matching names into an already-built store; dims must agree.
  template <class T>
  void load_store(ParamStore<T>& store, const std::string& prefix = "") const {
    for (auto& p : store.params) {
      auto it = params.find(prefix + p->name);
      if (it == params.end()) throw std::runtime_error("checkpoint missing " + prefix + p->name);
      if (it->second.first != p->value.shape)
        throw std::runtime_error("checkpoint shape mismatch for " + p->name);
      for (int64_t i = 0; i < p->value.size(); ++i)
        p->value[i] = static_cast<T>(it->second.second[static_cast<size_t>(i)]);
    }
    store.refresh_leaves();
  }

  std::string variant() const {
    auto it = config.find("variant");
    return it == config.end() ? "" : it->second;
  }
};

namespace detail {

template <class V>
inline void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
inline V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
  auto n = read_pod<uint64_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    detail::write_pod(os, kCheckpointMagic);
    detail::write_pod(os, kCheckpointVersion);
    detail::write_pod(os, ckpt.step);
    detail::write_str(os, ckpt.rng_state);
    detail::write_pod<uint64_t>(os, ckpt.config.size());
    for (const auto& [k, v] : ckpt.config) {
      detail::write_str(os, k);
      detail::write_str(os, v);
    }
    detail::write_pod<uint64_t>(os, ckpt.params.size());
    for (const auto& [name, sv] : ckpt.params) {
      detail::write_str(os, name);
      detail::write_pod<uint64_t>(os, sv.first.size());
      for (int d : sv.first) detail::write_pod<int32_t>(os, d);
      detail::write_pod<uint64_t>(os, sv.second.size());
      os.write(reinterpret_cast<const char*>(sv.second.data()),
               static_cast<std::streamsize>(sv.second.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  if (detail::read_pod<uint32_t>(is) != kCheckpointMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  if (detail::read_pod<uint32_t>(is) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  Checkpoint ckpt;
  ckpt.step = detail::read_pod<int64_t>(is);
  ckpt.rng_state = detail::read_str(is);
  auto nc = detail::read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < nc; ++i) {
    std::string k = detail::read_str(is);
    ckpt.config[k] = detail::read_str(is);
  }
  auto np = detail::read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < np; ++i) {
    std::string name = detail::read_str(is);
    auto nd = detail::read_pod<uint64_t>(is);
    std::vector<int> shape(nd);
    for (auto& d : shape) d = detail::read_pod<int32_t>(is);
    auto nv = detail::read_pod<uint64_t>(is);
    std::vector<double> vals(nv);
    is.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(nv * sizeof(double)));
    if (!is) throw std::runtime_error("truncated checkpoint");
    ckpt.params[name] = {std::move(shape), std::move(vals)};
  }
  return ckpt;
}

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  if (!s.empty()) {
    std::istringstream is(s);
    is >> rng;
  }
  return rng;
}

}  // namespace cisnet
