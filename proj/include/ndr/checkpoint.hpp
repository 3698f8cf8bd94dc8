#pragma once

// Versioned binary checkpoints: every named parameter with its Adam state,
// the iteration counter, and a configuration hash. Values round-trip
// bitwise.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ndr/common.hpp"
#include "ndr/params.hpp"

namespace ndr {

namespace detail {

inline constexpr char kCkptMagic[9] = "NDRCKPT1";

template <class S, class T>
void write_pod(S& s, const T& v) {
  s.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class S, class T>
void read_pod(S& s, T& v) {
  s.read(reinterpret_cast<char*>(&v), sizeof(T));
}

template <class S, class T>
void write_mat(S& s, const Mat<T>& m) {
  s.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(m.size())));
}
template <class S, class T>
void read_mat(S& s, Mat<T>& m) {
  s.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(T) * static_cast<size_t>(m.size())));
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path,
                     const ParameterStore<T>& store, int64_t iteration,
                     uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  NDR_CHECK(f.good(), "save_checkpoint: cannot open " + path.string());
  f.write(detail::kCkptMagic, 8);
  detail::write_pod(f, static_cast<uint32_t>(sizeof(T)));
  detail::write_pod(f, config_hash);
  detail::write_pod(f, iteration);
  detail::write_pod(f, static_cast<uint64_t>(store.entries().size()));
  for (const auto& [name, e] : store.entries()) {
    detail::write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(f, static_cast<int64_t>(e.value.rows()));
    detail::write_pod(f, static_cast<int64_t>(e.value.cols()));
    detail::write_pod(f, e.step);
    detail::write_mat(f, e.value);
    detail::write_mat(f, e.m1);
    detail::write_mat(f, e.m2);
  }
  NDR_CHECK(f.good(), "save_checkpoint: write failed for " + path.string());
}

// Restores into an already-initialized store; every checkpoint entry must
// exist with a matching shape (the configuration must match the training
// run). Returns the stored iteration.
template <class T>
int64_t load_checkpoint(const std::filesystem::path& path,
                        ParameterStore<T>& store,
                        uint64_t* config_hash_out = nullptr) {
  std::ifstream f(path, std::ios::binary);
  NDR_CHECK(f.good(), "load_checkpoint: cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  NDR_CHECK(f.good() && std::memcmp(magic, detail::kCkptMagic, 8) == 0,
            "load_checkpoint: bad magic in " + path.string());
  uint32_t scalar = 0;
  detail::read_pod(f, scalar);
  NDR_CHECK(scalar == sizeof(T),
            "load_checkpoint: scalar width mismatch in " + path.string());
  uint64_t config_hash = 0;
  int64_t iteration = 0;
  uint64_t count = 0;
  detail::read_pod(f, config_hash);
  detail::read_pod(f, iteration);
  detail::read_pod(f, count);
  if (config_hash_out) *config_hash_out = config_hash;

  for (uint64_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    detail::read_pod(f, len);
    NDR_CHECK(f.good() && len < 4096, "load_checkpoint: corrupt name length");
    std::string name(len, '\0');
    f.read(name.data(), len);
    int64_t rows = 0, cols = 0, step = 0;
    detail::read_pod(f, rows);
    detail::read_pod(f, cols);
    detail::read_pod(f, step);
    NDR_CHECK(store.has(name), "load_checkpoint: unknown parameter " + name);
    ParamEntry<T>& e = store.at(name);
    NDR_CHECK(e.value.rows() == rows && e.value.cols() == cols,
              "load_checkpoint: shape mismatch for " + name);
    e.step = step;
    detail::read_mat(f, e.value);
    detail::read_mat(f, e.m1);
    detail::read_mat(f, e.m2);
  }
  NDR_CHECK(f.good(), "load_checkpoint: truncated file " + path.string());
  return iteration;
}

}  // namespace ndr
