#pragma once

// Versioned text checkpoints for GCN parameters.
//
//   rege-checkpoint 1
//   seed <u64>
//   config <16 hex digits, FNV-1a of the config JSON>
//   tensors <count>
//   <name> <rows> <cols>
//   <row values, round-trip precision>...

#include "rege/core.hpp"
#include "rege/io.hpp"
#include "rege/nn.hpp"
#include "rege/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace rege {

inline constexpr int kCheckpointVersion = 1;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const TrainConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

struct Checkpoint {
  nn::GCNParams params;
  std::uint64_t seed = 0;
  std::string config_hash;
};

inline std::string serialize_checkpoint(const nn::GCNParams& p, const TrainConfig& cfg) {
  std::ostringstream out;
  out << "rege-checkpoint " << kCheckpointVersion << '\n'
      << "seed " << cfg.seed << '\n'
      << "config " << config_hash(cfg) << '\n';
  const std::vector<std::pair<const char*, const Matrix*>> named =
      p.has_bias() ? std::vector<std::pair<const char*, const Matrix*>>{{"w1", &p.w1}, {"w2", &p.w2}, {"b1", &p.b1}, {"b2", &p.b2}}
                   : std::vector<std::pair<const char*, const Matrix*>>{{"w1", &p.w1}, {"w2", &p.w2}};
  out << "tensors " << named.size() << '\n';
  for (const auto& [name, m] : named) {
    out << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) out << (j ? " " : "") << io::fmt_double((*m)(i, j));
      out << '\n';
    }
  }
  return out.str();
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  Checkpoint c;
  if (!(in >> tag >> version) || tag != "rege-checkpoint") throw ParseError("not a rege checkpoint");
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  std::size_t count = 0;
  if (!(in >> tag >> c.seed) || tag != "seed") throw ParseError("checkpoint: missing seed");
  if (!(in >> tag >> c.config_hash) || tag != "config") throw ParseError("checkpoint: missing config");
  if (!(in >> tag >> count) || tag != "tensors") throw ParseError("checkpoint: missing tensor count");
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0)
      throw ParseError("checkpoint: bad tensor header");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> m(i, j))) throw ParseError("checkpoint: truncated tensor " + name);
    if (name == "w1") c.params.w1 = std::move(m);
    else if (name == "w2") c.params.w2 = std::move(m);
    else if (name == "b1") c.params.b1 = std::move(m);
    else if (name == "b2") c.params.b2 = std::move(m);
    else throw ParseError("checkpoint: unknown tensor " + name);
  }
  if (c.params.w1.cols() != c.params.w2.rows()) throw DimensionError("checkpoint: W1/W2 do not chain");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const nn::GCNParams& p,
                            const TrainConfig& cfg) {
  io::atomic_write(path, serialize_checkpoint(p, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace rege
