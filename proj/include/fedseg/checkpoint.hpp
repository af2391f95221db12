#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fedseg/params.hpp"

namespace fedseg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sidecar metadata written next to each checkpoint.
struct CheckpointMeta {
  int round = 0;
  std::string rule;
  std::uint64_t seed = 0;
};

// Binary layout: magic "FSCKPT01", u32 tensor count, then per tensor a u32
// rank and u32 dims, then all values as little-endian 64-bit floats.
// The sidecar "<path>.meta" is a key=value text record (round, rule, seed).
inline void save_checkpoint(const std::filesystem::path& path,
                            const ParameterSet& params,
                            const CheckpointMeta& meta) {
  params.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out.write("FSCKPT01", 8);
  const auto write_u32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  write_u32(static_cast<std::uint32_t>(params.layout.size()));
  for (const auto& shape : params.layout) {
    write_u32(static_cast<std::uint32_t>(shape.dims.size()));
    for (auto d : shape.dims) write_u32(d);
  }
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
  if (!out) throw CheckpointError("short write on checkpoint: " + path.string());
  out.close();

  std::ofstream side(path.string() + ".meta", std::ios::trunc);
  if (!side) throw CheckpointError("cannot open sidecar for writing");
  side << "round=" << meta.round << "\n"
       << "rule=" << meta.rule << "\n"
       << "seed=" << meta.seed << "\n";
}

inline ParameterSet load_checkpoint(const std::filesystem::path& path,
                                    CheckpointMeta* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "FSCKPT01")
    throw CheckpointError("bad checkpoint magic: " + path.string());
  const auto read_u32 = [&in]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  ParameterSet p;
  const std::uint32_t n_tensors = read_u32();
  if (!in || n_tensors > 1u << 20) throw CheckpointError("corrupt tensor count");
  p.layout.resize(n_tensors);
  for (auto& shape : p.layout) {
    const std::uint32_t rank = read_u32();
    if (!in || rank > 8) throw CheckpointError("corrupt tensor rank");
    shape.dims.resize(rank);
    for (auto& d : shape.dims) d = read_u32();
  }
  p.values.resize(layout_count(p.layout));
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  if (!in) throw CheckpointError("truncated checkpoint values");
  p.validate();

  if (meta != nullptr) {
    std::ifstream side(path.string() + ".meta");
    if (side) {
      std::string line;
      while (std::getline(side, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "round") meta->round = std::stoi(val);
        else if (key == "rule") meta->rule = val;
        else if (key == "seed") meta->seed = std::stoull(val);
      }
    }
  }
  return p;
}

}  // namespace fedseg
