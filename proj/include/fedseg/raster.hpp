#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseg/grid.hpp"
#include "fedseg/json_io.hpp"
#include "fedseg/phantom.hpp"

namespace fedseg {

struct RasterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

static_assert(std::endian::native == std::endian::little,
              "raster format is little-endian; big-endian hosts unsupported");

// Binary grid format: magic "FSRAST01", u32 channel count, u32 rows,
// u32 cols, f64 spacing (x, y, slice), then each channel's values as
// row-major little-endian 64-bit floats. Studies carry the channels
// (dwi, adc, mask); prediction files carry a single mask channel.
struct RasterData {
  std::vector<Image> channels;
  Spacing spacing;
};

namespace detail {
inline void write_raster(const std::filesystem::path& path,
                         const std::vector<const Image*>& channels,
                         const Spacing& sp) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RasterError("cannot open raster for writing: " + path.string());
  out.write("FSRAST01", 8);
  const auto write_u32 = [&out](std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  const auto write_f64 = [&out](double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  write_u32(static_cast<std::uint32_t>(channels.size()));
  write_u32(static_cast<std::uint32_t>(channels.front()->rows));
  write_u32(static_cast<std::uint32_t>(channels.front()->cols));
  write_f64(sp.x_mm);
  write_f64(sp.y_mm);
  write_f64(sp.slice_mm);
  for (const auto* ch : channels)
    out.write(reinterpret_cast<const char*>(ch->data.data()),
              static_cast<std::streamsize>(ch->data.size() * sizeof(double)));
  if (!out) throw RasterError("short write on raster: " + path.string());
}
}  // namespace detail

inline void write_study_raster(const std::filesystem::path& path,
                               const PhantomStudy& study) {
  Image mask_ch(study.gt_mask.rows, study.gt_mask.cols, 0.0);
  for (std::size_t i = 0; i < mask_ch.data.size(); ++i)
    mask_ch.data[i] = study.gt_mask.data[i] ? 1.0 : 0.0;
  detail::write_raster(path, {&study.dwi, &study.adc, &mask_ch}, study.spacing);
}

inline void write_mask_raster(const std::filesystem::path& path, const Mask& mask,
                              const Spacing& sp) {
  Image ch(mask.rows, mask.cols, 0.0);
  for (std::size_t i = 0; i < ch.data.size(); ++i)
    ch.data[i] = mask.data[i] ? 1.0 : 0.0;
  detail::write_raster(path, {&ch}, sp);
}

inline RasterData read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RasterError("cannot open raster: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "FSRAST01")
    throw RasterError("bad raster magic: " + path.string());
  const auto read_u32 = [&in]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  const std::uint32_t n_ch = read_u32();
  const std::uint32_t rows = read_u32();
  const std::uint32_t cols = read_u32();
  if (!in || n_ch == 0 || n_ch > 16 || rows == 0 || cols == 0 ||
      rows > 1u << 14 || cols > 1u << 14)
    throw RasterError("corrupt raster header: " + path.string());
  RasterData data;
  in.read(reinterpret_cast<char*>(&data.spacing.x_mm), sizeof(double));
  in.read(reinterpret_cast<char*>(&data.spacing.y_mm), sizeof(double));
  in.read(reinterpret_cast<char*>(&data.spacing.slice_mm), sizeof(double));
  data.channels.assign(n_ch, Image(static_cast<int>(rows), static_cast<int>(cols), 0.0));
  for (auto& ch : data.channels)
    in.read(reinterpret_cast<char*>(ch.data.data()),
            static_cast<std::streamsize>(ch.data.size() * sizeof(double)));
  if (!in) throw RasterError("truncated raster: " + path.string());
  return data;
}

inline Mask mask_from_channel(const Image& ch) {
  Mask m(ch.rows, ch.cols, 0);
  for (std::size_t i = 0; i < ch.data.size(); ++i)
    m.data[i] = ch.data[i] > 0.5 ? 1 : 0;
  return m;
}

inline PhantomStudy study_from_raster(const RasterData& data) {
  if (data.channels.size() != 3)
    throw RasterError("study raster must have 3 channels (dwi, adc, mask)");
  PhantomStudy s;
  s.dwi = data.channels[0];
  s.adc = data.channels[1];
  s.gt_mask = mask_from_channel(data.channels[2]);
  s.spacing = data.spacing;
  return s;
}

// Writes one raster per study plus manifest.json describing the federation.
inline void write_dataset(const std::filesystem::path& dir,
                          const std::vector<CenterDataset>& datasets,
                          std::uint64_t master_seed) {
  std::filesystem::create_directories(dir);
  json manifest;
  manifest["master_seed"] = master_seed;
  manifest["centers"] = json::array();
  manifest["studies"] = json::array();
  for (const auto& ds : datasets) {
    manifest["centers"].push_back(ds.profile);
    const auto emit = [&](const std::vector<PhantomStudy>& studies, const char* split) {
      for (const auto& s : studies) {
        const std::string file = s.patient_id + ".rst";
        write_study_raster(dir / file, s);
        manifest["studies"].push_back(
            {{"file", file},
             {"patient_id", s.patient_id},
             {"center_id", s.center_id},
             {"category", std::string(1, category_char(s.category))},
             {"split", split}});
      }
    };
    emit(ds.train, "train");
    emit(ds.test, "test");
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw RasterError("cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace fedseg
