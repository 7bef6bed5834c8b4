#ifndef SAN_IMAGE_MODEL_HPP
#define SAN_IMAGE_MODEL_HPP

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "san/binary_io.hpp"
#include "san/io_util.hpp"
#include "san/ops.hpp"
#include "san/params.hpp"

namespace san {

/// Per-region image features f_I, one row per region. Regions are numbered
/// row-major over a g×g grid: region i sits at column i mod g, row i div g.
struct RegionFeatureMap {
  std::size_t regions = 0;    // m = g²
  std::size_t raw_dim = 0;    // d_raw
  std::vector<float> values;  // m × d_raw, row-major by region
  std::size_t source_image_size = 448;

  std::size_t grid_side() const {
    return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(regions))));
  }

  float at(std::size_t region, std::size_t k) const { return values[region * raw_dim + k]; }

  /// m×d_raw tensor in working precision.
  Tensor to_tensor() const {
    return Tensor({regions, raw_dim}, std::vector<real>(values.begin(), values.end()));
  }

  void validate() const {
    const std::size_t g = grid_side();
    if (g * g != regions || regions == 0) {
      throw FormatError("feature map: region count " + std::to_string(regions) +
                        " is not a perfect square");
    }
    if (values.size() != regions * raw_dim) throw FormatError("feature map: payload size mismatch");
    for (float v : values) {
      if (!std::isfinite(v)) throw FormatError("feature map: non-finite value");
    }
  }

  bool operator==(const RegionFeatureMap& other) const = default;
};

/// Pixel rectangle covered by one region on the source image.
struct PixelBlock {
  std::size_t x0, y0, side;
};

inline PixelBlock region_pixel_block(std::size_t region, std::size_t grid_side,
                                     std::size_t image_size) {
  if (grid_side == 0 || image_size % grid_side != 0) {
    throw ContractError("region block: image size not divisible by grid side");
  }
  const std::size_t side = image_size / grid_side;
  return {(region % grid_side) * side, (region / grid_side) * side, side};
}

inline constexpr char kFeatureMagic[] = "SANF";
inline constexpr std::uint32_t kFeatureVersion = 1;

/// "SANF", u32 version, u32 m, u32 d_raw, then m·d_raw f32, all little-endian.
inline std::vector<char> encode_feature_map(const RegionFeatureMap& f) {
  binary::Writer w;
  w.bytes(std::string_view(kFeatureMagic, 4));
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(f.regions));
  w.u32(static_cast<std::uint32_t>(f.raw_dim));
  for (float v : f.values) w.f32(v);
  return w.data();
}

inline RegionFeatureMap decode_feature_map(const std::vector<char>& bytes,
                                           const std::string& what = "SANF") {
  binary::Reader r(bytes, what);
  if (r.bytes(4) != std::string_view(kFeatureMagic, 4)) throw FormatError(what + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  RegionFeatureMap f;
  f.regions = r.u32();
  f.raw_dim = r.u32();
  const std::size_t g = f.grid_side();
  if (g * g != f.regions || f.regions == 0) {
    throw FormatError(what + ": region count " + std::to_string(f.regions) +
                      " is not a perfect square");
  }
  const std::size_t n = f.regions * f.raw_dim;
  r.need(n * 4);
  if (r.remaining() != n * 4) throw FormatError(what + ": trailing bytes after payload");
  f.values.resize(n);
  for (auto& v : f.values) v = r.f32();
  f.validate();
  return f;
}

inline void write_feature_file(const std::filesystem::path& path, const RegionFeatureMap& f) {
  write_file_bytes(path, encode_feature_map(f));
}

inline RegionFeatureMap read_feature_file(const std::filesystem::path& path) {
  return decode_feature_map(read_file_bytes(path), path.string());
}

/// v_I = tanh(W_I f_I + b_I), mapping raw features to the question dimension.
struct ImageProjection {
  Tensor weight;  // d × d_raw
  Tensor bias;    // d

  std::size_t out_dim() const { return weight.dim(0); }
  std::size_t raw_dim() const { return weight.dim(1); }

  static ImageProjection init(std::size_t d, std::size_t raw_dim, Rng& rng) {
    return {xavier_uniform(d, raw_dim, rng), zero_param({d})};
  }

  void collect(ParamList& out, const std::string& prefix) const {
    out.push_back({prefix + "w_image", weight});
    out.push_back({prefix + "b_image", bias});
  }
};

/// Projects stacked region features (rows = regions, possibly several images
/// back to back) to rows of v_I: row i = tanh(W_I f_i + b_I).
inline Tensor project_regions(const Tensor& features, const ImageProjection& p) {
  if (features.rank() != 2 || features.dim(1) != p.raw_dim()) {
    throw DimensionError("project_regions: features " + shape_string(features.shape()) +
                         " do not match W_I " + shape_string(p.weight.shape()));
  }
  return ops::tanh(ops::add_rows(ops::matmul_nt(features, p.weight), p.bias));
}

inline Tensor project_regions(const RegionFeatureMap& f, const ImageProjection& p) {
  return project_regions(f.to_tensor(), p);
}

}  // namespace san

#endif  // SAN_IMAGE_MODEL_HPP
