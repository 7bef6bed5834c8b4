#ifndef SAN_VIZ_HPP
#define SAN_VIZ_HPP

// Attention maps as image-sized heatmaps: bilinear upsampling of the g×g
// distribution, separable Gaussian smoothing, PGM export and a text overlay
// against the scene grid.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "san/dataset.hpp"
#include "san/io_util.hpp"

namespace san {

struct Heatmap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> intensity;  // row-major, height × width
  std::size_t layer = 0;

  double at(std::size_t x, std::size_t y) const { return intensity[y * width + x]; }
  double& at(std::size_t x, std::size_t y) { return intensity[y * width + x]; }
};

/// Rescales so the maximum is 1; an all-zero map is left unchanged.
inline void normalize_max(Heatmap& h) {
  const double hi = h.intensity.empty() ? 0.0 : *std::max_element(h.intensity.begin(), h.intensity.end());
  if (hi > 0) {
    for (auto& v : h.intensity) v /= hi;
  }
}

/// Reshapes p (length g², row-major) to g×g and bilinearly resamples to
/// target_size². Pixel (bx·s + ⌊s/2⌋, by·s + ⌊s/2⌋), s = target/g, lands
/// exactly on region (bx, by); samples beyond the outer centres clamp.
inline Heatmap upsample_attention(const std::vector<double>& p, std::size_t grid_side,
                                  std::size_t target_size, std::size_t layer = 0) {
  if (grid_side == 0 || p.size() != grid_side * grid_side) {
    throw ContractError("upsample_attention: distribution of length " + std::to_string(p.size()) +
                        " is not " + std::to_string(grid_side) + "²");
  }
  if (target_size == 0 || target_size % grid_side != 0) {
    throw ContractError("upsample_attention: target size " + std::to_string(target_size) +
                        " not divisible by grid side " + std::to_string(grid_side));
  }
  const std::size_t side = target_size / grid_side;
  const double offset = static_cast<double>(side / 2);
  const double last = static_cast<double>(grid_side - 1);
  Heatmap h{target_size, target_size, std::vector<double>(target_size * target_size), layer};
  auto source = [&](std::size_t px) {
    return std::clamp((static_cast<double>(px) - offset) / static_cast<double>(side), 0.0, last);
  };
  for (std::size_t y = 0; y < target_size; ++y) {
    const double sy = source(y);
    const std::size_t y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, grid_side - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_size; ++x) {
      const double sx = source(x);
      const std::size_t x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, grid_side - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1 - fx) * p[y0 * grid_side + x0] + fx * p[y0 * grid_side + x1];
      const double bottom = (1 - fx) * p[y1 * grid_side + x0] + fx * p[y1 * grid_side + x1];
      h.at(x, y) = (1 - fy) * top + fy * bottom;
    }
  }
  normalize_max(h);
  return h;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : k) w /= total;
  return k;
}

/// Separable Gaussian filter with clamped borders, truncated at 3σ. The
/// result is rescaled to max 1 unless `renormalize` is false.
inline Heatmap gaussian_blur(const Heatmap& h, double sigma, bool renormalize = true) {
  if (!(sigma > 0)) throw ContractError("gaussian_blur: sigma must be positive");
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  const auto w = static_cast<std::ptrdiff_t>(h.width), ht = static_cast<std::ptrdiff_t>(h.height);
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };

  Heatmap tmp = h;
  for (std::ptrdiff_t y = 0; y < ht; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               h.intensity[static_cast<std::size_t>(y * w + clampi(x + k, w))];
      }
      tmp.intensity[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  Heatmap out = tmp;
  for (std::ptrdiff_t y = 0; y < ht; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp.intensity[static_cast<std::size_t>(clampi(y + k, ht) * w + x)];
      }
      out.intensity[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  if (renormalize) normalize_max(out);
  return out;
}

/// Pixel intensity byte: floor(v·255 + 0.5), v clamped to [0, 1].
inline unsigned char to_gray(double v) {
  return static_cast<unsigned char>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

inline std::vector<char> encode_pgm(const Heatmap& h) {
  const std::string header =
      "P5\n" + std::to_string(h.width) + " " + std::to_string(h.height) + "\n255\n";
  std::vector<char> out(header.begin(), header.end());
  out.reserve(header.size() + h.intensity.size());
  for (double v : h.intensity) out.push_back(static_cast<char>(to_gray(v)));
  return out;
}

/// Binary PGM (P5, maxval 255).
inline void export_pgm(const Heatmap& h, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(h));
}

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> pixels;
};

inline GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream is(text);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  if (!(is >> magic >> w >> h >> maxval) || magic != "P5" || maxval != 255) {
    throw FormatError(path.string() + ": not an 8-bit P5 PGM");
  }
  is.get();  // single whitespace after maxval
  const auto start = static_cast<std::size_t>(is.tellg());
  if (bytes.size() != start + w * h) throw FormatError(path.string() + ": pixel count mismatch");
  GrayImage img{w, h, {}};
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
  return img;
}

/// Mean intensity of each region's pixel block.
inline std::vector<double> block_means(const Heatmap& h, std::size_t grid_side) {
  if (grid_side == 0 || h.width % grid_side != 0 || h.height % grid_side != 0) {
    throw ContractError("block_means: heatmap does not tile into the grid");
  }
  const std::size_t bw = h.width / grid_side, bh = h.height / grid_side;
  std::vector<double> out(grid_side * grid_side, 0.0);
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x) out[(y / bh) * grid_side + x / bw] += h.at(x, y);
  for (auto& v : out) v /= static_cast<double>(bw * bh);
  return out;
}

/// Two g×g panels: attention shading by quantile (" .:-=+*#%@") on the left
/// and object labels on the right: colour initial, then C/S/T for circle,
/// square, triangle and * for star ("rC", "b*").
inline std::string overlay_ascii(const Heatmap& h, const Scene& scene) {
  static const std::string ramp = " .:-=+*#%@";
  const std::size_t g = scene.grid_side;
  const auto cells = block_means(h, g);
  std::vector<double> sorted = cells;
  std::sort(sorted.begin(), sorted.end());
  auto shade = [&](double v) {
    const auto rank = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
    std::size_t level = (rank * ramp.size()) / (sorted.size() + 1);
    return ramp[std::min(level, ramp.size() - 1)];
  };
  std::ostringstream os;
  for (std::size_t y = 0; y < g; ++y) {
    os << '|';
    for (std::size_t x = 0; x < g; ++x) {
      const char c = shade(cells[y * g + x]);
      os << c << c;
    }
    os << "|   |";
    for (std::size_t x = 0; x < g; ++x) {
      if (const auto& o = scene.cells[y * g + x]) {
        static constexpr char kShapeMarks[] = {'C', 'S', 'T', '*'};
        static_assert(sizeof kShapeMarks == kShapeNames.size());
        os << kColorNames[o->color][0] << kShapeMarks[o->shape];
      } else {
        os << "..";
      }
      if (x + 1 < g) os << ' ';
    }
    os << "|\n";
  }
  return os.str();
}

}  // namespace san

#endif  // SAN_VIZ_HPP
