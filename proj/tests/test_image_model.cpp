#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "san/gradcheck.hpp"
#include "san/image_model.hpp"

using namespace san;

namespace {

RegionFeatureMap random_map(std::size_t g, std::size_t d_raw, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0, 1);
  RegionFeatureMap f{g * g, d_raw, std::vector<float>(g * g * d_raw)};
  for (auto& v : f.values) v = n(rng);
  return f;
}

std::vector<char> header(std::uint32_t m, std::uint32_t d) {
  std::vector<char> out{'S', 'A', 'N', 'F'};
  for (std::uint32_t v : {1u, m, d}) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  }
  return out;
}

void push_f32(std::vector<char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

}  // namespace

TEST(FeatureFile, HandBuiltBytesDecode) {
  auto bytes = header(4, 2);
  for (int i = 1; i <= 8; ++i) push_f32(bytes, static_cast<float>(i));
  RegionFeatureMap f = decode_feature_map(bytes);
  EXPECT_EQ(f.regions, 4u);
  EXPECT_EQ(f.raw_dim, 2u);
  EXPECT_EQ(f.grid_side(), 2u);
  EXPECT_EQ(f.at(0, 0), 1.0f);
  EXPECT_EQ(f.at(0, 1), 2.0f);
  EXPECT_EQ(f.at(3, 0), 7.0f);
  EXPECT_EQ(f.at(3, 1), 8.0f);
  EXPECT_EQ(encode_feature_map(f), bytes);
}

TEST(FeatureFile, RoundTripIsBitwise) {
  const auto dir = std::filesystem::temp_directory_path() / "san_sanf_test";
  std::filesystem::create_directories(dir);
  RegionFeatureMap f = random_map(7, 16, 3);
  write_feature_file(dir / "a.sanf", f);
  RegionFeatureMap back = read_feature_file(dir / "a.sanf");
  EXPECT_EQ(back, f);
  EXPECT_EQ(read_file_bytes(dir / "a.sanf"), encode_feature_map(f));
  EXPECT_EQ(std::filesystem::file_size(dir / "a.sanf"), 16u + 49u * 16u * 4u);
  std::filesystem::remove_all(dir);
}

TEST(FeatureFile, TruncatedPayload) {
  auto bytes = encode_feature_map(random_map(14, 512, 5));
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_feature_map(bytes), FormatError);
}

TEST(FeatureFile, BadMagicVersionAndShape) {
  auto good = encode_feature_map(random_map(2, 2, 6));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_feature_map(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode_feature_map(bad_version), FormatError);
  auto not_square = header(3, 1);
  for (int i = 0; i < 3; ++i) push_f32(not_square, 0.f);
  EXPECT_THROW(decode_feature_map(not_square), FormatError);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_feature_map(trailing), FormatError);
  EXPECT_THROW(read_feature_file("/nonexistent/x.sanf"), Error);
}

TEST(PixelBlocks, FullResolutionGeometry) {
  PixelBlock b = region_pixel_block(0, 14, 448);
  EXPECT_EQ(b.side, 32u);
  PixelBlock last = region_pixel_block(195, 14, 448);
  EXPECT_EQ(last.x0, 13u * 32u);
  EXPECT_EQ(last.y0, 13u * 32u);
  PixelBlock mid = region_pixel_block(17, 14, 448);  // column 3, row 1
  EXPECT_EQ(mid.x0, 96u);
  EXPECT_EQ(mid.y0, 32u);
  EXPECT_THROW(region_pixel_block(0, 5, 448), ContractError);
}

TEST(Projection, ZeroWeightsGiveZeros) {
  Rng rng(1);
  ImageProjection p = ImageProjection::init(3, 4, rng);
  for (auto& v : p.weight.mutable_values()) v = 0;
  Tensor v = project_regions(random_map(2, 4, 1), p);
  for (real x : v.values()) EXPECT_EQ(x, 0);
}

TEST(Projection, ScalarOracle) {
  ImageProjection p{Tensor::matrix(1, 1, {1}), Tensor::vector({0})};
  RegionFeatureMap f{1, 1, {1.0f}};
  EXPECT_NEAR(project_regions(f, p).item(), std::tanh(1.0), 1e-15);
  EXPECT_NEAR(project_regions(f, p).item(), 0.7616, 1e-4);
}

TEST(Projection, RegionwiseAndPermutationEquivariant) {
  Rng rng(2);
  ImageProjection p = ImageProjection::init(5, 3, rng);
  RegionFeatureMap f = random_map(2, 3, 9);
  for (std::size_t k = 0; k < 3; ++k) f.values[1 * 3 + k] = f.values[2 * 3 + k];
  Tensor v = project_regions(f, p);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(v.at(1, j), v.at(2, j));
    EXPECT_LT(std::abs(v.at(0, j)), 1.0);
  }
  RegionFeatureMap swapped = f;
  for (std::size_t k = 0; k < 3; ++k) std::swap(swapped.values[0 * 3 + k], swapped.values[3 * 3 + k]);
  Tensor w = project_regions(swapped, p);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(w.at(0, j), v.at(3, j));
    EXPECT_EQ(w.at(3, j), v.at(0, j));
  }
}

TEST(Projection, DimensionMismatch) {
  Rng rng(3);
  ImageProjection p = ImageProjection::init(5, 3, rng);
  EXPECT_THROW(project_regions(random_map(2, 4, 1), p), DimensionError);
}

TEST(Projection, GradientPassesFiniteDifferences) {
  Rng rng(4);
  ImageProjection p = ImageProjection::init(4, 3, rng);
  Tensor f = random_map(2, 3, 10).to_tensor();
  auto r = finite_diff_check([&] { return ops::sum(ops::mul(project_regions(f, p), project_regions(f, p))); },
                             {p.weight, p.bias, f}, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4);
}
