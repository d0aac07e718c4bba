#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "segsr/metrics.hpp"
#include "segsr/resize.hpp"
#include "support.hpp"

namespace segsr {
namespace {

using testing::random_tensor;
using testing::TempDir;

Tensor<double> plane(std::size_t h, std::size_t w, double v) { return Tensor<double>(Shape{h, w}, v); }

Tensor<double> checkerboard(std::size_t n, double lo, double hi) {
  Tensor<double> t(Shape{n, n});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) t[y * n + x] = (x + y) % 2 ? hi : lo;
  return t;
}

// ---------------------------------------------------------------- luma

TEST(RgbToY, WhiteBlackAndGray) {
  auto y_of = [](double v) { return rgb_to_y(Tensor<double>(Shape{3, 1, 1}, v))[0]; };
  EXPECT_NEAR(y_of(1.0), 235.0 / 255.0, 1e-12);
  EXPECT_NEAR(y_of(0.0), 16.0 / 255.0, 1e-12);
  EXPECT_NEAR(y_of(0.5), (16.0 + 219.0 * 0.5) / 255.0, 1e-12);
  EXPECT_THROW(rgb_to_y(Tensor<double>(Shape{2, 4, 4})), ShapeError);
}

TEST(RgbToY, ChannelWeights) {
  Tensor<float> px(Shape{1, 3, 1, 3});
  px[0 * 3 + 0] = 1.0f;  // red pixel
  px[1 * 3 + 1] = 1.0f;  // green pixel
  px[2 * 3 + 2] = 1.0f;  // blue pixel
  const auto y = rgb_to_y(px);
  ASSERT_EQ(y.shape(), Shape({1, 3}));
  EXPECT_NEAR(y[0], (16 + 65.481) / 255, 1e-6);
  EXPECT_NEAR(y[1], (16 + 128.553) / 255, 1e-6);
  EXPECT_NEAR(y[2], (16 + 24.966) / 255, 1e-6);
}

// ---------------------------------------------------------------- PSNR

TEST(Psnr, IdenticalIsInfiniteAndOffsetIsTwentyDb) {
  Rng rng(1);
  const auto a = random_tensor<double>(Shape{8, 8}, rng, 0.2, 0.8);
  EXPECT_EQ(psnr(a, a), kPsnrInfinite);
  Tensor<double> b = a;
  for (double& v : b.data()) v += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_THROW(psnr(a, plane(8, 9, 0)), ShapeError);
}

TEST(Psnr, SymmetricAndDecreasingInNoise) {
  Rng rng(2);
  const auto a = random_tensor<double>(Shape{32, 32}, rng, 0.2, 0.8);
  const auto n = random_tensor<double>(Shape{32, 32}, rng);
  double last = kPsnrInfinite;
  for (double amp : {0.01, 0.05, 0.2}) {
    Tensor<double> b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += amp * n[i];
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_LT(psnr(a, b), last);
    last = psnr(a, b);
  }
}

// ---------------------------------------------------------------- SSIM

TEST(Ssim, GaussianWindowIsNormalisedAndSymmetric) {
  const auto w = gaussian_window(11, 1.5);
  double s = 0;
  for (double v : w) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_DOUBLE_EQ(w[i], w[10 - i]);
  EXPECT_GT(w[5], w[4]);
}

TEST(Ssim, IdenticalIsOneAndSymmetric) {
  Rng rng(3);
  const auto a = random_tensor<double>(Shape{20, 24}, rng, 0, 1);
  const auto b = random_tensor<double>(Shape{20, 24}, rng, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
  EXPECT_THROW(ssim(plane(10, 10, 0), plane(10, 10, 0)), ShapeError);
  EXPECT_THROW(ssim(a, plane(20, 23, 0)), ShapeError);
}

TEST(Ssim, CheckerboardAgainstInverseIsNearMinusOne) {
  const auto a = checkerboard(16, 0.1, 0.9), b = checkerboard(16, 0.9, 0.1);
  EXPECT_LT(ssim(a, b), -0.99);
}

TEST(Ssim, MatchesDirectWindowSummation) {
  Rng rng(4);
  // Noise pair, checkerboard pair, and a ramp against its bicubic round trip.
  const auto n1 = random_tensor<double>(Shape{24, 24}, rng, 0, 1);
  Tensor<double> n2 = n1;
  for (double& v : n2.data()) v = std::clamp(v + rng.uniform(-0.2, 0.2), 0.0, 1.0);
  Tensor<double> ramp(Shape{1, 1, 32, 32});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) ramp[y * 32 + x] = 0.5 + 0.4 * std::sin(0.3 * x) * std::cos(0.2 * y);
  const auto back = bicubic_resize(bicubic_resize(ramp, ScaleFactor{4, true}), ScaleFactor{4, false});
  const std::vector<std::pair<Tensor<double>, Tensor<double>>> fixtures{
      {n1, n2},
      {checkerboard(16, 0.2, 0.7), checkerboard(16, 0.7, 0.2)},
      {ramp.reshaped(Shape{32, 32}), back.reshaped(Shape{32, 32})}};
  for (const auto& [a, b] : fixtures) EXPECT_NEAR(ssim(a, b), testing::ssim_reference(a, b), 1e-4);
}

TEST(Ssim, ShiftInvariantWhenLocalMeansAgree) {
  // b differs from a only by a pixel-level checkerboard, whose Gaussian
  // local mean is negligible, so the luminance term stays at 1.
  Rng rng(5);
  const auto a = random_tensor<double>(Shape{24, 24}, rng, 0.2, 0.6);
  Tensor<double> b = a;
  const auto cb = checkerboard(24, -0.05, 0.05);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += cb[i];
  const double base = ssim(a, b);
  for (double c : {0.01, 0.1, 0.3}) {
    Tensor<double> x = a, y = b;
    for (double& v : x.data()) v += c;
    for (double& v : y.data()) v += c;
    EXPECT_NEAR(ssim(x, y), base, 1e-6) << c;
  }
}

// ---------------------------------------------------------------- images

TEST(ImageBuffer, EightBitRoundTripIsIdentity) {
  ImageBuffer img(256, 1);
  for (std::size_t i = 0; i < 256; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.rgb[i * 3 + c] = static_cast<std::uint8_t>((i + 85 * c) % 256);
  EXPECT_EQ(ImageBuffer::from_tensor(img.to_tensor()), img);
}

TEST(ImageBuffer, PngRoundTripAndErrors) {
  TempDir dir("png");
  const SyntheticPair p = synth_pair(20, 28, 3);
  write_png(dir / "a.png", p.image);
  const ImageBuffer back = read_png(dir / "a.png");
  EXPECT_EQ(back, p.image);
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), IoError);
}

// ---------------------------------------------------------------- segmentation maps

TEST(SegMap, FileRoundTripIsExact) {
  TempDir dir("spm");
  const SegProbMap m = synth_pair(12, 16, 4).seg;
  write_segmap(dir / "m.spm", m);
  EXPECT_EQ(read_segmap(dir / "m.spm"), m);
  const std::string bytes = testing::slurp(dir / "m.spm");
  EXPECT_EQ(bytes.size(), 16 + 12 * 16 * 8 * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "SPM1");
}

void write_raw(const std::filesystem::path& p, const char* magic, std::uint32_t h, std::uint32_t w, std::uint32_t c,
               const std::vector<float>& data) {
  std::ofstream os(p, std::ios::binary);
  os.write(magic, 4);
  for (std::uint32_t v : {h, w, c}) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

TEST(SegMap, MalformedFilesRejected) {
  TempDir dir("spmbad");
  std::vector<float> ok(8 * 2 * 2, 0.0f);
  for (std::size_t i = 0; i < 4; ++i) ok[7 * 4 + i] = 1.0f;
  write_raw(dir / "magic.spm", "SPM2", 2, 2, 8, ok);
  write_raw(dir / "chan.spm", "SPM1", 2, 2, 7, std::vector<float>(ok.begin(), ok.begin() + 28));
  write_raw(dir / "short.spm", "SPM1", 2, 2, 8, std::vector<float>(ok.begin(), ok.end() - 1));
  std::vector<float> bad = ok;
  bad[7 * 4 + 3] = 0.9f;  // row 1, col 1 sums to 0.9
  write_raw(dir / "sum.spm", "SPM1", 2, 2, 8, bad);
  write_raw(dir / "good.spm", "SPM1", 2, 2, 8, ok);
  EXPECT_THROW(read_segmap(dir / "magic.spm"), IoError);
  EXPECT_THROW(read_segmap(dir / "chan.spm"), IoError);
  EXPECT_THROW(read_segmap(dir / "short.spm"), IoError);
  try {
    read_segmap(dir / "sum.spm");
    FAIL() << "expected rejection";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, col 1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(read_segmap(dir / "good.spm"), SegProbMap::one_hot(SegCategory::background, 2, 2));
}

TEST(SegMap, ConstructorValidatesRangeAndSums) {
  Tensor<float> t = SegProbMap::uniform(3, 3).probs();
  t[0] = -0.01f;
  EXPECT_THROW(SegProbMap{t}, NumericalError);
  EXPECT_THROW(SegProbMap(Tensor<float>(Shape{7, 3, 3})), ShapeError);
  Tensor<float> near = SegProbMap::one_hot(SegCategory::sky, 2, 2).probs();
  near[0] = 1.0005f;
  EXPECT_THROW(SegProbMap{near}, NumericalError);
  near[0] = 0.9995f;
  EXPECT_NO_THROW(SegProbMap{near});
}

TEST(SynthSegmap, AllSky) {
  const SegProbMap m = synth_segmap({6, 5, {RegionSpec::rect(SegCategory::sky, 0, 0, 5, 6)}, 0.0});
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t y = 0; y < 6; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(m.at(c, y, x), c == 0 ? 1.0f : 0.0f);
}

TEST(SynthSegmap, TwoSoftHalfPlanesBlendAsPainted) {
  const double soft = 4.0;
  // sky where x >= 8, water where y >= 5, water painted last.
  const SegSynthSpec spec{10, 16,
                          {RegionSpec::half_plane(SegCategory::sky, 1, 0, -8),
                           RegionSpec::half_plane(SegCategory::water, 0, 1, -5)},
                          soft};
  const SegProbMap m = synth_segmap(spec);
  auto ramp = [&](double d) { return std::clamp(0.5 + d / soft, 0.0, 1.0); };
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const double ms = ramp(x + 0.5 - 8), mw = ramp(y + 0.5 - 5);
      EXPECT_NEAR(m.at(0, y, x), ms * (1 - mw), 1e-6);
      EXPECT_NEAR(m.at(4, y, x), mw, 1e-6);
      EXPECT_NEAR(m.at(7, y, x), (1 - ms) * (1 - mw), 1e-6);
      double s = 0;
      for (std::size_t c = 0; c < 8; ++c) s += m.at(c, y, x);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  // The column just right of the sky edge is a blend.
  EXPECT_NEAR(m.at(0, 0, 8), 0.625, 1e-6);
  EXPECT_THROW(synth_segmap({4, 4, {RegionSpec::half_plane(SegCategory::sky, 0, 0, 1)}, 0.0}), ConfigError);
}

// ---------------------------------------------------------------- samples

TEST(PrepareSample, FullCropHasQuarterSizeLr) {
  const SyntheticPair p = synth_pair(32, 32, 5);
  const auto s = prepare_sample(p.image.to_tensor(), p.seg, 32, std::uint64_t{1});
  EXPECT_EQ(s.lr.shape(), Shape({1, 3, 8, 8}));
  EXPECT_EQ(s.hr.shape(), Shape({1, 3, 32, 32}));
  EXPECT_EQ(s.seg.shape(), Shape({1, 8, 32, 32}));
  EXPECT_EQ(s.offset_x, 0u);
  EXPECT_EQ(s.offset_y, 0u);
  const SyntheticPair tall = synth_pair(40, 24, 5);
  const auto t = prepare_sample(tall.image.to_tensor(), tall.seg, 24, std::uint64_t{1});
  EXPECT_EQ(t.offset_x, 0u);
  EXPECT_EQ(t.offset_y % 4, 0u);
}

TEST(PrepareSample, ConstantImageGivesConstantLr) {
  const Tensor<float> hr(Shape{1, 3, 40, 40}, 0.37f);
  const auto s = prepare_sample(hr, SegProbMap::uniform(40, 40), 16, std::uint64_t{2});
  for (float v : s.lr.data()) EXPECT_NEAR(v, 0.37f, 1e-5);
}

TEST(PrepareSample, AlignedCropsSameSeedSameOffset) {
  const SyntheticPair p = synth_pair(48, 48, 6);
  const auto hr = p.image.to_tensor();
  const auto a = prepare_sample(hr, p.seg, 16, std::uint64_t{9});
  const auto b = prepare_sample(hr, p.seg, 16, std::uint64_t{9});
  EXPECT_EQ(a.offset_x, b.offset_x);
  EXPECT_EQ(a.offset_y, b.offset_y);
  EXPECT_EQ(testing::max_abs_diff(a.hr, b.hr), 0.0);
  // hr and seg are cut from the same window.
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      EXPECT_EQ(a.hr.at(0, 1, y, x), hr.at(0, 1, a.offset_y + y, a.offset_x + x));
      EXPECT_EQ(a.seg.at(0, 3, y, x), p.seg.at(3, a.offset_y + y, a.offset_x + x));
    }
  const auto lr = bicubic_resize(a.hr, ScaleFactor{4, true});
  EXPECT_EQ(testing::max_abs_diff(lr, a.lr), 0.0);
  EXPECT_THROW(prepare_sample(hr, p.seg, 52, std::uint64_t{1}), ShapeError);
  EXPECT_THROW(prepare_sample(hr, p.seg, 18, std::uint64_t{1}), ConfigError);
  EXPECT_THROW(prepare_sample(hr, SegProbMap::uniform(44, 48), 16, std::uint64_t{1}), ShapeError);
}

TEST(PrepareSample, OffsetsUniformChiSquare) {
  const Tensor<float> hr(Shape{1, 3, 40, 40}, 0.5f);
  const SegProbMap seg = SegProbMap::uniform(40, 40);
  constexpr std::size_t kSide = (40 - 16) / 4 + 1, kCells = kSide * kSide, kDraws = 10000;
  std::vector<double> counts(kCells, 0.0);
  Rng rng(77);
  for (std::size_t i = 0; i < kDraws; ++i) {
    const auto s = prepare_sample(hr, seg, 16, rng);
    ASSERT_EQ(s.offset_y % 4, 0u);
    ASSERT_EQ(s.offset_x % 4, 0u);
    counts[(s.offset_y / 4) * kSide + s.offset_x / 4] += 1;
  }
  const double expected = static_cast<double>(kDraws) / kCells;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(kCells - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001) << "chi2 = " << chi2;
}

// ---------------------------------------------------------------- dataset and batches

struct DatasetFixture : ::testing::Test {
  TempDir dir{"data"};
};

TEST_F(DatasetFixture, TenToOneMixWithinThreeSigma) {
  DatasetManifest m = testing::write_synthetic_set(dir.path(), 2, 16, 16, 3, 2);
  m.ratio_primary = 10;
  m.ratio_aux = 1;
  const Dataset data(m);
  Rng rng(2024);
  const Batch b = sample_batch(data, 11000, rng);
  const auto primary = std::count(b.tags.begin(), b.tags.end(), SourceTag::primary_set);
  const double sigma = std::sqrt(11000.0 * (10.0 / 11) * (1.0 / 11));
  EXPECT_NEAR(sigma, 30.15, 0.01);
  EXPECT_LE(std::abs(static_cast<double>(primary) - 10000.0), 3 * sigma) << primary;
  for (std::size_t i = 0; i < b.tags.size(); ++i) EXPECT_EQ(m.entries[b.indices[i]].tag, b.tags[i]);
}

TEST_F(DatasetFixture, PrimaryOnlyRatioAndDeterminism) {
  DatasetManifest m = testing::write_synthetic_set(dir.path(), 3, 24, 16, 4, 1);
  m.ratio_aux = 0;
  const Dataset data(m);
  Rng r1(5), r2(5);
  const Batch a = sample_batch(data, 64, r1), b = sample_batch(data, 64, r2);
  EXPECT_EQ(std::count(a.tags.begin(), a.tags.end(), SourceTag::aux_set), 0);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ(testing::max_abs_diff(a.hr, b.hr), 0.0);
  EXPECT_EQ(a.lr.shape(), Shape({64, 3, 4, 4}));
  EXPECT_EQ(a.seg.shape(), Shape({64, 8, 16, 16}));
}

TEST_F(DatasetFixture, DemandedButMissingSourceRejected) {
  DatasetManifest m = testing::write_synthetic_set(dir.path(), 2, 16, 16, 5);
  m.ratio_aux = 1;
  EXPECT_THROW(Dataset{m}, ConfigError);
  m.ratio_aux = 0;
  m.crop_size = 18;
  EXPECT_THROW(m.validate(), ConfigError);
  m.crop_size = 20;
  EXPECT_THROW(Dataset{m}, IoError);
}

TEST_F(DatasetFixture, ManifestRoundTripResolvesRelativePaths) {
  DatasetManifest m = testing::write_synthetic_set(dir.path(), 2, 16, 16, 6, 1);
  DatasetManifest rel = m;
  for (auto& e : rel.entries) {
    e.hr = e.hr.filename();
    e.seg = e.seg.filename();
  }
  write_manifest(dir / "set.manifest", rel);
  EXPECT_EQ(read_manifest(dir / "set.manifest"), m);
  std::ofstream(dir / "bad.manifest") << "crop_size=16\ncolour=red\n";
  EXPECT_THROW(read_manifest(dir / "bad.manifest"), ConfigError);
  EXPECT_THROW(read_manifest(dir / "none.manifest"), IoError);
}

}  // namespace
}  // namespace segsr
