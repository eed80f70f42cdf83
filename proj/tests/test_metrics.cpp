#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "transferlab/metrics.hpp"
#include "transferlab/random.hpp"

using namespace tl;

namespace {

PixelImage random_image(Rng& rng, Index h = 32, Index w = 32) {
  PixelImage img(h, w, 3);
  for (Index i = 0; i < img.size(); ++i) img.data[i] = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

PixelImage constant_image(std::uint8_t v) {
  PixelImage img(32, 32, 3);
  img.data.setConstant(v);
  return img;
}

// Straightforward sliding-window SSIM: one-pass moments per window.
double reference_ssim(const PixelImage& a, const PixelImage& b) {
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  auto gray = [](const PixelImage& img, Index y, Index x) {
    return (double(img.at(y, x, 0)) + double(img.at(y, x, 1)) + double(img.at(y, x, 2))) / 3.0;
  };
  double total = 0.0;
  int count = 0;
  for (Index y = 0; y + 7 <= a.height; ++y) {
    for (Index x = 0; x + 7 <= a.width; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (Index dy = 0; dy < 7; ++dy) {
        for (Index dx = 0; dx < 7; ++dx) {
          const double u = gray(a, y + dy, x + dx), v = gray(b, y + dy, x + dx);
          sa += u;
          sb += v;
          saa += u * u;
          sbb += v * v;
          sab += u * v;
        }
      }
      const double n = 49.0, ma = sa / n, mb = sb / n;
      const double va = (saa / n - ma * ma) * n / (n - 1), vb = (sbb / n - mb * mb) * n / (n - 1);
      const double cov = (sab / n - ma * mb) * n / (n - 1);
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST(Linf, Examples) {
  PixelImage a = constant_image(10), b = a;
  EXPECT_EQ(linf_dist(a, b), 0);
  b.data[77] = 110;
  EXPECT_EQ(linf_dist(a, b), 100);
  PixelImage c = constant_image(110);
  EXPECT_EQ(linf_dist(a, c), 100);
  EXPECT_EQ(linf_dist(c, a), 100);
}

TEST(Mad, ExamplesAndOracle) {
  PixelImage a = constant_image(0), b = a;
  EXPECT_EQ(mad(a, b), 0.0);
  PixelImage one(1, 1, 4);
  PixelImage other = one;
  other.data[2] = 4;
  EXPECT_DOUBLE_EQ(mad(one, other), 1.0);
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const PixelImage x = random_image(rng), y = random_image(rng);
    double s = 0.0;
    for (Index yy = 0; yy < 32; ++yy) {
      for (Index xx = 0; xx < 32; ++xx) {
        for (Index c = 0; c < 3; ++c) s += std::abs(double(x.at(yy, xx, c)) - double(y.at(yy, xx, c)));
      }
    }
    EXPECT_NEAR(mad(x, y), s / 3072.0, 1e-12);
    EXPECT_EQ(mad(x, y), mad(y, x));
  }
}

TEST(Mse, ExamplesAndOracle) {
  EXPECT_EQ(mse_normalized(constant_image(3), constant_image(3)), 0.0);
  EXPECT_DOUBLE_EQ(mse_normalized(constant_image(0), constant_image(255)), 1.0);
  Rng rng(2);
  const PixelImage x = random_image(rng), y = random_image(rng);
  double s = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double d = x.data[i] / 255.0 - y.data[i] / 255.0;
    s += d * d;
  }
  EXPECT_NEAR(mse_normalized(x, y), s / x.size(), 1e-12);
}

TEST(Ssim, IdentityAndSymmetry) {
  Rng rng(3);
  const PixelImage x = random_image(rng), y = random_image(rng);
  EXPECT_EQ(ssim(x, x), 1.0);
  EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-15);
  EXPECT_LT(ssim(x, y), 1.0);
  EXPECT_GE(ssim(x, y), -1.0);
}

TEST(Ssim, ConstantClosedForm) {
  const double c1 = std::pow(0.01 * 255, 2);
  for (auto [u, v] : {std::pair{0, 255}, std::pair{40, 90}, std::pair{128, 128}}) {
    const double expect = (2.0 * u * v + c1) / (double(u) * u + double(v) * v + c1);
    EXPECT_NEAR(ssim(constant_image(u), constant_image(v)), expect, 1e-12);
  }
}

TEST(Ssim, MatchesReference) {
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const PixelImage x = random_image(rng);
    PixelImage y = x;
    for (Index i = 0; i < y.size(); ++i) {
      y.data[i] = static_cast<std::uint8_t>(std::clamp<int>(x.data[i] + int(rng.below(61)) - 30, 0, 255));
    }
    EXPECT_NEAR(ssim(x, y), reference_ssim(x, y), 1e-9);
  }
}

TEST(Ssim, RejectsSmallImages) {
  Rng rng(5);
  EXPECT_THROW(ssim(random_image(rng, 6, 32), random_image(rng, 6, 32)), ShapeError);
  EXPECT_THROW(ssim(random_image(rng, 8, 8), random_image(rng, 9, 8)), ShapeError);
}

TEST(Ssim, NoiseLowersSsimAndRaisesMad) {
  const Dataset d = generate_dataset(50, 2);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    double prev_ssim = 1.0 + 1e-12, prev_mad = -1.0;
    for (int r : {4, 16, 48, 96}) {
      double s = 0.0, m = 0.0;
      for (const auto& img : d.images) {
        PixelImage noisy = img;
        for (Index i = 0; i < noisy.size(); ++i) {
          noisy.data[i] = static_cast<std::uint8_t>(std::clamp<int>(img.data[i] + int(rng.below(2 * r + 1)) - r, 0, 255));
        }
        s += ssim(img, noisy);
        m += mad(img, noisy);
      }
      EXPECT_LT(s, prev_ssim * d.size());
      EXPECT_GT(m, prev_mad * d.size());
      prev_ssim = s / d.size();
      prev_mad = m / d.size();
    }
  }
}

TEST(InceptionScore, ExactCases) {
  EXPECT_NEAR(inception_score(Tensor::constant({6, 5}, 0.2)), 1.0, 1e-12);
  Tensor onehot = Tensor::zeros({5, 5});
  for (Index i = 0; i < 5; ++i) onehot.matrix()(i, i) = 1.0;
  EXPECT_NEAR(inception_score(onehot), 5.0, 1e-12);
  EXPECT_THROW(inception_score(Tensor::zeros({0, 5})), std::invalid_argument);
  EXPECT_THROW(inception_score(std::span<const PixelImage>(), *testkit::quick_networks()[4]), std::invalid_argument);
}

TEST(InceptionScore, Bounds) {
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    Tensor logits({8, 5});
    for (Index i = 0; i < logits.size(); ++i) logits[i] = 4.0 * rng.normal();
    const double is = inception_score(softmax_rows(logits));
    EXPECT_GE(is, 1.0);
    EXPECT_LE(is, 5.0 + 1e-12);
  }
  const Dataset d = generate_dataset(51, 4);
  const double is = inception_score(d.images, *testkit::quick_networks()[4]);
  EXPECT_GE(is, 1.0);
  EXPECT_LE(is, 5.0 + 1e-12);
}

TEST(Spearman, Basics) {
  const double x[] = {1, 2, 3, 4, 5};
  const double up[] = {2, 4, 8, 16, 32};
  const double down[] = {5, 4, 3, 2, 1};
  const double ties[] = {1, 1, 2, 2, 3};
  const double flat[] = {7, 7, 7, 7, 7};
  EXPECT_DOUBLE_EQ(spearman(x, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, down), -1.0);
  EXPECT_EQ(spearman(x, flat), 0.0);
  // Average ranks 1.5,1.5,3.5,3.5,5 against 1..5.
  EXPECT_NEAR(spearman(x, ties), 0.9486832980505138, 1e-12);
  EXPECT_THROW(spearman(std::span(x, 3), std::span(up, 4)), std::invalid_argument);
}

TEST(Calibration, RadiusZeroAndMonotoneMad) {
  const Dataset d = generate_dataset(52, 2);
  const ClipSchedule s({0, 10, 40, 150});
  Rng rng(9);
  std::vector<std::vector<PixelImage>> by_radius(s.size());
  for (const auto& img : d.images) {
    FloatImage adv = to_float(img);
    for (Index i = 0; i < adv.size(); ++i) adv.data[i] = std::clamp(adv.data[i] + rng.uniform(-120, 120), 0.0, 255.0);
    for (std::size_t r = 0; r < s.size(); ++r) by_radius[r].push_back(round_to_pixels(linf_clip(adv, img, double(s[r]))));
  }
  const auto rows = mean_ssim_calibration(d.images, by_radius, s);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].mean_ssim, 1.0);
  EXPECT_EQ(rows[0].mean_mad, 0.0);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_GT(rows[r].mean_mad, rows[r - 1].mean_mad);
    EXPECT_LE(rows[r].mean_ssim, rows[r - 1].mean_ssim + 0.01);
    EXPECT_LE(rows[r].mean_linf, s[r]);
  }
  by_radius.pop_back();
  EXPECT_THROW(mean_ssim_calibration(d.images, by_radius, s), std::invalid_argument);
}
