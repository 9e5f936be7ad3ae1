#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ethdyn/hydro.hpp"

using namespace ethdyn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// heat kernel acting on exp(-k^2/2): (4 pi a)^{-1/2} exp(-x^2 / (4 a)), a = 1/2 + D t
double gaussian_mode(double x, double t, double D = 1.0) {
  const double a = 0.5 + D * t;
  return std::exp(-x * x / (4 * a)) / std::sqrt(4 * std::numbers::pi * a);
}

}  // namespace

TEST(Evolve, GaussianMatchesHeatKernel) {
  HydroSetup s;
  s.D = 0.7;
  for (double t : {0.0, 0.3, 2.0, 50.0, 1e4})
    for (double x : {0.0, 0.4, -1.5, 3.0}) {
      const double ref = gaussian_mode(x, t, s.D);
      const double xs[] = {x};
      EXPECT_NEAR(evolve_correlator(s, xs, t) / ref, 1.0, 1e-8) << "t " << t << " x " << x;
    }
}

TEST(Evolve, InitialDataRoundTrip) {
  HydroSetup s;
  s.mu = 2;
  for (double x : {0.0, 0.5, 1.0, 2.5}) {
    const double g = std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi);
    const double xs[] = {x};
    // inverse transform of k^2 exp(-k^2/2) is minus the second derivative of g
    EXPECT_NEAR(evolve_correlator(s, xs, 0.0), (1 - x * x) * g, 1e-8 * g);
  }
}

TEST(Evolve, ProductOverInsertions) {
  HydroSetup s;
  s.n = 3;
  const double x[] = {0.1, -0.8, 2.0};
  const double t = 3.5;
  EXPECT_NEAR(evolve_correlator(s, x, t), gaussian_mode(0.1, t) * gaussian_mode(-0.8, t) * gaussian_mode(2.0, t),
              1e-8 * evolve_correlator(s, x, t));
}

TEST(Evolve, PeriodicSumEqualsImageSum) {
  HydroSetup s;
  s.volume = 7.0;
  for (double t : {0.0, 1.0, 20.0})
    for (double x : {0.0, 1.3, 3.5}) {
      double ref = 0;
      for (int m = -50; m <= 50; ++m) ref += gaussian_mode(x + m * 7.0, t);
      const double xs[] = {x};
      EXPECT_NEAR(evolve_correlator(s, xs, t), ref, 1e-12) << t << " " << x;
    }
}

TEST(Evolve, PeriodicLateTimeLimit) {
  HydroSetup s;
  s.n = 2;
  s.volume = 5.0;
  EXPECT_DOUBLE_EQ(evolve_correlator(s, {}, kInf), 1.0 / 25.0);
  EXPECT_NEAR(evolve_correlator(s, {}, 500.0), 1.0 / 25.0, 1e-12);
  s.volume.reset();
  EXPECT_EQ(evolve_correlator(s, {}, kInf), 0.0);
}

TEST(Evolve, SemigroupThroughTabulatedData) {
  HydroSetup s;
  s.mu = 2;
  const double t1 = 0.8, t2 = 1.7;
  const double k[] = {1.3};
  EXPECT_NEAR(hydro_spectrum(s, k, t1) * std::exp(-1.3 * 1.3 * t2), hydro_spectrum(s, k, t1 + t2), 1e-15);

  const double dk = 0.005;
  std::vector<double> samples;
  for (int i = 0; i * dk <= 12.0; ++i) {
    const double kk[] = {i * dk};
    samples.push_back(hydro_spectrum(s, kk, t1));
  }
  HydroSetup mid;
  mid.modes = {KProfile::table(samples, dk)};
  for (double x : {0.0, 0.7, 2.0}) {
    const double xs[] = {x};
    const double direct = evolve_correlator(s, xs, t1 + t2);
    EXPECT_NEAR(evolve_correlator(mid, xs, t2), direct, 1e-8 * std::abs(evolve_correlator(s, {}, t1 + t2)));
  }
}

TEST(Evolve, MonotoneDecayAtOrigin) {
  for (double z : {2.0, 4.0 / 3.0, 1.0}) {
    HydroSetup s;
    s.n = 2;
    s.z = z;
    double prev = evolve_correlator(s, {}, 0.0);
    for (double t = 0.05; t < 200; t *= 1.5) {
      const double c = evolve_correlator(s, {}, t);
      EXPECT_LE(c, prev * (1 + 1e-12)) << z << " " << t;
      prev = c;
    }
  }
}

TEST(Evolve, RejectsBadInput) {
  HydroSetup s;
  EXPECT_THROW(evolve_correlator(s, {}, -1.0), InvalidArgument);
  s.z = 0;
  EXPECT_THROW(evolve_correlator(s, {}, 1.0), InvalidArgument);
  s = {};
  s.d = 2;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.n = 2;
  const double one[] = {0.0};
  EXPECT_THROW(evolve_correlator(s, one, 1.0), InvalidArgument);
  EXPECT_THROW(KProfile(-1, 1), InvalidArgument);
}

TEST(Decay, DiffusiveExponentsScaleWithInsertions) {
  for (int n = 1; n <= 4; ++n) {
    HydroSetup s;
    s.n = n;
    const auto f = decay_exponent(s, 1e3, 1e5);
    EXPECT_NEAR(f.exponent, -0.5 * n, 0.01) << n;
  }
}

TEST(Decay, MomentumWeightsShiftTheExponent) {
  for (double mu : {2.0, 4.0}) {
    HydroSetup s;
    s.mu = mu;
    EXPECT_NEAR(decay_exponent(s, 1e3, 1e5).exponent, -(1 + mu) / 2, 0.02) << mu;
  }
  HydroSetup s;
  s.n = 2;
  s.mu = 2;
  EXPECT_NEAR(decay_exponent(s, 1e3, 1e5).exponent, -2.0, 0.02);
}

TEST(Decay, FractionalKernel) {
  HydroSetup s;
  s.z = 4.0 / 3.0;
  EXPECT_NEAR(decay_exponent(s, 1e3, 1e5).exponent, -0.75, 0.01);
  s.n = 2;
  EXPECT_NEAR(decay_exponent(s, 1e3, 1e5).exponent, -1.5, 0.01);
}

TEST(Decay, PreAsymptoticWindowIsDiagnosed) {
  HydroSetup s;
  s.mu = 4;
  EXPECT_THROW(decay_exponent(s, 0.01, 1.0), ConvergenceError);
  s.volume = 10.0;
  EXPECT_THROW(decay_exponent(s, 1e3, 1e5), InvalidArgument);
}

TEST(Plateau, ScalesAsInverseVolumePower) {
  const std::vector<double> sizes{8, 16, 32, 64};
  HydroSetup s;
  s.n = 2;
  auto r = plateau_scaling(s, sizes);
  ASSERT_TRUE(r.fit);
  EXPECT_NEAR(r.fit->exponent, -2.0, 0.01);
  s.n = 1;
  s.z = 4.0 / 3.0;
  r = plateau_scaling(s, sizes);
  ASSERT_TRUE(r.fit);
  EXPECT_NEAR(r.fit->exponent, -1.0, 0.01);
}

TEST(Plateau, VanishingZeroModeTakesTheZeroBranch) {
  HydroSetup s;
  s.mu = 2;
  const std::vector<double> sizes{8, 16, 32};
  auto r = plateau_scaling(s, sizes);
  EXPECT_TRUE(r.vanishes);
  EXPECT_FALSE(r.fit);
  for (double p : r.plateaus) EXPECT_EQ(p, 0.0);
}

TEST(Inequality, SaturatedOnlyWithoutMomentumWeight) {
  for (int n = 1; n <= 3; ++n) {
    HydroSetup s;
    s.n = n;
    const auto f = decay_exponent(s, 1e3, 1e5);
    const auto v = roi_check(-f.exponent, f.exponent_stderr, n, 1, s.z, 0.02);
    EXPECT_TRUE(v.satisfied && v.saturated) << n;
  }
  HydroSetup s;
  s.mu = 4;
  const auto f = decay_exponent(s, 1e3, 1e5);
  const auto v = roi_check(-f.exponent, f.exponent_stderr, kInf, 1, s.z, 0.02);
  EXPECT_TRUE(v.satisfied);
  EXPECT_FALSE(v.saturated);
}
