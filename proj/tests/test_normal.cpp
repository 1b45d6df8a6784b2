#include "latq/normal.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(NormalPdf, KnownValues) {
  // 1/sqrt(2*pi) at the mode.
  EXPECT_DOUBLE_EQ(latq::std_normal_pdf(0.0), 0.3989422804014326779);
  // Frozen from the quadrature-grade oracle density.
  EXPECT_NEAR(latq::std_normal_pdf(2.1539), 0.039219502693916254, 1e-15);
  EXPECT_NEAR(latq::std_normal_pdf(2.1539), 0.039213, 1e-5);
  EXPECT_DOUBLE_EQ(latq::std_normal_pdf(1.0), latq::std_normal_pdf(-1.0));
}

TEST(NormalPdf, MatchesOracleOnSweep) {
  for (int i = -800; i <= 800; ++i) {
    double x = i / 100.0;
    double want = static_cast<double>(oracle::normal_density(x));
    EXPECT_NEAR(latq::std_normal_pdf(x), want, 1e-15) << "x=" << x;
  }
}

TEST(NormalPdf, RejectsNonFinite) {
  EXPECT_THROW(latq::std_normal_pdf(kNaN), latq::validation_error);
  EXPECT_THROW(latq::std_normal_pdf(kInf), latq::validation_error);
  EXPECT_THROW(latq::std_normal_pdf(-kInf), latq::validation_error);
}

TEST(NormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(latq::std_normal_cdf(0.0), 0.5);
  // Phi at the first-quartile point.
  EXPECT_NEAR(latq::std_normal_cdf(-0.6744897501960817), 0.25, 1e-14);
  EXPECT_NEAR(latq::std_normal_cdf(8.0), 1.0, 1e-15);
  EXPECT_LT(latq::std_normal_cdf(-8.0), 1e-14);
  EXPECT_GT(latq::std_normal_cdf(-8.0), 0.0);
}

TEST(NormalCdf, MatchesSeriesOracleWithin1e10) {
  // The implementation goes through erfc; the oracle is an independent
  // Maclaurin series / continued fraction in long double.
  for (int i = -800; i <= 800; ++i) {
    double x = i / 100.0;
    double want = static_cast<double>(oracle::std_normal_cdf(x));
    EXPECT_NEAR(latq::std_normal_cdf(x), want, 1e-10) << "x=" << x;
  }
}

TEST(NormalCdf, SymmetryAndMonotonicity) {
  for (int i = -600; i <= 600; ++i) {
    double x = i / 75.0;
    EXPECT_NEAR(latq::std_normal_cdf(x) + latq::std_normal_cdf(-x), 1.0, 1e-12)
        << "x=" << x;
  }
  // Strict growth holds until the tails saturate double precision (~|x|>7).
  double prev = -1.0;
  for (int i = -450; i <= 450; ++i) {
    double x = i / 75.0;
    double f = latq::std_normal_cdf(x);
    EXPECT_GT(f, prev) << "x=" << x;
    prev = f;
  }
}

TEST(NormalCdf, RejectsNonFinite) {
  EXPECT_THROW(latq::std_normal_cdf(kNaN), latq::validation_error);
  EXPECT_THROW(latq::std_normal_cdf(kInf), latq::validation_error);
}

TEST(NormalInvCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(latq::std_normal_inv_cdf(0.5), 0.0);
  // Frozen from the bisection oracle.
  EXPECT_NEAR(latq::std_normal_inv_cdf(0.25), -0.6744897501960817, 1e-12);
  EXPECT_NEAR(latq::std_normal_inv_cdf(0.75), 0.6744897501960817, 1e-12);
}

TEST(NormalInvCdf, MatchesBisectionOracle) {
  for (int i = 1; i < 1000; ++i) {
    double p = i / 1000.0;
    double want = oracle::std_normal_inv_cdf(p);
    EXPECT_NEAR(latq::std_normal_inv_cdf(p), want, 1e-9) << "p=" << p;
  }
}

TEST(NormalInvCdf, CdfRoundTripAcrossFullRange) {
  // |Phi(Phi^-1(p)) - p| stays below 1e-9 even deep in the tails.
  std::vector<double> ps = {1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 0.01, 0.02425};
  for (int i = 1; i < 40; ++i) ps.push_back(i / 40.0);
  size_t fixed = ps.size();
  for (size_t i = 0; i < fixed; ++i) ps.push_back(1.0 - ps[i]);
  for (double p : ps) {
    double x = latq::std_normal_inv_cdf(p);
    EXPECT_NEAR(latq::std_normal_cdf(x), p, 1e-9) << "p=" << p;
  }
}

TEST(NormalInvCdf, InverseRoundTripOnValues) {
  for (int i = 0; i <= 10000; ++i) {
    double x = -6.0 + 12.0 * i / 10000.0;
    double back = latq::std_normal_inv_cdf(latq::std_normal_cdf(x));
    EXPECT_NEAR(back, x, 1e-7) << "x=" << x;
  }
}

TEST(NormalInvCdf, StrictlyIncreasing) {
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 2000; ++i) {
    double x = latq::std_normal_inv_cdf(i / 2000.0);
    EXPECT_GT(x, prev);
    prev = x;
  }
}

TEST(NormalInvCdf, RejectsOutOfDomain) {
  EXPECT_THROW(latq::std_normal_inv_cdf(0.0), latq::validation_error);
  EXPECT_THROW(latq::std_normal_inv_cdf(1.0), latq::validation_error);
  EXPECT_THROW(latq::std_normal_inv_cdf(-0.1), latq::validation_error);
  EXPECT_THROW(latq::std_normal_inv_cdf(1.5), latq::validation_error);
  EXPECT_THROW(latq::std_normal_inv_cdf(kNaN), latq::validation_error);
}

TEST(OracleSelfCheck, CdfAtTabulatedPoints) {
  // Guard the oracle itself against regressions: classic table values.
  EXPECT_NEAR(static_cast<double>(oracle::std_normal_cdf(1.0)), 0.8413447460685429,
              1e-14);
  EXPECT_NEAR(static_cast<double>(oracle::std_normal_cdf(-2.0)), 0.022750131948179195,
              1e-14);
  EXPECT_NEAR(static_cast<double>(oracle::std_normal_cdf(6.0)), 1.0 - 9.865876450376946e-10,
              1e-16);
}

}  // namespace
