#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include <csprop/airy.hpp>

#include "support.hpp"

using namespace csp;
using csp::testing::rel;

namespace {

std::vector<cplx> disc_points(int n, double radius, unsigned seed) {
    csp::testing::Rng rng(seed);
    std::vector<cplx> out;
    while (static_cast<int>(out.size()) < n) {
        cplx w = rng.complex(radius);
        if (std::abs(w) <= radius) out.push_back(w);
    }
    return out;
}

}  // namespace

TEST(Airy, ValuesAtOrigin) {
    double f0 = std::pow(3.0, -2.0 / 3.0) / boost::math::tgamma(2.0 / 3.0);
    double fp0 = -std::pow(3.0, -1.0 / 3.0) / boost::math::tgamma(1.0 / 3.0);
    EXPECT_NEAR(f0, 0.3550280539, 1e-10);
    EXPECT_LE(rel(airy_f(1, 0.0).plain_value(), f0), 1e-14);
    EXPECT_LE(rel(airy_f_prime(1, 0.0), fp0), 1e-14);
    auto q = airy_reference_quadrature(1, 0.0);
    EXPECT_LE(rel(q.f, f0), 1e-10);
    EXPECT_LE(rel(q.fp, fp0), 1e-10);
}

TEST(Airy, ContoursSumToZero) {
    for (cplx w : disc_points(50, 5.0, 1)) {
        cplx s = 0;
        for (int i = 1; i <= 3; ++i) s += airy_f(i, w).plain_value();
        EXPECT_LE(std::abs(s), 1e-10) << w;
    }
}

TEST(Airy, DifferentialEquation) {
    const double h = 1e-5;
    for (cplx w : disc_points(20, 9.0, 2)) {
        for (int i = 1; i <= 3; ++i) {
            cplx f = airy_f(i, w).plain_value();
            cplx fpp = (airy_f_prime(i, w + h) - airy_f_prime(i, w - h)) / (2 * h);
            EXPECT_LE(std::abs(fpp - w * f), 1e-7 * std::max(1.0, std::abs(w * f))) << i << " " << w;
        }
    }
}

TEST(Airy, ReferenceQuadratureAgrees) {
    for (cplx w : disc_points(30, 4.0, 3))
        for (int i = 1; i <= 3; ++i) {
            auto q = airy_reference_quadrature(i, w);
            auto v = airy_f(i, w);
            EXPECT_LE(rel(v.plain_value(), q.f), 1e-8) << i << " " << w;
            EXPECT_LE(rel(v.plain_derivative(), q.fp), 1e-8) << i << " " << w;
        }
}

// The annulus between the series and the asymptotic regimes, and beyond.
TEST(Airy, ReferenceQuadratureAgreesAcrossRegimes) {
    csp::testing::Rng rng(9);
    for (int k = 0; k < 20; ++k) {
        cplx w = std::polar(rng.uniform(4.0, 10.0), rng.uniform(-pi, pi));
        for (int i = 1; i <= 3; ++i) {
            auto q = airy_reference_quadrature(i, w);
            EXPECT_LE(rel(airy_f(i, w).plain_value(), q.f), 1e-8) << i << " " << w;
        }
    }
}

TEST(Airy, QuadratureSatisfiesAiryEquation) {
    for (cplx w : disc_points(10, 4.0, 4))
        for (int i = 1; i <= 3; ++i) {
            auto q = airy_reference_quadrature(i, w);
            EXPECT_LE(std::abs(q.fpp - w * q.f), 1e-7 * std::max(1.0, std::abs(q.f))) << i << " " << w;
        }
}

TEST(Airy, RealOnRealAxis) {
    for (double x : {-7.0, -2.5, 0.0, 1.0, 3.3, 8.5, 12.0}) EXPECT_EQ(airy_f(1, x).value.imag(), 0.0) << x;
}

TEST(Airy, WronskianConstant) {
    std::vector<cplx> W;
    for (cplx w : {cplx(0), cplx(1, 1), cplx(3)}) {
        auto a = airy_f(1, w), b = airy_f(2, w);
        W.push_back(a.plain_value() * b.plain_derivative() - a.plain_derivative() * b.plain_value());
    }
    for (cplx x : W) EXPECT_LE(rel(x, W[0]), 1e-9);
}

// Leading-order forms at w = 9.
TEST(AiryLeading, RecessiveAtNine) {
    const double w = 9.0;
    cplx exact = (1.0 / (2.0 * std::sqrt(pi))) * std::pow(w, -0.25) * std::exp(-(2.0 / 3.0) * 27.0);
    EXPECT_LE(rel(airy_f(1, w).plain_value(), exact), 1e-3);
    EXPECT_LE(rel(airy_f_prime(1, w) / std::sqrt(w), -exact), 1e-3);
}

TEST(AiryLeading, DominantAtNine) {
    const double w = 9.0;
    cplx lead = std::pow(w, -0.25) * std::exp((2.0 / 3.0) * 27.0) / (2.0 * std::sqrt(pi));
    EXPECT_LE(rel(airy_f(2, w).plain_value(), -I * lead), 1e-3);
    EXPECT_LE(rel(airy_f(3, w).plain_value(), I * lead), 1e-3);
}

TEST(AiryLeading, SectorsBeyondSix) {
    for (double r : {6.0, 10.0, 30.0})
        for (double th : {-0.9, -0.5, 0.0, 0.5, 0.9}) {
            cplx w = std::polar(r, th);
            auto leading = airy_leading(1, w);
            EXPECT_LE(rel(airy_f(1, w).plain_value(), leading.f), 1e-3) << w;
            EXPECT_LE(rel(airy_f_prime(1, w) / std::sqrt(w), leading.fprime_over_sqrt), 1e-3) << w;
            for (int i = 2; i <= 3; ++i) {
                auto d = airy_leading(i, w);
                EXPECT_LE(rel(airy_f(i, w).plain_value(), d.f), 1e-3) << i << " " << w;
                EXPECT_LE(rel(airy_f_prime(i, w) / std::sqrt(w), d.fprime_over_sqrt), 1e-3) << i << " " << w;
            }
        }
}

// Ai / leading = 1 - u1/zeta + u2/zeta^2 - ..., zeta = (2/3) w^{3/2}; the
// leading form alone is off by about 5 / (72 zeta).
TEST(AiryLeading, CorrectionSeries) {
    const double u1 = 5.0 / 72.0, u2 = 385.0 / 10368.0, u3 = 85085.0 / 2239488.0;
    for (double w : {9.0, 16.0, 36.0, 100.0}) {
        double zeta = (2.0 / 3.0) * std::pow(w, 1.5);
        cplx ratio = airy_f(1, w).plain_value() / airy_leading(1, w).f;
        EXPECT_NEAR(ratio.real(), 1.0 - u1 / zeta + u2 / (zeta * zeta), 2.0 * u3 / std::pow(zeta, 3)) << w;
    }
}

TEST(Airy, ScaledRepresentationBeyondOverflow) {
    auto v = airy_f(2, cplx(200.0, 0.0));
    EXPECT_GT(v.exponent, 600.0);
    EXPECT_TRUE(finite(v.value));
    EXPECT_EQ(v.regime, AiryRegime::asymptotic);
    auto s = airy_f(1, cplx(0.5, 0.5));
    EXPECT_EQ(s.regime, AiryRegime::series);
    EXPECT_EQ(s.exponent, 0.0);
}

TEST(Airy, Errors) {
    EXPECT_THROW(airy_f(0, 1.0), Error);
    EXPECT_THROW(airy_f(4, 1.0), Error);
    EXPECT_THROW(airy_f(1, cplx(std::nan(""), 0)), Error);
    EXPECT_THROW(airy_reference_quadrature(1, 11.0), Error);
}

TEST(Contour, Parse) {
    auto c = ContourChoice::parse("C1 + C2");
    EXPECT_EQ(c.coeff[0], cplx(1));
    EXPECT_EQ(c.coeff[1], cplx(1));
    EXPECT_EQ(c.coeff[2], cplx(0));
    EXPECT_EQ(c.name(), "C1+C2");
    EXPECT_EQ(ContourChoice::parse("-C3").name(), "-C3");
    EXPECT_TRUE(ContourChoice::parse("auto").automatic);
    EXPECT_THROW(ContourChoice::parse("C4"), Error);
    EXPECT_THROW(ContourChoice::parse("C1*C2"), Error);
    EXPECT_THROW(ContourChoice::parse(""), Error);
}

TEST(Contour, CombinationIsLinear) {
    cplx w(1.2, -0.7);
    auto [f, fp] = airy_combination(ContourChoice::parse("C1-C3"), w);
    EXPECT_LE(rel(f, airy_f(1, w).plain_value() - airy_f(3, w).plain_value()), 1e-15);
    EXPECT_LE(rel(fp, airy_f_prime(1, w) - airy_f_prime(3, w)), 1e-15);
    // C1 + C2 = -C3
    auto [g, gp] = airy_combination(ContourChoice::parse("C1+C2"), w);
    EXPECT_LE(std::abs(g + airy_f(3, w).plain_value()), 1e-12);
}
