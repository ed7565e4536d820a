#include <gtest/gtest.h>

#include <csprop/model.hpp>

#include "support.hpp"

using namespace csp;
using csp::testing::rel;

namespace {

std::vector<ModelPtr> builtin_models() {
    auto f = CoherentFrame::dimensionless(0.3);
    auto g = CoherentFrame::from_widths(0.7, 1.3, 0.4);
    return {make_harmonic(f, 1.0, 1.7), make_kerr2d(f, 1.0, 1.1, 0.05, 0.04), make_kerr2d(g, 0.8, 1.2, 0.3, 0.0),
            make_quadratic(f, 1.0, 1.3, 0.2, 0.1)};
}

double max_abs(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Frame, OriginMapsToZero) {
    auto f = CoherentFrame::dimensionless(1.0);
    Vec2 z = label_to_z(f, Label{});
    EXPECT_EQ(z(0), cplx(0));
    EXPECT_EQ(z(1), cplx(0));
}

TEST(Frame, UnitWidthPositionOnly) {
    CoherentFrame f{1.0, 1.0, 1.0, 1.0, 1.0};
    Vec2 z = label_to_z(f, Label{std::sqrt(2.0), 0, 0, 0});
    EXPECT_NEAR(std::abs(z(0) - 1.0), 0.0, 1e-15);
}

TEST(Frame, RoundTrip) {
    auto f = CoherentFrame::from_widths(0.37, 0.8, 2.1);
    csp::testing::Rng rng(7);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        Label l{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        Label back = z_to_label(f, label_to_z(f, l));
        worst = std::max({worst, std::abs(back.qbar_x - l.qbar_x), std::abs(back.qbar_y - l.qbar_y),
                          std::abs(back.pbar_x - l.pbar_x), std::abs(back.pbar_y - l.pbar_y)});
    }
    EXPECT_LE(worst, 1e-14);
}

TEST(Frame, RejectsInconsistentWidths) {
    CoherentFrame f{1.0, 2.0, 1.0, 2.0, 1.0};
    EXPECT_THROW(f.validate(), Error);
    EXPECT_THROW(CoherentFrame::dimensionless(-1.0).validate(), Error);
}

TEST(Model, HarmonicGroundEnergy) {
    double h = 0.4, w = 1.3;
    auto m = make_harmonic(CoherentFrame::dimensionless(h), w, w);
    EXPECT_LE(rel(eval_jet(*m, {0, 0, 0, 0}).H, h * w), 1e-15);
}

TEST(Model, HarmonicThirdDerivativeVanishes) {
    auto m = make_harmonic(CoherentFrame::dimensionless(0.4), 1.0, 2.0);
    csp::testing::Rng rng(3);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(eval_jet(*m, ComplexPhasePoint::from(rng.point(2))).d3.max_abs(), 0.0);
}

TEST(Model, KerrAxisUnitPoint) {
    double h = 0.25, w = 1.2, chi = 0.3;
    auto m = make_kerr2d(CoherentFrame::dimensionless(h), w, 1.0, chi, 0.0);
    // y axis sits at the origin, so only the x axis contributes.
    EXPECT_LE(rel(eval_jet(*m, {1, 0, 1, 0}).H, h * w + 2 * h * chi), 1e-15);
}

TEST(Model, FactoryPreconditions) {
    auto f = CoherentFrame::dimensionless(1.0);
    EXPECT_THROW(make_harmonic(f, 0.0, 1.0), Error);
    EXPECT_THROW(make_harmonic(f, 1.0, -2.0), Error);
    EXPECT_THROW(make_kerr2d(f, 1.0, 1.0, 0.0, 0.0), Error);
}

TEST(Model, QuantumSideIsHermitian) {
    for (const auto& m : builtin_models()) {
        EXPECT_TRUE(m->symbol.hermitian()) << m->describe();
    }
    EXPECT_TRUE(builtin_models()[1]->symbol.number_conserving());
    EXPECT_FALSE(builtin_models()[3]->symbol.number_conserving());
}

TEST(Model, DerivativesMatchFiniteDifferences) {
    csp::testing::Rng rng(11);
    const double h = 1e-5;
    for (const auto& m : builtin_models()) {
        for (int k = 0; k < 50; ++k) {
            Vec4 r = rng.point(1.5);
            Jet j = m->symbol.jet(r);
            for (int a = 0; a < 4; ++a) {
                Vec4 rp = r, rm = r;
                rp(a) += h;
                rm(a) -= h;
                Jet jp = m->symbol.jet(rp), jm = m->symbol.jet(rm);
                cplx d1 = (m->symbol.value(rp) - m->symbol.value(rm)) / (2 * h);
                EXPECT_LE(std::abs(d1 - j.d1(a)), 1e-6 * (std::abs(j.d1(a)) + 1e-3));
                for (int b = 0; b < 4; ++b) {
                    cplx d2 = (jp.d1(b) - jm.d1(b)) / (2 * h);
                    EXPECT_LE(std::abs(d2 - j.d2(a, b)), 1e-6 * (max_abs(j.d2) + 1e-3));
                    for (int c = 0; c < 4; ++c) {
                        cplx d3 = (jp.d2(b, c) - jm.d2(b, c)) / (2 * h);
                        EXPECT_LE(std::abs(d3 - j.d3(a, b, c)), 1e-6 * (j.d3.max_abs() + 1e-3));
                    }
                }
            }
        }
    }
}

TEST(Model, DerivativeSymmetry) {
    csp::testing::Rng rng(5);
    for (const auto& m : builtin_models()) {
        Jet j = m->symbol.jet(rng.point(2));
        EXPECT_LE(max_abs(j.d2 - j.d2.transpose()), 1e-12 * (max_abs(j.d2) + 1e-300));
        double s3 = j.d3.max_abs(), worst = 0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < 4; ++c)
                    for (cplx p : {j.d3(a, c, b), j.d3(b, a, c), j.d3(b, c, a), j.d3(c, a, b), j.d3(c, b, a)})
                        worst = std::max(worst, std::abs(p - j.d3(a, b, c)));
        EXPECT_LE(worst, 1e-12 * (s3 + 1e-300));
    }
}

TEST(Model, NonFinitePointReported) {
    auto m = make_kerr2d(CoherentFrame::dimensionless(1.0), 1.0, 1.0, 0.1, 0.1);
    cplx big(1e200, 0);
    try {
        eval_jet(*m, {big, 0, big, 0});
        FAIL() << "expected an evaluation error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "evaluation");
    }
}
