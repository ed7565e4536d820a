#include <gtest/gtest.h>

#include <csprop/oracle.hpp>
#include <csprop/propagators.hpp>

#include "scenarios.hpp"
#include "support.hpp"

using namespace csp;
using namespace csp::testing;

namespace {

template <class F>
std::string error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return "";
}

SaddleSolution as_solution(const ModelPtr& m, const Vec2& u0, const Vec2& v0, double T) {
    SaddleSolution s;
    s.record = integrate(m, detail::point(u0, v0), T);
    s.v0 = v0;
    s.target = s.record.v_final();
    return s;
}

cplx oracle(const KerrCaustic& k, const Vec2& vT) {
    return exact_propagator(*k.model, k.u0, Vec2(vT.conjugate()), k.T);
}

}  // namespace

TEST(Quadratic, ZeroTimeIsOverlap) {
    auto m = make_kerr2d(CoherentFrame::dimensionless(0.05), 1.0, 1.1, 0.05, 0.04);
    Vec2 u0(cplx(0.7, -0.2), cplx(0.3, 0.4)), v0(cplx(-0.5, 0.1), cplx(0.2, 0.6));
    auto K = k_quadratic({as_solution(m, u0, v0, 0.0)});
    EXPECT_LT(std::abs(K.amplitude - std::exp(v0(0) * u0(0) + v0(1) * u0(1))), 1e-14);
}

TEST(Quadratic, HarmonicMatchesOracle) {
    auto m = make_harmonic(CoherentFrame::dimensionless(0.1), 1.0, 1.7);
    Rng rng(3);
    for (double T : {0.3, 1.0, 2.5, 4.0, 7.0}) {
        Vec2 u0 = rng.pair(1.0), zpp = rng.pair(1.0);
        auto rep = solve_mixed(m, u0, zpp.conjugate(), T, {Vec2::Zero()});
        ASSERT_EQ(rep.solutions.size(), 1u);
        auto K = k_quadratic(rep.solutions);
        cplx ref = exact_propagator(*m, u0, zpp, T);
        EXPECT_LT(rel(K.amplitude, ref), 1e-8) << "T=" << T;
    }
}

TEST(Quadratic, NonConservingQuadraticMatchesOracle) {
    auto m = make_quadratic(CoherentFrame::dimensionless(0.1), 1.0, 1.3, 0.2, 0.15);
    Rng rng(9);
    for (double T : {0.5, 1.5, 3.0}) {
        Vec2 u0 = rng.pair(0.6), zpp = rng.pair(0.6);
        auto rep = solve_mixed(m, u0, zpp.conjugate(), T, {Vec2::Zero()});
        ASSERT_EQ(rep.solutions.size(), 1u);
        auto K = k_quadratic(rep.solutions);
        cplx ref = exact_propagator(*m, u0, zpp, T, FockTruncation{40});
        EXPECT_LT(rel(K.amplitude, ref), 1e-8) << "T=" << T;
    }
}

TEST(Quadratic, RejectsCausticTrajectory) {
    auto k = standard_kerr();
    ASSERT_LE(std::abs(k.psc.record.det_vv()), 1e-10);
    EXPECT_EQ(error_kind([&] { k_quadratic({k.psc}); }), "at-caustic");
}

TEST(Dual, FiniteAtMixedCaustic) {
    auto k = standard_kerr();
    auto rep = solve_dual(k.model, k.u0, k.psc.record.u_final(), k.T, {k.psc.v0});
    ASSERT_FALSE(rep.solutions.empty());
    auto K = k_dual_quadratic({rep.solutions[0]});
    EXPECT_TRUE(std::isfinite(std::abs(K.amplitude)));
    EXPECT_GT(std::abs(K.amplitude), 0.0);
}

TEST(Dual, HarmonicIsDualCaustic) {
    auto m = make_harmonic(CoherentFrame::dimensionless(0.1), 1.0, 1.2);
    auto s = as_solution(m, Vec2(0.4, 0.2), Vec2(0.1, -0.3), 1.0);
    EXPECT_EQ(error_kind([&] { k_dual_quadratic({s}); }), "dual-caustic");
}

TEST(Dual, StationaryPhaseBackToMixed) {
    auto k = standard_kerr();
    Vec2 vT = k.along(-1.5);
    auto pair = coalescing_pair(k, vT, k.psc.v0, k.psc.v0);
    ASSERT_FALSE(pair.empty());
    const auto& s = pair[0];
    auto rep = solve_dual(k.model, k.u0, s.record.u_final(), k.T, {s.v0});
    ASSERT_FALSE(rep.solutions.empty());
    cplx viaDual = k_from_dual_stationary(rep.solutions[0]);
    EXPECT_LT(rel(viaDual, detail::quadratic_term(s.record)), 1e-6);
}

TEST(Regular, ReducesToQuadraticAwayFromCaustic) {
    PropagatorOptions o;
    o.regular_contour = ContourChoice::parse("auto");
    auto seq = regular_approach(0.0005, {0.01, 0.03, 0.1, 0.3, 1.0}, o);
    double wmin = 1e300, wmax = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        double w4 = std::abs(std::pow(seq[i].wbar, 4));
        wmin = std::min(wmin, w4);
        wmax = std::max(wmax, w4);
        if (i > 0) {
            EXPECT_LT(w4, std::abs(std::pow(seq[i - 1].wbar, 4)));
            EXPECT_GT(std::abs(seq[i].ratio - 1.0), std::abs(seq[i - 1].ratio - 1.0));
        }
    }
    EXPECT_GE(wmax / wmin, 10.0);
    EXPECT_LE(std::abs(seq.front().ratio - 1.0), 0.05);
}

TEST(Regular, AtCausticExplicitForm) {
    auto k = standard_kerr();
    const auto& r = k.psc.record;
    auto c = compute_action_jet(r).cubic;
    const double h = k.model->hbar();
    cplx ai0 = 1.0 / (std::pow(3.0, 2.0 / 3.0) * std::tgamma(2.0 / 3.0));
    cplx expect = std::sqrt(I * h * pi / c.lambda_plus) * r.inv_sqrt_det_uv() * std::pow(h / (3.0 * c.Gp), 1.0 / 3.0) *
                  ai0 * std::exp(I / h * (r.S_final() + r.G_final()));
    EXPECT_LT(rel(k_regular_at_caustic(k.psc).amplitude, expect), 1e-12);
    auto viaRegular = k_regular({k.psc});
    EXPECT_EQ(viaRegular.formula, Formula::regular_at_caustic);
    EXPECT_LT(rel(viaRegular.amplitude, expect), 1e-12);
}

TEST(Regular, QuadraticSymbolHasNoCubicTerm) {
    auto m = make_quadratic(CoherentFrame::dimensionless(0.1), 1.0, 1.3, 0.2, 0.3);
    auto s = as_solution(m, Vec2(0.4, 0.2), Vec2(0.1, -0.3), 1.0);
    EXPECT_EQ(error_kind([&] { k_regular({s}); }), "higher-order-caustic");
}

TEST(Transitional, EqualsAtCausticValueAtImage) {
    auto k = standard_kerr();
    for (const char* c : {"C1", "C2", "C3", "C1+C2"}) {
        PropagatorOptions o;
        o.transitional_contour = o.regular_contour = ContourChoice::parse(c);
        EXPECT_LT(rel(k_transitional(k.psc, k.vbar(), o).amplitude, k_regular_at_caustic(k.psc, o).amplitude), 1e-12)
            << c;
    }
}

TEST(Transitional, MatchesRegularApproachingCausticOnRay) {
    auto k = standard_kerr();
    PropagatorOptions o;
    o.transitional_contour = o.regular_contour = ContourChoice::parse("C3");
    std::vector<double> err;
    for (double e : {0.2, 0.1, 0.05, 0.02, 0.01}) {
        Vec2 vT = k.vbar();
        vT(0) += e;
        auto sols = solve_mixed(k.model, k.u0, vT, k.T, ring_seeds(k.psc.v0, 0.1 * std::abs(k.psc.v0(0)))).solutions;
        ASSERT_FALSE(sols.empty());
        auto w4 = [&](const SaddleSolution& s) {
            return std::abs(std::pow(k_regular({s}, o).trajectories.at(0).parameter, 4));
        };
        auto best = std::min_element(sols.begin(), sols.end(), [&](auto& a, auto& b) { return w4(a) < w4(b); });
        cplx R = k_regular({*best}, o).amplitude, Tr = k_transitional(k.psc, vT, o).amplitude;
        err.push_back(rel(R, Tr));
    }
    std::sort(err.begin(), err.end());
    EXPECT_LE(err[0], 0.05);
    EXPECT_LE(err[1], 0.05);
}

TEST(Transitional, ValidityWarnings) {
    auto k = standard_kerr();
    auto near = k_transitional(k.psc, k.vbar());
    EXPECT_TRUE(near.warnings.empty());
    Vec2 mid = k.vbar();
    mid(0) += 0.3;
    ASSERT_EQ(k_transitional(k.psc, mid).warnings.size(), 1u);
    Vec2 far = k.vbar();
    far(0) += 1.0;
    auto w = k_transitional(k.psc, far).warnings;
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NE(w[0].find("validity radius"), std::string::npos);
}

TEST(Transitional, NeedsCausticTrajectory) {
    auto k = standard_kerr();
    auto s = as_solution(k.model, k.u0, k.u0.conjugate(), k.T);
    ASSERT_GT(std::abs(s.record.det_vv()), 1e-6);
    EXPECT_EQ(error_kind([&] { k_transitional(s, s.record.v_final()); }), "precondition");
}

TEST(Uniform, FarFieldReducesToQuadraticSum) {
    auto k = standard_kerr();
    std::vector<double> s;
    for (int j = 0; j <= 10; ++j) s.push_back(-1.3 - 0.11 * j);
    auto pairs = tracked_pairs(k, s);
    for (std::size_t j = 0; j < s.size(); ++j) {
        ASSERT_EQ(pairs[j].size(), 2u) << s[j];
        Vec2 vT = k.along(s[j]);
        auto U = uniform_near_caustic(k, pairs[j], vT);
        cplx K2 = quadratic_sum(pairs[j]);
        EXPECT_LE(std::abs(std::abs(U.amplitude) / std::abs(K2) - 1.0), 2e-2) << "s=" << s[j];
    }
}

TEST(Uniform, AtCausticAgreesWithRegularAndTransitional) {
    auto k = standard_kerr();
    PropagatorOptions o;
    o.regular_contour = o.transitional_contour = ContourChoice::parse("C3");
    cplx U = k_uniform_at_caustic(k.psc).amplitude;
    EXPECT_LT(rel(U, k_regular_at_caustic(k.psc, o).amplitude), 1e-8);
    EXPECT_LT(rel(U, k_transitional(k.psc, k.vbar(), o).amplitude), 1e-8);
}

TEST(Uniform, SymmetricInSaddleOrder) {
    auto k = standard_kerr();
    for (double s : {-0.2, 0.15, -0.8}) {
        Vec2 vT = k.along(s);
        auto pair = coalescing_pair(k, vT, k.psc.v0, k.psc.v0);
        ASSERT_EQ(pair.size(), 2u);
        auto hint = caustic_hint(k.psc, vT);
        cplx a = k_uniform(pair[0], pair[1], {}, hint).amplitude;
        cplx b = k_uniform(pair[1], pair[0], {}, hint).amplitude;
        EXPECT_LT(rel(a, b), 1e-12) << s;
    }
}

TEST(Uniform, MergedSaddlesAwayFromCausticRejected) {
    auto k = standard_kerr();
    auto pair = coalescing_pair(k, k.along(-1.0), k.psc.v0, k.psc.v0);
    ASSERT_FALSE(pair.empty());
    EXPECT_EQ(error_kind([&] { k_uniform(pair[0], pair[0]); }), "inconsistent-input");
}

TEST(Uniform, SmoothAcrossCaustic) {
    auto k = standard_kerr();
    const double h = 1e-3 / std::abs(k.vbar()(0));
    std::vector<double> s;
    for (int j = -10; j <= 10; ++j) s.push_back((j + 0.5) * h);
    std::vector<cplx> K;
    Vec2 r0 = k.psc.v0, r1 = k.psc.v0;
    for (double x : s) {
        Vec2 vT = k.along(x);
        auto pair = coalescing_pair(k, vT, r0, r1);
        ASSERT_EQ(pair.size(), 2u) << x;
        r0 = pair[0].v0;
        r1 = pair[1].v0;
        K.push_back(uniform_near_caustic(k, pair, vT).amplitude);
    }
    for (std::size_t j = 1; j + 1 < K.size(); ++j)
        EXPECT_LE(std::abs(K[j + 1] - 2.0 * K[j] + K[j - 1]) / std::abs(K[j]), 1e-3) << "s=" << s[j];
}

TEST(Uniform, NearCausticTracksOracle) {
    auto k = standard_kerr();
    for (double s : {-0.1, 0.1}) {
        Vec2 vT = k.along(s);
        auto pair = coalescing_pair(k, vT, k.psc.v0, k.psc.v0);
        ASSERT_EQ(pair.size(), 2u);
        EXPECT_LT(rel(uniform_near_caustic(k, pair, vT).amplitude, oracle(k, vT)), 0.3) << s;
    }
}

TEST(Normalization, ZeroLabels) {
    EXPECT_EQ(normalize_amplitude(1.0, Vec2::Zero(), Vec2::Zero()), cplx(1.0));
    EXPECT_LT(std::abs(normalize_amplitude(cplx(2.0, 1.0), Vec2(1.0, 0.0), Vec2::Zero()) -
                       cplx(2.0, 1.0) * std::exp(-0.5)),
              1e-15);
}

TEST(Normalization, BoundedByOne) {
    Rng rng(21);
    auto m = make_harmonic(CoherentFrame::dimensionless(0.1), 1.0, 1.4);
    for (int i = 0; i < 20; ++i) {
        Vec2 u0 = rng.pair(1.5), zpp = rng.pair(1.5);
        cplx overlap = std::exp(zpp.dot(u0));
        EXPECT_LE(std::abs(normalize_amplitude(overlap, u0, zpp)), 1.0 + 1e-12);
        auto rep = solve_mixed(m, u0, zpp.conjugate(), 0.7 + 0.3 * i, {Vec2::Zero()});
        ASSERT_EQ(rep.solutions.size(), 1u);
        EXPECT_LE(std::abs(normalize_amplitude(k_quadratic(rep.solutions).amplitude, u0, zpp)), 1.0 + 1e-10);
    }
}
