#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "action_jet.hpp"
#include "airy.hpp"
#include "boundary.hpp"

namespace csp {

enum class Formula { quadratic, dual, regular, transitional, uniform, regular_at_caustic, uniform_at_caustic };

inline const char* to_string(Formula f) {
    switch (f) {
        case Formula::quadratic: return "quadratic";
        case Formula::dual: return "dual";
        case Formula::regular: return "regular";
        case Formula::transitional: return "transitional";
        case Formula::uniform: return "uniform";
        case Formula::regular_at_caustic: return "regular-at-caustic";
        case Formula::uniform_at_caustic: return "uniform-at-caustic";
    }
    return "?";
}

// Which terms enter the uniform-map exponents:
//   action: E_j = (i/hbar) S_j; G and det M_uv stay in the amplitudes g_j.
//   full:   E_j = (i/hbar)(S_j + G_j) - (1/2) ln det M_uv.
enum class UniformExponent { action, full };

// Saddle labelling for the uniform map:
//   analytic:  with a caustic hint, the branch of B nearest w~ and the
//              labelling that matches the local cubic model; otherwise
//              g1 ~ g2 and the principal branch;
//   dominance: Re(E2 - E1) >= 0 with the principal branch of B.
enum class UniformLabelling { analytic, dominance };

struct PropagatorOptions {
    bool include_stokes = false;
    double merge_radius = 1e-5;
    double caustic_det = 1e-10;
    double psc_det = 1e-9;
    double gprime_min = 1e-12;
    double small_B = 1e-8;
    double validity_radius = 0.5;
    double warn_radius = 0.1;
    ContourChoice regular_contour = ContourChoice::parse("C1");
    ContourChoice transitional_contour = ContourChoice::parse("C1");
    ContourChoice uniform_contour = ContourChoice::parse("C1+C2");
    UniformExponent uniform_exponent = UniformExponent::action;
    UniformLabelling uniform_labelling = UniformLabelling::analytic;
};

struct TrajectoryDiagnostics {
    Vec2 v0;
    cplx det_vv, det_uv, F;
    cplx parameter;  // wbar (regular), w~ (transitional) or script-B (uniform)
    cplx factor{1.0};
    std::string contour;
    bool stokes = false;
};

struct UniformMapData {
    cplx A, B;
    cplx E1, E2;
    cplx g1, g2;
};

struct PropagatorValue {
    cplx amplitude;
    Formula formula = Formula::quadratic;
    std::vector<TrajectoryDiagnostics> trajectories;
    std::optional<UniformMapData> uniform;
    std::vector<std::string> warnings;
};

namespace detail {

inline TrajectoryDiagnostics diag_of(const SaddleSolution& s) {
    TrajectoryDiagnostics d;
    d.v0 = s.v0;
    d.det_vv = s.record.det_vv();
    d.det_uv = s.record.det_uv();
    d.F = s.F;
    d.stokes = s.stokes_suspect;
    return d;
}

inline cplx exp_iSG(const TrajectoryRecord& r) {
    return std::exp(I / r.model->hbar() * (r.S_final() + r.G_final()));
}

// Contribution of one trajectory to the quadratic formula.
inline cplx quadratic_term(const TrajectoryRecord& r) { return r.inv_sqrt_det_vv() * exp_iSG(r); }

inline double round_pm1(cplx x) { return x.real() >= 0 ? 1.0 : -1.0; }

// Contour for the regular factor: the steepest-descent path through the
// trajectory's own saddle t = i wbar^2, oriented so the factor tends to one.
inline ContourChoice regular_auto(cplx wbar) {
    cplx w = std::pow(wbar, 4);
    cplx s = std::sqrt(w);
    cplx w14 = std::sqrt(s);
    ContourChoice c;
    c.coeff = {0, 0, 0};
    cplx w2 = wbar * wbar;
    if (std::abs(w2 - s) <= std::abs(w2 + s)) {
        c.coeff[0] = round_pm1(w14 / wbar);
    } else {
        int idx = std::arg(w) >= 0 ? 1 : 2;
        cplx lead = (idx == 1 ? -I : I) * wbar / w14;
        c.coeff[idx] = round_pm1(1.0 / lead);
    }
    return c;
}

// sum_i c_i * 2 sqrt(pi) wbar exp(2/3 wbar^6) f_i(wbar^4), without overflow.
inline cplx regular_factor(const ContourChoice& c, cplx wbar) {
    cplx w = std::pow(wbar, 4);
    cplx lead = (2.0 / 3.0) * std::pow(wbar, 6);
    cplx acc = 0;
    for (int i = 0; i < 3; ++i) {
        if (c.coeff[i] == 0.0) continue;
        AiryValue v = airy_f(i + 1, w);
        acc += c.coeff[i] * v.value * std::exp(lead + v.exponent);
    }
    return 2.0 * std::sqrt(pi) * wbar * acc;
}

// Shared at-caustic expression
//   sqrt(i hbar pi / lambda+) (det M_uv)^{-1/2} (hbar / 3G')^{1/3} f(0) e^{(i/hbar)(S+G)}.
inline cplx at_caustic(const TrajectoryRecord& r, const CubicData& c, const ContourChoice& contour) {
    const double h = r.model->hbar();
    auto [f0, fp0] = airy_combination(contour, 0.0);
    (void)fp0;
    return std::sqrt(I * h * pi / c.lambda_plus) * r.inv_sqrt_det_uv() * std::pow(h / (3.0 * c.Gp), 1.0 / 3.0) *
           f0 * exp_iSG(r);
}

inline std::vector<const SaddleSolution*> contributing(const std::vector<SaddleSolution>& sols,
                                                       const PropagatorOptions& o) {
    std::vector<const SaddleSolution*> out;
    for (const auto& s : sols)
        if (o.include_stokes || !s.stokes_suspect) out.push_back(&s);
    return out;
}

inline ContourChoice resolve_at_caustic(const ContourChoice& c) {
    return c.automatic ? ContourChoice::parse("C1") : c;
}

}  // namespace detail

inline PropagatorValue k_quadratic(const std::vector<SaddleSolution>& sols, const PropagatorOptions& o = {}) {
    PropagatorValue out;
    out.formula = Formula::quadratic;
    out.amplitude = 0;
    for (const auto* s : detail::contributing(sols, o)) {
        if (!(std::abs(s->record.det_vv()) > o.caustic_det))
            throw Error("at-caustic", "det M_vv vanishes; use a regularized formula");
    }
    for (const auto& s : sols) {
        auto d = detail::diag_of(s);
        if (o.include_stokes || !s.stokes_suspect) {
            d.factor = detail::quadratic_term(s.record);
            out.amplitude += d.factor;
        }
        out.trajectories.push_back(d);
    }
    return out;
}

inline PropagatorValue k_dual_quadratic(const std::vector<SaddleSolution>& sols, const PropagatorOptions& o = {}) {
    PropagatorValue out;
    out.formula = Formula::dual;
    out.amplitude = 0;
    for (const auto& s : sols) {
        if (!(std::abs(s.record.det_uv()) > o.caustic_det))
            throw Error("dual-caustic", "det M_uv vanishes; dual representation singular");
        const double h = s.record.model->hbar();
        auto d = detail::diag_of(s);
        d.factor = s.record.inv_sqrt_det_uv() *
                   std::exp(I / h * (legendre_action(s.record) + s.record.G_final()));
        out.amplitude += d.factor;
        out.trajectories.push_back(d);
    }
    return out;
}

// Stationary-phase evaluation of the inverse transform of the dual propagator
// for one dual trajectory: K~ e^{u''v''} (-det S~_u''u'' / hbar^2)^{-1/2}; the
// root is taken on the branch continuous with the tracked determinant phases.
inline cplx k_from_dual_stationary(const SaddleSolution& dual) {
    const auto& r = dual.record;
    const double h = r.model->hbar();
    Mat4 S2 = second_derivatives(r);
    cplx q = -S2.block<2, 2>(2, 2).determinant() / (h * h);
    cplx root = std::sqrt(q);
    cplx ref = std::exp(0.5 * I * (r.sigma_vv_final() - r.sigma_uv_final()));
    if (std::abs(root / std::abs(root) - ref) > std::abs(root / std::abs(root) + ref)) root = -root;
    Vec4 rf = r.r_final();
    cplx ktil = r.inv_sqrt_det_uv() * std::exp(I / h * (legendre_action(r) + r.G_final()));
    return ktil * std::exp(rf(0) * rf(2) + rf(1) * rf(3)) / root;
}

inline PropagatorValue k_regular(const std::vector<SaddleSolution>& sols, const PropagatorOptions& o = {}) {
    PropagatorValue out;
    out.formula = Formula::regular;
    out.amplitude = 0;
    auto contrib = detail::contributing(sols, o);
    for (size_t a = 0; a < contrib.size(); ++a)
        for (size_t b = a + 1; b < contrib.size(); ++b)
            if ((contrib[a]->v0 - contrib[b]->v0).norm() < o.merge_radius)
                out.warnings.push_back("overlapping saddles: use the transitional or uniform formula");
    bool any_caustic = false;
    for (const auto& s : sols) {
        auto d = detail::diag_of(s);
        if (!(o.include_stokes || !s.stokes_suspect)) {
            out.trajectories.push_back(d);
            continue;
        }
        const auto& r = s.record;
        const double h = r.model->hbar();
        ActionJet jet = compute_action_jet(r);
        const CubicData& c = jet.cubic;
        if (!(std::abs(c.Gp) > o.gprime_min)) throw Error("higher-order-caustic", "G' vanishes");
        if (std::abs(r.det_vv()) <= o.caustic_det) {
            ContourChoice cc = detail::resolve_at_caustic(o.regular_contour);
            d.parameter = 0.0;
            d.contour = cc.name();
            d.factor = detail::at_caustic(r, c, cc);
            out.amplitude += d.factor;
            any_caustic = true;
        } else {
            cplx cube = std::pow(3.0 * c.Gp / h, 1.0 / 3.0);
            cplx wbar = std::sqrt(-I * c.lambda_minus / h) / cube;
            // Sign of the root: det M_vv = -4 lambda+ lambda- det M_uv / hbar^2 ties it to
            // the tracked determinant branches, so the factor joins the at-caustic value.
            cplx ref = r.inv_sqrt_det_uv() * std::sqrt(I * h / c.lambda_plus) / (2.0 * cube * r.inv_sqrt_det_vv());
            if (std::abs(wbar - ref) > std::abs(wbar + ref)) wbar = -wbar;
            ContourChoice cc = o.regular_contour.automatic ? detail::regular_auto(wbar) : o.regular_contour;
            d.parameter = wbar;
            d.contour = cc.name();
            d.factor = detail::regular_factor(cc, wbar);
            out.amplitude += detail::quadratic_term(r) * d.factor;
        }
        out.trajectories.push_back(d);
    }
    if (any_caustic) out.formula = Formula::regular_at_caustic;
    return out;
}

inline PropagatorValue k_regular_at_caustic(const SaddleSolution& psc, const PropagatorOptions& o = {}) {
    const auto& r = psc.record;
    if (!(std::abs(r.det_vv()) <= o.psc_det)) throw Error("precondition", "trajectory is not at a caustic");
    ActionJet jet = compute_action_jet(r);
    if (!(std::abs(jet.cubic.Gp) > o.gprime_min)) throw Error("higher-order-caustic", "G' vanishes");
    PropagatorValue out;
    out.formula = Formula::regular_at_caustic;
    ContourChoice cc = detail::resolve_at_caustic(o.regular_contour);
    auto d = detail::diag_of(psc);
    d.contour = cc.name();
    d.parameter = 0.0;
    out.amplitude = d.factor = detail::at_caustic(r, jet.cubic, cc);
    out.trajectories.push_back(d);
    return out;
}

inline PropagatorValue k_transitional(const SaddleSolution& psc, const Vec2& vT, const PropagatorOptions& o = {}) {
    const auto& r = psc.record;
    if (!(std::abs(r.det_vv()) <= o.psc_det))
        throw Error("precondition", "transitional formula needs a trajectory at the caustic");
    const double h = r.model->hbar();
    PropagatorValue out;
    out.formula = Formula::transitional;
    Vec2 vbar = r.v_final(), ubar = r.u_final();
    double dist = (vT - vbar).norm();
    if (dist > o.validity_radius)
        out.warnings.push_back("v'' outside the validity radius of the transitional formula");
    else if (dist > o.warn_radius)
        out.warnings.push_back("v'' far from the caustic image; transitional formula may be inaccurate");
    ActionJet jet = compute_action_jet(r);
    const CubicData& c = jet.cubic;
    if (!(std::abs(c.Gp) > o.gprime_min)) throw Error("higher-order-caustic", "G' vanishes");
    Vec2 XY = -I * h * (vT - vbar);
    Vec2 ab = c.rotation.transpose() * XY;
    cplx a = ab(0), b = ab(1);
    cplx lam_plus = c.A + c.C;
    cplx cube = std::pow(3.0 * c.Gp / h, 1.0 / 3.0);
    cplx wt = (b / h) / cube;
    ContourChoice cc = o.transitional_contour.automatic ? ContourChoice::parse("C1") : o.transitional_contour;
    auto [f, fp] = airy_combination(cc, wt);
    (void)fp;
    cplx lin = ubar(0) * (vT(0) - vbar(0)) + ubar(1) * (vT(1) - vbar(1));
    out.amplitude = std::sqrt(I * h * pi / lam_plus) * r.inv_sqrt_det_uv() / cube *
                    std::exp(-I / h * a * a / (4.0 * lam_plus)) * f *
                    std::exp(I / h * (r.S_final() + r.G_final()) + lin);
    auto d = detail::diag_of(psc);
    d.parameter = wt;
    d.contour = cc.name();
    d.factor = out.amplitude;
    out.trajectories.push_back(d);
    return out;
}

namespace detail {

inline cplx uniform_exponent(const TrajectoryRecord& r, UniformExponent mode) {
    const double h = r.model->hbar();
    if (mode == UniformExponent::action) return I / h * r.S_final();
    cplx log_det_uv = std::log(std::abs(r.det_uv())) + I * r.sigma_uv_final();
    return I / h * (r.S_final() + r.G_final()) - 0.5 * log_det_uv;
}

struct UniformCandidate {
    const SaddleSolution* first;
    const SaddleSolution* second;
    cplx E1, E2, r1, r2;
};

inline UniformCandidate uniform_candidate(const SaddleSolution& a, const SaddleSolution& b, UniformExponent mode) {
    UniformCandidate c{&a, &b, uniform_exponent(a.record, mode), uniform_exponent(b.record, mode), 0, 0};
    c.r1 = quadratic_term(a.record) * std::exp(-c.E1);
    c.r2 = quadratic_term(b.record) * std::exp(-c.E2);
    return c;
}

// Distance of g1/g2 = -i r1/r2 from one; the mapped amplitude is analytic
// through the coalescence only when g1 and g2 approach each other.
inline double amplitude_mismatch(const UniformCandidate& c) { return std::abs(std::log(-I * c.r1 / c.r2)); }

}  // namespace detail

// Transitional Airy argument w~ of a caustic trajectory at the final value v'';
// it follows the uniform parameter B analytically through the caustic.
struct CausticHint {
    cplx w;
};

inline CausticHint caustic_hint(const SaddleSolution& psc, const Vec2& vT) {
    const auto& r = psc.record;
    const double h = r.model->hbar();
    ActionJet jet = compute_action_jet(r);
    Vec2 ab = jet.cubic.rotation.transpose() * (-I * h * (vT - r.v_final()));
    return CausticHint{(ab(1) / h) / std::pow(3.0 * jet.cubic.Gp / h, 1.0 / 3.0)};
}

inline PropagatorValue k_uniform(const SaddleSolution& s1, const SaddleSolution& s2, const PropagatorOptions& o = {},
                                 const std::optional<CausticHint>& hint = std::nullopt) {
    PropagatorValue out;
    out.formula = Formula::uniform;
    auto ca = detail::uniform_candidate(s1, s2, o.uniform_exponent);
    auto cb = detail::uniform_candidate(s2, s1, o.uniform_exponent);
    auto principal_B = [](const detail::UniformCandidate& x) { return std::pow(0.75 * (x.E2 - x.E1), 2.0 / 3.0); };
    bool use_b;
    cplx B;
    if (o.uniform_labelling == UniformLabelling::dominance) {
        // Re(E2 - E1) >= 0; ties ordered by Im(E2 - E1) <= 0.
        cplx dE = ca.E2 - ca.E1;
        double tie = 1e-9 * (std::abs(dE) + 1.0);
        use_b = std::abs(dE.real()) <= tie ? dE.imag() > 0 : dE.real() < 0;
        B = principal_B(use_b ? cb : ca);
    } else if (hint) {
        // B takes the branch nearest w~; the three branches are the same for
        // either labelling.
        const cplx omega = std::exp(2.0 * pi * I / 3.0);
        cplx b0 = principal_B(ca);
        B = b0;
        for (cplx cand : {b0 * omega, b0 / omega})
            if (std::abs(cand - hint->w) < std::abs(B - hint->w)) B = cand;
        // Saddle 1 sits at y = +sqrt(B) with the principal root, so the
        // labelling is the one with E2 - E1 = (4/3) B^{3/2}.
        cplx w = (4.0 / 3.0) * B * std::sqrt(B);
        use_b = std::abs(w - (ca.E2 - ca.E1)) > std::abs(w + (ca.E2 - ca.E1));
    } else {
        double ma = detail::amplitude_mismatch(ca), mb = detail::amplitude_mismatch(cb);
        use_b = ma != mb ? mb < ma : detail::lex_less(s2.v0, s1.v0);
        B = principal_B(use_b ? cb : ca);
    }
    const auto& c = use_b ? cb : ca;
    cplx dE = c.E2 - c.E1;
    cplx A = 0.5 * (c.E1 + c.E2);
    bool merged = (s1.v0 - s2.v0).norm() < o.merge_radius;
    // Coincident inputs give E1 = E2 and hence B = 0 whatever the geometry, so
    // the parameter is read from the hint or the caustic condition instead.
    bool off_caustic = std::abs(s1.record.det_vv()) > o.psc_det || (hint && !(std::abs(hint->w) < o.small_B));
    if (merged && (!(std::abs(B) < o.small_B) || off_caustic))
        throw Error("inconsistent-input", "identical saddles with a non-small uniform parameter");

    UniformMapData map;
    map.A = A;
    map.B = B;
    map.E1 = c.E1;
    map.E2 = c.E2;
    ContourChoice cc = o.uniform_contour.automatic ? ContourChoice::parse("C1+C2") : o.uniform_contour;
    auto d1 = detail::diag_of(*c.first), d2 = detail::diag_of(*c.second);
    d1.parameter = d2.parameter = B;
    d1.contour = d2.contour = cc.name();
    if (std::abs(B) < o.small_B) {
        // Leading term of the map at coalescence. With the branch of B that
        // follows w~, the uniform path sum_i c_i f_i(B) corresponds to the
        // transitional path -sum_i c_i f_i(w~).
        out.formula = Formula::uniform_at_caustic;
        ActionJet jet = compute_action_jet(c.first->record);
        ContourChoice neg = cc;
        for (auto& x : neg.coeff) x = -x;
        out.amplitude = detail::at_caustic(c.first->record, jet.cubic, neg);
        map.g1 = map.g2 = 0;
    } else {
        cplx sq = std::sqrt(B);
        cplx q = std::sqrt(sq);
        // sqrt(B) paired with E1 = A - (2/3) B^{3/2}.
        if (std::abs((2.0 / 3.0) * B * sq - 0.5 * dE) > std::abs((2.0 / 3.0) * B * sq + 0.5 * dE)) sq = -sq;
        map.g1 = -I * q * c.r1;
        map.g2 = q * c.r2;
        auto [f, fp] = airy_combination(cc, B);
        out.amplitude = I * std::sqrt(pi) * std::exp(A) * ((map.g2 - map.g1) / sq * fp + (map.g1 + map.g2) * f);
    }
    out.uniform = map;
    out.trajectories = {d1, d2};
    return out;
}

// Uniform formula evaluated directly on a caustic trajectory.
inline PropagatorValue k_uniform_at_caustic(const SaddleSolution& psc, const PropagatorOptions& o = {}) {
    if (!(std::abs(psc.record.det_vv()) <= o.psc_det)) throw Error("precondition", "trajectory is not at a caustic");
    return k_uniform(psc, psc, o);
}

inline cplx normalize_amplitude(cplx value, const Vec2& zp, const Vec2& zpp) {
    return value * std::exp(-0.5 * zp.squaredNorm() - 0.5 * zpp.squaredNorm());
}

}  // namespace csp
