#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "integrator.hpp"

namespace csp {

struct SolverOptions {
    double integrator_tol = default_tol;
    int max_iter = 50;
    double residual_tol = 1e-12;   // target; 1e-10 is the acceptance floor
    double accept_tol = 1e-10;
    double dedup_radius = 1e-6;
    double armijo_c = 1e-4;
    int max_backtracks = 30;
    double singular_cond = 1e12;   // switch to pseudo-inverse steps above this
    double stokes_eta = 10.0;
    int continuation_steps = 8;
    bool use_real_seed = true;
    bool use_continuation_seed = true;
    double caustic_det_tol = 1e-9;
    double near_caustic_det = 1e-2;
};

enum class SolutionKind { mixed, dual, psc };

inline const char* to_string(SolutionKind k) {
    switch (k) {
        case SolutionKind::mixed: return "mixed";
        case SolutionKind::dual: return "dual";
        case SolutionKind::psc: return "psc";
    }
    return "?";
}

struct SaddleSolution {
    SolutionKind kind = SolutionKind::mixed;
    TrajectoryRecord record;
    double residual = 0.0;
    Vec2 v0;          // free initial data v'(0)
    Vec2 target;      // v'' (mixed/psc hint) or u'' (dual)
    int iterations = 0;
    bool used_pseudo_inverse = false;
    std::string classification;  // regular | near-caustic | psc
    cplx F;                      // S + G - hbar sigma_vv / 2
    bool stokes_suspect = false;
};

struct SeedFailure {
    Vec2 seed;
    std::string reason;
};

struct SolveReport {
    std::vector<SaddleSolution> solutions;
    std::vector<SeedFailure> failures;
};

namespace detail {

inline ComplexPhasePoint point(const Vec2& u, const Vec2& v) { return {u(0), u(1), v(0), v(1)}; }

// Newton on p = v'(0) for residual f(record) with Jacobian jac(record).
template <class Residual, class Jacobian>
inline std::optional<SaddleSolution> newton(const ModelPtr& model, const Vec2& u0, Vec2 p, double T,
                                            const SolverOptions& o, Residual res, Jacobian jac,
                                            std::string& why) {
    auto eval = [&](const Vec2& q, TrajectoryRecord& rec, Vec2& R) -> bool {
        try {
            rec = integrate(model, point(u0, q), T, o.integrator_tol);
        } catch (const Error& e) {
            why = e.what();
            return false;
        }
        R = res(rec);
        return finite(R(0)) && finite(R(1));
    };
    TrajectoryRecord rec;
    Vec2 R;
    if (!eval(p, rec, R)) return std::nullopt;
    bool pinv = false;
    for (int it = 0; it <= o.max_iter; ++it) {
        double rn = R.norm();
        if (rn <= o.residual_tol || it == o.max_iter) {
            if (rn > o.accept_tol) {
                why = "no convergence within max_iter (residual " + std::to_string(rn) + ")";
                return std::nullopt;
            }
            SaddleSolution s;
            s.record = std::move(rec);
            s.residual = rn;
            s.v0 = p;
            s.iterations = it;
            s.used_pseudo_inverse = pinv;
            return s;
        }
        Mat2 Jm = jac(rec);
        Eigen::JacobiSVD<Mat2> svd(Jm, Eigen::ComputeFullU | Eigen::ComputeFullV);
        auto sv = svd.singularValues();
        Vec2 step;
        if (sv(0) == 0.0 || sv(0) > o.singular_cond * sv(1)) {
            pinv = true;
            svd.setThreshold(1.0 / o.singular_cond);
            step = -svd.solve(R);
        } else {
            step = -Jm.partialPivLu().solve(R);
        }
        double alpha = 1.0;
        bool moved = false;
        for (int b = 0; b < o.max_backtracks; ++b, alpha *= 0.5) {
            TrajectoryRecord r2;
            Vec2 R2;
            Vec2 q = p + alpha * step;
            if (!eval(q, r2, R2)) continue;
            if (R2.norm() <= (1.0 - o.armijo_c * alpha) * rn) {
                p = q;
                rec = std::move(r2);
                R = R2;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // Stalled at the noise floor of the integrated map.
            if (rn <= o.accept_tol) {
                SaddleSolution s;
                s.record = std::move(rec);
                s.residual = rn;
                s.v0 = p;
                s.iterations = it;
                s.used_pseudo_inverse = pinv;
                return s;
            }
            why = "line search failed (residual " + std::to_string(rn) + ")";
            return std::nullopt;
        }
    }
    why = "no convergence";
    return std::nullopt;
}

inline void finish(SaddleSolution& s, const SolverOptions& o, const Vec2& zp, const Vec2& zpp) {
    const double h = s.record.model->hbar();
    cplx dvv = s.record.det_vv();
    s.F = s.record.S_final() + s.record.G_final() - 0.5 * h * s.record.sigma_vv_final();
    // Filter on the exponent of the normalized amplitude, whose modulus is
    // physically bounded by one.
    double norm_shift = 0.5 * h * (zp.squaredNorm() + zpp.squaredNorm());
    s.stokes_suspect = s.F.imag() + norm_shift < -o.stokes_eta * h;
    if (std::abs(dvv) <= o.caustic_det_tol)
        s.classification = "psc";
    else if (std::abs(dvv) <= o.near_caustic_det)
        s.classification = "near-caustic";
    else
        s.classification = "regular";
}

inline bool lex_less(const Vec2& a, const Vec2& b) {
    for (int i = 0; i < 2; ++i) {
        if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
        if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
    }
    return false;
}

// Near a caustic Newton converges to a double root only to about the square
// root of the residual, so non-regular solutions closer than `double_root`
// (relative to |v'(0)|) are taken as copies of one root.
inline void dedup_and_sort(std::vector<SaddleSolution>& v, double radius, double double_root = 0.0) {
    std::sort(v.begin(), v.end(), [](const SaddleSolution& a, const SaddleSolution& b) {
        return lex_less(a.v0, b.v0);
    });
    std::vector<SaddleSolution> out;
    for (auto& s : v) {
        bool dup = false;
        for (auto& k : out) {
            double d = (k.v0 - s.v0).norm();
            bool close = d <= radius || (k.classification != "regular" && s.classification != "regular" &&
                                         d <= double_root * (1.0 + k.v0.norm()));
            if (close) {
                dup = true;
                if (s.residual < k.residual) k = std::move(s);
                break;
            }
        }
        if (!dup) out.push_back(std::move(s));
    }
    std::sort(out.begin(), out.end(), [](const SaddleSolution& a, const SaddleSolution& b) {
        if (a.residual != b.residual) return a.residual < b.residual;
        return lex_less(a.v0, b.v0);
    });
    v = std::move(out);
}

}  // namespace detail

// Seeds of the default strategy: the conjugate of z' and, if enabled, a
// continuation in T starting from the identity flow v'(0) = v''.
inline std::vector<Vec2> default_mixed_seeds(const ModelPtr& model, const Vec2& u0, const Vec2& vT,
                                             double T, const SolverOptions& o) {
    std::vector<Vec2> seeds;
    if (o.use_real_seed) seeds.push_back(u0.conjugate());
    if (o.use_continuation_seed && T > 0) {
        Vec2 p = vT;
        bool ok = true;
        for (int k = 1; k <= o.continuation_steps && ok; ++k) {
            double t = T * k / o.continuation_steps;
            std::string why;
            auto s = detail::newton(
                model, u0, p, t, o, [&](const TrajectoryRecord& r) -> Vec2 { return r.v_final() - vT; },
                [](const TrajectoryRecord& r) -> Mat2 { return block(r.M_final(), 1, 1); }, why);
            if (s)
                p = s->v0;
            else
                ok = false;
        }
        if (ok) seeds.push_back(p);
    }
    return seeds;
}

inline SolveReport solve_mixed(const ModelPtr& model, const Vec2& u0, const Vec2& vT, double T,
                               std::vector<Vec2> seeds, const SolverOptions& o = {}) {
    if (!(T > 0)) throw Error("solver", "solve_mixed needs T > 0");
    if (seeds.empty()) throw Error("solver", "at least one seed is required");
    SolveReport rep;
    for (const auto& seed : seeds) {
        std::string why;
        auto s = detail::newton(
            model, u0, seed, T, o, [&](const TrajectoryRecord& r) -> Vec2 { return r.v_final() - vT; },
            [](const TrajectoryRecord& r) -> Mat2 { return block(r.M_final(), 1, 1); }, why);
        if (!s) {
            rep.failures.push_back({seed, why});
            continue;
        }
        s->kind = SolutionKind::mixed;
        s->target = vT;
        detail::finish(*s, o, u0, vT.conjugate());
        rep.solutions.push_back(std::move(*s));
    }
    detail::dedup_and_sort(rep.solutions, o.dedup_radius, std::sqrt(o.accept_tol));
    return rep;
}

inline SolveReport solve_dual(const ModelPtr& model, const Vec2& u0, const Vec2& uT, double T,
                              std::vector<Vec2> seeds, const SolverOptions& o = {}) {
    if (!(T > 0)) throw Error("solver", "solve_dual needs T > 0");
    if (seeds.empty()) throw Error("solver", "at least one seed is required");
    SolveReport rep;
    for (const auto& seed : seeds) {
        std::string why;
        auto s = detail::newton(
            model, u0, seed, T, o, [&](const TrajectoryRecord& r) -> Vec2 { return r.u_final() - uT; },
            [](const TrajectoryRecord& r) -> Mat2 { return block(r.M_final(), 0, 1); }, why);
        if (!s) {
            // A Jacobian that vanishes identically (e.g. M_uv = 0) lands here.
            rep.failures.push_back({seed, why});
            continue;
        }
        s->kind = SolutionKind::dual;
        s->target = uT;
        detail::finish(*s, o, u0, s->record.v_final().conjugate());
        rep.solutions.push_back(std::move(*s));
    }
    detail::dedup_and_sort(rep.solutions, o.dedup_radius, std::sqrt(o.accept_tol));
    return rep;
}

namespace detail {

// d(det M_vv)/d v'_k from the tangent tensor: dM_vv(i,j)/dv'_k = 2 U(2+j, 2+k, 2+i).
inline Vec2 grad_det_vv(const TrajectoryRecord& r) {
    Mat2 m = block(r.M_final(), 1, 1);
    Mat2 adj;
    adj << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    Tensor3 U = r.U_final();
    Vec2 g;
    for (int k = 0; k < 2; ++k) {
        cplx acc = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) acc += adj(j, i) * 2.0 * U(2 + j, 2 + k, 2 + i);
        g(k) = acc;
    }
    return g;
}

}  // namespace detail

struct CausticFailure : Error {
    CausticFailure(const std::string& w, Vec2 best, double best_det)
        : Error("caustic", w), best_v0(std::move(best)), best_abs_det(best_det) {}
    Vec2 best_v0;
    double best_abs_det;
};

// Phase-space-caustic trajectory from u(0) = u' nearest to v''_hint.
inline SaddleSolution locate_caustic(const ModelPtr& model, const Vec2& u0, double T, const Vec2& hint,
                                     const SolverOptions& o = {},
                                     std::optional<Vec2> start = std::nullopt) {
    if (!(T > 0)) throw Error("solver", "locate_caustic needs T > 0");
    Vec2 p;
    if (start) {
        p = *start;
    } else {
        auto seeds = default_mixed_seeds(model, u0, hint, T, o);
        if (seeds.empty()) seeds.push_back(hint);
        auto rep = solve_mixed(model, u0, hint, T, seeds, o);
        p = rep.solutions.empty() ? seeds.back() : rep.solutions.front().v0;
    }
    auto run = [&](const Vec2& q) { return integrate(model, detail::point(u0, q), T, o.integrator_tol); };
    TrajectoryRecord rec;
    try {
        rec = run(p);
    } catch (const Error& e) {
        throw CausticFailure(std::string("start point not integrable: ") + e.what(), p, 0.0);
    }
    int iters = 0;
    // Stage 1: Gauss-Newton on |v(T) - hint|^2 + w^2 |det M_vv|^2, w increasing.
    for (double w : {1.0, 10.0, 100.0, 1e3, 1e4}) {
        for (int it = 0; it < o.max_iter; ++it, ++iters) {
            Mat2 mvv = block(rec.M_final(), 1, 1);
            cplx det = mvv.determinant();
            Vec2 g = detail::grad_det_vv(rec);
            Eigen::Matrix<cplx, 3, 1> R;
            R << rec.v_final() - hint, w * det;
            Eigen::Matrix<cplx, 3, 2> Jm;
            Jm.topRows<2>() = mvv;
            Jm.row(2) = w * g.transpose();
            Vec2 step = -(Jm.adjoint() * Jm).ldlt().solve(Jm.adjoint() * R);
            if (!finite(step(0)) || !finite(step(1))) break;
            double f0 = R.squaredNorm();
            double alpha = 1.0;
            bool moved = false;
            for (int b = 0; b < o.max_backtracks; ++b, alpha *= 0.5) {
                try {
                    TrajectoryRecord r2 = run(p + alpha * step);
                    Eigen::Matrix<cplx, 3, 1> R2;
                    R2 << r2.v_final() - hint, w * block(r2.M_final(), 1, 1).determinant();
                    if (R2.squaredNorm() < f0) {
                        p += alpha * step;
                        rec = std::move(r2);
                        moved = true;
                        break;
                    }
                } catch (const Error&) {
                }
            }
            if (!moved || (alpha * step).norm() <= 1e-13 * (1.0 + p.norm())) break;
        }
    }
    // Stage 2: exact constraint det M_vv = 0, Gauss-Newton along the caustic family.
    for (int it = 0; it < o.max_iter; ++it, ++iters) {
        Mat2 mvv = block(rec.M_final(), 1, 1);
        cplx det = mvv.determinant();
        Vec2 g = detail::grad_det_vv(rec);
        double gn = g.squaredNorm();
        if (gn == 0.0) break;
        Vec2 dc = -det * g.conjugate() / gn;
        Vec2 n(-g(1), g(0));
        Vec2 Mn = mvv * n;
        Vec2 resid = rec.v_final() - hint + mvv * dc;
        cplx alpha = Mn.squaredNorm() > 0 ? -(Mn.adjoint() * resid)(0) / Mn.squaredNorm() : cplx(0);
        Vec2 step = dc + alpha * n;
        if (!finite(step(0)) || !finite(step(1))) break;
        double lam = 1.0;
        bool moved = false;
        for (int b = 0; b < o.max_backtracks; ++b, lam *= 0.5) {
            try {
                TrajectoryRecord r2 = run(p + lam * step);
                cplx d2 = block(r2.M_final(), 1, 1).determinant();
                if (std::abs(d2) <= 2.0 * std::abs(det) + 1e-13) {
                    p += lam * step;
                    rec = std::move(r2);
                    moved = true;
                    break;
                }
            } catch (const Error&) {
            }
        }
        if (!moved) break;
        if (std::abs(block(rec.M_final(), 1, 1).determinant()) <= 1e-13 &&
            (lam * step).norm() <= 1e-10 * (1.0 + p.norm()))
            break;
    }
    double adet = std::abs(rec.det_vv());
    if (!(adet <= o.caustic_det_tol))
        throw CausticFailure("caustic locator did not reach |det M_vv| <= tol", p, adet);
    SaddleSolution s;
    s.kind = SolutionKind::psc;
    s.record = std::move(rec);
    s.residual = (s.record.v_final() - hint).norm();
    s.v0 = p;
    s.target = hint;
    s.iterations = iters;
    detail::finish(s, o, u0, s.record.v_final().conjugate());
    s.classification = "psc";
    return s;
}

}  // namespace csp
