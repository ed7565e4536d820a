#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <vector>

#include "core.hpp"
#include "model.hpp"

namespace csp {

inline constexpr double default_tol = 1e-10;

// Packed ODE state: r(4) | M(16, column-major) | U(64, index (k,l,i)) | S | G.
inline constexpr int kStateSize = 4 + 16 + 64 + 2;
using State = std::array<cplx, kStateSize>;

namespace detail {
inline constexpr int oM = 4, oU = 20, oS = 84, oG = 85;
}

struct TrajectorySample {
    double t;
    State y;
    double sigma_vv;
    double sigma_uv;
};

struct IntegratorDiagnostics {
    int accepted = 0;
    int rejected = 0;
    int densified = 0;
    double tol = default_tol;
};

class TrajectoryRecord {
public:
    ModelPtr model;
    Vec4 initial;
    double T = 0.0;
    std::vector<TrajectorySample> samples;
    IntegratorDiagnostics diag;
    bool sigma_uv_defined = false;

    const TrajectorySample& last() const { return samples.back(); }

    Vec4 r(size_t k) const {
        Vec4 v;
        for (int i = 0; i < 4; ++i) v(i) = samples[k].y[i];
        return v;
    }
    Mat4 M(size_t k) const {
        Mat4 m;
        for (int i = 0; i < 16; ++i) m.data()[i] = samples[k].y[detail::oM + i];
        return m;
    }
    Tensor3 U(size_t k) const {
        Tensor3 u;
        for (int i = 0; i < 64; ++i) u.a[i] = samples[k].y[detail::oU + i];
        return u;
    }
    // Action including the boundary term -(i hbar / 2)(u(t) v(t) + u' v').
    cplx S(size_t k) const {
        const double h = model->hbar();
        Vec4 rt = r(k);
        cplx bt = rt(0) * rt(2) + rt(1) * rt(3) + initial(0) * initial(2) + initial(1) * initial(3);
        return samples[k].y[detail::oS] - 0.5 * I * h * bt;
    }
    cplx G(size_t k) const { return samples[k].y[detail::oG]; }

    Vec4 r_final() const { return r(samples.size() - 1); }
    Mat4 M_final() const { return M(samples.size() - 1); }
    Tensor3 U_final() const { return U(samples.size() - 1); }
    cplx S_final() const { return S(samples.size() - 1); }
    cplx G_final() const { return G(samples.size() - 1); }
    double sigma_vv_final() const { return last().sigma_vv; }
    double sigma_uv_final() const { return last().sigma_uv; }

    Vec2 u_final() const { return r_final().head<2>(); }
    Vec2 v_final() const { return r_final().tail<2>(); }
    Vec2 u_initial() const { return initial.head<2>(); }
    Vec2 v_initial() const { return initial.tail<2>(); }

    cplx det_vv() const { return block(M_final(), 1, 1).determinant(); }
    cplx det_uv() const { return block(M_final(), 0, 1).determinant(); }

    // det^{-1/2} with the continuously tracked phase.
    cplx inv_sqrt_det_vv() const {
        return std::pow(std::abs(det_vv()), -0.5) * std::exp(-0.5 * I * sigma_vv_final());
    }
    cplx inv_sqrt_det_uv() const {
        return std::pow(std::abs(det_uv()), -0.5) * std::exp(-0.5 * I * sigma_uv_final());
    }
};

namespace detail {

inline void rhs(const HamiltonianModel& m, const State& y, State& dy) {
    const double h = m.hbar();
    Vec4 r;
    for (int i = 0; i < 4; ++i) r(i) = y[i];
    Jet j = eval_jet(m, ComplexPhasePoint::from(r));

    auto applyJ = [h](const auto& x, int i) -> cplx {
        return i < 2 ? -I / h * x(i + 2) : I / h * x(i - 2);
    };
    Vec4 rdot;
    for (int i = 0; i < 4; ++i) rdot(i) = applyJ(j.d1, i);
    for (int i = 0; i < 4; ++i) dy[i] = rdot(i);

    Mat4 JH;
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 4; ++c) JH(i, c) = i < 2 ? -I / h * j.d2(i + 2, c) : I / h * j.d2(i - 2, c);

    Mat4 M;
    for (int i = 0; i < 16; ++i) M.data()[i] = y[oM + i];
    Mat4 Md = JH * M;
    for (int i = 0; i < 16; ++i) dy[oM + i] = Md.data()[i];

    // W_{jkl} = H'''_{jab} M_{ak} M_{bl}
    std::array<cplx, 64> W{};
    for (int jj = 0; jj < 4; ++jj) {
        Mat4 Hj;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) Hj(a, b) = j.d3(jj, a, b);
        if (Hj.cwiseAbs().maxCoeff() == 0.0) continue;
        Mat4 P = M.transpose() * Hj * M;
        for (int k = 0; k < 4; ++k)
            for (int l = 0; l < 4; ++l) W[16 * jj + 4 * k + l] = P(k, l);
    }
    for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
            Vec4 col, wcol;
            for (int i = 0; i < 4; ++i) {
                col(i) = y[oU + 16 * k + 4 * l + i];
                wcol(i) = W[16 * i + 4 * k + l];
            }
            Vec4 out = JH * col;
            for (int i = 0; i < 4; ++i) dy[oU + 16 * k + 4 * l + i] = out(i) + 0.5 * applyJ(wcol, i);
        }

    cplx kin = rdot(0) * r(2) + rdot(1) * r(3) - r(0) * rdot(2) - r(1) * rdot(3);
    dy[oS] = 0.5 * I * h * kin - j.H;
    dy[oG] = 0.5 * (j.d2(0, 2) + j.d2(1, 3));
}

inline double err_norm(const State& e, const State& y0, const State& y1, double tol) {
    double acc = 0.0;
    for (int i = 0; i < kStateSize; ++i) {
        double sc = tol * (1.0 + std::max(std::abs(y0[i]), std::abs(y1[i])));
        double q = std::abs(e[i]) / sc;
        acc = std::max(acc, q);
    }
    return acc;
}

inline cplx det_block(const State& y, int r, int c) {
    Mat2 m;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) m(a, b) = y[oM + 4 * (2 * c + b) + (2 * r + a)];
    return m.determinant();
}

// Integrate from the state y0 at t0 over duration dt (may be negative).
inline void run(const HamiltonianModel& m, TrajectoryRecord& rec, double dt, double tol) {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const double dir = dt >= 0 ? 1.0 : -1.0;
    const double span = std::abs(dt);
    if (span == 0.0) return;

    TrajectorySample cur = rec.samples.back();
    const double t_end = cur.t + dt;
    State k1, k2, k3, k4, k5, k6, k7, tmp, ynew, err;
    rhs(m, cur.y, k1);

    double hstep = std::min(span, 1e-3 * std::max(1.0, span));
    const double hmin = 1e-14 * std::max(1.0, span);
    const int max_steps = 2000000;
    int steps = 0;

    while (dir * (t_end - cur.t) > 0) {
        if (++steps > max_steps) throw Error("integration", "step budget exhausted");
        double h = std::min(hstep, dir * (t_end - cur.t));
        bool last_step = h >= dir * (t_end - cur.t);
        double hs = dir * h;
        auto stage = [&](State& out, std::initializer_list<std::pair<double, const State*>> terms) {
            for (int i = 0; i < kStateSize; ++i) {
                cplx s = cur.y[i];
                for (const auto& [c, k] : terms) s += hs * c * (*k)[i];
                out[i] = s;
            }
        };
        bool ok = true;
        try {
            stage(tmp, {{a21, &k1}});
            rhs(m, tmp, k2);
            stage(tmp, {{a31, &k1}, {a32, &k2}});
            rhs(m, tmp, k3);
            stage(tmp, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
            rhs(m, tmp, k4);
            stage(tmp, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
            rhs(m, tmp, k5);
            stage(tmp, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
            rhs(m, tmp, k6);
            stage(ynew, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
            rhs(m, ynew, k7);
        } catch (const Error&) {
            ok = false;
        }
        double en = 0.0;
        if (ok) {
            for (int i = 0; i < kStateSize; ++i)
                err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            en = err_norm(err, cur.y, ynew, tol);
            ok = std::isfinite(en);
        }
        if (!ok) {
            ++rec.diag.rejected;
            hstep = h * 0.25;
            if (hstep < hmin) throw Error("integration", "non-finite state; trajectory escaped");
            continue;
        }
        if (en > 1.0) {
            ++rec.diag.rejected;
            hstep = h * std::max(0.2, 0.9 * std::pow(en, -0.2));
            if (hstep < hmin) throw Error("integration", "step size underflow");
            continue;
        }
        // Densify until both tracked determinant phases move by less than pi/2.
        cplx dvv = det_block(ynew, 1, 1), duv = det_block(ynew, 0, 1);
        cplx pvv = det_block(cur.y, 1, 1), puv = det_block(cur.y, 0, 1);
        double jump_vv = std::abs(std::arg(dvv / pvv));
        double jump_uv = rec.sigma_uv_defined && std::abs(puv) > 0 && std::abs(duv) > 0
                             ? std::abs(std::arg(duv / puv))
                             : 0.0;
        if ((jump_vv > pi / 2 || jump_uv > pi / 2) && h > hmin * 16) {
            ++rec.diag.densified;
            hstep = h * 0.5;
            continue;
        }
        TrajectorySample next;
        next.t = last_step ? t_end : cur.t + hs;
        next.y = ynew;
        next.sigma_vv = cur.sigma_vv + std::arg(dvv / pvv);
        if (rec.sigma_uv_defined) {
            next.sigma_uv = std::abs(puv) > 0 && std::abs(duv) > 0 ? cur.sigma_uv + std::arg(duv / puv)
                                                                   : cur.sigma_uv;
        } else if (std::abs(duv) > 0) {
            // det M_uv starts at zero; its phase leaves t = 0 along
            // arg(-det H''_vv) (leading order t^2), so unwrap from there.
            Vec4 r0;
            for (int i = 0; i < 4; ++i) r0(i) = rec.samples.front().y[i];
            Jet j0 = eval_jet(m, ComplexPhasePoint::from(r0));
            cplx lead = -j0.d2.block<2, 2>(2, 2).determinant();
            double ref = std::abs(lead) > 0 ? std::arg(lead) : 0.0;
            next.sigma_uv = unwrap_near(duv, ref);
            rec.sigma_uv_defined = true;
        } else {
            next.sigma_uv = 0.0;
        }
        rec.samples.push_back(next);
        ++rec.diag.accepted;
        cur = next;
        k1 = k7;
        double fac = en > 0 ? 0.9 * std::pow(en, -0.2) : 5.0;
        hstep = h * std::clamp(fac, 0.2, 5.0);
    }
}

}  // namespace detail

inline TrajectoryRecord integrate(const ModelPtr& model, const ComplexPhasePoint& initial, double T,
                                  double tol = default_tol) {
    if (!(T >= 0)) throw Error("integration", "T must be non-negative");
    if (!(tol >= 1e-13 && tol <= 1e-4)) throw Error("integration", "tol outside [1e-13, 1e-4]");
    TrajectoryRecord rec;
    rec.model = model;
    rec.initial = initial.vec();
    rec.T = T;
    rec.diag.tol = tol;
    TrajectorySample s0;
    s0.t = 0.0;
    s0.y.fill(cplx{});
    for (int i = 0; i < 4; ++i) s0.y[i] = rec.initial(i);
    for (int i = 0; i < 4; ++i) s0.y[detail::oM + 5 * i] = 1.0;
    s0.sigma_vv = 0.0;
    s0.sigma_uv = 0.0;
    rec.samples.push_back(s0);
    detail::run(*model, rec, T, tol);
    return rec;
}

// Integrate the complex Hamilton equations alone (no tangent data), for
// time-reversal checks; T may be negative.
inline Vec4 flow(const ModelPtr& model, const Vec4& r0, double T, double tol = default_tol) {
    TrajectoryRecord rec;
    rec.model = model;
    rec.initial = r0;
    rec.diag.tol = tol;
    TrajectorySample s0;
    s0.t = 0.0;
    s0.y.fill(cplx{});
    for (int i = 0; i < 4; ++i) s0.y[i] = r0(i);
    for (int i = 0; i < 4; ++i) s0.y[detail::oM + 5 * i] = 1.0;
    s0.sigma_vv = s0.sigma_uv = 0.0;
    rec.samples.push_back(s0);
    detail::run(*model, rec, T, tol);
    return rec.r_final();
}

enum class Block { vv, uv };

// Continuously unwrapped phase of det M_vv or det M_uv at time t.
inline double phase_of_block(const TrajectoryRecord& rec, Block b, double t) {
    if (t < 0 || t > rec.T * (1 + 1e-15) + 1e-300) throw Error("range", "t outside the record");
    size_t k = 0;
    while (k + 1 < rec.samples.size() && rec.samples[k + 1].t <= t) ++k;
    const TrajectorySample& s = rec.samples[k];
    double base = b == Block::vv ? s.sigma_vv : s.sigma_uv;
    cplx d0 = detail::det_block(s.y, b == Block::vv ? 1 : 0, 1);
    if (s.t == t) {
        if (std::abs(d0) < 1e-14) throw Error("at-caustic", "determinant vanishes; phase undefined");
        return base;
    }
    TrajectoryRecord sub;
    sub.model = rec.model;
    sub.initial = rec.initial;
    sub.diag.tol = rec.diag.tol;
    sub.sigma_uv_defined = rec.sigma_uv_defined;
    sub.samples.push_back(s);
    detail::run(*rec.model, sub, t - s.t, rec.diag.tol);
    const TrajectorySample& e = sub.last();
    cplx d1 = detail::det_block(e.y, b == Block::vv ? 1 : 0, 1);
    if (std::abs(d1) < 1e-14) throw Error("at-caustic", "determinant vanishes; phase undefined");
    return b == Block::vv ? e.sigma_vv : e.sigma_uv;
}

// CSV with columns t, Re/Im of r, |det M_vv|, sigma_vv, Re/Im S.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
    os << "t,re_ux,im_ux,re_uy,im_uy,re_vx,im_vx,re_vy,im_vy,abs_det_mvv,sigma_vv,re_S,im_S\n";
    char buf[64];
    auto put = [&](double x, bool last = false) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        os << buf << (last ? '\n' : ',');
    };
    for (size_t k = 0; k < rec.samples.size(); ++k) {
        put(rec.samples[k].t);
        Vec4 r = rec.r(k);
        for (int i = 0; i < 4; ++i) {
            put(r(i).real());
            put(r(i).imag());
        }
        put(std::abs(detail::det_block(rec.samples[k].y, 1, 1)));
        put(rec.samples[k].sigma_vv);
        cplx S = rec.S(k);
        put(S.real());
        put(S.imag(), true);
    }
}

}  // namespace csp
