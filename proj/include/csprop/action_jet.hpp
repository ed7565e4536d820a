#pragma once

#include <algorithm>
#include <array>

#include "integrator.hpp"

namespace csp {

// Second/third derivatives of the Legendre-transformed action
// S~(u'', u') = S + i hbar u'' v'' in the variable order (u'_x, u'_y, u''_x, u''_y).

struct CubicData {
    cplx A, B, C, D, E, F, G;      // quadratic and cubic coefficients in u''
    cplx lambda_plus, lambda_minus; // eigenvalues of S~_u''u'' / 2, |lambda_minus| <= |lambda_plus|
    cplx N_plus, N_minus;           // sqrt((B/2)^2 + (A - lambda)^2)
    Mat2 rotation;                  // columns: complex-orthonormal eigenvectors (+, -)
    cplx Dp, Ep, Fp, Gp;            // cubic form in (du+, du-)
    double condition = 1.0;
    bool diagonal_case = false;
};

struct ActionJet {
    cplx Stilde;
    Mat4 S2;
    Tensor3 S3;
    double asym2 = 0.0;  // relative asymmetry of S2 before symmetrization
    double asym3 = 0.0;  // relative asymmetry of S3 before symmetrization
    CubicData cubic;
};

namespace detail {

inline void require_dual_regular(const Mat4& M) {
    cplx d = block(M, 0, 1).determinant();
    if (!(std::abs(d) > 1e-12)) throw Error("dual-caustic", "det M_uv vanishes; dual representation singular");
}

}  // namespace detail

inline cplx legendre_action(const TrajectoryRecord& rec) {
    const double h = rec.model->hbar();
    Vec4 r = rec.r_final();
    return rec.S_final() + I * h * (r(0) * r(2) + r(1) * r(3));
}

inline Mat4 second_derivatives(const TrajectoryRecord& rec, double* asym = nullptr) {
    const double h = rec.model->hbar();
    Mat4 M = rec.M_final();
    detail::require_dual_regular(M);
    Mat2 Muu = block(M, 0, 0), Muv = block(M, 0, 1), Mvu = block(M, 1, 0), Mvv = block(M, 1, 1);
    Mat2 Wi = Muv.inverse();
    Mat4 S;
    S.block<2, 2>(0, 0) = I * h * Wi * Muu;
    S.block<2, 2>(0, 2) = -I * h * Wi;
    S.block<2, 2>(2, 0) = I * h * (Mvu - Mvv * Wi * Muu);
    S.block<2, 2>(2, 2) = I * h * Mvv * Wi;
    double mx = S.cwiseAbs().maxCoeff();
    if (asym) *asym = mx > 0 ? (S - S.transpose()).cwiseAbs().maxCoeff() / mx : 0.0;
    return 0.5 * (S + S.transpose());
}

inline Tensor3 third_derivatives(const TrajectoryRecord& rec, double* asym = nullptr) {
    const double h = rec.model->hbar();
    Mat4 M = rec.M_final();
    detail::require_dual_regular(M);
    Mat2 Muu = block(M, 0, 0), Muv = block(M, 0, 1), Mvv = block(M, 1, 1);
    Mat2 Wi = Muv.inverse();
    Mat4 Linv = Mat4::Zero();
    Linv.block<2, 2>(0, 0) = Mat2::Identity();
    Linv.block<2, 2>(2, 0) = -Wi * Muu;
    Linv.block<2, 2>(2, 2) = Wi;
    Mat4 Lam = Mat4::Zero();
    Lam.block<2, 2>(0, 0) = -Wi;
    Lam.block<2, 2>(2, 0) = Mvv * Wi;
    Lam.block<2, 2>(2, 2) = -Mat2::Identity();
    Lam *= -I * h;
    Tensor3 U = rec.U_final();

    // X_{ijn} = sum_{m,l} Linv_{mi} U_{mln} Linv_{lj}
    Tensor3 X;
    for (int n = 0; n < 4; ++n) {
        Mat4 Un;
        for (int m = 0; m < 4; ++m)
            for (int l = 0; l < 4; ++l) Un(m, l) = U(m, l, n);
        Mat4 P = Linv.transpose() * Un * Linv;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) X(i, j, n) = P(i, j);
    }
    Tensor3 T;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) {
                cplx acc = 0;
                for (int n = 0; n < 4; ++n) acc += Lam(k, n) * X(i, j, n);
                T(i, j, k) = 2.0 * acc;
            }
    Tensor3 S;
    double mx = T.max_abs(), dev = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) {
                std::array<cplx, 6> p{T(i, j, k), T(i, k, j), T(j, i, k), T(j, k, i), T(k, i, j), T(k, j, i)};
                cplx avg = 0;
                for (auto x : p) avg += x;
                avg /= 6.0;
                for (auto x : p) dev = std::max(dev, std::abs(x - avg));
                S(i, j, k) = avg;
            }
    if (asym) *asym = mx > 0 ? dev / mx : 0.0;
    return S;
}

inline CubicData diagonalize_and_cubics(const Mat4& S2, const Tensor3& S3, double max_condition = 1e8) {
    CubicData c;
    c.A = 0.5 * S2(2, 2);
    c.B = S2(2, 3);
    c.C = 0.5 * S2(3, 3);
    c.D = S3(2, 2, 2) / 6.0;
    c.E = S3(2, 2, 3) / 2.0;
    c.F = S3(2, 3, 3) / 2.0;
    c.G = S3(3, 3, 3) / 6.0;
    const double scale = std::max({std::abs(c.A), std::abs(c.B), std::abs(c.C)});
    if (scale == 0.0) throw Error("unsupported-topology", "quadratic form in u'' vanishes identically");

    cplx lp, lm;
    Vec2 ep, em;
    if (std::abs(c.B) <= 1e-14 * scale) {
        c.diagonal_case = true;
        lp = c.A;
        lm = c.C;
        ep = Vec2(1, 0);
        em = Vec2(0, 1);
        if (std::abs(lm) > std::abs(lp)) {
            std::swap(lp, lm);
            std::swap(ep, em);
        }
        c.condition = 1.0;
    } else {
        cplx half_tr = 0.5 * (c.A + c.C);
        cplx det = c.A * c.C - 0.25 * c.B * c.B;
        cplx disc = std::sqrt(half_tr * half_tr - det);
        lp = half_tr + disc;
        lm = half_tr - disc;
        if (std::abs(lm) > std::abs(lp)) std::swap(lp, lm);
        if (std::abs(lp) > 0) lm = det / lp;  // avoid cancellation in the small root
        auto vec_for = [&](cplx lam) {
            Vec2 v1(0.5 * c.B, lam - c.A), v2(lam - c.C, 0.5 * c.B);
            return v1.norm() >= v2.norm() ? v1 : v2;
        };
        ep = vec_for(lp);
        em = vec_for(lm);
        auto normalize = [&](Vec2& v) {
            cplx q = v(0) * v(0) + v(1) * v(1);
            double cond = v.squaredNorm() / std::abs(q);
            c.condition = std::max(c.condition, cond);
            v /= std::sqrt(q);
        };
        normalize(ep);
        normalize(em);
        if (!(c.condition <= max_condition))
            throw Error("ill-conditioned", "eigenvector normalization condition exceeds limit");
    }
    if (std::abs(lp) <= 1e-10 * scale)
        throw Error("unsupported-topology", "both eigenvalues vanish (non-fold caustic)");
    c.lambda_plus = lp;
    c.lambda_minus = lm;
    c.N_plus = std::sqrt(0.25 * c.B * c.B + (c.A - lp) * (c.A - lp));
    c.N_minus = std::sqrt(0.25 * c.B * c.B + (c.A - lm) * (c.A - lm));
    c.rotation.col(0) = ep;
    c.rotation.col(1) = em;

    auto cubic = [&](int a, int b, int d) {
        cplx acc = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    acc += S3(2 + i, 2 + j, 2 + k) * c.rotation(i, a) * c.rotation(j, b) * c.rotation(k, d);
        return acc;
    };
    c.Dp = cubic(0, 0, 0) / 6.0;
    c.Ep = cubic(0, 0, 1) / 2.0;
    c.Fp = cubic(0, 1, 1) / 2.0;
    c.Gp = cubic(1, 1, 1) / 6.0;
    return c;
}

inline ActionJet compute_action_jet(const TrajectoryRecord& rec) {
    ActionJet j;
    j.Stilde = legendre_action(rec);
    j.S2 = second_derivatives(rec, &j.asym2);
    j.S3 = third_derivatives(rec, &j.asym3);
    j.cubic = diagonalize_and_cubics(j.S2, j.S3);
    return j;
}

}  // namespace csp
