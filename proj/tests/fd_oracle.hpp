#pragma once

#include <functional>

#include <csprop/action_jet.hpp>
#include <csprop/boundary.hpp>

namespace csp::testing {

// Dual configuration (u', u'') reached from a known trajectory.
struct DualPoint {
    ModelPtr model;
    Vec2 u0, uT, v0;
    double T;
};

inline SolverOptions tight_solver() {
    SolverOptions o;
    o.integrator_tol = 1e-13;
    o.residual_tol = 1e-13;
    return o;
}

// Re-solve the dual problem at (u' + du', u'' + du'') starting from the known v'.
inline TrajectoryRecord resolve(const DualPoint& p, const Vec4& shift) {
    Vec2 u0 = p.u0 + shift.head<2>(), uT = p.uT + shift.tail<2>();
    auto rep = solve_dual(p.model, u0, uT, p.T, {p.v0}, tight_solver());
    if (rep.solutions.empty()) throw Error("oracle", "dual re-solve failed");
    return rep.solutions.front().record;
}

// Gradient of S~(u', u'') from the stationary relations: -i hbar v' and i hbar v''.
inline Vec4 stilde_gradient(const TrajectoryRecord& r) {
    const double h = r.model->hbar();
    Vec4 g;
    g.head<2>() = -I * h * r.v_initial();
    g.tail<2>() = I * h * r.v_final();
    return g;
}

// Five-point central difference of a matrix-valued function along each index.
template <class F>
auto central(F f, int k, double step) {
    Vec4 e = Vec4::Zero();
    e(k) = step;
    return ((f(-2.0 * e) - 8.0 * f(-e) + 8.0 * f(e) - f(2.0 * e)) / (12.0 * step)).eval();
}

inline Mat4 fd_second_derivatives(const DualPoint& p, double step = 1e-4) {
    Mat4 out;
    for (int k = 0; k < 4; ++k)
        out.col(k) = central([&](const Vec4& s) { return stilde_gradient(resolve(p, s)); }, k, step);
    return out;
}

inline Tensor3 fd_third_derivatives(const DualPoint& p, double step = 1e-4) {
    Tensor3 out;
    for (int k = 0; k < 4; ++k) {
        Mat4 d = central([&](const Vec4& s) { return second_derivatives(resolve(p, s)); }, k, step);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) out(i, j, k) = d(i, j);
    }
    return out;
}

template <class M>
double max_abs(const M& m) {
    return m.cwiseAbs().maxCoeff();
}

inline double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    double d = 0;
    for (int i = 0; i < 64; ++i) d = std::max(d, std::abs(a.a[i] - b.a[i]));
    return d;
}

}  // namespace csp::testing
