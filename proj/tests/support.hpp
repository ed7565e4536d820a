#pragma once

#include <random>

#include <csprop/core.hpp>
#include <csprop/model.hpp>

namespace csp::testing {

inline double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

template <class A, class B>
double rel_norm(const A& a, const B& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(unsigned seed) : gen(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
    cplx complex(double r) { return {uniform(-r, r), uniform(-r, r)}; }
    Vec2 pair(double r) { return Vec2(complex(r), complex(r)); }
    Vec4 point(double r) { return Vec4(complex(r), complex(r), complex(r), complex(r)); }
};

// Closed-form flow of one Kerr axis with symbol hbar(w+chi) uv + hbar chi (uv)^2.
struct KerrAxis {
    double omega, chi;

    cplx Omega(cplx x) const { return omega + chi + 2.0 * chi * x; }
    cplx u(cplx u0, cplx v0, double t) const { return u0 * std::exp(-I * Omega(u0 * v0) * t); }
    cplx v(cplx u0, cplx v0, double t) const { return v0 * std::exp(I * Omega(u0 * v0) * t); }
    cplx m_vv(cplx u0, cplx v0, double t) const {
        return std::exp(I * Omega(u0 * v0) * t) * (1.0 + 2.0 * I * chi * t * u0 * v0);
    }
    cplx m_uv(cplx u0, cplx v0, double t) const {
        return -2.0 * I * chi * t * u0 * u0 * std::exp(-I * Omega(u0 * v0) * t);
    }
};

inline KerrAxis axis(const HamiltonianModel& m, int r) { return KerrAxis{m.omega[r], m.chi[r]}; }

// Exact <n|e^{-iHT/hbar}|m> of one Kerr axis is diagonal: the propagator
// between non-normalized coherent states is a single series.
inline cplx kerr_axis_propagator(const KerrAxis& k, cplx zp, cplx zpp, double T, int n_max = 400) {
    cplx x = std::conj(zpp) * zp, term = 1.0, sum = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0) term *= x / static_cast<double>(n);
        double dn = n;
        sum += term * std::exp(-I * (k.omega * dn + k.chi * dn * dn) * T);
    }
    return sum;
}

inline cplx harmonic_axis_propagator(double omega, cplx zp, cplx zpp, double T) {
    return std::exp(std::conj(zpp) * zp * std::exp(-I * omega * T) - 0.5 * I * omega * T);
}

}  // namespace csp::testing
