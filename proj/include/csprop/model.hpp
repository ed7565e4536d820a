#pragma once

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "frame.hpp"

namespace csp {

// One normal-ordered monomial  coeff * u_x^e0 u_y^e1 v_x^e2 v_y^e3.
// On the quantum side it stands for coeff * (a_x^+)^e2 (a_y^+)^e3 a_x^e0 a_y^e1.
struct Monomial {
    cplx coeff;
    std::array<int, 4> e{};
};

struct Jet {
    cplx H;
    Vec4 d1;
    Mat4 d2;
    Tensor3 d3;
};

class NormalOrderedPolynomial {
public:
    NormalOrderedPolynomial() = default;
    explicit NormalOrderedPolynomial(std::vector<Monomial> terms) : terms_(std::move(terms)) {
        for (const auto& t : terms_)
            for (int k = 0; k < 4; ++k) max_e_ = std::max(max_e_, t.e[k]);
    }

    const std::vector<Monomial>& terms() const { return terms_; }
    int max_exponent() const { return max_e_; }

    cplx value(const Vec4& r) const {
        cplx h{};
        for (const auto& t : terms_) {
            cplx m = t.coeff;
            for (int k = 0; k < 4; ++k) m *= ipow(r(k), t.e[k]);
            h += m;
        }
        return h;
    }

    Jet jet(const Vec4& r) const {
        Jet j;
        j.H = 0.0;
        j.d1.setZero();
        j.d2.setZero();
        j.d3.set_zero();
        // pw[k][p] = r_k^p
        std::vector<std::array<cplx, 4>> pw(static_cast<size_t>(max_e_ + 1));
        for (int k = 0; k < 4; ++k) {
            cplx acc = 1.0;
            for (int p = 0; p <= max_e_; ++p) {
                pw[p][k] = acc;
                acc *= r(k);
            }
        }
        auto factor = [&](const Monomial& t, const std::array<int, 4>& d) -> cplx {
            cplx m = t.coeff;
            for (int k = 0; k < 4; ++k) {
                int e = t.e[k], n = d[k];
                if (n > e) return 0.0;
                double ff = 1.0;
                for (int q = 0; q < n; ++q) ff *= e - q;
                m *= ff * pw[e - n][k];
            }
            return m;
        };
        for (const auto& t : terms_) {
            j.H += factor(t, {0, 0, 0, 0});
            for (int a = 0; a < 4; ++a) {
                std::array<int, 4> d{};
                ++d[a];
                j.d1(a) += factor(t, d);
                for (int b = 0; b < 4; ++b) {
                    std::array<int, 4> d2 = d;
                    ++d2[b];
                    j.d2(a, b) += factor(t, d2);
                    for (int c = 0; c < 4; ++c) {
                        std::array<int, 4> d3 = d2;
                        ++d3[c];
                        j.d3(a, b, c) += factor(t, d3);
                    }
                }
            }
        }
        return j;
    }

    // True when every monomial preserves both occupation numbers.
    bool number_conserving() const {
        for (const auto& t : terms_)
            if (t.e[0] != t.e[2] || t.e[1] != t.e[3]) return false;
        return true;
    }

    // Hermitian iff the coefficient of (n, m) is the conjugate of that of (m, n).
    bool hermitian(double tol = 1e-14) const {
        for (const auto& t : terms_) {
            std::array<int, 4> sw{t.e[2], t.e[3], t.e[0], t.e[1]};
            cplx c{};
            for (const auto& s : terms_)
                if (s.e == sw) c += s.coeff;
            cplx own{};
            for (const auto& s : terms_)
                if (s.e == t.e) own += s.coeff;
            if (std::abs(own - std::conj(c)) > tol * (1.0 + std::abs(own))) return false;
        }
        return true;
    }

private:
    static cplx ipow(cplx x, int n) {
        cplx r = 1.0;
        for (int q = 0; q < n; ++q) r *= x;
        return r;
    }

    std::vector<Monomial> terms_;
    int max_e_ = 0;
};

struct HamiltonianModel {
    std::string kind;
    CoherentFrame frame;
    NormalOrderedPolynomial symbol;
    std::array<double, 2> omega{0, 0};
    std::array<double, 2> chi{0, 0};

    double hbar() const { return frame.hbar; }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        os << kind << " hbar=" << frame.hbar << " omega=(" << omega[0] << "," << omega[1]
           << ") chi=(" << chi[0] << "," << chi[1] << ")";
        return os.str();
    }
};

using ModelPtr = std::shared_ptr<const HamiltonianModel>;

inline Jet eval_jet(const HamiltonianModel& m, const ComplexPhasePoint& p) {
    Vec4 r = p.vec();
    for (int k = 0; k < 4; ++k)
        if (!finite(r(k))) throw Error("evaluation", "non-finite phase-space point");
    Jet j = m.symbol.jet(r);
    bool ok = finite(j.H);
    for (int a = 0; a < 4 && ok; ++a) ok = finite(j.d1(a));
    for (int a = 0; a < 16 && ok; ++a) ok = finite(j.d2.data()[a]);
    for (int a = 0; a < 64 && ok; ++a) ok = finite(j.d3.a[a]);
    if (!ok) {
        std::ostringstream os;
        os << "non-finite symbol derivatives at (" << r(0) << ", " << r(1) << ", " << r(2) << ", "
           << r(3) << ")";
        throw Error("evaluation", os.str());
    }
    return j;
}

inline ModelPtr make_harmonic(const CoherentFrame& frame, double omega_x, double omega_y) {
    frame.validate();
    if (!(omega_x > 0) || !(omega_y > 0)) throw Error("model", "harmonic frequencies must be positive");
    const double h = frame.hbar;
    auto m = std::make_shared<HamiltonianModel>();
    m->kind = "harmonic";
    m->frame = frame;
    m->omega = {omega_x, omega_y};
    m->symbol = NormalOrderedPolynomial({
        {h * omega_x, {1, 0, 1, 0}},
        {h * omega_y, {0, 1, 0, 1}},
        {0.5 * h * (omega_x + omega_y), {0, 0, 0, 0}},
    });
    return m;
}

// Per axis: hbar omega n + hbar chi n^2, whose normal-ordered symbol is
// hbar omega uv + hbar chi ((uv)^2 + uv).
inline ModelPtr make_kerr2d(const CoherentFrame& frame, double omega_x, double omega_y, double chi_x,
                            double chi_y) {
    frame.validate();
    if (chi_x == 0.0 && chi_y == 0.0) throw Error("model", "kerr2d needs a nonzero chi on some axis");
    const double h = frame.hbar;
    auto m = std::make_shared<HamiltonianModel>();
    m->kind = "kerr2d";
    m->frame = frame;
    m->omega = {omega_x, omega_y};
    m->chi = {chi_x, chi_y};
    std::vector<Monomial> t{
        {h * (omega_x + chi_x), {1, 0, 1, 0}},
        {h * (omega_y + chi_y), {0, 1, 0, 1}},
    };
    if (chi_x != 0.0) t.push_back({h * chi_x, {2, 0, 2, 0}});
    if (chi_y != 0.0) t.push_back({h * chi_y, {0, 2, 0, 2}});
    m->symbol = NormalOrderedPolynomial(std::move(t));
    return m;
}

// Quadratic symbol hbar w_x (u_x v_x + 1/2) + hbar w_y (u_y v_y + 1/2)
//   + hbar g (u_x v_y + u_y v_x) + hbar s (u_x u_y + v_x v_y).
// The beam-splitter coupling g alone keeps M_uv = 0; s (two-mode squeezing)
// makes the dual representation regular.
inline ModelPtr make_quadratic(const CoherentFrame& frame, double omega_x, double omega_y, double g,
                               double s) {
    frame.validate();
    const double h = frame.hbar;
    auto m = std::make_shared<HamiltonianModel>();
    m->kind = "quadratic";
    m->frame = frame;
    m->omega = {omega_x, omega_y};
    std::vector<Monomial> t{
        {h * omega_x, {1, 0, 1, 0}},
        {h * omega_y, {0, 1, 0, 1}},
        {0.5 * h * (omega_x + omega_y), {0, 0, 0, 0}},
    };
    if (g != 0.0) {
        t.push_back({h * g, {1, 0, 0, 1}});
        t.push_back({h * g, {0, 1, 1, 0}});
    }
    if (s != 0.0) {
        t.push_back({h * s, {1, 1, 0, 0}});
        t.push_back({h * s, {0, 0, 1, 1}});
    }
    m->symbol = NormalOrderedPolynomial(std::move(t));
    return m;
}

}  // namespace csp
