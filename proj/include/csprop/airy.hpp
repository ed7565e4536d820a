#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "core.hpp"

namespace csp {

// Contour Airy functions f_i(w) = (1/2pi) \int_{C_i} exp{i(w t + t^3/3)} dt.
// C1 is the real axis (f1 = Ai); C2 runs from the valley at arg t = pi/6 to the
// one at -pi/2, C3 from -pi/2 to 5pi/6, so that f1 + f2 + f3 = 0.

enum class AiryRegime { series, asymptotic, quadrature };

inline const char* to_string(AiryRegime r) {
    switch (r) {
        case AiryRegime::series: return "series";
        case AiryRegime::asymptotic: return "asymptotic";
        case AiryRegime::quadrature: return "quadrature";
    }
    return "?";
}

// True value = value * exp(exponent); exponent is 0 unless the plain
// representation would overflow or underflow.
struct AiryValue {
    cplx value;
    cplx derivative;
    double exponent = 0.0;
    int contour = 1;
    AiryRegime regime = AiryRegime::series;

    cplx plain_value() const { return value * std::exp(exponent); }
    cplx plain_derivative() const { return derivative * std::exp(exponent); }
};

namespace airy_detail {

inline constexpr long double ai0 = 0.355028053887817239260063186004L;   // Ai(0)
inline constexpr long double aip0 = -0.258819403792806798405183560189L; // Ai'(0)
inline constexpr double series_radius = 4.5;
inline constexpr double asymptotic_radius = 8.0;
inline constexpr double guard = 600.0;

struct Scaled {
    cplx v, d;
    double e = 0.0;
    AiryRegime regime = AiryRegime::series;
};

inline Scaled series(cplx z) {
    using lc = std::complex<long double>;
    lc zz(z.real(), z.imag());
    lc z3 = zz * zz * zz;
    lc f = 1, g = zz, fp = 0, gp = 1;
    lc tf = 1, tg = zz, tfp = zz * zz / 2.0L, tgp = 1;
    fp = tfp;
    for (int k = 1; k < 200; ++k) {
        long double kk = k;
        tf *= z3 / ((3 * kk - 1) * (3 * kk));
        tg *= z3 / ((3 * kk) * (3 * kk + 1));
        tgp *= z3 / ((3 * kk - 2) * (3 * kk));
        if (k >= 2) {
            tfp *= z3 / ((3 * kk - 3) * (3 * kk - 1));
            fp += tfp;
        }
        f += tf;
        g += tg;
        gp += tgp;
        long double m = std::max({std::abs(tf), std::abs(tg), std::abs(tfp), std::abs(tgp)});
        long double s = std::max({std::abs(f), std::abs(g), std::abs(fp), std::abs(gp), 1e-300L});
        if (m < 1e-22L * s && k > 3) break;
    }
    lc ai = ai0 * f + aip0 * g;
    lc aip = ai0 * fp + aip0 * gp;
    return {cplx((double)ai.real(), (double)ai.imag()), cplx((double)aip.real(), (double)aip.imag()), 0.0,
            AiryRegime::series};
}

// e^{-zeta} factored out: returns mantissas with exponent -Re(zeta).
inline Scaled asymptotic(cplx z) {
    cplx zeta = (2.0 / 3.0) * z * std::sqrt(z);
    cplx z14 = std::sqrt(std::sqrt(z));
    cplx su = 0, sv = 0;
    double u = 1.0;
    cplx zk = 1.0;
    double last = 1e300;
    for (int k = 0; k < 60; ++k) {
        if (k > 0) {
            double kk = k;
            u *= (6 * kk - 5) * (6 * kk - 3) * (6 * kk - 1) / ((2 * kk - 1) * 216 * kk);
            zk /= -zeta;
        }
        double v = k == 0 ? 1.0 : -(6.0 * k + 1) / (6.0 * k - 1) * u;
        cplx tu = u * zk, tv = v * zk;
        double m = std::max(std::abs(tu), std::abs(tv));
        if (m > last) break;  // optimal truncation
        su += tu;
        sv += tv;
        last = m;
        if (m < 1e-17) break;
    }
    cplx ph = std::exp(-I * zeta.imag());
    double c = 1.0 / (2.0 * std::sqrt(pi));
    return {c * ph * su / z14, -c * ph * z14 * sv, -zeta.real(), AiryRegime::asymptotic};
}

// Ai(z) = (e^{-zeta}/pi) \int_0^inf e^{-sqrt(z) s^2} cos(s^3/3) ds after
// shifting the real-axis contour through the saddle i sqrt(z).
inline Scaled quadrature(cplx z) {
    cplx sz = std::sqrt(z);
    cplx zeta = (2.0 / 3.0) * z * sz;
    double L = std::sqrt(48.0 / sz.real());
    const int panels = std::max(8, static_cast<int>(std::ceil(L / 0.2)));
    cplx I1 = 0, I2 = 0;
    for (int p = 0; p < panels; ++p) {
        double a = L * p / panels, b = L * (p + 1) / panels;
        I1 += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double s) { return cplx(std::exp(-sz * s * s) * std::cos(s * s * s / 3.0)); }, a, b);
        I2 += boost::math::quadrature::gauss<double, 20>::integrate(
            [&](double s) { return cplx(s * std::exp(-sz * s * s) * std::sin(s * s * s / 3.0)); }, a, b);
    }
    cplx ph = std::exp(-I * zeta.imag());
    return {ph * I1 / pi, ph * (-sz * I1 - I2) / pi, -zeta.real(), AiryRegime::quadrature};
}

inline Scaled combine(cplx a, const Scaled& x, cplx b, const Scaled& y, cplx da, cplx db) {
    double e = std::max(x.e, y.e);
    cplx fx = std::exp(x.e - e), fy = std::exp(y.e - e);
    Scaled r;
    r.v = a * x.v * fx + b * y.v * fy;
    r.d = da * x.d * fx + db * y.d * fy;
    r.e = e;
    r.regime = x.regime;
    return r;
}

inline Scaled direct(cplx z) {
    double r = std::abs(z);
    if (r <= series_radius) return series(z);
    if (r >= asymptotic_radius) return asymptotic(z);
    return quadrature(z);
}

// Ai and Ai' in scaled form for any complex z.
inline Scaled ai(cplx z) {
    double r = std::abs(z);
    if (r <= series_radius || std::abs(std::arg(z)) <= 2.0 * pi / 3.0) return direct(z);
    // Ai(z) = -w Ai(w z) - w* Ai(w* z), w = e^{2 pi i/3}
    const cplx w = std::polar(1.0, 2.0 * pi / 3.0), wc = std::conj(w);
    Scaled a = direct(w * z), b = direct(wc * z);
    return combine(-w, a, -wc, b, -w * w, -wc * wc);
}

inline void normalize(AiryValue& v) {
    if (std::abs(v.exponent) <= guard) {
        v.value *= std::exp(v.exponent);
        v.derivative *= std::exp(v.exponent);
        v.exponent = 0.0;
    }
}

}  // namespace airy_detail

inline AiryValue airy_f(int i, cplx w) {
    if (i < 1 || i > 3) throw Error("airy", "contour index must be 1, 2 or 3");
    if (!finite(w)) throw Error("airy", "non-finite argument");
    const cplx rot = i == 1 ? cplx(1) : std::polar(1.0, (i == 2 ? -2.0 : 2.0) * pi / 3.0);
    airy_detail::Scaled s = airy_detail::ai(w * rot);
    AiryValue out;
    out.value = rot * s.v;
    out.derivative = rot * rot * s.d;
    out.exponent = s.e;
    out.contour = i;
    out.regime = s.regime;
    airy_detail::normalize(out);
    return out;
}

inline cplx airy_f_prime(int i, cplx w) { return airy_f(i, w).plain_derivative(); }

// Leading-order asymptotic forms of f_i and w^{-1/2} f_i'.
struct AiryLeading {
    cplx f;
    cplx fprime_over_sqrt;
};

inline AiryLeading airy_leading(int i, cplx w) {
    cplx pre = std::pow(w, -0.25) / (2.0 * std::sqrt(pi));
    cplx zeta = (2.0 / 3.0) * std::pow(w, 1.5);
    if (i == 1) return {pre * std::exp(-zeta), -pre * std::exp(-zeta)};
    cplx s = i == 2 ? -I : I;
    return {s * pre * std::exp(zeta), s * pre * std::exp(zeta)};
}

// Independent route: adaptive Gauss-Kronrod along a piecewise-linear path made
// of two valley rays joined at a vertex (0 or one of the saddles +-i sqrt(w)).
struct AiryQuadratureResult {
    cplx f, fp, fpp;
    double error_estimate = 0.0;
};

inline AiryQuadratureResult airy_reference_quadrature(int i, cplx w) {
    if (i < 1 || i > 3) throw Error("airy", "contour index must be 1, 2 or 3");
    if (!(std::abs(w) <= 10.0)) throw Error("airy", "reference quadrature requires |w| <= 10");
    // valley directions
    const double s0 = pi / 6, s1 = 5 * pi / 6, s2 = -pi / 2;
    double from = 0, to = 0;
    if (i == 1) { from = s1; to = s0; }
    if (i == 2) { from = s0; to = s2; }
    if (i == 3) { from = s2; to = s1; }
    auto phase = [&](cplx t) { return I * (w * t + t * t * t / 3.0); };
    cplx sq = std::sqrt(w);
    std::array<cplx, 3> vertices{cplx(0), I * sq, -I * sq};
    const double L = 2.0 * std::sqrt(std::abs(w)) + 9.0;
    cplx best = 0;
    double best_peak = 1e300;
    for (cplx v : vertices) {
        double peak = -1e300;
        for (double th : {from, to})
            for (int k = 0; k <= 200; ++k) {
                cplx t = v + (L * k / 200.0) * std::polar(1.0, th);
                peak = std::max(peak, phase(t).real());
            }
        if (peak < best_peak) {
            best_peak = peak;
            best = v;
        }
    }
    AiryQuadratureResult res;
    for (int leg = 0; leg < 2; ++leg) {
        double th = leg == 0 ? from : to;
        cplx dir = std::polar(1.0, th);
        double sign = leg == 0 ? -1.0 : 1.0;  // incoming leg is traversed towards the vertex
        for (int order = 0; order < 3; ++order) {
            auto part = [&](bool imag) {
                return [&, imag](double s) {
                    cplx t = best + s * dir;
                    cplx wt = order == 0 ? cplx(1) : order == 1 ? I * t : -t * t;
                    cplx val = wt * std::exp(phase(t)) * dir;
                    return imag ? val.imag() : val.real();
                };
            };
            double e1 = 0, e2 = 0;
            double re = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(part(false), 0.0, L, 15,
                                                                                     1e-14, &e1);
            double im = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(part(true), 0.0, L, 15,
                                                                                     1e-14, &e2);
            cplx v = sign * cplx(re, im) / (2.0 * pi);
            res.error_estimate = std::max(res.error_estimate, (e1 + e2) / (2.0 * pi));
            (order == 0 ? res.f : order == 1 ? res.fp : res.fpp) += v;
        }
    }
    return res;
}

// Linear combination of contours, e.g. C1+C2 or C1-C3; `automatic` defers the
// selection to the caller's rule.
struct ContourChoice {
    std::array<cplx, 3> coeff{1, 0, 0};
    bool automatic = false;

    static ContourChoice parse(const std::string& text) {
        std::string s;
        for (char ch : text)
            if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
        ContourChoice c;
        if (s == "auto") {
            c.automatic = true;
            return c;
        }
        c.coeff = {0, 0, 0};
        size_t p = 0;
        bool any = false;
        while (p < s.size()) {
            double sign = 1.0;
            if (s[p] == '+' || s[p] == '-') {
                sign = s[p] == '-' ? -1.0 : 1.0;
                ++p;
            }
            if (p >= s.size() || (s[p] != 'C' && s[p] != 'c'))
                throw Error("config", "bad contour specification '" + text + "'");
            ++p;
            if (p >= s.size() || s[p] < '1' || s[p] > '3')
                throw Error("config", "bad contour specification '" + text + "'");
            c.coeff[s[p] - '1'] += sign;
            ++p;
            any = true;
        }
        if (!any) throw Error("config", "empty contour specification");
        return c;
    }

    std::string name() const {
        if (automatic) return "auto";
        std::string s;
        for (int i = 0; i < 3; ++i) {
            double c = coeff[i].real();
            if (c == 0.0) continue;
            if (c < 0)
                s += "-";
            else if (!s.empty())
                s += "+";
            if (std::abs(c) != 1.0) s += std::to_string(std::abs(c));
            s += "C" + std::to_string(i + 1);
        }
        return s.empty() ? "0" : s;
    }
};

// sum_i coeff_i f_i(w) and its derivative.
inline std::pair<cplx, cplx> airy_combination(const ContourChoice& c, cplx w) {
    cplx f = 0, fp = 0;
    for (int i = 0; i < 3; ++i) {
        if (c.coeff[i] == 0.0) continue;
        AiryValue v = airy_f(i + 1, w);
        f += c.coeff[i] * v.plain_value();
        fp += c.coeff[i] * v.plain_derivative();
    }
    return {f, fp};
}

}  // namespace csp
