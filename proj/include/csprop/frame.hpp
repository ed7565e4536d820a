#pragma once

#include <cmath>

#include "core.hpp"

namespace csp {

struct CoherentFrame {
    double hbar = 1.0;
    double b_x = 1.0, b_y = 1.0;
    double c_x = 1.0, c_y = 1.0;

    // Widths chosen with b = c = sqrt(hbar), the dimensionless frame.
    static CoherentFrame dimensionless(double hbar) {
        double s = std::sqrt(hbar);
        return CoherentFrame{hbar, s, s, s, s};
    }
    // Position widths given; momentum widths fixed by b c = hbar.
    static CoherentFrame from_widths(double hbar, double b_x, double b_y) {
        return CoherentFrame{hbar, b_x, b_y, hbar / b_x, hbar / b_y};
    }

    void validate() const {
        for (double x : {hbar, b_x, b_y, c_x, c_y})
            if (!(x > 0.0) || !std::isfinite(x))
                throw Error("frame", "frame fields must be finite and strictly positive");
        for (auto [b, c] : {std::pair{b_x, c_x}, std::pair{b_y, c_y}})
            if (std::abs(b * c / hbar - 1.0) > 1e-14)
                throw Error("frame", "frame widths violate b*c = hbar");
    }
};

struct Label {
    double qbar_x = 0, qbar_y = 0;
    double pbar_x = 0, pbar_y = 0;
};

struct ComplexPhasePoint {
    cplx u_x, u_y, v_x, v_y;

    Vec4 vec() const { return Vec4(u_x, u_y, v_x, v_y); }
    static ComplexPhasePoint from(const Vec4& r) { return {r(0), r(1), r(2), r(3)}; }
};

inline Vec2 label_to_z(const CoherentFrame& f, const Label& l) {
    const double s = 1.0 / std::sqrt(2.0);
    return Vec2(s * cplx(l.qbar_x / f.b_x, l.pbar_x / f.c_x),
                s * cplx(l.qbar_y / f.b_y, l.pbar_y / f.c_y));
}

inline Label z_to_label(const CoherentFrame& f, const Vec2& z) {
    const double s = std::sqrt(2.0);
    return Label{s * f.b_x * z(0).real(), s * f.b_y * z(1).real(),
                 s * f.c_x * z(0).imag(), s * f.c_y * z(1).imag()};
}

}  // namespace csp
