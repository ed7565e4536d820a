#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace csp {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

// Phase-space ordering used throughout: (u_x, u_y, v_x, v_y).
using Vec4 = Eigen::Matrix<cplx, 4, 1>;
using Mat4 = Eigen::Matrix<cplx, 4, 4>;
using Vec2 = Eigen::Matrix<cplx, 2, 1>;
using Mat2 = Eigen::Matrix<cplx, 2, 2>;

// Dense rank-3 tensor with 4 entries per index, row-major (i, j, k).
struct Tensor3 {
    std::array<cplx, 64> a{};

    cplx& operator()(int i, int j, int k) { return a[16 * i + 4 * j + k]; }
    const cplx& operator()(int i, int j, int k) const { return a[16 * i + 4 * j + k]; }

    double max_abs() const {
        double m = 0.0;
        for (const auto& x : a) m = std::max(m, std::abs(x));
        return m;
    }
    void set_zero() { a.fill(cplx{}); }
};

// Base error type; `kind` is a short machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

inline bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

// Principal-branch-free phase unwrapping: returns the representative of
// arg(z) closest to `ref`.
inline double unwrap_near(cplx z, double ref) {
    double a = std::arg(z);
    double k = std::round((ref - a) / (2.0 * pi));
    return a + 2.0 * pi * k;
}

inline Mat2 block(const Mat4& m, int r, int c) { return m.block<2, 2>(2 * r, 2 * c); }

}  // namespace csp
