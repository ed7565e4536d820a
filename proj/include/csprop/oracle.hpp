#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <Eigen/Eigenvalues>

#include "model.hpp"

namespace csp {

using VecX = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;
using MatX = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;

struct FockTruncation {
    int n_max = 64;

    int per_axis() const { return n_max + 1; }
    int dim() const { return per_axis() * per_axis(); }
    int index(int nx, int ny) const { return nx * per_axis() + ny; }

    // Fraction of the coherent-state norm e^{|z|^2} carried by n > n_max.
    double tail_fraction(cplx z) const {
        double x = std::norm(z);
        if (x == 0.0) return 0.0;
        return boost::math::gamma_p(static_cast<double>(n_max + 1), x);
    }

    static int required(cplx z, double tol = 1e-12) {
        FockTruncation t{0};
        while (t.tail_fraction(z) > tol) ++t.n_max;
        return t.n_max;
    }

    // The tail bound is relative to the norm, while propagator values can be far
    // below the norm product, so the automatic choice is stricter than check().
    static FockTruncation sufficient(std::initializer_list<cplx> zs, double tol = 1e-20, int minimum = 8) {
        int n = minimum;
        for (cplx z : zs) n = std::max(n, required(z, tol));
        return FockTruncation{n};
    }

    void check(cplx z, double tol = 1e-12) const {
        if (tail_fraction(z) > tol) {
            std::ostringstream os;
            os << "coherent-state tail beyond n_max=" << n_max << " is " << tail_fraction(z)
               << " of the norm for |z|=" << std::abs(z) << "; use n_max >= " << required(z, tol);
            throw Error("truncation", os.str());
        }
    }
};

// Single-mode components <n|z> = z^n / sqrt(n!).
inline VecX coherent_vector(cplx z, const FockTruncation& t) {
    t.check(z);
    VecX c(t.per_axis());
    c(0) = 1.0;
    for (int n = 1; n <= t.n_max; ++n) c(n) = c(n - 1) * z / std::sqrt(static_cast<double>(n));
    return c;
}

inline VecX coherent_product(const Vec2& z, const FockTruncation& t) {
    VecX cx = coherent_vector(z(0), t), cy = coherent_vector(z(1), t);
    VecX c(t.dim());
    for (int nx = 0; nx <= t.n_max; ++nx)
        for (int ny = 0; ny <= t.n_max; ++ny) c(t.index(nx, ny)) = cx(nx) * cy(ny);
    return c;
}

// Spectral decomposition of the truncated operator, split into the connected
// components of its matrix graph (each component is one invariant subspace).
struct Spectrum {
    struct Block {
        std::vector<int> basis;
        Eigen::VectorXd energy;
        MatX vectors;  // columns are eigenvectors in `basis` coordinates
    };
    FockTruncation trunc;
    std::vector<Block> blocks;
    bool diagonal = true;

    VecX evolve(const VecX& psi, double T, double hbar) const {
        VecX out = VecX::Zero(psi.size());
        for (const auto& b : blocks) {
            const int n = static_cast<int>(b.basis.size());
            if (n == 1) {
                int k = b.basis[0];
                out(k) = std::exp(-I * b.energy(0) * T / hbar) * psi(k);
                continue;
            }
            VecX local(n);
            for (int i = 0; i < n; ++i) local(i) = psi(b.basis[i]);
            VecX c = b.vectors.adjoint() * local;
            for (int i = 0; i < n; ++i) c(i) *= std::exp(-I * b.energy(i) * T / hbar);
            local = b.vectors * c;
            for (int i = 0; i < n; ++i) out(b.basis[i]) = local(i);
        }
        return out;
    }
};

namespace detail {

inline double ladder(int k, int n) {  // sqrt(k! / (k-n)!)
    double r = 1.0;
    for (int j = 0; j < n; ++j) r *= std::sqrt(static_cast<double>(k - j));
    return r;
}

// Nonzero entries of the truncated operator, keyed by (row, column).
using SparseEntries = std::map<std::pair<int, int>, cplx>;

inline SparseEntries fock_operator(const HamiltonianModel& m, const FockTruncation& t) {
    SparseEntries H;
    for (const auto& term : m.symbol.terms()) {
        const auto& e = term.e;
        for (int kx = e[0]; kx <= t.n_max; ++kx)
            for (int ky = e[1]; ky <= t.n_max; ++ky) {
                int jx = kx - e[0] + e[2], jy = ky - e[1] + e[3];
                if (jx > t.n_max || jy > t.n_max) continue;
                double amp = ladder(kx, e[0]) * ladder(jx, e[2]) * ladder(ky, e[1]) * ladder(jy, e[3]);
                H[{t.index(jx, jy), t.index(kx, ky)}] += term.coeff * amp;
            }
    }
    return H;
}

inline int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
}

inline std::string spectrum_key(const HamiltonianModel& m, const FockTruncation& t) {
    std::ostringstream os;
    os.precision(17);
    os << t.n_max;
    for (const auto& term : m.symbol.terms())
        os << '|' << term.coeff.real() << ',' << term.coeff.imag() << ':' << term.e[0] << term.e[1] << term.e[2]
           << term.e[3];
    return os.str();
}

}  // namespace detail

inline Spectrum build_spectrum(const HamiltonianModel& m, const FockTruncation& t) {
    auto H = detail::fock_operator(m, t);
    double scale = 1.0;
    for (const auto& [ij, h] : H) scale = std::max(scale, std::abs(h));
    for (const auto& [ij, h] : H) {
        auto it = H.find({ij.second, ij.first});
        cplx mirror = it == H.end() ? cplx{} : std::conj(it->second);
        if (std::abs(h - mirror) > 1e-12 * scale) throw Error("oracle", "truncated operator is not Hermitian");
    }
    const int n = t.dim();
    std::vector<int> parent(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    for (const auto& [ij, h] : H)
        if (h != 0.0) parent[detail::find_root(parent, ij.first)] = detail::find_root(parent, ij.second);
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[detail::find_root(parent, i)].push_back(i);

    Spectrum s;
    s.trunc = t;
    for (auto& [root, members] : groups) {
        Spectrum::Block b;
        b.basis = members;
        const int k = static_cast<int>(members.size());
        MatX local = MatX::Zero(k, k);
        for (int a = 0; a < k; ++a)
            for (int c = 0; c < k; ++c) {
                auto it = H.find({members[a], members[c]});
                if (it != H.end()) local(a, c) = it->second;
            }
        if (k == 1) {
            b.energy = Eigen::VectorXd::Constant(1, local(0, 0).real());
            b.vectors = MatX::Identity(1, 1);
        } else {
            s.diagonal = false;
            Eigen::SelfAdjointEigenSolver<MatX> es(local);
            if (es.info() != Eigen::Success) throw Error("oracle", "eigendecomposition failed");
            b.energy = es.eigenvalues();
            b.vectors = es.eigenvectors();
        }
        s.blocks.push_back(std::move(b));
    }
    return s;
}

// Process-wide cache keyed by (symbol, truncation).
inline std::shared_ptr<const Spectrum> cached_spectrum(const HamiltonianModel& m, const FockTruncation& t) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const Spectrum>> cache;
    std::string key = detail::spectrum_key(m, t);
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto s = std::make_shared<const Spectrum>(build_spectrum(m, t));
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, s).first->second;
}

inline VecX evolve_coherent(const HamiltonianModel& m, const Vec2& zp, double T, const FockTruncation& t) {
    return cached_spectrum(m, t)->evolve(coherent_product(zp, t), T, m.hbar());
}

struct OracleOptions {
    bool stability_check = true;
    int stability_extra = 16;
    double stability_tol = 1e-10;
};

// <z''| exp(-i H T / hbar) |z'> with non-normalized coherent states.
inline cplx exact_propagator(const HamiltonianModel& m, const Vec2& zp, const Vec2& zpp, double T,
                             const FockTruncation& t, const OracleOptions& o = {}) {
    auto value_at = [&](const FockTruncation& tr) {
        VecX bra = coherent_product(zpp, tr);
        return bra.dot(evolve_coherent(m, zp, T, tr));  // dot conjugates the bra
    };
    cplx k = value_at(t);
    if (o.stability_check) {
        cplx k2 = value_at(FockTruncation{t.n_max + o.stability_extra});
        if (!(std::abs(k2 - k) <= o.stability_tol * std::abs(k2))) {
            std::ostringstream os;
            os.precision(17);
            os << "oracle not converged in n_max: K(" << t.n_max << ")=" << k << ", K(" << t.n_max + o.stability_extra
               << ")=" << k2;
            throw Error("truncation", os.str());
        }
    }
    return k;
}

inline cplx exact_propagator(const HamiltonianModel& m, const Vec2& zp, const Vec2& zpp, double T,
                             const OracleOptions& o = {}) {
    return exact_propagator(m, zp, zpp, T, FockTruncation::sufficient({zp(0), zp(1), zpp(0), zpp(1)}), o);
}

}  // namespace csp
