#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace csp {

using json = nlohmann::json;

enum ExitCode { exit_ok = 0, exit_config = 2, exit_all_failed = 3 };

// ---- serialization ----------------------------------------------------------

inline json to_json(cplx z) {
    auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    return json::array({num(z.real()), num(z.imag())});
}

inline json to_json(const Vec2& v) { return json::array({to_json(v(0)), to_json(v(1))}); }

inline json to_json(const Mat2& m) {
    json a = json::array();
    for (int i = 0; i < 2; ++i) a.push_back(json::array({to_json(m(i, 0)), to_json(m(i, 1))}));
    return a;
}

inline json to_json(const Mat4& m) {
    json a = json::array();
    for (int i = 0; i < 4; ++i) {
        json row = json::array();
        for (int j = 0; j < 4; ++j) row.push_back(to_json(m(i, j)));
        a.push_back(row);
    }
    return a;
}

inline json to_json(const Tensor3& t) {
    json a = json::array();
    for (int i = 0; i < 64; ++i) a.push_back(to_json(t.a[i]));
    return a;
}

inline json to_json(const CubicData& c) {
    return json{{"A", to_json(c.A)},
                {"B", to_json(c.B)},
                {"C", to_json(c.C)},
                {"D", to_json(c.D)},
                {"E", to_json(c.E)},
                {"F", to_json(c.F)},
                {"G", to_json(c.G)},
                {"lambda_plus", to_json(c.lambda_plus)},
                {"lambda_minus", to_json(c.lambda_minus)},
                {"N_plus", to_json(c.N_plus)},
                {"N_minus", to_json(c.N_minus)},
                {"rotation", to_json(c.rotation)},
                {"Dp", to_json(c.Dp)},
                {"Ep", to_json(c.Ep)},
                {"Fp", to_json(c.Fp)},
                {"Gp", to_json(c.Gp)},
                {"condition", c.condition},
                {"diagonal_case", c.diagonal_case}};
}

inline json to_json(const ActionJet& j) {
    return json{{"Stilde", to_json(j.Stilde)}, {"S2", to_json(j.S2)},       {"S3", to_json(j.S3)},
                {"asym2", j.asym2},           {"asym3", j.asym3},          {"cubic", to_json(j.cubic)}};
}

inline json to_json(const SaddleSolution& s) {
    const auto& r = s.record;
    return json{{"kind", to_string(s.kind)},
                {"v0", to_json(s.v0)},
                {"u_final", to_json(r.u_final())},
                {"v_final", to_json(r.v_final())},
                {"residual", s.residual},
                {"iterations", s.iterations},
                {"pseudo_inverse", s.used_pseudo_inverse},
                {"classification", s.classification},
                {"det_vv", to_json(r.det_vv())},
                {"det_uv", to_json(r.det_uv())},
                {"sigma_vv", r.sigma_vv_final()},
                {"sigma_uv", r.sigma_uv_final()},
                {"S", to_json(r.S_final())},
                {"G", to_json(r.G_final())},
                {"F", to_json(s.F)},
                {"stokes_suspect", s.stokes_suspect},
                {"steps", r.diag.accepted},
                {"rejected", r.diag.rejected}};
}

inline json to_json(const PropagatorValue& v) {
    json t = json::array();
    for (const auto& d : v.trajectories)
        t.push_back(json{{"v0", to_json(d.v0)},
                         {"det_vv", to_json(d.det_vv)},
                         {"det_uv", to_json(d.det_uv)},
                         {"F", to_json(d.F)},
                         {"parameter", to_json(d.parameter)},
                         {"factor", to_json(d.factor)},
                         {"contour", d.contour},
                         {"stokes", d.stokes}});
    json out{{"amplitude", to_json(v.amplitude)},
             {"formula", to_string(v.formula)},
             {"trajectories", t},
             {"warnings", v.warnings}};
    if (v.uniform) {
        const auto& u = *v.uniform;
        out["uniform"] = json{{"A", to_json(u.A)},   {"B", to_json(u.B)},   {"E1", to_json(u.E1)},
                              {"E2", to_json(u.E2)}, {"g1", to_json(u.g1)}, {"g2", to_json(u.g2)}};
    }
    return out;
}

// ---- per-point evaluation ---------------------------------------------------

struct FormulaOutcome {
    Formula formula;
    std::optional<PropagatorValue> value;
    std::string status = "ok";
    std::string message;

    bool ok() const { return value.has_value(); }
    cplx parameter() const {
        if (!value) return cplx(std::numeric_limits<double>::quiet_NaN(), 0);
        if (value->uniform) return value->uniform->B;
        for (const auto& d : value->trajectories)
            if (!d.contour.empty()) return d.parameter;
        return cplx(std::numeric_limits<double>::quiet_NaN(), 0);
    }
};

struct PointResult {
    size_t index = 0;
    std::vector<cplx> coords;
    double T = 0;
    Vec2 final;
    std::string status = "ok";
    int n_solutions = 0;
    double min_abs_det_vv = std::numeric_limits<double>::quiet_NaN();
    std::string stokes;  // one character per solution
    std::vector<FormulaOutcome> formulas;
    std::optional<cplx> exact;
    std::string exact_status = "skipped";
    json diag;

    bool any_ok() const {
        for (const auto& f : formulas)
            if (f.ok()) return true;
        return false;
    }
};

struct GridPoint {
    std::vector<cplx> coords;
    double T;
    Vec2 final;
};

inline GridPoint grid_point(const RunConfig& c, size_t k) {
    GridPoint g{{}, c.T, c.final};
    auto idx = c.grid_indices(k);
    for (size_t a = 0; a < c.scan.size(); ++a) {
        cplx x = c.scan[a].at(idx[a]);
        g.coords.push_back(x);
        if (c.scan[a].field == "T")
            g.T = x.real();
        else if (c.scan[a].field == "final_x")
            g.final(0) = x;
        else
            g.final(1) = x;
    }
    return g;
}

namespace detail {

inline bool needs_caustic(const RunConfig& c) {
    return c.locate_caustic || c.wants(Formula::transitional) || c.wants(Formula::uniform) ||
           c.wants(Formula::regular_at_caustic) || c.wants(Formula::uniform_at_caustic);
}

// Unit vector spanning the kernel direction of M_vv at a caustic.
inline Vec2 null_direction(const Mat2& m) {
    Vec2 a(-m(0, 1), m(0, 0)), b(m(1, 1), -m(1, 0));
    Vec2 n = a.norm() >= b.norm() ? a : b;
    if (n.norm() == 0.0) return Vec2(1.0, 0.0);
    return n / n.norm();
}

inline std::vector<Vec2> point_seeds(const RunConfig& c, const ModelPtr& m, const Vec2& u0, const Vec2& vT,
                                     double T, const std::optional<SaddleSolution>& psc) {
    std::vector<Vec2> seeds = c.seeds;
    if (c.default_seeds) {
        auto d = default_mixed_seeds(m, u0, vT, T, c.solver);
        seeds.insert(seeds.end(), d.begin(), d.end());
    }
    if (psc) {
        Vec2 n = null_direction(block(psc->record.M_final(), 1, 1));
        double r = c.ring_radius * psc->v0.norm();
        for (int j = 0; j < c.ring_count; ++j)
            seeds.push_back(psc->v0 + r * std::exp(I * (2.0 * pi * j / c.ring_count)) * n);
    }
    if (seeds.empty()) seeds.push_back(vT);
    return seeds;
}

inline cplx bilinear(const Vec2& a, const Vec2& b) { return a(0) * b(0) + a(1) * b(1); }

inline PropagatorValue evaluate_formula(Formula f, const RunConfig& c, const ModelPtr& m, const Vec2& u0,
                                        const Vec2& vT, double T, const std::vector<SaddleSolution>& sols,
                                        const std::optional<SaddleSolution>& psc, json& diag) {
    const auto& o = c.prop;
    auto need_psc = [&]() -> const SaddleSolution& {
        if (!psc) throw Error("no-caustic", "no caustic trajectory located for this point");
        return *psc;
    };
    switch (f) {
        case Formula::quadratic:
            if (sols.empty()) throw Error("no-solutions", "boundary problem has no solutions");
            return k_quadratic(sols, o);
        case Formula::regular:
            if (sols.empty()) throw Error("no-solutions", "boundary problem has no solutions");
            return k_regular(sols, o);
        case Formula::dual: {
            if (!c.dual_target && sols.empty()) throw Error("no-solutions", "no target u'' for the dual problem");
            Vec2 target = c.dual_target ? *c.dual_target : sols.front().record.u_final();
            std::vector<Vec2> seeds = c.seeds;
            for (const auto& s : sols) seeds.push_back(s.v0);
            if (seeds.empty()) seeds.push_back(u0.conjugate());
            auto rep = solve_dual(m, u0, target, T, seeds, c.solver);
            diag["dual_target"] = to_json(target);
            json ds = json::array();
            for (const auto& s : rep.solutions) ds.push_back(to_json(s));
            diag["dual_solutions"] = ds;
            if (rep.solutions.empty()) throw Error("no-solutions", "dual boundary problem has no solutions");
            return k_dual_quadratic(rep.solutions, o);
        }
        case Formula::transitional:
            return k_transitional(need_psc(), vT, o);
        case Formula::regular_at_caustic: {
            auto v = k_regular_at_caustic(need_psc(), o);
            if ((psc->record.v_final() - vT).norm() > 1e-8)
                v.warnings.push_back("evaluated at the caustic image v'', not at the requested final label");
            return v;
        }
        case Formula::uniform_at_caustic: {
            auto v = k_uniform_at_caustic(need_psc(), o);
            if ((psc->record.v_final() - vT).norm() > 1e-8)
                v.warnings.push_back("evaluated at the caustic image v'', not at the requested final label");
            return v;
        }
        case Formula::uniform: {
            auto contrib = detail::contributing(sols, o);
            if (psc && (psc->record.v_final() - vT).norm() <= 1e-8 * (1.0 + vT.norm()))
                return k_uniform_at_caustic(*psc, o);
            if (psc) {
                std::vector<const SaddleSolution*> near(contrib.begin(), contrib.end());
                std::sort(near.begin(), near.end(), [&](const auto* a, const auto* b) {
                    double da = (a->v0 - psc->v0).norm(), db = (b->v0 - psc->v0).norm();
                    return da != db ? da < db : lex_less(a->v0, b->v0);
                });
                if (near.size() >= 2) return k_uniform(*near[0], *near[1], o, caustic_hint(*psc, vT));
                throw Error("no-solutions", "uniform formula needs two coalescing saddles");
            }
            if (contrib.size() < 2) throw Error("no-solutions", "uniform formula needs two coalescing saddles");
            size_t ia = 0, ib = 1;
            double best = std::numeric_limits<double>::infinity();
            for (size_t a = 0; a < contrib.size(); ++a)
                for (size_t b = a + 1; b < contrib.size(); ++b) {
                    double d = (contrib[a]->v0 - contrib[b]->v0).norm();
                    if (d < best) {
                        best = d;
                        ia = a;
                        ib = b;
                    }
                }
            return k_uniform(*contrib[ia], *contrib[ib], o);
        }
    }
    throw Error("internal", "unhandled formula");
}

}  // namespace detail

inline PointResult evaluate_point(const RunConfig& c, const ModelPtr& m, size_t index, bool with_oracle) {
    GridPoint g = grid_point(c, index);
    PointResult p;
    p.index = index;
    p.coords = g.coords;
    p.T = g.T;
    p.final = g.final;
    const Vec2 u0 = c.initial;
    const Vec2 vT = g.final.conjugate();
    const cplx norm = c.normalized ? normalize_amplitude(1.0, u0, g.final) : cplx(1.0);
    json d{{"index", index}, {"T", g.T}, {"initial", to_json(u0)}, {"final", to_json(g.final)}};

    if (with_oracle) {
        try {
            cplx k = c.n_max > 0 ? exact_propagator(*m, u0, g.final, g.T, FockTruncation{c.n_max}, c.oracle)
                                 : exact_propagator(*m, u0, g.final, g.T, c.oracle);
            p.exact = k * norm;
            p.exact_status = "ok";
            d["exact"] = to_json(*p.exact);
        } catch (const Error& e) {
            p.exact_status = e.kind();
            d["exact_error"] = e.what();
        }
    }

    if (g.T == 0.0) {
        // Identity evolution: every formula reduces to the overlap.
        cplx overlap = std::exp(detail::bilinear(vT, u0)) * norm;
        for (Formula f : c.formulas) {
            PropagatorValue v;
            v.formula = f;
            v.amplitude = overlap;
            v.warnings.push_back("T = 0: overlap of the coherent states");
            FormulaOutcome out{f, v, "ok", ""};
            p.formulas.push_back(out);
        }
        json fj = json::object();
        for (const auto& f : p.formulas) fj[to_string(f.formula)] = json{{"status", "ok"}, {"value", to_json(*f.value)}};
        d["formulas"] = fj;
        p.n_solutions = 0;
        p.diag = std::move(d);
        return p;
    }

    std::optional<SaddleSolution> psc;
    if (detail::needs_caustic(c)) {
        try {
            psc = locate_caustic(m, u0, g.T, c.caustic_hint.value_or(vT), c.solver, c.caustic_start);
            json pj = to_json(*psc);
            try {
                pj["jet"] = to_json(compute_action_jet(psc->record));
            } catch (const Error& e) {
                pj["jet_error"] = e.what();
            }
            d["caustic"] = pj;
        } catch (const Error& e) {
            d["caustic_error"] = json{{"kind", e.kind()}, {"message", e.what()}};
        }
    }

    std::vector<SaddleSolution> sols;
    try {
        auto rep = solve_mixed(m, u0, vT, g.T, detail::point_seeds(c, m, u0, vT, g.T, psc), c.solver);
        sols = std::move(rep.solutions);
        json fails = json::array();
        for (const auto& f : rep.failures) fails.push_back(json{{"seed", to_json(f.seed)}, {"reason", f.reason}});
        d["seed_failures"] = fails;
    } catch (const Error& e) {
        d["solve_error"] = json{{"kind", e.kind()}, {"message", e.what()}};
    }
    json sj = json::array();
    for (const auto& s : sols) {
        sj.push_back(to_json(s));
        double a = std::abs(s.record.det_vv());
        if (!(a >= p.min_abs_det_vv)) p.min_abs_det_vv = a;
        p.stokes += s.stokes_suspect ? '1' : '0';
    }
    d["solutions"] = sj;
    p.n_solutions = static_cast<int>(sols.size());

    json fj = json::object();
    for (Formula f : c.formulas) {
        FormulaOutcome out{f, std::nullopt, "ok", ""};
        json extra = json::object();
        try {
            PropagatorValue v = detail::evaluate_formula(f, c, m, u0, vT, g.T, sols, psc, extra);
            v.amplitude *= norm;
            out.value = std::move(v);
        } catch (const Error& e) {
            out.status = e.kind();
            out.message = e.what();
        }
        json entry{{"status", out.status}};
        if (out.value) entry["value"] = to_json(*out.value);
        if (!out.message.empty()) entry["message"] = out.message;
        for (auto it = extra.begin(); it != extra.end(); ++it) entry[it.key()] = it.value();
        fj[to_string(f)] = entry;
        p.formulas.push_back(std::move(out));
    }
    d["formulas"] = fj;
    if (!p.any_ok()) p.status = "failed";
    p.diag = std::move(d);
    return p;
}

// ---- output -----------------------------------------------------------------

inline std::string fmt17(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string column_name(Formula f) {
    std::string s = to_string(f);
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
}

// Runs fn(k) for k in [0, n) on `threads` workers; results are stored by index.
template <class Result, class Fn>
std::vector<Result> parallel_map(size_t n, int threads, Fn fn) {
    std::vector<Result> out(n);
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (threads == 1) {
        for (size_t k = 0; k < n; ++k) out[k] = fn(k);
        return out;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (size_t k = next++; k < n; k = next++) out[k] = fn(k);
        });
    for (auto& th : pool) th.join();
    return out;
}

inline std::filesystem::path output_path(const RunConfig& c, const std::string& name) {
    std::filesystem::create_directories(c.out_dir);
    return std::filesystem::path(c.out_dir) / (c.prefix + name);
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("io", "cannot write '" + p.string() + "'");
    f << s;
}

inline std::string coord_header(const RunConfig& c) {
    std::string h = "index";
    for (const auto& a : c.scan) h += a.field == "T" ? ",T" : ",re_" + a.field + ",im_" + a.field;
    return h;
}

inline std::string coord_cells(const RunConfig& c, const PointResult& p) {
    std::string s = std::to_string(p.index);
    for (size_t a = 0; a < c.scan.size(); ++a) {
        if (c.scan[a].field == "T")
            s += "," + fmt17(p.coords[a].real());
        else
            s += "," + fmt17(p.coords[a].real()) + "," + fmt17(p.coords[a].imag());
    }
    return s;
}

inline json run_header(const std::string& command, const RunConfig& c, const ModelPtr& m) {
    json axes = json::array();
    for (const auto& a : c.scan)
        axes.push_back(json{{"field", a.field}, {"start", to_json(a.start)}, {"stop", to_json(a.stop)}, {"count", a.count}});
    json f = json::array();
    for (auto x : c.formulas) f.push_back(to_string(x));
    return json{{"command", command},
                {"model", m->describe()},
                {"hbar", c.frame.hbar},
                {"initial", to_json(c.initial)},
                {"final", to_json(c.final)},
                {"T", c.T},
                {"scan", axes},
                {"formulas", f},
                {"normalized", c.normalized}};
}

inline double relative_error(cplx a, cplx exact) { return std::abs(a - exact) / std::abs(exact); }

inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    double pos = q * (v.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(pos));
    size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

inline const std::vector<std::pair<std::string, double>>& summary_quantiles() {
    static const std::vector<std::pair<std::string, double>> q{
        {"min", 0.0}, {"p25", 0.25}, {"median", 0.5}, {"p75", 0.75}, {"p90", 0.9}, {"max", 1.0}};
    return q;
}

// ---- commands ---------------------------------------------------------------

inline std::vector<PointResult> evaluate_grid(const RunConfig& c, int threads, bool with_oracle) {
    ModelPtr m = c.build_model();
    return parallel_map<PointResult>(c.grid_size(), threads,
                                     [&](size_t k) { return evaluate_point(c, m, k, with_oracle); });
}

inline int cmd_propagate(const RunConfig& c, int threads = 1) {
    ModelPtr m = c.build_model();
    auto pts = evaluate_grid(c, threads, false);
    std::string csv = coord_header(c) + ",status,n_solutions,min_abs_det_mvv,stokes";
    for (auto f : c.formulas) {
        std::string n = column_name(f);
        csv += "," + n + "_re," + n + "_im," + n + "_param_re," + n + "_param_im," + n + "_status";
    }
    csv += "\n";
    json points = json::array();
    bool any = false;
    for (const auto& p : pts) {
        csv += coord_cells(c, p) + "," + p.status + "," + std::to_string(p.n_solutions) + "," +
               fmt17(p.min_abs_det_vv) + "," + (p.stokes.empty() ? "-" : p.stokes);
        for (const auto& f : p.formulas) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            cplx a = f.ok() ? f.value->amplitude : cplx(nan, nan);
            cplx par = f.parameter();
            csv += "," + fmt17(a.real()) + "," + fmt17(a.imag()) + "," + fmt17(par.real()) + "," + fmt17(par.imag()) +
                   "," + f.status;
        }
        csv += "\n";
        any = any || p.any_ok();
        points.push_back(p.diag);
    }
    json doc = run_header("propagate", c, m);
    doc["points"] = points;
    write_text(output_path(c, "propagate.csv"), csv);
    write_text(output_path(c, "propagate.json"), doc.dump(2) + "\n");
    return any || pts.empty() ? exit_ok : exit_all_failed;
}

inline int cmd_compare_oracle(const RunConfig& c, int threads = 1) {
    ModelPtr m = c.build_model();
    auto pts = evaluate_grid(c, threads, true);
    std::string csv = coord_header(c) + ",status,exact_re,exact_im,exact_status";
    for (auto f : c.formulas) {
        std::string n = column_name(f);
        csv += "," + n + "_re," + n + "_im," + n + "_rel_err," + n + "_status";
    }
    csv += "\n";
    std::vector<std::vector<double>> errs(c.formulas.size());
    json points = json::array();
    bool any = false;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : pts) {
        cplx ex = p.exact.value_or(cplx(nan, nan));
        csv += coord_cells(c, p) + "," + p.status + "," + fmt17(ex.real()) + "," + fmt17(ex.imag()) + "," +
               p.exact_status;
        for (size_t i = 0; i < p.formulas.size(); ++i) {
            const auto& f = p.formulas[i];
            cplx a = f.ok() ? f.value->amplitude : cplx(nan, nan);
            // The dual formula is a different representation and is not compared.
            double e = f.ok() && p.exact && f.formula != Formula::dual ? relative_error(a, ex) : nan;
            if (std::isfinite(e)) errs[i].push_back(e);
            csv += "," + fmt17(a.real()) + "," + fmt17(a.imag()) + "," + fmt17(e) + "," + f.status;
        }
        csv += "\n";
        any = any || (p.any_ok() && p.exact);
        points.push_back(p.diag);
    }
    std::string summary = "formula,count";
    for (const auto& [name, q] : summary_quantiles()) summary += "," + name;
    summary += "\n";
    json sj = json::object();
    for (size_t i = 0; i < c.formulas.size(); ++i) {
        summary += std::string(to_string(c.formulas[i])) + "," + std::to_string(errs[i].size());
        json q = json{{"count", errs[i].size()}};
        for (const auto& [name, x] : summary_quantiles()) {
            double v = quantile(errs[i], x);
            summary += "," + fmt17(v);
            q[name] = std::isfinite(v) ? json(v) : json(nullptr);
        }
        summary += "\n";
        sj[to_string(c.formulas[i])] = q;
    }
    json doc = run_header("compare-oracle", c, m);
    doc["summary"] = sj;
    doc["points"] = points;
    write_text(output_path(c, "compare.csv"), csv);
    write_text(output_path(c, "compare_summary.csv"), summary);
    write_text(output_path(c, "compare.json"), doc.dump(2) + "\n");
    return any || pts.empty() ? exit_ok : exit_all_failed;
}

struct CausticPoint {
    size_t index = 0;
    std::vector<cplx> coords;
    std::string status = "ok";
    std::optional<SaddleSolution> psc;
    std::optional<ActionJet> jet;
    json diag;
};

// Points are located in order along the last scan axis, each one starting from
// the previous caustic; rows of a 2D scan are independent chains.
inline int cmd_caustic_scan(const RunConfig& c, int threads = 1) {
    ModelPtr m = c.build_model();
    const size_t n = c.grid_size();
    const size_t row = c.scan.empty() ? 1 : static_cast<size_t>(c.scan.back().count);
    auto rows = parallel_map<std::vector<CausticPoint>>(n / row, threads, [&](size_t r) {
        std::vector<CausticPoint> out;
        std::optional<Vec2> start = c.caustic_start;
        for (size_t j = 0; j < row; ++j) {
            size_t k = r * row + j;
            GridPoint g = grid_point(c, k);
            CausticPoint cp;
            cp.index = k;
            cp.coords = g.coords;
            json d{{"index", k}, {"T", g.T}};
            Vec2 hint = c.caustic_hint.value_or(g.final.conjugate());
            if (g.T == 0.0) {
                cp.status = "no-caustic";
                d["message"] = "T = 0";
            } else {
                auto attempt = [&](std::optional<Vec2> s0) {
                    return locate_caustic(m, c.initial, g.T, hint, c.solver, s0);
                };
                try {
                    try {
                        cp.psc = attempt(start);
                    } catch (const Error&) {
                        if (!start) throw;
                        cp.psc = attempt(std::nullopt);
                    }
                    start = cp.psc->v0;
                    d["caustic"] = to_json(*cp.psc);
                    try {
                        cp.jet = compute_action_jet(cp.psc->record);
                        d["jet"] = to_json(*cp.jet);
                    } catch (const Error& e) {
                        d["jet_error"] = e.what();
                    }
                } catch (const CausticFailure& e) {
                    cp.status = "no-caustic";
                    d["message"] = e.what();
                    d["best_abs_det"] = e.best_abs_det;
                } catch (const Error& e) {
                    cp.status = "failed";
                    d["message"] = e.what();
                }
            }
            d["status"] = cp.status;
            cp.diag = std::move(d);
            out.push_back(std::move(cp));
        }
        return out;
    });
    std::string csv = coord_header(c) +
                      ",status,re_ubar_x,im_ubar_x,re_ubar_y,im_ubar_y,re_vbar_x,im_vbar_x,re_vbar_y,im_vbar_y,"
                      "re_v0_x,im_v0_x,re_v0_y,im_v0_y,abs_det_mvv,re_Gp,im_Gp,re_lambda_plus,im_lambda_plus\n";
    json points = json::array();
    bool any = false;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& rr : rows)
        for (const auto& cp : rr) {
            PointResult shim;
            shim.index = cp.index;
            shim.coords = cp.coords;
            csv += coord_cells(c, shim) + "," + cp.status;
            auto put = [&](cplx z) { csv += "," + fmt17(z.real()) + "," + fmt17(z.imag()); };
            if (cp.psc) {
                const auto& r = cp.psc->record;
                for (int i = 0; i < 2; ++i) put(r.u_final()(i));
                for (int i = 0; i < 2; ++i) put(r.v_final()(i));
                for (int i = 0; i < 2; ++i) put(cp.psc->v0(i));
                csv += "," + fmt17(std::abs(r.det_vv()));
                put(cp.jet ? cp.jet->cubic.Gp : cplx(nan, nan));
                put(cp.jet ? cp.jet->cubic.lambda_plus : cplx(nan, nan));
            } else {
                for (int i = 0; i < 17; ++i) csv += ",nan";
            }
            csv += "\n";
            any = any || cp.status != "failed";
            points.push_back(cp.diag);
        }
    json doc = run_header("caustic-scan", c, m);
    doc["points"] = points;
    write_text(output_path(c, "caustic.csv"), csv);
    write_text(output_path(c, "caustic.json"), doc.dump(2) + "\n");
    return any || n == 0 ? exit_ok : exit_all_failed;
}

// Single-trajectory dump: from [trajectory] v0 if given, otherwise every
// solution of the boundary problem at the configured labels.
inline int cmd_trajectory(const RunConfig& c, int /*threads*/ = 1) {
    ModelPtr m = c.build_model();
    const Vec2 u0 = c.initial;
    json doc = run_header("trajectory", c, m);
    json list = json::array();
    auto dump = [&](const TrajectoryRecord& r, const std::string& name) {
        std::ostringstream os;
        write_trajectory_csv(os, r);
        write_text(output_path(c, name), os.str());
    };
    try {
        if (c.trajectory_v0) {
            auto r = integrate(m, detail::point(u0, *c.trajectory_v0), c.T, c.solver.integrator_tol);
            dump(r, "trajectory.csv");
            list.push_back(json{{"file", c.prefix + "trajectory.csv"},
                                {"v0", to_json(*c.trajectory_v0)},
                                {"u_final", to_json(r.u_final())},
                                {"v_final", to_json(r.v_final())},
                                {"det_vv", to_json(r.det_vv())},
                                {"det_uv", to_json(r.det_uv())},
                                {"S", to_json(r.S_final())},
                                {"G", to_json(r.G_final())}});
        } else {
            const Vec2 vT = c.final.conjugate();
            auto rep = solve_mixed(m, u0, vT, c.T, detail::point_seeds(c, m, u0, vT, c.T, std::nullopt), c.solver);
            for (size_t k = 0; k < rep.solutions.size(); ++k) {
                std::string name = "trajectory_" + std::to_string(k) + ".csv";
                dump(rep.solutions[k].record, name);
                json s = to_json(rep.solutions[k]);
                s["file"] = c.prefix + name;
                list.push_back(s);
            }
        }
    } catch (const Error& e) {
        doc["error"] = json{{"kind", e.kind()}, {"message", e.what()}};
    }
    doc["trajectories"] = list;
    write_text(output_path(c, "trajectory.json"), doc.dump(2) + "\n");
    return list.empty() ? exit_all_failed : exit_ok;
}

inline int run_command(const std::string& name, const RunConfig& c, int threads) {
    if (name == "propagate") return cmd_propagate(c, threads);
    if (name == "compare-oracle") return cmd_compare_oracle(c, threads);
    if (name == "caustic-scan") return cmd_caustic_scan(c, threads);
    if (name == "trajectory") return cmd_trajectory(c, threads);
    throw ConfigError(0, "command", "unknown command '" + name + "'");
}

}  // namespace csp
