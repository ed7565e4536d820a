#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "boundary.hpp"
#include "oracle.hpp"
#include "propagators.hpp"

namespace csp {

// Config grammar (one entry per line):
//   # comment            ; blank lines ignored
//   [section]
//   key = value
// Complex values are written a+bi, a-bi, bi, a or i. Lists are comma separated.
// A scan line `axis = start, stop, count` inside [scan] adds one grid axis;
// the first axis listed varies slowest.

class ConfigError : public Error {
public:
    ConfigError(int line, const std::string& field, const std::string& what)
        : Error("config", format(line, field, what)), line_(line), field_(field) {}
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    static std::string format(int line, const std::string& field, const std::string& what) {
        std::ostringstream os;
        if (line > 0) os << "line " << line << ": ";
        if (!field.empty()) os << field << ": ";
        os << what;
        return os.str();
    }
    int line_;
    std::string field_;
};

inline std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) out.push_back(trim(cur));
    return out;
}

inline std::optional<double> parse_real(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double x = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(x)) return std::nullopt;
    return x;
}

// "a+bi" and friends; no spaces inside the number.
inline std::optional<cplx> parse_complex(const std::string& raw) {
    std::string s;
    for (char ch : raw)
        if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    if (s.empty()) return std::nullopt;
    if (s.back() != 'i' && s.back() != 'j') {
        auto r = parse_real(s);
        if (!r) return std::nullopt;
        return cplx(*r, 0.0);
    }
    std::string body = s.substr(0, s.size() - 1);
    // Split at the last sign that is not part of an exponent.
    size_t cut = std::string::npos;
    for (size_t k = body.size(); k-- > 1;) {
        if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
            cut = k;
            break;
        }
    }
    std::string re = cut == std::string::npos ? "" : body.substr(0, cut);
    std::string im = cut == std::string::npos ? body : body.substr(cut);
    double b;
    if (im.empty() || im == "+")
        b = 1.0;
    else if (im == "-")
        b = -1.0;
    else {
        auto v = parse_real(im);
        if (!v) return std::nullopt;
        b = *v;
    }
    double a = 0.0;
    if (!re.empty()) {
        auto v = parse_real(re);
        if (!v) return std::nullopt;
        a = *v;
    }
    return cplx(a, b);
}

struct ScanAxis {
    std::string field;  // T, final_x or final_y
    cplx start, stop;
    int count = 1;

    cplx at(int k) const { return count == 1 ? start : start + (stop - start) * (double(k) / (count - 1)); }
};

struct RunConfig {
    std::string model_kind = "harmonic";
    double omega_x = 1.0, omega_y = 1.0, chi_x = 0.0, chi_y = 0.0, g = 0.0, s = 0.0;
    CoherentFrame frame = CoherentFrame::dimensionless(1.0);

    Vec2 initial{0.0, 0.0};  // z'
    Vec2 final{0.0, 0.0};    // z''
    double T = 1.0;
    std::vector<ScanAxis> scan;

    std::vector<Formula> formulas{Formula::quadratic};
    PropagatorOptions prop;
    SolverOptions solver;

    std::vector<Vec2> seeds;  // v'(0)
    bool default_seeds = true;
    double ring_radius = 0.15;
    int ring_count = 8;

    std::optional<Vec2> caustic_hint;   // v'' near the caustic image
    std::optional<Vec2> caustic_start;  // v'(0) starting point
    bool locate_caustic = false;        // force a caustic search at every point

    std::optional<Vec2> dual_target;  // u''
    std::optional<Vec2> trajectory_v0;

    int n_max = 0;  // 0 selects the truncation automatically
    OracleOptions oracle;

    std::string out_dir = "out";
    std::string prefix;
    bool normalized = false;

    ModelPtr build_model() const {
        if (model_kind == "harmonic") return make_harmonic(frame, omega_x, omega_y);
        if (model_kind == "kerr2d") return make_kerr2d(frame, omega_x, omega_y, chi_x, chi_y);
        if (model_kind == "quadratic") return make_quadratic(frame, omega_x, omega_y, g, s);
        throw ConfigError(0, "model.kind", "unknown model '" + model_kind + "'");
    }

    size_t grid_size() const {
        size_t n = 1;
        for (const auto& a : scan) n *= static_cast<size_t>(a.count);
        return n;
    }

    // Grid index in row-major order -> per-axis indices.
    std::vector<int> grid_indices(size_t k) const {
        std::vector<int> idx(scan.size());
        for (size_t a = scan.size(); a-- > 0;) {
            idx[a] = static_cast<int>(k % scan[a].count);
            k /= scan[a].count;
        }
        return idx;
    }

    bool wants(Formula f) const {
        for (auto x : formulas)
            if (x == f) return true;
        return false;
    }
};

inline std::optional<Formula> formula_from_string(const std::string& s) {
    for (auto f : {Formula::quadratic, Formula::dual, Formula::regular, Formula::transitional, Formula::uniform,
                   Formula::regular_at_caustic, Formula::uniform_at_caustic})
        if (s == to_string(f)) return f;
    return std::nullopt;
}

namespace detail {

struct Entry {
    std::string value;
    int line;
};

class ConfigReader {
public:
    explicit ConfigReader(std::istream& is) {
        std::string raw, section;
        int line = 0;
        while (std::getline(is, raw)) {
            ++line;
            std::string s = raw;
            size_t hash = s.find('#');
            if (hash != std::string::npos) s = s.substr(0, hash);
            s = trim(s);
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ConfigError(line, "", "unterminated section header");
                section = trim(s.substr(1, s.size() - 2));
                if (!known_sections().count(section)) throw ConfigError(line, section, "unknown section");
                continue;
            }
            size_t eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError(line, "", "expected key = value");
            if (section.empty()) throw ConfigError(line, "", "entry outside any section");
            std::string key = section + "." + trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (section == "scan") {
                scan_.push_back({trim(s.substr(0, eq)), {value, line}});
                continue;
            }
            if (key == "seeds.v0") {
                seeds_.push_back({value, line});
                continue;
            }
            if (entries_.count(key)) throw ConfigError(line, key, "duplicate key");
            entries_[key] = {value, line};
        }
    }

    static const std::set<std::string>& known_sections() {
        static const std::set<std::string> s{"model",  "frame",  "label",  "scan",   "formulas",   "contours",
                                             "uniform", "tolerances", "seeds", "caustic", "dual",
                                             "trajectory", "oracle", "output"};
        return s;
    }

    std::optional<Entry> take(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        Entry e = it->second;
        entries_.erase(it);
        return e;
    }

    void real(const std::string& key, double& out) {
        if (auto e = take(key)) {
            auto v = parse_real(e->value);
            if (!v) throw ConfigError(e->line, key, "expected a finite real number, got '" + e->value + "'");
            out = *v;
        }
    }
    void integer(const std::string& key, int& out) {
        if (auto e = take(key)) {
            auto v = parse_real(e->value);
            if (!v || *v != std::floor(*v)) throw ConfigError(e->line, key, "expected an integer");
            out = static_cast<int>(*v);
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (auto e = take(key)) {
            if (e->value == "true" || e->value == "1" || e->value == "yes")
                out = true;
            else if (e->value == "false" || e->value == "0" || e->value == "no")
                out = false;
            else
                throw ConfigError(e->line, key, "expected true or false");
        }
    }
    void text(const std::string& key, std::string& out) {
        if (auto e = take(key)) out = e->value;
    }
    static cplx complex_at(const Entry& e, const std::string& key, const std::string& text) {
        auto v = parse_complex(text);
        if (!v) throw ConfigError(e.line, key, "expected a complex number a+bi, got '" + text + "'");
        return *v;
    }
    void complex(const std::string& key, cplx& out) {
        if (auto e = take(key)) out = complex_at(*e, key, e->value);
    }
    // Pair of components from keys <base>_x and <base>_y; with `partial` a
    // missing component is zero.
    std::optional<Vec2> pair(const std::string& base, bool partial = false) {
        auto ex = take(base + "_x"), ey = take(base + "_y");
        if (!ex && !ey) return std::nullopt;
        if (partial) return Vec2(ex ? complex_at(*ex, base + "_x", ex->value) : cplx{},
                                 ey ? complex_at(*ey, base + "_y", ey->value) : cplx{});
        if (!ex || !ey)
            throw ConfigError((ex ? ex : ey)->line, base, "both _x and _y components are required");
        return Vec2(complex_at(*ex, base + "_x", ex->value), complex_at(*ey, base + "_y", ey->value));
    }

    const std::vector<std::pair<std::string, Entry>>& scan() const { return scan_; }
    const std::vector<Entry>& seeds() const { return seeds_; }

    void finish() const {
        if (!entries_.empty()) {
            const auto& [k, e] = *entries_.begin();
            throw ConfigError(e.line, k, "unknown key");
        }
    }

private:
    std::map<std::string, Entry> entries_;
    std::vector<std::pair<std::string, Entry>> scan_;
    std::vector<Entry> seeds_;
};

inline ContourChoice contour_at(const Entry& e, const std::string& key) {
    try {
        return ContourChoice::parse(e.value);
    } catch (const Error& err) {
        throw ConfigError(e.line, key, err.what());
    }
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
    detail::ConfigReader rd(is);
    RunConfig c;

    rd.text("model.kind", c.model_kind);
    rd.real("model.omega_x", c.omega_x);
    rd.real("model.omega_y", c.omega_y);
    rd.real("model.chi_x", c.chi_x);
    rd.real("model.chi_y", c.chi_y);
    rd.real("model.g", c.g);
    rd.real("model.s", c.s);
    if (c.model_kind != "harmonic" && c.model_kind != "kerr2d" && c.model_kind != "quadratic")
        throw ConfigError(0, "model.kind", "unknown model '" + c.model_kind + "'");

    double hbar = 1.0;
    rd.real("frame.hbar", hbar);
    std::optional<double> bx, by;
    if (auto e = rd.take("frame.b_x")) {
        bx = parse_real(e->value);
        if (!bx) throw ConfigError(e->line, "frame.b_x", "expected a real number");
    }
    if (auto e = rd.take("frame.b_y")) {
        by = parse_real(e->value);
        if (!by) throw ConfigError(e->line, "frame.b_y", "expected a real number");
    }
    c.frame = bx || by ? CoherentFrame::from_widths(hbar, bx.value_or(std::sqrt(hbar)), by.value_or(std::sqrt(hbar)))
                       : CoherentFrame::dimensionless(hbar);
    try {
        c.frame.validate();
    } catch (const Error& e) {
        throw ConfigError(0, "frame", e.what());
    }

    if (auto v = rd.pair("label.initial", true)) c.initial = *v;
    if (auto v = rd.pair("label.final", true)) c.final = *v;
    rd.real("label.T", c.T);
    if (!(c.T >= 0)) throw ConfigError(0, "label.T", "T must be non-negative");

    for (const auto& [axis, e] : rd.scan()) {
        std::string key = "scan." + axis;
        if (axis != "T" && axis != "final_x" && axis != "final_y")
            throw ConfigError(e.line, key, "scannable fields are T, final_x and final_y");
        for (const auto& a : c.scan)
            if (a.field == axis) throw ConfigError(e.line, key, "axis scanned twice");
        auto parts = split_list(e.value);
        if (parts.size() != 3) throw ConfigError(e.line, key, "expected start, stop, count");
        ScanAxis a;
        a.field = axis;
        a.start = detail::ConfigReader::complex_at(e, key, parts[0]);
        a.stop = detail::ConfigReader::complex_at(e, key, parts[1]);
        auto n = parse_real(parts[2]);
        if (!n || *n != std::floor(*n) || *n < 1) throw ConfigError(e.line, key, "count must be an integer >= 1");
        a.count = static_cast<int>(*n);
        if (axis == "T") {
            if (a.start.imag() != 0 || a.stop.imag() != 0) throw ConfigError(e.line, key, "T must be real");
            if (a.start.real() < 0 || a.stop.real() < 0) throw ConfigError(e.line, key, "T must be non-negative");
        }
        c.scan.push_back(a);
        if (c.scan.size() > 2) throw ConfigError(e.line, key, "at most 2 scanned dimensions per run");
    }

    if (auto e = rd.take("formulas.list")) {
        c.formulas.clear();
        for (const auto& name : split_list(e->value)) {
            if (name.empty()) continue;
            auto f = formula_from_string(name);
            if (!f) throw ConfigError(e->line, "formulas.list", "unknown formula '" + name + "'");
            c.formulas.push_back(*f);
        }
        if (c.formulas.empty()) throw ConfigError(e->line, "formulas.list", "formula list is empty");
    }

    if (auto e = rd.take("contours.regular")) c.prop.regular_contour = detail::contour_at(*e, "contours.regular");
    if (auto e = rd.take("contours.transitional"))
        c.prop.transitional_contour = detail::contour_at(*e, "contours.transitional");
    if (auto e = rd.take("contours.uniform")) c.prop.uniform_contour = detail::contour_at(*e, "contours.uniform");

    if (auto e = rd.take("uniform.exponent")) {
        if (e->value == "action")
            c.prop.uniform_exponent = UniformExponent::action;
        else if (e->value == "full")
            c.prop.uniform_exponent = UniformExponent::full;
        else
            throw ConfigError(e->line, "uniform.exponent", "expected action or full");
    }
    if (auto e = rd.take("uniform.labelling")) {
        if (e->value == "analytic")
            c.prop.uniform_labelling = UniformLabelling::analytic;
        else if (e->value == "dominance")
            c.prop.uniform_labelling = UniformLabelling::dominance;
        else
            throw ConfigError(e->line, "uniform.labelling", "expected analytic or dominance");
    }

    rd.real("tolerances.integrator", c.solver.integrator_tol);
    rd.real("tolerances.residual", c.solver.residual_tol);
    rd.real("tolerances.accept", c.solver.accept_tol);
    rd.integer("tolerances.max_iter", c.solver.max_iter);
    rd.real("tolerances.dedup_radius", c.solver.dedup_radius);
    rd.real("tolerances.stokes_eta", c.solver.stokes_eta);
    rd.real("tolerances.caustic_det", c.prop.caustic_det);
    rd.real("tolerances.psc_det", c.prop.psc_det);
    c.solver.caustic_det_tol = c.prop.psc_det;
    rd.real("tolerances.merge_radius", c.prop.merge_radius);
    rd.real("tolerances.small_B", c.prop.small_B);
    rd.boolean("tolerances.include_stokes", c.prop.include_stokes);
    if (!(c.solver.integrator_tol >= 1e-13 && c.solver.integrator_tol <= 1e-4))
        throw ConfigError(0, "tolerances.integrator", "must lie in [1e-13, 1e-4]");

    for (const auto& e : rd.seeds()) {
        auto parts = split_list(e.value);
        if (parts.size() != 2) throw ConfigError(e.line, "seeds.v0", "expected two complex components");
        c.seeds.emplace_back(detail::ConfigReader::complex_at(e, "seeds.v0", parts[0]),
                             detail::ConfigReader::complex_at(e, "seeds.v0", parts[1]));
    }
    rd.boolean("seeds.default", c.default_seeds);
    rd.real("seeds.ring_radius", c.ring_radius);
    rd.integer("seeds.ring_count", c.ring_count);
    if (c.ring_count < 0) throw ConfigError(0, "seeds.ring_count", "must be non-negative");

    c.caustic_hint = rd.pair("caustic.hint");
    c.caustic_start = rd.pair("caustic.start");
    rd.boolean("caustic.locate", c.locate_caustic);
    c.dual_target = rd.pair("dual.target");
    c.trajectory_v0 = rd.pair("trajectory.v0");

    rd.integer("oracle.n_max", c.n_max);
    rd.boolean("oracle.stability_check", c.oracle.stability_check);
    rd.integer("oracle.stability_extra", c.oracle.stability_extra);
    rd.real("oracle.stability_tol", c.oracle.stability_tol);

    rd.text("output.dir", c.out_dir);
    rd.text("output.prefix", c.prefix);
    rd.boolean("output.normalized", c.normalized);

    rd.finish();
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "", "cannot open config file '" + path + "'");
    return parse_config(in);
}

}  // namespace csp
