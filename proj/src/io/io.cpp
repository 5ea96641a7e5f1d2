#include "safekernel/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

namespace safekernel::io {
namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) fail(ErrorCode::ConfigError, where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            fail(ErrorCode::ConfigError, where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        fail(ErrorCode::ConfigError, where + ": bad value for '" + key + "'");
    }
}

template <typename T>
T require(const Json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) fail(ErrorCode::ConfigError, where + ": missing '" + key + "'");
    return get_or<T>(j, key, T{}, where);
}

Json matrix_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& where) {
    if (!j.is_array()) fail(ErrorCode::ConfigError, where + ": expected a matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Json& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            fail(ErrorCode::ConfigError, where + ": ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row.at(static_cast<std::size_t>(c)).is_number())
                fail(ErrorCode::ConfigError, where + ": matrix entries must be numbers");
            m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return m;
}

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Vector vector_from_json(const Json& j, const std::string& where) {
    if (!j.is_array()) fail(ErrorCode::ConfigError, where + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail(ErrorCode::ConfigError, where + ": entries must be numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

void check_id(const std::string& id) {
    static const std::regex ok("[A-Za-z0-9_.-]+");
    if (!std::regex_match(id, ok) || id == "intersection" || id == "." || id == "..")
        fail(ErrorCode::ConfigError, "model id '" + id + "' is not usable as a directory name");
}

std::string fmt6(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string step_name(std::size_t k) { return "step" + std::to_string(k) + ".json"; }

Json sequence_summary(const KernelSequence& seq) {
    const Polytope& last = seq.final_kernel();
    Json j;
    j["rows"] = last.rows();
    j["empty"] = last.is_empty();
    j["chebyshev_radius"] = last.is_empty() ? 0.0 : chebyshev_ball(last).radius;
    j["empty_at"] = seq.empty_at ? Json(*seq.empty_at) : Json(nullptr);
    return j;
}

KernelSequence read_sequence(const fs::path& dir, std::size_t count) {
    KernelSequence seq;
    for (std::size_t k = 0; k < count; ++k) {
        seq.steps.push_back(polytope_from_json(read_json(dir / step_name(k))));
        if (!seq.empty_at && seq.steps.back().is_empty()) seq.empty_at = static_cast<int>(k);
    }
    return seq;
}

Scenario scenario_fields(const Json& j, const std::string& where) {
    Scenario s;
    s.name = get_or<std::string>(j, "name", s.name, where);
    if (j.contains("mode")) s.mode = parse_safety_mode(require<std::string>(j, "mode", where));
    s.bp_bound_pct = get_or(j, "bp_bound_pct", s.bp_bound_pct, where);
    s.duration_min = get_or(j, "duration_min", s.duration_min, where);
    s.dt_s = get_or(j, "dt_s", s.dt_s, where);
    s.horizon_min = get_or(j, "horizon_min", s.horizon_min, where);
    s.facet_cap = get_or<std::size_t>(j, "facet_cap", s.facet_cap, where);
    s.pk_max = get_or(j, "pk_max", s.pk_max, where);
    s.u_max = get_or(j, "u_max", s.u_max, where);
    s.noise_bound = get_or(j, "noise_bound", s.noise_bound, where);
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed, where);
    s.allow_unsound_noise = get_or(j, "allow_unsound_noise", s.allow_unsound_noise, where);
    s.median_filter = get_or(j, "median_filter", s.median_filter, where);
    if (j.contains("falsification")) {
        const Json& f = j.at("falsification");
        check_keys(f, {"gamma", "strict"}, where + ".falsification");
        s.falsification.gamma = get_or(f, "gamma", s.falsification.gamma, where);
        s.falsification.strict = get_or(f, "strict", s.falsification.strict, where);
    }
    if (j.contains("pid")) {
        const Json& p = j.at("pid");
        check_keys(p, {"kp", "ki", "kd", "tt_s", "u_min", "u_max", "setpoint", "anti_windup"}, where + ".pid");
        s.pid.kp = get_or(p, "kp", s.pid.kp, where);
        s.pid.ki = get_or(p, "ki", s.pid.ki, where);
        s.pid.kd = get_or(p, "kd", s.pid.kd, where);
        s.pid.tt_s = get_or(p, "tt_s", s.pid.tt_s, where);
        s.pid.u_min = get_or(p, "u_min", s.pid.u_min, where);
        s.pid.u_max = get_or(p, "u_max", s.pid.u_max, where);
        s.pid.setpoint = get_or(p, "setpoint", s.pid.setpoint, where);
        s.pid.anti_windup = get_or(p, "anti_windup", s.pid.anti_windup, where);
    }
    if (j.contains("blend")) {
        const Json& b = j.at("blend");
        check_keys(b, {"mode", "band_width"}, where + ".blend");
        const auto mode = get_or<std::string>(b, "mode", "convex", where);
        if (mode == "convex")
            s.blend_mode = BlendMode::ConvexBlend;
        else if (mode == "hard")
            s.blend_mode = BlendMode::HardSwitch;
        else
            fail(ErrorCode::ConfigError, where + ": blend mode must be 'convex' or 'hard'");
        if (b.contains("band_width") && !b.at("band_width").is_null())
            s.band_width = require<double>(b, "band_width", where);
    }
    s.initial_infusion = get_or(j, "initial_infusion", s.initial_infusion, where);
    return s;
}

} // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorCode::IoError, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
        out << content;
        if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

Json read_json(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
}

Json to_json(const Polytope& p) {
    Json j;
    j["dim"] = p.dim();
    j["empty"] = p.is_empty();
    std::vector<Eigen::Index> order(p.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Matrix& n = p.normals();
    const Vector& b = p.offsets();
    std::sort(order.begin(), order.end(), [&](Eigen::Index r, Eigen::Index s) {
        for (Eigen::Index c = 0; c < n.cols(); ++c)
            if (n(r, c) != n(s, c)) return n(r, c) < n(s, c);
        return b(r) < b(s);
    });
    Json normals = Json::array(), offsets = Json::array();
    for (Eigen::Index r : order) {
        normals.push_back(vector_json(n.row(r).transpose()));
        offsets.push_back(b(r));
    }
    j["normals"] = std::move(normals);
    j["offsets"] = std::move(offsets);
    return j;
}

Polytope polytope_from_json(const Json& j) {
    check_keys(j, {"dim", "empty", "normals", "offsets"}, "polytope");
    const int dim = require<int>(j, "dim", "polytope");
    if (dim <= 0) fail(ErrorCode::ConfigError, "polytope: dimension must be positive");
    if (get_or(j, "empty", false, "polytope")) return Polytope::empty_set(dim);
    Matrix n = matrix_from_json(require<Json>(j, "normals", "polytope"), "polytope.normals");
    Vector b = vector_from_json(require<Json>(j, "offsets", "polytope"), "polytope.offsets");
    if (n.rows() == 0) return Polytope::universe(dim);
    if (n.cols() != dim || n.rows() != b.size()) fail(ErrorCode::ConfigError, "polytope: shape mismatch");
    return Polytope(std::move(n), std::move(b));
}

Json box_json(const Polytope& p) {
    const auto [lo, hi] = bounding_box(p);
    Json j;
    j["lower"] = vector_json(lo);
    j["upper"] = vector_json(hi);
    return j;
}

Polytope box_from_json(const Json& j) {
    check_keys(j, {"lower", "upper"}, "box");
    const Vector lo = vector_from_json(require<Json>(j, "lower", "box"), "box.lower");
    const Vector hi = vector_from_json(require<Json>(j, "upper", "box"), "box.upper");
    if (lo.size() != hi.size() || lo.size() == 0) fail(ErrorCode::ConfigError, "box: bounds differ in length");
    if ((lo.array() > hi.array()).any()) fail(ErrorCode::ConfigError, "box: lower bound above upper bound");
    return Polytope::box(lo, hi);
}

Json to_json(const LinearStateSpace& s) {
    return Json{{"a", matrix_json(s.a)}, {"b", matrix_json(s.b)}, {"c", matrix_json(s.c)}};
}

LinearStateSpace system_from_json(const Json& j) {
    check_keys(j, {"a", "b", "c"}, "system");
    LinearStateSpace s;
    s.a = matrix_from_json(require<Json>(j, "a", "system"), "system.a");
    s.b = matrix_from_json(require<Json>(j, "b", "system"), "system.b");
    s.c = j.contains("c") ? matrix_from_json(j.at("c"), "system.c") : Matrix::Identity(s.a.rows(), s.a.cols());
    try {
        s.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, std::string("system: ") + e.what());
    }
    return s;
}

Json to_json(const PdParams& p) {
    return Json{{"ke0", p.ke0}, {"ec50", p.ec50}, {"hill_slope", p.hill_slope}, {"input_gain", p.input_gain}};
}

PdParams pd_from_json(const Json& j) {
    check_keys(j, {"ke0", "ec50", "hill_slope", "input_gain"}, "pd");
    PdParams p;
    p.ke0 = require<double>(j, "ke0", "pd");
    p.ec50 = require<double>(j, "ec50", "pd");
    p.hill_slope = require<double>(j, "hill_slope", "pd");
    p.input_gain = get_or(j, "input_gain", 1.0, "pd");
    return p;
}

Json to_json(const Cohort& c) {
    Json models = Json::array();
    for (const auto& m : c.models)
        models.push_back(Json{{"id", m.id},
                              {"pk", to_json(m.pk)},
                              {"bp_pd", to_json(m.bp_pd)},
                              {"doh_pd", to_json(m.doh_pd)},
                              {"bp_baseline", m.bp_baseline}});
    return Json{{"schema", 1}, {"provenance", c.provenance}, {"models", models}};
}

Cohort cohort_from_json(const Json& j) {
    check_keys(j, {"schema", "provenance", "models"}, "cohort");
    if (get_or(j, "schema", 1, "cohort") != 1) fail(ErrorCode::ConfigError, "cohort: unsupported schema");
    Cohort c;
    c.provenance = get_or<std::string>(j, "provenance", "", "cohort");
    const Json models = require<Json>(j, "models", "cohort");
    if (!models.is_array() || models.empty()) fail(ErrorCode::ConfigError, "cohort: models must be a nonempty array");
    for (const auto& m : models) {
        check_keys(m, {"id", "pk", "bp_pd", "doh_pd", "bp_baseline"}, "cohort model");
        PatientModel p;
        p.id = require<std::string>(m, "id", "cohort model");
        p.pk = system_from_json(require<Json>(m, "pk", "cohort model"));
        p.bp_pd = pd_from_json(require<Json>(m, "bp_pd", "cohort model"));
        p.doh_pd = pd_from_json(require<Json>(m, "doh_pd", "cohort model"));
        p.bp_baseline = get_or(m, "bp_baseline", p.bp_baseline, "cohort model");
        c.models.push_back(std::move(p));
    }
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, std::string("cohort: ") + e.what());
    }
    return c;
}

Cohort load_cohort(const Json& spec, const fs::path& base) {
    if (spec.is_string()) {
        const fs::path p = base / spec.get<std::string>();
        if (!fs::exists(p)) fail(ErrorCode::ConfigError, "cohort file not found: " + p.string());
        return cohort_from_json(read_json(p));
    }
    if (spec.is_object() && spec.contains("synthetic")) {
        check_keys(spec, {"synthetic"}, "cohort");
        const Json& s = spec.at("synthetic");
        check_keys(s, {"seed", "n", "preset"}, "cohort.synthetic");
        const auto preset = get_or<std::string>(s, "preset", "default", "cohort.synthetic");
        return synthesize_cohort(get_or<std::uint64_t>(s, "seed", 2024, "cohort.synthetic"),
                                 get_or(s, "n", 10, "cohort.synthetic"), CohortSpread::named(preset));
    }
    return cohort_from_json(spec);
}

KernelProblem load_kernel_problem(const Json& j, const fs::path& base) {
    KernelProblem p;
    p.kind = get_or<std::string>(j, "kind", "pkpd", "config");
    KernelConfig& cfg = p.config;
    cfg.horizon_min = get_or(j, "horizon_min", cfg.horizon_min, "config");
    cfg.dt_s = get_or(j, "dt_s", cfg.dt_s, "config");
    cfg.facet_cap = get_or<std::size_t>(j, "facet_cap", cfg.facet_cap, "config");
    Json resolved = j;
    if (p.kind == "pkpd") {
        check_keys(j, {"kind", "cohort", "bp_bound_pct", "horizon_min", "dt_s", "facet_cap", "pk_max", "u_max",
                       "name", "oracle"},
                   "config");
        p.cohort = load_cohort(require<Json>(j, "cohort", "config"), base);
        p.bp_bound_pct = get_or(j, "bp_bound_pct", 50.0, "config");
        if (!(p.bp_bound_pct > 0.0 && p.bp_bound_pct < 100.0))
            fail(ErrorCode::ConfigError, "config: bp_bound_pct must lie in (0, 100)");
        cfg.constraint_set = pkpd_constraint_set(get_or(j, "pk_max", 10.0, "config"));
        cfg.input_set = pkpd_input_set(get_or(j, "u_max", 600.0, "config"));
        for (const auto& m : p.cohort->models) p.models.emplace_back(m.id, safety_model(m, p.bp_bound_pct).sys);
        resolved["cohort"] = to_json(*p.cohort);
    } else if (p.kind == "lti") {
        check_keys(j, {"kind", "models", "constraint_set", "input_set", "horizon_min", "dt_s", "facet_cap", "name",
                       "oracle"},
                   "config");
        const Json models = require<Json>(j, "models", "config");
        if (!models.is_array() || models.empty()) fail(ErrorCode::ConfigError, "config: models must be a nonempty array");
        for (const auto& m : models) {
            check_keys(m, {"id", "a", "b", "c"}, "config model");
            Json sys = m;
            sys.erase("id");
            p.models.emplace_back(require<std::string>(m, "id", "config model"), system_from_json(sys));
        }
        cfg.constraint_set = box_from_json(require<Json>(j, "constraint_set", "config"));
        cfg.input_set = box_from_json(require<Json>(j, "input_set", "config"));
    } else {
        fail(ErrorCode::ConfigError, "config: kind must be 'pkpd' or 'lti'");
    }
    for (const auto& [id, sys] : p.models) {
        check_id(id);
        try {
            cfg.validate(sys.states());
        } catch (const Error& e) {
            fail(ErrorCode::ConfigError, std::string("config: ") + e.what());
        }
    }
    p.source = j;
    p.hash = sha256_hex(resolved.dump());
    return p;
}

KernelProblem load_kernel_problem(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCode::ConfigError, "config file not found: " + path.string());
    return load_kernel_problem(read_json(path), path.parent_path());
}

OracleProblem load_oracle_problem(const fs::path& path) {
    OracleProblem o;
    o.problem = load_kernel_problem(path);
    if (o.problem.config.constraint_set.dim() > 2)
        fail(ErrorCode::ConfigError, "oracle: only state dimension 1 or 2 is supported");
    if (o.problem.source.contains("oracle")) {
        const Json& j = o.problem.source.at("oracle");
        check_keys(j, {"grid", "refine", "input_levels", "samples", "seed"}, "config.oracle");
        o.grid = get_or(j, "grid", o.grid, "config.oracle");
        o.refine = get_or(j, "refine", o.refine, "config.oracle");
        o.input_levels = get_or(j, "input_levels", o.input_levels, "config.oracle");
        o.samples = get_or<std::size_t>(j, "samples", o.samples, "config.oracle");
        o.seed = get_or<std::uint64_t>(j, "seed", o.seed, "config.oracle");
    }
    if (!(o.grid > 0.0) || o.refine < 1 || o.input_levels < 2)
        fail(ErrorCode::ConfigError, "config.oracle: grid, refine or input_levels out of range");
    return o;
}

Json to_json(const Scenario& s) {
    Json j;
    j["name"] = s.name;
    j["mode"] = to_string(s.mode);
    j["bp_bound_pct"] = s.bp_bound_pct;
    j["duration_min"] = s.duration_min;
    j["dt_s"] = s.dt_s;
    j["horizon_min"] = s.horizon_min;
    j["facet_cap"] = s.facet_cap;
    j["pk_max"] = s.pk_max;
    j["u_max"] = s.u_max;
    j["noise_bound"] = s.noise_bound;
    j["seed"] = s.seed;
    j["allow_unsound_noise"] = s.allow_unsound_noise;
    j["median_filter"] = s.median_filter;
    j["falsification"] = Json{{"gamma", s.falsification.gamma}, {"strict", s.falsification.strict}};
    j["pid"] = Json{{"kp", s.pid.kp},       {"ki", s.pid.ki},       {"kd", s.pid.kd},
                    {"tt_s", s.pid.tt_s},   {"u_min", s.pid.u_min}, {"u_max", s.pid.u_max},
                    {"setpoint", s.pid.setpoint}, {"anti_windup", s.pid.anti_windup}};
    j["blend"] = Json{{"mode", s.blend_mode == BlendMode::ConvexBlend ? "convex" : "hard"},
                      {"band_width", s.band_width ? Json(*s.band_width) : Json(nullptr)}};
    j["initial_infusion"] = s.initial_infusion;
    return j;
}

Scenario scenario_from_json(const Json& j) {
    check_keys(j, {"name", "mode", "bp_bound_pct", "duration_min", "dt_s", "horizon_min", "facet_cap", "pk_max",
                   "u_max", "noise_bound", "seed", "allow_unsound_noise", "median_filter", "falsification", "pid",
                   "blend", "initial_infusion"},
               "scenario");
    return scenario_fields(j, "scenario");
}

ScenarioFile load_scenario_file(const fs::path& path) {
    if (!fs::exists(path)) fail(ErrorCode::ConfigError, "scenario file not found: " + path.string());
    const Json j = read_json(path);
    check_keys(j, {"scenario", "cohort", "true_patients", "kernel_archive"}, "scenario file");
    ScenarioFile f;
    f.source = j;
    f.scenario = scenario_from_json(get_or(j, "scenario", Json::object(), "scenario file"));
    f.cohort = load_cohort(require<Json>(j, "cohort", "scenario file"), path.parent_path());
    const Json tp = get_or(j, "true_patients", Json("all"), "scenario file");
    if (tp.is_string() && tp.get<std::string>() == "all") {
        for (const auto& m : f.cohort.models) f.true_patients.push_back(m.id);
    } else if (tp.is_array()) {
        for (const auto& id : tp) {
            if (!id.is_string()) fail(ErrorCode::ConfigError, "scenario file: true_patients must hold ids");
            f.cohort.find(id.get<std::string>());
            f.true_patients.push_back(id.get<std::string>());
        }
    } else {
        fail(ErrorCode::ConfigError, "scenario file: true_patients must be 'all' or a list of ids");
    }
    if (j.contains("kernel_archive")) f.kernel_archive = path.parent_path() / j.at("kernel_archive").get<std::string>();
    try {
        f.scenario.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
    return f;
}

std::string scenario_hash(const ScenarioFile& f) {
    const Json j{{"scenario", to_json(f.scenario)}, {"cohort", to_json(f.cohort)}, {"true_patients", f.true_patients}};
    return sha256_hex(j.dump());
}

Json write_kernel_archive(const fs::path& dir, const KernelResult& r, Json manifest) {
    fs::create_directories(dir);
    Json files = Json::object();
    auto write_seq = [&](const std::string& name, const KernelSequence& seq) {
        for (std::size_t k = 0; k < seq.steps.size(); ++k) {
            const std::string rel = name + "/" + step_name(k);
            const std::string text = to_json(seq.steps[k]).dump();
            write_file_atomic(dir / rel, text);
            files[rel] = sha256_hex(text);
        }
    };
    Json models = Json::array();
    for (const auto& [id, seq] : r.per_model) {
        check_id(id);
        write_seq(id, seq);
        Json s = sequence_summary(seq);
        s["id"] = id;
        models.push_back(std::move(s));
    }
    write_seq("intersection", r.intersection);
    manifest["format"] = 1;
    manifest["constraint_set"] = box_json(r.config.constraint_set);
    manifest["input_set"] = box_json(r.config.input_set);
    manifest["constraint_polytope"] = to_json(r.config.constraint_set);
    manifest["input_polytope"] = to_json(r.config.input_set);
    manifest["horizon_min"] = r.config.horizon_min;
    manifest["dt_s"] = r.config.dt_s;
    manifest["steps"] = r.config.steps();
    manifest["facet_cap"] = r.config.facet_cap;
    manifest["models"] = std::move(models);
    manifest["intersection"] = sequence_summary(r.intersection);
    manifest["files"] = std::move(files);
    write_file_atomic(dir / "manifest.json", manifest.dump(2));
    return manifest;
}

KernelResult read_kernel_archive(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) fail(ErrorCode::ConfigError, "no kernel archive at " + dir.string());
    const Json m = read_json(dir / "manifest.json");
    KernelResult r;
    r.config.constraint_set = polytope_from_json(require<Json>(m, "constraint_polytope", "manifest"));
    r.config.input_set = polytope_from_json(require<Json>(m, "input_polytope", "manifest"));
    r.config.horizon_min = require<double>(m, "horizon_min", "manifest");
    r.config.dt_s = require<double>(m, "dt_s", "manifest");
    r.config.facet_cap = require<std::size_t>(m, "facet_cap", "manifest");
    const auto count = static_cast<std::size_t>(require<int>(m, "steps", "manifest")) + 1;
    const Json files = require<Json>(m, "files", "manifest");
    for (const auto& [rel, digest] : files.items())
        if (sha256_hex(read_file(dir / rel)) != digest.get<std::string>())
            fail(ErrorCode::ConfigError, "kernel archive file " + rel + " does not match its manifest hash");
    for (const auto& s : require<Json>(m, "models", "manifest")) {
        const auto id = require<std::string>(s, "id", "manifest");
        check_id(id);
        r.per_model[id] = read_sequence(dir / id, count);
    }
    r.intersection = read_sequence(dir / "intersection", count);
    return r;
}

std::string trace_csv(const SimTrace& t) {
    std::string out = "t_s,u_pr,u_sp,u_applied,zeta,x1,x2,x3";
    for (const auto& id : t.model_ids) out += ",ce_" + id;
    out += ",bp_true,bp_measured,doh_true,worst_model,unfalsified,breach\n";
    for (const auto& r : t.rows) {
        const bool safety = !std::isnan(r.u_sp);
        out += fmt6(r.t_s) + "," + fmt6(r.u_pr) + "," + fmt6(r.u_sp) + "," + fmt6(r.u_applied) + "," +
               (safety ? fmt6(r.zeta) : "") + "," + fmt6(r.pk[0]) + "," + fmt6(r.pk[1]) + "," + fmt6(r.pk[2]);
        for (double ce : r.ce) out += "," + fmt6(ce);
        out += "," + fmt6(r.bp_true) + "," + fmt6(r.bp_measured) + "," + fmt6(r.doh_true) + "," + r.worst_model +
               "," + std::to_string(r.unfalsified) + "," + (r.breach ? "1" : "0") + "\n";
    }
    return out;
}

std::string events_csv(const SimTrace& t) {
    std::string out = "t_s,model_id,residual_pct\n";
    for (const auto& e : t.events) out += fmt6(e.t_s) + "," + e.model_id + "," + fmt6(e.residual_pct) + "\n";
    return out;
}

Json to_json(const Metrics& m) {
    Json timeline = Json::array();
    for (const auto& [t, n] : m.falsified_count_timeline) timeline.push_back(Json{{"t_s", t}, {"unfalsified", n}});
    return Json{{"patient_id", m.patient_id},
                {"induction_completed", m.induction_completed},
                {"induction_time_min", m.induction_time_min ? Json(*m.induction_time_min) : Json(nullptr)},
                {"doh_at_20min", m.doh_at_20min ? Json(*m.doh_at_20min) : Json(nullptr)},
                {"max_bp_drop_pct", m.max_bp_drop_pct},
                {"max_pk", m.max_pk},
                {"time_in_doh_40_60", m.time_in_doh_40_60},
                {"breaches", m.breaches},
                {"falsified_count_timeline", timeline}};
}

Json to_json(const CohortSummary& s) {
    auto q = [](const Quartiles& x) { return Json{{"q1", x.q1}, {"median", x.median}, {"q3", x.q3}}; };
    return Json{{"induction_fraction", s.induction_fraction},
                {"doh_at_20min", q(s.doh_at_20min)},
                {"max_bp_drop_pct", q(s.max_bp_drop_pct)},
                {"induction_time_min", q(s.induction_time_min)}};
}

std::vector<fs::path> write_run(const fs::path& dir, const RunResult& r) {
    const std::vector<fs::path> paths{dir / "trace.csv", dir / "metrics.json", dir / "events.csv"};
    write_file_atomic(paths[0], trace_csv(r.trace));
    write_file_atomic(paths[1], to_json(r.metrics).dump(2));
    write_file_atomic(paths[2], events_csv(r.trace));
    return paths;
}

} // namespace safekernel::io
