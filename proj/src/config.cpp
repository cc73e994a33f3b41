#include "riccdiff/config.hpp"

#include "riccdiff/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace riccdiff {

using json = nlohmann::json;

namespace {

class Validator {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
        for (const auto& [key, _] : obj.items())
            if (!allowed.count(key)) error(path + "." + key, "unknown key");
    }

    std::optional<double> number(const json& obj, const std::string& key, const std::string& path) {
        if (!obj.contains(key)) return std::nullopt;
        const json& v = obj.at(key);
        if (!v.is_number()) {
            error(path + "." + key, "must be a number");
            return std::nullopt;
        }
        const double x = v.get<double>();
        if (!std::isfinite(x)) {
            error(path + "." + key, "must be finite");
            return std::nullopt;
        }
        return x;
    }

    std::optional<long long> integer(const json& v, const std::string& path) {
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_number_float()) {
            const double x = v.get<double>();
            if (std::isfinite(x) && x == std::floor(x) && std::abs(x) < 9e15) return static_cast<long long>(x);
        }
        error(path, "must be an integer");
        return std::nullopt;
    }

    std::optional<long long> integer(const json& obj, const std::string& key, const std::string& path) {
        if (!obj.contains(key)) return std::nullopt;
        return integer(obj.at(key), path + "." + key);
    }

    // A number is read as a 1×1 matrix, an array of numbers as a column vector when allowed.
    std::optional<Matrix> matrix(const json& v, const std::string& path) {
        if (v.is_number()) return Matrix::Constant(1, 1, v.get<double>());
        if (!v.is_array() || v.empty()) {
            error(path, "must be a number or a non-empty array of rows");
            return std::nullopt;
        }
        const std::size_t rows = v.size();
        if (!v[0].is_array() || v[0].empty()) {
            error(path, "rows must be non-empty arrays of numbers");
            return std::nullopt;
        }
        const std::size_t cols = v[0].size();
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!v[i].is_array() || v[i].size() != cols) {
                error(path, "rows must all have " + std::to_string(cols) + " entries");
                return std::nullopt;
            }
            for (std::size_t j = 0; j < cols; ++j) {
                if (!v[i][j].is_number() || !std::isfinite(v[i][j].get<double>())) {
                    error(path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]", "must be a finite number");
                    return std::nullopt;
                }
                m(i, j) = v[i][j].get<double>();
            }
        }
        return m;
    }

    std::optional<Vector> vector(const json& v, const std::string& path) {
        if (v.is_number()) return Vector::Constant(1, v.get<double>());
        if (!v.is_array() || v.empty()) {
            error(path, "must be a number or a non-empty array of numbers");
            return std::nullopt;
        }
        Vector out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
                error(path + "[" + std::to_string(i) + "]", "must be a finite number");
                return std::nullopt;
            }
            out(i) = v[i].get<double>();
        }
        return out;
    }

    std::optional<SymMat> symmetric(const json& v, const std::string& path, int dim, bool require_psd, bool require_pd = false) {
        const auto m = matrix(v, path);
        if (!m) return std::nullopt;
        if (m->rows() != dim || m->cols() != dim) {
            error(path, "must be " + std::to_string(dim) + "x" + std::to_string(dim));
            return std::nullopt;
        }
        SymMat s;
        try {
            s = SymMat::from_dense(*m, 1e-12);
        } catch (const Error&) {
            error(path, "must be symmetric");
            return std::nullopt;
        }
        if (require_pd) {
            if (min_eigenvalue(s.dense()) <= 0.0) {
                error(path, "must be positive definite");
                return std::nullopt;
            }
        } else if (require_psd && !is_psd(s)) {
            error(path, "must be positive semidefinite");
            return std::nullopt;
        }
        return s;
    }
};

bool needs_eps_grid(Experiment e) { return e == Experiment::Bias || e == Experiment::Fluctuation; }

void parse_model(Validator& v, const json& m, ExperimentConfig& cfg) {
    const std::string path = "model";
    const bool stationarity = cfg.experiment == Experiment::Stationarity;
    std::set<std::string> allowed{"A", "R", "S", "kappa", "varpi", "eps", "Q0"};
    if (stationarity) allowed.insert("Q0_b");
    v.reject_unknown(m, path, allowed);
    ModelSpec spec;
    bool ok = true;
    for (const char* key : {"A", "R", "S"})
        if (!m.contains(key)) {
            v.error(path + "." + key, "is required");
            ok = false;
        }
    if (!ok) return;
    const auto a = v.matrix(m.at("A"), path + ".A");
    if (!a) return;
    if (a->rows() != a->cols()) {
        v.error(path + ".A", "must be square");
        return;
    }
    const int r = static_cast<int>(a->rows());
    spec.A = *a;
    const auto rr = v.symmetric(m.at("R"), path + ".R", r, true);
    const auto ss = v.symmetric(m.at("S"), path + ".S", r, true);
    if (const auto k = v.integer(m, "kappa", path)) {
        if (*k != 0 && *k != 1) {
            v.error(path + ".kappa", "must be 0 or 1");
            ok = false;
        } else {
            spec.kappa = static_cast<int>(*k);
        }
    }
    if (const auto x = v.number(m, "varpi", path)) {
        if (*x < 0.0) {
            v.error(path + ".varpi", "must be >= 0");
            ok = false;
        }
        spec.varpi = *x;
    }
    if (const auto x = v.number(m, "eps", path)) {
        if (*x < 0.0) {
            v.error(path + ".eps", "must be >= 0");
            ok = false;
        }
        spec.eps = *x;
    }
    spec.Q0 = SymMat::identity(r);
    if (m.contains("Q0")) {
        const auto q = v.symmetric(m.at("Q0"), path + ".Q0", r, true);
        if (!q) ok = false;
        else spec.Q0 = *q;
    }
    if (stationarity) {
        if (!m.contains("Q0_b")) {
            v.error(path + ".Q0_b", "is required for stationarity");
            ok = false;
        } else if (const auto q = v.symmetric(m.at("Q0_b"), path + ".Q0_b", r, true, true)) {
            spec.Q0_b = *q;
        } else {
            ok = false;
        }
        if (spec.Q0.dim() == r && min_eigenvalue(spec.Q0.dense()) <= 0.0) {
            v.error(path + ".Q0", "must be positive definite for stationarity");
            ok = false;
        }
    }
    if (!rr || !ss || !ok) return;
    spec.R = *rr;
    spec.S = *ss;
    cfg.model = spec;
}

void parse_filter(Validator& v, const json& m, ExperimentConfig& cfg) {
    const std::string path = "model";
    v.reject_unknown(m, path, {"A", "B", "R1", "R2", "type", "varpi", "N", "m0", "x0", "P0"});
    bool ok = true;
    for (const char* key : {"A", "B", "R1", "R2"})
        if (!m.contains(key)) {
            v.error(path + "." + key, "is required");
            ok = false;
        }
    if (!ok) return;
    FilterSpec spec;
    const auto a = v.matrix(m.at("A"), path + ".A");
    const auto b = v.matrix(m.at("B"), path + ".B");
    if (!a || !b) return;
    if (a->rows() != a->cols()) {
        v.error(path + ".A", "must be square");
        return;
    }
    const int r = static_cast<int>(a->rows());
    if (b->cols() != r) {
        v.error(path + ".B", "must have " + std::to_string(r) + " columns");
        return;
    }
    spec.A = *a;
    spec.B = *b;
    const auto r1 = v.symmetric(m.at("R1"), path + ".R1", r, true);
    const auto r2 = v.symmetric(m.at("R2"), path + ".R2", static_cast<int>(b->rows()), true, true);
    if (const auto t = v.integer(m, "type", path)) {
        if (*t != 1 && *t != 2) {
            v.error(path + ".type", "must be 1 or 2");
            ok = false;
        } else {
            spec.type = *t == 1 ? EnkfType::PerturbedObservation : EnkfType::Midpoint;
        }
    }
    if (const auto x = v.number(m, "varpi", path)) {
        if (*x < 0.0) {
            v.error(path + ".varpi", "must be >= 0");
            ok = false;
        }
        spec.varpi = *x;
    }
    if (const auto n = v.integer(m, "N", path)) {
        if (*n < std::max(1, r)) {
            v.error(path + ".N", "must be >= max(1, r)");
            ok = false;
        }
        spec.N = static_cast<int>(*n);
    }
    spec.m0 = Vector::Zero(r);
    spec.x0 = Vector::Zero(r);
    for (const char* key : {"m0", "x0"}) {
        if (!m.contains(key)) continue;
        const auto x = v.vector(m.at(key), path + "." + key);
        if (!x || x->size() != r) {
            if (x) v.error(path + "." + key, "must have " + std::to_string(r) + " entries");
            ok = false;
            continue;
        }
        (std::string(key) == "m0" ? spec.m0 : spec.x0) = *x;
    }
    spec.P0 = SymMat::identity(r);
    if (m.contains("P0")) {
        const auto p = v.symmetric(m.at("P0"), path + ".P0", r, true);
        if (!p) ok = false;
        else spec.P0 = *p;
    }
    if (!r1 || !r2 || !ok) return;
    spec.R1 = *r1;
    spec.R2 = *r2;
    cfg.filter = spec;
}

void parse_run(Validator& v, const json& m, ExperimentConfig& cfg) {
    const std::string path = "run";
    v.reject_unknown(m, path, {"T", "dt", "n_paths", "seed", "batches", "eps_grid", "n_orders", "time_grid", "norm"});
    RunSpec& run = cfg.run;
    if (const auto x = v.number(m, "T", path)) {
        if (*x <= 0.0) v.error(path + ".T", "must be > 0");
        run.T = *x;
    }
    if (const auto x = v.number(m, "dt", path)) {
        if (*x <= 0.0) v.error(path + ".dt", "must be > 0");
        run.dt = *x;
    }
    if (run.dt > 0.0 && run.T > 0.0 && run.dt > run.T) v.error(path + ".dt", "must not exceed T");
    if (const auto n = v.integer(m, "n_paths", path)) {
        if (*n < 1) v.error(path + ".n_paths", "must be >= 1");
        run.n_paths = static_cast<long>(*n);
    }
    if (cfg.experiment == Experiment::Moments && run.n_paths < 100) v.error(path + ".n_paths", "must be >= 100 for moments");
    if (m.contains("seed")) {
        const json& s = m.at("seed");
        if (s.is_number_unsigned()) run.seed = s.get<std::uint64_t>();
        else v.error(path + ".seed", "must be a non-negative integer");
    }
    if (const auto n = v.integer(m, "batches", path)) {
        if (*n < 2) v.error(path + ".batches", "must be >= 2");
        run.batches = static_cast<int>(*n);
    }
    if (m.contains("eps_grid")) {
        const auto g = v.vector(m.at("eps_grid"), path + ".eps_grid");
        if (g) {
            for (Eigen::Index i = 0; i < g->size(); ++i) {
                if ((*g)(i) < 0.0) v.error(path + ".eps_grid", "values must be >= 0");
                if (i > 0 && (*g)(i) <= (*g)(i - 1)) v.error(path + ".eps_grid", "must be strictly increasing");
                run.eps_grid.push_back((*g)(i));
            }
        }
    }
    if (needs_eps_grid(cfg.experiment) && run.eps_grid.size() < 4)
        v.error(path + ".eps_grid", "needs at least 4 values for " + experiment_name(cfg.experiment));
    if (m.contains("n_orders")) {
        const json& a = m.at("n_orders");
        if (!a.is_array() || a.empty()) {
            v.error(path + ".n_orders", "must be a non-empty array of integers");
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) {
                const auto n = v.integer(a[i], path + ".n_orders[" + std::to_string(i) + "]");
                if (n && *n < 1) v.error(path + ".n_orders", "values must be >= 1");
                if (n) run.n_orders.push_back(static_cast<int>(*n));
            }
        }
    }
    if (m.contains("time_grid")) {
        const auto g = v.vector(m.at("time_grid"), path + ".time_grid");
        if (g) {
            for (Eigen::Index i = 0; i < g->size(); ++i) {
                if ((*g)(i) <= 0.0) v.error(path + ".time_grid", "values must be > 0");
                if (i > 0 && (*g)(i) <= (*g)(i - 1)) v.error(path + ".time_grid", "must be strictly increasing");
                run.time_grid.push_back((*g)(i));
            }
        }
    }
    if (m.contains("norm")) {
        const json& n = m.at("norm");
        const std::string s = n.is_string() ? n.get<std::string>() : "";
        if (s == "spectral") run.norm = NormKind::Spectral;
        else if (s == "frobenius") run.norm = NormKind::Frobenius;
        else if (s == "trace") run.norm = NormKind::Trace;
        else v.error(path + ".norm", "must be one of spectral, frobenius, trace");
    }
}

void parse_output(Validator& v, const json& m, ExperimentConfig& cfg) {
    const std::string path = "output";
    v.reject_unknown(m, path, {"directory", "formats"});
    if (m.contains("directory")) {
        const json& d = m.at("directory");
        if (!d.is_string() || d.get<std::string>().empty()) v.error(path + ".directory", "must be a non-empty string");
        else cfg.output.directory = d.get<std::string>();
    }
    if (m.contains("formats")) {
        const json& f = m.at("formats");
        if (!f.is_array() || f.empty()) {
            v.error(path + ".formats", "must be a non-empty array drawn from csv, json");
            return;
        }
        cfg.output.csv = cfg.output.json = false;
        for (const auto& x : f) {
            const std::string s = x.is_string() ? x.get<std::string>() : "";
            if (s == "csv") cfg.output.csv = true;
            else if (s == "json") cfg.output.json = true;
            else v.error(path + ".formats", "entries must be csv or json");
        }
    }
}

void threshold_warnings(ExperimentConfig& cfg) {
    if (!cfg.model || cfg.model->kappa != 1) return;
    double eps = cfg.model->eps;
    for (double e : cfg.run.eps_grid) eps = std::max(eps, e);
    const ModelParams p = cfg.params(eps);
    const double e0 = threshold_eps0(p);
    if (eps > e0) cfg.warnings.push_back("ε exceeds ε₀ = " + format_threshold(e0));
    for (int n : cfg.run.n_orders) {
        const double ev = threshold_eps_n_V(p, n);
        if (eps > ev) cfg.warnings.push_back("ε exceeds ε_" + std::to_string(n) + "(V) = " + format_threshold(ev));
    }
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"simulate", "moments",       "bias", "fluctuation", "semigroup",
                                                "det-decay", "dyson-compare", "enkf", "stationarity"};
    return names;
}

std::string experiment_name(Experiment e) { return experiment_names()[static_cast<std::size_t>(e)]; }

std::optional<Experiment> parse_experiment_name(const std::string& name) {
    const auto& names = experiment_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<Experiment>(i);
    return std::nullopt;
}

std::string format_threshold(double x) {
    if (std::isinf(x)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

ModelParams ExperimentConfig::params() const { return params(model ? model->eps : 0.0); }

ModelParams ExperimentConfig::params(double eps) const {
    require(model.has_value(), ErrorCode::InvalidArgument, "config has no Riccati model");
    return ModelParams(model->A, model->R, model->S, model->kappa, model->varpi, eps);
}

FilterModel ExperimentConfig::filter_model() const {
    require(filter.has_value(), ErrorCode::InvalidArgument, "config has no filter model");
    return FilterModel(filter->A, filter->B, filter->R1, filter->R2);
}

ParseResult parse_config(const std::string& text) {
    ParseResult out;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        out.errors.push_back(std::string("malformed JSON: ") + e.what());
        return out;
    }
    if (!doc.is_object()) {
        out.errors.push_back("document: must be a JSON object");
        return out;
    }
    Validator v;
    ExperimentConfig cfg;
    v.reject_unknown(doc, "config", {"schema_version", "experiment", "model", "run", "output"});
    if (!doc.contains("schema_version")) {
        v.error("schema_version", "is required");
    } else {
        const json& s = doc.at("schema_version");
        if (!s.is_number_integer() || s.get<long long>() != kSchemaVersion)
            v.error("schema_version", "must equal " + std::to_string(kSchemaVersion));
    }
    bool have_experiment = false;
    if (!doc.contains("experiment")) {
        v.error("experiment", "is required");
    } else {
        const json& e = doc.at("experiment");
        const auto parsed = e.is_string() ? parse_experiment_name(e.get<std::string>()) : std::nullopt;
        if (!parsed) {
            std::string list;
            for (const auto& n : experiment_names()) list += (list.empty() ? "" : ", ") + n;
            v.error("experiment", "must be one of " + list);
        } else {
            cfg.experiment = *parsed;
            have_experiment = true;
        }
    }
    if (doc.contains("run")) {
        if (doc.at("run").is_object()) parse_run(v, doc.at("run"), cfg);
        else v.error("run", "must be an object");
    } else if (have_experiment && needs_eps_grid(cfg.experiment)) {
        v.error("run.eps_grid", "needs at least 4 values for " + experiment_name(cfg.experiment));
    }
    if (doc.contains("output")) {
        if (doc.at("output").is_object()) parse_output(v, doc.at("output"), cfg);
        else v.error("output", "must be an object");
    }
    if (!doc.contains("model")) {
        v.error("model", "is required");
    } else if (!doc.at("model").is_object()) {
        v.error("model", "must be an object");
    } else if (have_experiment) {
        if (cfg.experiment == Experiment::Enkf) parse_filter(v, doc.at("model"), cfg);
        else parse_model(v, doc.at("model"), cfg);
    }
    if (v.errors.empty() && cfg.model) {
        try {
            (void)cfg.params();
        } catch (const Error& e) {
            v.error("model", e.what());
        }
        if (cfg.experiment == Experiment::DysonCompare && v.errors.empty()) {
            const int r = static_cast<int>(cfg.model->A.rows());
            const auto d = eigen_sym(cfg.model->Q0).eigenvalues;
            for (int i = 0; i + 1 < r; ++i)
                if (d(i) - d(i + 1) <= 1e-12) v.error("model.Q0", "eigenvalues must be distinct for dyson-compare");
            if (d(r - 1) <= 0.0) v.error("model.Q0", "must be positive definite for dyson-compare");
        }
    }
    if (v.errors.empty() && cfg.filter) {
        try {
            (void)cfg.filter_model();
        } catch (const Error& e) {
            v.error("model", e.what());
        }
    }
    if (!v.errors.empty()) {
        out.errors = std::move(v.errors);
        return out;
    }
    threshold_warnings(cfg);
    out.config = std::move(cfg);
    return out;
}

}  // namespace riccdiff
