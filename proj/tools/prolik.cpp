// Command-line front end: dataset ingestion, model assembly, dispatch to
// the interval/band/contour/path methods, and JSON/CSV serialisation.
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prolik/errors.hpp"
#include "prolik/mcmc.hpp"
#include "prolik/models.hpp"
#include "prolik/numerics.hpp"
#include "prolik/optimizer.hpp"
#include "prolik/oracle.hpp"
#include "prolik/target.hpp"
#include "prolik/tracers.hpp"

namespace {

using nlohmann::ordered_json;
using namespace prolik;

constexpr const char* kToolVersion = "0.1.0";
constexpr std::uint64_t kDefaultSeed = 20240819;

// ---------------------------------------------------------------------------
// CLI-level error taxonomy (ingestion and output problems).

class SchemaError : public Error {
  public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

class EmptyDataError : public Error {
  public:
    explicit EmptyDataError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

std::string error_code(const Error& e) {
    if (dynamic_cast<const SchemaError*>(&e)) return "schema_error";
    if (dynamic_cast<const EmptyDataError*>(&e)) return "empty_data_error";
    if (dynamic_cast<const IoError*>(&e)) return "io_error";
    if (dynamic_cast<const InputError*>(&e)) return "input_error";
    if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
    if (dynamic_cast<const SingularSystemError*>(&e)) return "singular_system_error";
    if (dynamic_cast<const RankError*>(&e)) return "rank_error";
    if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence_error";
    if (dynamic_cast<const CurvatureError*>(&e)) return "curvature_error";
    if (dynamic_cast<const UnboundedError*>(&e)) return "unbounded_error";
    return "error";
}

// ---------------------------------------------------------------------------
// CSV ingestion.

struct Dataset {
    std::string name;  // file stem
    std::vector<std::string> column_names;
    std::vector<Vector> columns;
    std::size_t rows_used = 0;
    std::size_t rows_dropped = 0;
    std::string provenance;
};

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool parse_number(const std::string& text, double& out) {
    if (text.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stod(text, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == text.size() && std::isfinite(out);
}

std::string file_stem(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::size_t dot = base.find_last_of('.');
    return (dot == std::string::npos || dot == 0) ? base : base.substr(0, dot);
}

// Selected numeric columns of a CSV file with a header row; rows with a
// missing or unparseable selected cell are dropped and counted.  A sidecar
// "<path stem>.provenance" file next to the data supplies the provenance
// note when present.
Dataset load_csv(const std::string& path, const std::vector<std::string>& selectors) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw EmptyDataError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_fields(line);

    std::vector<std::size_t> indices;
    for (const std::string& want : selectors) {
        const auto it = std::find(header.begin(), header.end(), want);
        if (it == header.end())
            throw SchemaError("column '" + want + "' not found in " + path);
        indices.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    Dataset ds;
    ds.name = file_stem(path);
    ds.column_names = selectors;
    ds.columns.assign(selectors.size(), Vector{});
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_fields(line);
        std::vector<double> row(selectors.size());
        bool ok = true;
        for (std::size_t k = 0; k < indices.size() && ok; ++k)
            ok = indices[k] < cells.size() && parse_number(cells[indices[k]], row[k]);
        if (!ok) {
            ++ds.rows_dropped;
            continue;
        }
        for (std::size_t k = 0; k < row.size(); ++k) ds.columns[k].push_back(row[k]);
        ++ds.rows_used;
    }
    if (ds.rows_used == 0)
        throw EmptyDataError("no usable data rows in " + path);

    const std::size_t dot = path.find_last_of('.');
    const std::string side =
        (dot == std::string::npos ? path : path.substr(0, dot)) + ".provenance";
    std::ifstream prov(side);
    if (prov) {
        std::ostringstream os;
        os << prov.rdbuf();
        ds.provenance = trim(os.str());
    } else {
        ds.provenance = "loaded from " + path;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Minimal model formulas: "1 + col + ..." (intercept and plain columns only).

struct Formula {
    bool intercept = false;
    std::vector<std::string> columns;
};

Formula parse_formula(const std::string& text) {
    Formula f;
    std::string term;
    std::istringstream is(text);
    while (std::getline(is, term, '+')) {
        term = trim(term);
        if (term.empty())
            throw InputError("formula '" + text + "' has an empty term");
        if (term == "1") {
            if (f.intercept)
                throw InputError("formula '" + text + "' repeats the intercept");
            f.intercept = true;
            continue;
        }
        for (char ch : term)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' ||
                  ch == '.'))
                throw InputError("formula term '" + term +
                                 "' is not a plain column name (only intercept "
                                 "and named columns are supported)");
        if (std::find(f.columns.begin(), f.columns.end(), term) != f.columns.end())
            throw InputError("formula '" + text + "' repeats column '" + term + "'");
        f.columns.push_back(term);
    }
    if (!f.intercept && f.columns.empty())
        throw InputError("formula '" + text + "' has no terms");
    return f;
}

// ---------------------------------------------------------------------------
// Shared model-building configuration.

struct ModelConfig {
    std::string data_path;
    std::string family = "gev";
    std::string column;    // iid block-maxima column
    std::string response;  // regression response column
    std::string loc_formula = "1";
    std::string scale_formula = "1";
    std::string shape_formula = "1";
    std::string link = "identity";
    double time_unit = 100.0;
    bool raw_units = false;
    bool no_standardize = false;
};

struct ModelBundle {
    Dataset data;
    LikelihoodModel model;
    Matrix raw_from_working;  // identity for the iid model
    bool regression = false;
    // covariate echo: per column, the subtracted origin (its first value)
    std::vector<std::string> covariates;
    std::vector<double> covariate_origins;
};

void add_model_flags(CLI::App* cmd, ModelConfig& cfg) {
    cmd->add_option("--data", cfg.data_path, "input CSV file")->required();
    cmd->add_option("--model", cfg.family, "model family (only 'gev' is built in)")
        ->check(CLI::IsMember({"gev"}));
    cmd->add_option("--column", cfg.column, "block-maxima column (iid GEV model)");
    cmd->add_option("--response", cfg.response, "response column (GEV regression)");
    cmd->add_option("--loc", cfg.loc_formula,
                    "location formula, e.g. \"1 + year\" (regression)");
    cmd->add_option("--scale", cfg.scale_formula, "scale formula (regression)");
    cmd->add_option("--shape", cfg.shape_formula, "shape formula (regression)");
    cmd->add_option("--link", cfg.link, "scale link: identity | log")
        ->check(CLI::IsMember({"identity", "log"}));
    cmd->add_option("--time-unit", cfg.time_unit,
                    "covariates enter as (value - first value) / time-unit; "
                    "the default 100 keeps trend coefficients well scaled");
    cmd->add_flag("--raw-units", cfg.raw_units,
                  "feed covariates exactly as stored in the file, skipping the "
                  "(value - first value) / time-unit transform");
    cmd->add_flag("--no-standardize", cfg.no_standardize,
                  "fit in raw covariate units without internal standardisation "
                  "(demonstrates how badly scaled covariates mislead the solver)");
}

ModelBundle build_model(const ModelConfig& cfg) {
    if (cfg.column.empty() == cfg.response.empty())
        throw InputError("exactly one of --column (iid model) or --response "
                         "(regression) is required");

    ModelBundle b;
    if (!cfg.column.empty()) {
        b.data = load_csv(cfg.data_path, {cfg.column});
        b.model = build_iid_gev(b.data.columns[0]);
        b.raw_from_working = Matrix::identity(3);
        return b;
    }

    const Formula loc = parse_formula(cfg.loc_formula);
    const Formula scale = parse_formula(cfg.scale_formula);
    const Formula shape = parse_formula(cfg.shape_formula);
    std::vector<std::string> selectors = {cfg.response};
    for (const Formula* f : {&loc, &scale, &shape})
        for (const std::string& c : f->columns)
            if (std::find(selectors.begin(), selectors.end(), c) == selectors.end())
                selectors.push_back(c);
    b.data = load_csv(cfg.data_path, selectors);
    b.regression = true;

    if (!(cfg.time_unit > 0.0))
        throw DomainError("--time-unit must be positive");
    const std::size_t n = b.data.rows_used;
    const auto column_of = [&](const std::string& name) -> const Vector& {
        const auto it =
            std::find(b.data.column_names.begin(), b.data.column_names.end(), name);
        return b.data.columns[static_cast<std::size_t>(
            it - b.data.column_names.begin())];
    };
    const auto transformed = [&](const std::string& name) {
        const Vector& raw = column_of(name);
        if (cfg.raw_units) return raw;
        Vector out(n);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = (raw[i] - raw[0]) / cfg.time_unit;
        return out;
    };
    const auto design_of = [&](const Formula& f) {
        const std::size_t q = (f.intercept ? 1 : 0) + f.columns.size();
        Matrix x(n, q);
        std::size_t j = 0;
        if (f.intercept) {
            for (std::size_t i = 0; i < n; ++i) x(i, j) = 1.0;
            ++j;
        }
        for (const std::string& c : f.columns) {
            const Vector v = transformed(c);
            for (std::size_t i = 0; i < n; ++i) x(i, j) = v[i];
            ++j;
        }
        return x;
    };
    for (const Formula* f : {&loc, &scale, &shape})
        for (const std::string& c : f->columns)
            if (std::find(b.covariates.begin(), b.covariates.end(), c) ==
                b.covariates.end()) {
                b.covariates.push_back(c);
                b.covariate_origins.push_back(column_of(c)[0]);
            }

    GevRegressionSpec spec;
    spec.design_mu = design_of(loc);
    spec.design_sigma = design_of(scale);
    spec.design_xi = design_of(shape);
    spec.responses = column_of(cfg.response);
    spec.link = cfg.link == "log" ? ScaleLink::log_scale : ScaleLink::identity;
    spec.standardize = !cfg.no_standardize;
    RegressionModel reg = build_gev_regression(spec);
    b.model = std::move(reg.model);
    b.raw_from_working = std::move(reg.raw_from_working);
    return b;
}

// ---------------------------------------------------------------------------
// Target construction.  Raw coefficients of a standardized regression are
// linear functionals of the working parameters (a row of raw_from_working),
// so coefficient targets are built as linear targets in the working basis.

struct TargetSpec {
    TargetFunction target;
    double t = 0.0;
    std::string label;
};

TargetSpec make_target(const ModelBundle& b, const std::string& param, double period) {
    TargetSpec ts;
    ts.label = param;
    if (param == "rl") {
        if (b.regression || b.model.p != 3)
            throw InputError("--param rl needs the iid GEV model");
        if (!(period > 1.0))
            throw DomainError("--period must exceed 1 (return periods are in "
                              "units of observations)");
        ts.target = target_gev_return_level();
        ts.t = std::log(period);
        ts.label = "rl(" + std::to_string(period) + ")";
        return ts;
    }
    const auto it = std::find(b.model.names.begin(), b.model.names.end(), param);
    if (it == b.model.names.end()) {
        std::string known;
        for (const std::string& n : b.model.names) known += " " + n;
        throw InputError("unknown --param '" + param + "'; model parameters:" +
                         known + " (or rl)");
    }
    const auto idx = static_cast<std::size_t>(it - b.model.names.begin());
    if (!b.regression) {
        ts.target = target_coordinate(idx, b.model.p);
        return ts;
    }
    Vector row(b.model.p);
    bool is_coordinate = true;
    for (std::size_t k = 0; k < b.model.p; ++k) {
        row[k] = b.raw_from_working(idx, k);
        if (row[k] != (k == idx ? 1.0 : 0.0)) is_coordinate = false;
    }
    ts.target = is_coordinate ? target_coordinate(idx, b.model.p) : target_linear(row);
    return ts;
}

// ---------------------------------------------------------------------------
// JSON serialisation helpers.

ordered_json to_json(const Vector& v) {
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(x);
    return a;
}

ordered_json to_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

ordered_json fit_json(const ModelBundle& b, const MleFit& fit) {
    ordered_json j;
    j["names"] = b.model.names;
    j["theta_hat"] = to_json(fit.theta_hat);
    if (b.regression) {
        Vector raw(b.model.p, 0.0);
        for (std::size_t i = 0; i < b.model.p; ++i)
            for (std::size_t k = 0; k < b.model.p; ++k)
                raw[i] += b.raw_from_working(i, k) * fit.theta_hat[k];
        j["theta_hat_raw"] = to_json(raw);
    }
    j["loglik_max"] = fit.loglik_max;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    return j;
}

ordered_json bound_json(const ProfileBound& pb) {
    ordered_json j;
    j["value"] = pb.value;
    j["nu"] = pb.nu;
    j["theta"] = to_json(pb.theta);
    j["kkt_residual"] = pb.kkt_residual;
    j["constraint_residual"] = pb.constraint_residual;
    j["converged"] = pb.converged;
    return j;
}

// Augmented-state integration record: times, theta rows, and the
// multiplier series (the state's trailing component).
ordered_json augmented_path_json(const OdePath& path, std::size_t p) {
    ordered_json j;
    j["t"] = to_json(path.times);
    ordered_json thetas = ordered_json::array();
    ordered_json nus = ordered_json::array();
    for (const Vector& st : path.states) {
        ordered_json row = ordered_json::array();
        for (std::size_t i = 0; i < p; ++i) row.push_back(st[i]);
        thetas.push_back(row);
        nus.push_back(st[p]);
    }
    j["theta"] = thetas;
    j["nu"] = nus;
    j["rejected_steps"] = path.rejected_steps;
    j["completed"] = path.completed();
    if (!path.halt_message.empty()) j["halt_message"] = path.halt_message;
    return j;
}

ordered_json dataset_json(const Dataset& ds, const std::string& path) {
    ordered_json j;
    j["file"] = path;
    j["name"] = ds.name;
    j["columns"] = ds.column_names;
    j["rows_used"] = ds.rows_used;
    j["rows_dropped"] = ds.rows_dropped;
    j["provenance"] = ds.provenance;
    return j;
}

ordered_json model_json(const ModelBundle& b, const ModelConfig& cfg) {
    ordered_json j;
    j["kind"] = b.regression ? "gev_regression" : "gev_iid";
    j["parameters"] = b.model.names;
    if (b.regression) {
        j["response"] = cfg.response;
        j["loc"] = cfg.loc_formula;
        j["scale"] = cfg.scale_formula;
        j["shape"] = cfg.shape_formula;
        j["link"] = cfg.link;
        j["raw_units"] = cfg.raw_units;
        if (!cfg.raw_units) j["time_unit"] = cfg.time_unit;
        j["standardize"] = !cfg.no_standardize;
        j["covariates"] = b.covariates;
        j["covariate_origins"] = to_json(b.covariate_origins);
    } else {
        j["column"] = cfg.column;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Report assembly and output.

struct Output {
    std::string out_path;      // empty = stdout
    std::string format = "json";
};

void add_output_flags(CLI::App* cmd, Output& out) {
    cmd->add_option("--out", out.out_path, "write the report here instead of stdout");
    cmd->add_option("--format", out.format, "report format: json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
}

void write_text(const Output& out, const std::string& text) {
    if (out.out_path.empty()) {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream f(out.out_path);
    if (!f) throw IoError("cannot write output file: " + out.out_path);
    f << text;
    if (text.empty() || text.back() != '\n') f << '\n';
}

struct Report {
    ordered_json body;
    std::vector<std::string> warnings;
    // flat rows for --format csv: (grid, lower, upper) or similar
    std::string csv_header;
    std::vector<std::string> csv_rows;

    Report(const std::string& subcommand, const ordered_json& args) {
        body["schema"] = 1;
        body["tool"] = "prolik";
        body["version"] = kToolVersion;
        body["command"] = ordered_json{{"subcommand", subcommand}, {"args", args}};
    }

    void warn(const std::string& msg) { warnings.push_back(msg); }

    int emit(const Output& out) {
        body["warnings"] = warnings;
        body["status"] = warnings.empty() ? "ok" : "warning";
        if (out.format == "csv") {
            if (csv_header.empty())
                throw InputError("--format csv is not available for this subcommand");
            std::string text = csv_header + "\n";
            for (const std::string& row : csv_rows) text += row + "\n";
            write_text(out, text);
        } else {
            write_text(out, body.dump(2));
        }
        return warnings.empty() ? 0 : 2;
    }
};

std::string csv_cell(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Seed and grid helpers.

std::uint64_t default_seed() {
    const char* env = std::getenv("PROLIK_SEED");
    if (!env || !*env) return kDefaultSeed;
    try {
        return static_cast<std::uint64_t>(std::stoull(env));
    } catch (const std::exception&) {
        throw InputError("PROLIK_SEED is not an unsigned integer");
    }
}

// "lo:hi:log" or "lo:hi:lin" expanded to `count` return periods.
std::vector<double> period_grid(const std::string& spec, std::size_t count) {
    const std::size_t c1 = spec.find(':');
    const std::size_t c2 = spec.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw InputError("--periods must look like LO:HI:log or LO:HI:lin");
    double lo = 0.0, hi = 0.0;
    if (!parse_number(spec.substr(0, c1), lo) ||
        !parse_number(spec.substr(c1 + 1, c2 - c1 - 1), hi))
        throw InputError("--periods bounds must be numbers");
    const std::string kind = spec.substr(c2 + 1);
    if (kind != "log" && kind != "lin")
        throw InputError("--periods spacing must be 'log' or 'lin'");
    if (!(lo > 1.0) || !(hi > lo))
        throw DomainError("--periods needs 1 < LO < HI");
    if (count < 2) throw InputError("--grid needs at least 2 points");
    std::vector<double> periods(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double w = static_cast<double>(k) / static_cast<double>(count - 1);
        periods[k] = kind == "log" ? std::exp(std::log(lo) * (1.0 - w) +
                                              std::log(hi) * w)
                                   : lo * (1.0 - w) + hi * w;
    }
    return periods;
}

// Run fn(i) for i in [0, n) on up to `jobs` threads; exceptions are
// re-thrown on the caller thread after everyone joined.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min(jobs, n);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

double level_to_delta(double level, int df) {
    if (!(level > 0.0 && level < 1.0))
        throw DomainError("--level must lie strictly between 0 and 1");
    return 0.5 * numerics::chisq_quantile(level, df);
}

MleFit fit_or_warn(const ModelBundle& b, Report& report) {
    const MleFit fit = fit_mle(b.model);
    if (!fit.converged) report.warn("maximum-likelihood fit did not converge");
    return fit;
}

// ---------------------------------------------------------------------------
// Subcommand: fit

struct FitArgs {
    ModelConfig model;
    Output out;
};

int run_fit(const FitArgs& a) {
    ModelBundle b = build_model(a.model);
    ordered_json args;
    args["data"] = a.model.data_path;
    Report report("fit", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);
    report.body["fit"]["hessian_at_max"] = to_json(fit.hessian_at_max);
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    return report.emit(a.out);
}

// ---------------------------------------------------------------------------
// Subcommand: ci

struct CiArgs {
    ModelConfig model;
    Output out;
    std::string param;
    double period = 100.0;
    double level = 0.95;
    std::string method = "optim";
    std::size_t iterates = 10000;
    std::string iterates_file;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_ci(const CiArgs& a) {
    ModelBundle b = build_model(a.model);
    const TargetSpec ts = make_target(b, a.param, a.period);
    const double delta = level_to_delta(a.level, 1);
    const std::uint64_t seed = a.seed_given ? a.seed : default_seed();

    ordered_json args;
    args["data"] = a.model.data_path;
    args["param"] = a.param;
    if (a.param == "rl") args["period"] = a.period;
    args["level"] = a.level;
    args["method"] = a.method;
    if (a.method == "mcmc") {
        if (a.iterates_file.empty()) {
            args["iterates"] = a.iterates;
            args["seed"] = seed;
        } else {
            args["iterates_file"] = a.iterates_file;
        }
    }
    Report report("ci", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);

    ordered_json results;
    results["param"] = ts.label;
    results["level"] = a.level;
    results["delta"] = delta;
    results["eta_hat"] = ts.target.value(fit.theta_hat, ts.t);
    ordered_json diagnostics;

    if (a.method == "optim") {
        const ProfileBound lo =
            profile_bound(b.model, ts.target, ts.t, fit, delta, BoundSide::lower);
        const ProfileBound up =
            profile_bound(b.model, ts.target, ts.t, fit, delta, BoundSide::upper);
        results["lower"] = lo.value;
        results["upper"] = up.value;
        diagnostics["lower"] = bound_json(lo);
        diagnostics["upper"] = bound_json(up);
        if (!lo.converged) report.warn("lower bound solve did not converge");
        if (!up.converged) report.warn("upper bound solve did not converge");
    } else if (a.method == "naive") {
        results["lower"] =
            naive_bound(b.model, ts.target, ts.t, fit, delta, BoundSide::lower);
        results["upper"] =
            naive_bound(b.model, ts.target, ts.t, fit, delta, BoundSide::upper);
    } else if (a.method == "bubble") {
        const BubbleTrace lo = trace_bubble(b.model, ts.target, ts.t, fit, delta, -1);
        const BubbleTrace up = trace_bubble(b.model, ts.target, ts.t, fit, delta, +1);
        results["lower"] = lo.bound.value;
        results["upper"] = up.bound.value;
        diagnostics["lower"] = bound_json(lo.bound);
        diagnostics["lower"]["path"] = augmented_path_json(lo.path, b.model.p);
        diagnostics["upper"] = bound_json(up.bound);
        diagnostics["upper"]["path"] = augmented_path_json(up.path, b.model.p);
        if (!lo.level_reached)
            report.warn("lower level-inflation path stopped early: " + lo.status);
        if (!up.level_reached)
            report.warn("upper level-inflation path stopped early: " + up.status);
    } else if (a.method == "mcmc") {
        McmcTrace trace;
        if (!a.iterates_file.empty()) {
            trace = read_iterates_csv(a.iterates_file);
            recompute_logliks(trace, b.model);
        } else {
            trace = rw_metropolis(b.model, fit.theta_hat, a.iterates, seed);
        }
        const TargetFunction& tf = ts.target;
        const double t = ts.t;
        const McmcInterval mi = mcmc_interval(
            trace, [&tf, t](const Vector& th) { return tf.value(th, t); }, delta);
        results["lower"] = mi.lower;
        results["upper"] = mi.upper;
        diagnostics["n_iterates"] = trace.iterates.size();
        diagnostics["n_feasible"] = mi.n_feasible;
        double best = trace.logliks.empty() ? 0.0 : trace.logliks[0];
        for (double l : trace.logliks) best = std::max(best, l);
        diagnostics["best_loglik"] = best;
        if (trace.source == McmcTrace::Source::internal) {
            diagnostics["acceptance_rate"] = trace.acceptance_rate;
            if (trace.acceptance_rate < 0.1 || trace.acceptance_rate > 0.5)
                report.warn("sampler acceptance rate outside [0.1, 0.5]");
        }
    } else {
        throw InputError("--method must be optim, naive, bubble, or mcmc");
    }

    report.body["results"] = results;
    report.body["diagnostics"] = diagnostics;
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    report.csv_header = "param,lower,upper";
    report.csv_rows = {ts.label + "," + csv_cell(results["lower"].get<double>()) +
                       "," + csv_cell(results["upper"].get<double>())};
    return report.emit(a.out);
}

// ---------------------------------------------------------------------------
// Subcommand: rlband

struct RlbandArgs {
    ModelConfig model;
    Output out;
    std::string periods = "2:1000:log";
    std::size_t grid = 12;
    double level = 0.95;
    std::string method = "ode";
    std::size_t jobs = 1;
};

int run_rlband(const RlbandArgs& a) {
    ModelBundle b = build_model(a.model);
    if (b.regression || b.model.p != 3)
        throw InputError("rlband needs the iid GEV model (--column)");
    const double delta = level_to_delta(a.level, 1);
    const std::vector<double> periods = period_grid(a.periods, a.grid);
    std::vector<double> s_grid(periods.size());
    for (std::size_t k = 0; k < periods.size(); ++k) s_grid[k] = std::log(periods[k]);
    const TargetFunction target = target_gev_return_level();

    ordered_json args;
    args["data"] = a.model.data_path;
    args["periods"] = a.periods;
    args["grid"] = a.grid;
    args["level"] = a.level;
    args["method"] = a.method;
    if (a.jobs > 1) args["jobs"] = a.jobs;
    Report report("rlband", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);

    std::vector<double> lower(periods.size()), upper(periods.size());
    ordered_json diagnostics;

    if (a.method == "ode") {
        const BandTrace lo =
            trace_band(b.model, target, fit, delta, BoundSide::lower, s_grid);
        const BandTrace up =
            trace_band(b.model, target, fit, delta, BoundSide::upper, s_grid);
        if (!lo.completed)
            report.warn("lower band trace stopped early: " + lo.halt_message);
        if (!up.completed)
            report.warn("upper band trace stopped early: " + up.halt_message);
        if (lo.points.size() != periods.size() || up.points.size() != periods.size())
            throw ConvergenceError("band trace did not cover the period grid");
        ordered_json lo_theta = ordered_json::array(), up_theta = ordered_json::array();
        ordered_json lo_nu = ordered_json::array(), up_nu = ordered_json::array();
        for (std::size_t k = 0; k < periods.size(); ++k) {
            lower[k] = lo.points[k].eta;
            upper[k] = up.points[k].eta;
            lo_theta.push_back(to_json(lo.points[k].theta));
            up_theta.push_back(to_json(up.points[k].theta));
            lo_nu.push_back(lo.points[k].nu);
            up_nu.push_back(up.points[k].nu);
        }
        diagnostics["lower"] = {{"theta", lo_theta}, {"nu", lo_nu}};
        diagnostics["upper"] = {{"theta", up_theta}, {"nu", up_nu}};
        diagnostics["lower"]["path"] = augmented_path_json(lo.path, b.model.p);
        diagnostics["upper"]["path"] = augmented_path_json(up.path, b.model.p);
    } else if (a.method == "optim") {
        std::vector<ProfileBound> lo(periods.size()), up(periods.size());
        parallel_for(periods.size(), a.jobs, [&](std::size_t k) {
            lo[k] = profile_bound(b.model, target, s_grid[k], fit, delta,
                                  BoundSide::lower);
            up[k] = profile_bound(b.model, target, s_grid[k], fit, delta,
                                  BoundSide::upper);
        });
        ordered_json lo_theta = ordered_json::array(), up_theta = ordered_json::array();
        ordered_json lo_nu = ordered_json::array(), up_nu = ordered_json::array();
        for (std::size_t k = 0; k < periods.size(); ++k) {
            lower[k] = lo[k].value;
            upper[k] = up[k].value;
            if (!lo[k].converged || !up[k].converged)
                report.warn("bound solve did not converge at period " +
                            std::to_string(periods[k]));
            lo_theta.push_back(to_json(lo[k].theta));
            up_theta.push_back(to_json(up[k].theta));
            lo_nu.push_back(lo[k].nu);
            up_nu.push_back(up[k].nu);
        }
        diagnostics["lower"] = {{"theta", lo_theta}, {"nu", lo_nu}};
        diagnostics["upper"] = {{"theta", up_theta}, {"nu", up_nu}};
    } else {
        throw InputError("--method must be ode or optim");
    }

    ordered_json results;
    results["level"] = a.level;
    results["delta"] = delta;
    results["periods"] = to_json(periods);
    results["lower"] = to_json(lower);
    results["upper"] = to_json(upper);
    report.body["results"] = results;
    report.body["diagnostics"] = diagnostics;

    report.csv_header = "period,lower,upper";
    for (std::size_t k = 0; k < periods.size(); ++k)
        report.csv_rows.push_back(csv_cell(periods[k]) + "," + csv_cell(lower[k]) +
                                  "," + csv_cell(upper[k]));
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    return report.emit(a.out);
}

// ---------------------------------------------------------------------------
// Subcommand: contour

struct ContourArgs {
    ModelConfig model;
    Output out;
    std::string params = "sigma,xi";
    double level = 0.95;
    std::size_t bins = 256;
};

int run_contour(const ContourArgs& a) {
    ModelBundle b = build_model(a.model);
    if (b.regression && !a.model.no_standardize)
        throw InputError("contour interest pairs must be model coordinates; "
                         "use --no-standardize for regression models");

    const std::size_t comma = a.params.find(',');
    if (comma == std::string::npos)
        throw InputError("--params must name two parameters, e.g. sigma,xi");
    const std::string name_a = trim(a.params.substr(0, comma));
    const std::string name_b = trim(a.params.substr(comma + 1));
    const auto index_of = [&](const std::string& name) {
        const auto it = std::find(b.model.names.begin(), b.model.names.end(), name);
        if (it == b.model.names.end())
            throw InputError("unknown parameter '" + name + "' in --params");
        return static_cast<std::size_t>(it - b.model.names.begin());
    };
    const std::size_t ia = index_of(name_a);
    const std::size_t ib = index_of(name_b);

    ordered_json args;
    args["data"] = a.model.data_path;
    args["params"] = a.params;
    args["level"] = a.level;
    args["bins"] = a.bins;
    Report report("contour", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);

    if (!(a.level > 0.0 && a.level < 1.0))
        throw DomainError("--level must lie strictly between 0 and 1");
    ContourOptions opts;
    opts.bins = a.bins;
    const ContourTrace trace =
        trace_contour(b.model, fit, ia, ib, 1.0 - a.level, opts);
    if (!trace.completed)
        report.warn("contour trace stopped early: " + trace.halt_message);
    if (trace.merge_gap_warning)
        report.warn("branch overlap gap above merge tolerance: contour may be "
                    "non-smooth or disconnected");

    ordered_json points = ordered_json::array();
    for (const ContourPoint& pt : trace.points) {
        ordered_json p;
        p["t"] = pt.t;
        p["psi"] = to_json(pt.psi);
        p["theta"] = to_json(pt.theta);
        p["branch"] = pt.branch == ContourBranch::minus ? "minus" : "plus";
        const Vector score = b.model.grad(pt.theta);
        double u = 0.0;
        for (double z : score) u += z * z;
        p["nu"] = (pt.branch == ContourBranch::plus ? 1.0 : -1.0) /
                  std::sqrt(std::max(u, 1e-300));
        p["residual"] = pt.residual;
        points.push_back(p);
    }
    ordered_json results;
    results["params"] = ordered_json::array({name_a, name_b});
    results["level"] = a.level;
    results["delta"] = level_to_delta(a.level, 2);
    results["n_points"] = trace.points.size();
    results["points"] = points;
    report.body["results"] = results;
    report.body["diagnostics"] = {{"max_overlap_gap", trace.max_overlap_gap},
                                  {"completed", trace.completed}};

    report.csv_header = name_a + "," + name_b;
    for (const ContourPoint& pt : trace.points)
        report.csv_rows.push_back(csv_cell(pt.psi[0]) + "," + csv_cell(pt.psi[1]));
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    return report.emit(a.out);
}

// ---------------------------------------------------------------------------
// Subcommand: bubble-path

struct BubbleArgs {
    ModelConfig model;
    Output out;
    std::string param;
    double period = 100.0;
    double level = 0.95;
    std::string side = "upper";
    double delta1 = 0.0;  // 0 = library default (delta/100)
};

int run_bubble_path(const BubbleArgs& a) {
    ModelBundle b = build_model(a.model);
    const TargetSpec ts = make_target(b, a.param, a.period);
    const double delta = level_to_delta(a.level, 1);
    if (a.side != "upper" && a.side != "lower")
        throw InputError("--side must be upper or lower");

    ordered_json args;
    args["data"] = a.model.data_path;
    args["param"] = a.param;
    if (a.param == "rl") args["period"] = a.period;
    args["level"] = a.level;
    args["side"] = a.side;
    if (a.delta1 > 0.0) args["delta1"] = a.delta1;
    Report report("bubble-path", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);

    const int sign = a.side == "upper" ? +1 : -1;
    const BubbleTrace trace =
        trace_bubble(b.model, ts.target, ts.t, fit, delta, sign, a.delta1);
    if (!trace.level_reached)
        report.warn("level-inflation path stopped early: " + trace.status);

    ordered_json results;
    results["param"] = ts.label;
    results["level"] = a.level;
    results["delta"] = delta;
    results["side"] = a.side;
    results["bound"] = bound_json(trace.bound);
    results["level_reached"] = trace.level_reached;
    results["status"] = trace.status;
    report.body["results"] = results;
    report.body["diagnostics"] = {
        {"path", augmented_path_json(trace.path, b.model.p)}};

    report.csv_header = "level_offset,eta,nu";
    for (std::size_t k = 0; k < trace.path.times.size(); ++k) {
        Vector th(trace.path.states[k].begin(),
                  trace.path.states[k].begin() +
                      static_cast<std::ptrdiff_t>(b.model.p));
        report.csv_rows.push_back(csv_cell(trace.path.times[k]) + "," +
                                  csv_cell(ts.target.value(th, ts.t)) + "," +
                                  csv_cell(trace.path.states[k][b.model.p]));
    }
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    return report.emit(a.out);
}

// ---------------------------------------------------------------------------
// Subcommand: mcmc-sample

struct McmcSampleArgs {
    ModelConfig model;
    Output out;
    std::size_t iterates = 10000;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string csv_out;
};

int run_mcmc_sample(const McmcSampleArgs& a) {
    ModelBundle b = build_model(a.model);
    if (a.csv_out.empty())
        throw InputError("mcmc-sample needs --csv-out for the iterate file");
    const std::uint64_t seed = a.seed_given ? a.seed : default_seed();

    ordered_json args;
    args["data"] = a.model.data_path;
    args["iterates"] = a.iterates;
    args["seed"] = seed;
    args["csv_out"] = a.csv_out;
    Report report("mcmc-sample", args);
    report.body["data"] = dataset_json(b.data, a.model.data_path);
    report.body["model"] = model_json(b, a.model);

    const MleFit fit = fit_or_warn(b, report);
    report.body["fit"] = fit_json(b, fit);

    const McmcTrace trace = rw_metropolis(b.model, fit.theta_hat, a.iterates, seed);
    std::ofstream csv(a.csv_out);
    if (!csv) throw IoError("cannot write iterate file: " + a.csv_out);
    for (std::size_t j = 0; j < b.model.p; ++j) csv << "theta_" << (j + 1) << ",";
    csv << "loglik\n";
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        for (double v : trace.iterates[i]) csv << csv_cell(v) << ",";
        csv << csv_cell(trace.logliks[i]) << "\n";
    }
    csv.close();

    double best = trace.logliks.empty() ? 0.0 : trace.logliks[0];
    for (double l : trace.logliks) best = std::max(best, l);
    ordered_json results;
    results["iterates_written"] = trace.iterates.size();
    results["file"] = a.csv_out;
    results["acceptance_rate"] = trace.acceptance_rate;
    results["best_loglik"] = best;
    report.body["results"] = results;
    if (trace.acceptance_rate < 0.1 || trace.acceptance_rate > 0.5)
        report.warn("sampler acceptance rate outside [0.1, 0.5]");
    if (b.data.rows_dropped > 0)
        report.warn(std::to_string(b.data.rows_dropped) +
                    " data rows dropped during ingestion");
    return report.emit(a.out);
}

int emit_error(const Output& out, const Error& e) {
    ordered_json j;
    j["schema"] = 1;
    j["tool"] = "prolik";
    j["version"] = kToolVersion;
    j["error"] = ordered_json{{"code", error_code(e)}, {"message", e.what()}};
    j["status"] = "error";
    try {
        Output json_out = out;
        json_out.format = "json";
        write_text(json_out, j.dump(2));
    } catch (const Error&) {
        std::cerr << j.dump(2) << '\n';
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"profile-likelihood confidence intervals, bands, and contours "
                 "for extreme-value and Gaussian regression models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit");
    add_model_flags(fit_cmd, fit_args.model);
    add_output_flags(fit_cmd, fit_args.out);

    CiArgs ci_args;
    CLI::App* ci_cmd =
        app.add_subcommand("ci", "profile-likelihood confidence interval");
    add_model_flags(ci_cmd, ci_args.model);
    add_output_flags(ci_cmd, ci_args.out);
    ci_cmd->add_option("--param", ci_args.param,
                       "parameter name or 'rl' for a return level")->required();
    ci_cmd->add_option("--period", ci_args.period, "return period for --param rl");
    ci_cmd->add_option("--level", ci_args.level, "confidence level (default 0.95)");
    ci_cmd->add_option("--method", ci_args.method,
                       "optim | naive | bubble | mcmc")
        ->check(CLI::IsMember({"optim", "naive", "bubble", "mcmc"}));
    ci_cmd->add_option("--iterates", ci_args.iterates,
                       "iterate count for --method mcmc");
    ci_cmd->add_option("--iterates-file", ci_args.iterates_file,
                       "read iterates from this CSV instead of sampling");
    ci_cmd->add_option("--seed", ci_args.seed, "sampler seed (default PROLIK_SEED)");

    RlbandArgs rl_args;
    CLI::App* rl_cmd =
        app.add_subcommand("rlband", "return-level confidence band over periods");
    add_model_flags(rl_cmd, rl_args.model);
    add_output_flags(rl_cmd, rl_args.out);
    rl_cmd->add_option("--periods", rl_args.periods, "grid spec LO:HI:log|lin");
    rl_cmd->add_option("--grid", rl_args.grid, "number of grid points (default 12)");
    rl_cmd->add_option("--level", rl_args.level, "confidence level (default 0.95)");
    rl_cmd->add_option("--method", rl_args.method, "ode | optim")
        ->check(CLI::IsMember({"ode", "optim"}));
    rl_cmd->add_option("--jobs", rl_args.jobs,
                       "solve grid points concurrently (method optim)");

    ContourArgs contour_args;
    CLI::App* contour_cmd =
        app.add_subcommand("contour", "two-parameter confidence contour");
    add_model_flags(contour_cmd, contour_args.model);
    add_output_flags(contour_cmd, contour_args.out);
    contour_cmd->add_option("--params", contour_args.params,
                            "comma-separated parameter pair (default sigma,xi)");
    contour_cmd->add_option("--level", contour_args.level,
                            "confidence level (default 0.95)");
    contour_cmd->add_option("--bins", contour_args.bins,
                            "canonical-angle merge bins (default 256)");

    BubbleArgs bubble_args;
    CLI::App* bubble_cmd = app.add_subcommand(
        "bubble-path", "level-inflation path from near the fit to the bound");
    add_model_flags(bubble_cmd, bubble_args.model);
    add_output_flags(bubble_cmd, bubble_args.out);
    bubble_cmd->add_option("--param", bubble_args.param,
                           "parameter name or 'rl' for a return level")->required();
    bubble_cmd->add_option("--period", bubble_args.period,
                           "return period for --param rl");
    bubble_cmd->add_option("--level", bubble_args.level,
                           "confidence level (default 0.95)");
    bubble_cmd->add_option("--side", bubble_args.side, "upper | lower");
    bubble_cmd->add_option("--delta1", bubble_args.delta1,
                           "starting level offset (default delta/100)");

    McmcSampleArgs mcmc_args;
    CLI::App* mcmc_cmd =
        app.add_subcommand("mcmc-sample", "draw posterior iterates to a CSV file");
    add_model_flags(mcmc_cmd, mcmc_args.model);
    add_output_flags(mcmc_cmd, mcmc_args.out);
    mcmc_cmd->add_option("--iterates", mcmc_args.iterates,
                         "iterate count (default 10000)");
    mcmc_cmd->add_option("--seed", mcmc_args.seed,
                         "sampler seed (default PROLIK_SEED)");
    mcmc_cmd->add_option("--csv-out", mcmc_args.csv_out,
                         "iterate CSV destination (required)");

    CLI11_PARSE(app, argc, argv);
    ci_args.seed_given = ci_cmd->count("--seed") > 0;
    mcmc_args.seed_given = mcmc_cmd->count("--seed") > 0;

    const Output* active_out = &fit_args.out;
    try {
        if (fit_cmd->parsed()) return run_fit(fit_args);
        if (ci_cmd->parsed()) {
            active_out = &ci_args.out;
            return run_ci(ci_args);
        }
        if (rl_cmd->parsed()) {
            active_out = &rl_args.out;
            return run_rlband(rl_args);
        }
        if (contour_cmd->parsed()) {
            active_out = &contour_args.out;
            return run_contour(contour_args);
        }
        if (bubble_cmd->parsed()) {
            active_out = &bubble_args.out;
            return run_bubble_path(bubble_args);
        }
        if (mcmc_cmd->parsed()) {
            active_out = &mcmc_args.out;
            return run_mcmc_sample(mcmc_args);
        }
    } catch (const Error& e) {
        return emit_error(*active_out, e);
    } catch (const std::exception& e) {
        ordered_json j;
        j["schema"] = 1;
        j["tool"] = "prolik";
        j["version"] = kToolVersion;
        j["error"] = ordered_json{{"code", "internal_error"}, {"message", e.what()}};
        j["status"] = "error";
        std::cerr << j.dump(2) << '\n';
        return 1;
    }
    return 1;
}
