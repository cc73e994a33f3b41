#include "riccdiff/output.hpp"

#include "riccdiff/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#ifndef RICCDIFF_VERSION
#define RICCDIFF_VERSION "0.0.0"
#endif
#ifndef RICCDIFF_GIT
#define RICCDIFF_GIT "unknown"
#endif

namespace riccdiff {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot write " + file.string());
    return out;
}

}  // namespace

bool ExperimentResult::all_pass() const {
    for (const auto& v : verdicts)
        if (!v.pass) return false;
    return true;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string build_fingerprint() {
    return std::string("riccdiff-") + RICCDIFF_VERSION + "+" + RICCDIFF_GIT;
}

void write_results_csv(const fs::path& file, const std::vector<ResultRow>& rows) {
    std::ofstream out = open_out(file);
    out << "experiment,quantity,parameters,estimate,stderr,n_paths,diverged_fraction,wall_time_s,fingerprint\r\n";
    for (const auto& r : rows) {
        out << csv_field(r.experiment) << ',' << csv_field(r.quantity) << ',' << csv_field(r.parameters) << ','
            << format_number(r.estimate) << ',' << format_number(r.std_error) << ',' << r.n_paths << ','
            << format_number(r.diverged_fraction) << ',' << format_number(r.wall_time_s) << ',' << csv_field(r.fingerprint)
            << "\r\n";
    }
}

void write_plotdata(const fs::path& dir, const std::vector<PlotSeries>& plots) {
    fs::create_directories(dir);
    for (const auto& p : plots) {
        std::ofstream out = open_out(dir / (p.name + ".csv"));
        out << "series,x,y,stderr\r\n";
        for (std::size_t i = 0; i < p.x.size(); ++i) {
            const double se = i < p.std_error.size() ? p.std_error[i] : 0.0;
            out << csv_field(p.name) << ',' << format_number(p.x[i]) << ',' << format_number(p.y[i]) << ','
                << format_number(se) << "\r\n";
        }
    }
}

nlohmann::json summary_json(const ExperimentResult& result, std::uint64_t seed) {
    nlohmann::json j;
    j["experiment"] = result.experiment;
    j["seed"] = seed;
    j["fingerprint"] = build_fingerprint();
    j["warnings"] = result.warnings;
    j["aggregates"] = result.aggregates;
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : result.verdicts)
        verdicts.push_back({{"criterion", v.criterion}, {"target", v.target}, {"measured", v.measured}, {"pass", v.pass}});
    j["verdicts"] = verdicts;
    j["pass"] = result.all_pass();
    return j;
}

void write_summary_json(const fs::path& file, const nlohmann::json& summary) {
    std::ofstream out = open_out(file);
    out << summary.dump(2) << "\n";
}

Manifest::Manifest(fs::path file) : file_(std::move(file)) {}

void Manifest::complete(const std::string& stage) {
    lines_.push_back("completed " + stage);
    flush();
}

void Manifest::fail(const std::string& stage, const std::string& reason) {
    std::string clean = reason;
    for (char& c : clean)
        if (c == '\n' || c == '\r') c = ' ';
    lines_.push_back("failed " + stage + ": " + clean);
    flush();
}

void Manifest::flush() const {
    std::ofstream out = open_out(file_);
    for (const auto& l : lines_) out << l << "\n";
}

}  // namespace riccdiff
