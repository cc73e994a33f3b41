#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace riccdiff {

struct ResultRow {
    std::string experiment;
    std::string quantity;
    std::string parameters;
    double estimate = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
    double diverged_fraction = 0.0;
    double wall_time_s = 0.0;
    std::string fingerprint;
};

/// Long-format series written to plotdata/<name>.csv.
struct PlotSeries {
    std::string name;
    std::vector<double> x, y, std_error;
};

struct Verdict {
    std::string criterion;
    std::string target;
    std::string measured;
    bool pass = false;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<ResultRow> rows;
    std::vector<PlotSeries> plots;
    std::vector<Verdict> verdicts;
    nlohmann::json aggregates = nlohmann::json::object();
    std::vector<std::string> warnings;

    bool all_pass() const;
};

/// Shortest round-trip form with 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double x);
/// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

std::string build_fingerprint();

void write_results_csv(const std::filesystem::path& file, const std::vector<ResultRow>& rows);
void write_plotdata(const std::filesystem::path& dir, const std::vector<PlotSeries>& plots);
nlohmann::json summary_json(const ExperimentResult& result, std::uint64_t seed);
void write_summary_json(const std::filesystem::path& file, const nlohmann::json& summary);

/// MANIFEST listing completed stages, rewritten after each one so partial runs stay described.
class Manifest {
public:
    explicit Manifest(std::filesystem::path file);
    void complete(const std::string& stage);
    void fail(const std::string& stage, const std::string& reason);

private:
    void flush() const;

    std::filesystem::path file_;
    std::vector<std::string> lines_;
};

}  // namespace riccdiff
