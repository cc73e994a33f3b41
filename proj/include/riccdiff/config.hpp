#pragma once

#include "riccdiff/enkf.hpp"
#include "riccdiff/mc.hpp"
#include "riccdiff/riccati.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace riccdiff {

inline constexpr int kSchemaVersion = 1;

enum class Experiment { Simulate, Moments, Bias, Fluctuation, Semigroup, DetDecay, DysonCompare, Enkf, Stationarity };

const std::vector<std::string>& experiment_names();
std::string experiment_name(Experiment e);
std::optional<Experiment> parse_experiment_name(const std::string& name);

struct ModelSpec {
    Matrix A;
    SymMat R, S;
    int kappa = 1;
    double varpi = 0.0;
    double eps = 0.0;
    SymMat Q0;
    SymMat Q0_b;  // second initialisation, stationarity only
};

struct FilterSpec {
    Matrix A, B;
    SymMat R1, R2;
    EnkfType type = EnkfType::Midpoint;
    double varpi = 0.0;
    int N = 100;
    Vector m0, x0;
    SymMat P0;
};

struct RunSpec {
    double T = 1.0;
    double dt = 1e-3;
    long n_paths = 10000;
    std::uint64_t seed = 1;
    int batches = kDefaultBatches;
    std::vector<double> eps_grid;
    std::vector<int> n_orders;
    std::vector<double> time_grid;
    NormKind norm = NormKind::Trace;
};

struct OutputSpec {
    std::string directory = "riccdiff_out";
    bool csv = true;
    bool json = true;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    Experiment experiment = Experiment::Simulate;
    std::optional<ModelSpec> model;
    std::optional<FilterSpec> filter;
    RunSpec run;
    OutputSpec output;
    std::vector<std::string> warnings;

    ModelParams params() const;
    ModelParams params(double eps) const;
    FilterModel filter_model() const;
};

/// Either a validated config or every schema violation found.
struct ParseResult {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;

    bool ok() const { return config.has_value(); }
};

ParseResult parse_config(const std::string& text);

/// Renders a threshold like 1 as "1.0" and keeps six significant digits otherwise.
std::string format_threshold(double x);

}  // namespace riccdiff
