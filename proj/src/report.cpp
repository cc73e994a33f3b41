#include "riccdiff/experiments.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <ostream>

namespace riccdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

int report(const fs::path& dir, std::ostream& out, std::ostream& err) {
    const fs::path summary = dir / "summary.json", results = dir / "results.csv";
    std::vector<std::string> missing;
    if (!fs::is_regular_file(results)) missing.push_back("results.csv");
    if (!fs::is_regular_file(summary)) missing.push_back("summary.json");
    if (!missing.empty()) {
        err << "error: " << dir.string() << " is missing";
        for (const auto& m : missing) err << " " << m;
        err << " (expected results.csv and summary.json)\n";
        return kExitUsage;
    }
    json j;
    try {
        std::ifstream in(summary);
        j = json::parse(in);
    } catch (const json::exception& e) {
        err << "error: cannot read summary.json: " << e.what() << "\n";
        return kExitUsage;
    }
    if (!j.contains("verdicts") || !j["verdicts"].is_array()) {
        err << "error: summary.json has no verdicts array\n";
        return kExitUsage;
    }
    bool all = true;
    out << "experiment " << j.value("experiment", std::string("?")) << "\n";
    for (const auto& v : j["verdicts"]) {
        const bool pass = v.value("pass", false);
        all = all && pass;
        out << v.value("criterion", std::string("?")) << " " << v.value("measured", std::string("?")) << " target "
            << v.value("target", std::string("?")) << " " << (pass ? "PASS" : "FAIL") << "\n";
    }
    return all ? kExitPass : kExitCriterionFailure;
}

}  // namespace riccdiff
