#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "parreg/grid.hpp"
#include "parreg/operators.hpp"
#include "parreg/spaces.hpp"

namespace parreg::cli {

using json = nlohmann::json;

/// Bad command line or manifest structure. Exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Manifest {
    json doc;
    std::filesystem::path base_dir;
    std::string hash;
    unsigned seed = 1;

    /// Parses the file; malformed JSON raises UsageError.
    static Manifest load(const std::filesystem::path& path, std::optional<unsigned> seed_override);
    static Manifest from_json(json doc, std::filesystem::path base_dir, std::optional<unsigned> seed_override);
};

/// FNV-1a 64 of the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string manifest_hash(const json& doc);

/// Problem data resolved from a manifest: either files / inline grids or a
/// named preset. Presets whose forcing depends on the shift take eta.
struct ProblemData {
    operators::DifferentialOperator op = operators::DifferentialOperator::laplacian(1);
    GridFunction f;
    GridFunction u0;
    spaces::NormSpec spec;
    double horizon = 0.0;
    std::optional<GridFunction> exact;
};

/// Time axis and spatial grid the data will live on, known before eta.
struct ProblemShape {
    std::vector<Axis> spatial;
    Axis time;
};

ProblemShape problem_shape(const Manifest& m);
ProblemData build_problem(const Manifest& m, double eta);

/// "auto" or absent gives 0 (choose automatically).
double eta_entry(const json& doc, double fallback);
double q_entry(const json& j, const char* key, double fallback);
cplx lambda_entry(const json& j);

struct CommandResult {
    int exit_code = 0;
    json report = json::object();
    std::optional<GridFunction> solution;
    std::optional<std::string> csv;
};

/// Report skeleton with the command name, manifest hash and seed.
json report_header(const std::string& command, const Manifest& m);

CommandResult cmd_check_ellipticity(const Manifest& m);
CommandResult cmd_solve(const Manifest& m);
CommandResult cmd_norm(const Manifest& m);
CommandResult cmd_study(const Manifest& m);

/// Names of the invariant suites.
std::vector<std::string> suite_names();
/// Unknown suite raises UsageError. `inject` names a fault to plant.
CommandResult cmd_verify(const std::string& suite, const std::string& inject, unsigned seed);

}  // namespace parreg::cli
