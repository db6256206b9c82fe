#pragma once

#include <json.hpp>

#include "parreg/grid.hpp"

namespace parreg {

/// Result of a solve: the solution grid plus measured quantities.
struct SolveReport {
    GridFunction u;
    double residual = 0.0;
    double eta = 0.0;
    nlohmann::json window = nlohmann::json::object();
    nlohmann::json norms = nlohmann::json::object();
    nlohmann::json constants = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object();

    /// {"norms","residual","eta","window","constants"} merged with extra.
    [[nodiscard]] nlohmann::json to_json() const;
};

/// Relative L2 distance ||a - b|| / ||b|| (absolute when b = 0).
double relative_l2(const GridFunction& a, const GridFunction& b);

}  // namespace parreg
