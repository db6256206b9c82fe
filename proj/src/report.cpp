#include "parreg/report.hpp"

#include <cmath>

#include "parreg/spaces.hpp"

namespace parreg {

nlohmann::json SolveReport::to_json() const {
    nlohmann::json j{{"norms", norms},   {"residual", std::isfinite(residual) ? nlohmann::json(residual) : nlohmann::json()},
                     {"eta", eta},       {"window", window},
                     {"constants", constants}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
}

double relative_l2(const GridFunction& a, const GridFunction& b) {
    const double nb = spaces::lq_norm(b, 2.0);
    const double d = spaces::lq_norm(a - b, 2.0);
    return nb > 0.0 ? d / nb : d;
}

}  // namespace parreg
