#pragma once

#include <filesystem>

#include <json.hpp>

#include "parreg/grid.hpp"

namespace parreg::io {

using json = nlohmann::json;

json axis_to_json(const Axis& a);
Axis axis_from_json(const json& j);

/// {"axes":[...], "fiber":N, "re":[...], "im":[...]} with values in storage order.
json grid_to_json(const GridFunction& u);
GridFunction grid_from_json(const json& j);

/// Grid files are the JSON document above. Errors raise ArgumentError.
void write_grid(const std::filesystem::path& path, const GridFunction& u);
GridFunction read_grid(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

}  // namespace parreg::io
