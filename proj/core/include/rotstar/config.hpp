#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "rotstar/detect.hpp"
#include "rotstar/eval.hpp"
#include "rotstar/optics.hpp"
#include "rotstar/patterns.hpp"
#include "rotstar/refine.hpp"

namespace rotstar {

using Json = nlohmann::json;

// Parses a JSON file; ConfigError on syntax errors, IoError when unreadable.
Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

// Readers take the JSON path of the object (for messages such as
// "pattern.grid_rows: expected an integer") and reject unknown keys.
// Missing keys keep the struct defaults.
PatternSpec pattern_spec_from_json(const Json& j, const std::string& where = "pattern");
Json to_json(const PatternSpec& s);

AberrationCoeffs aberration_from_json(const Json& j, const std::string& where = "aberration");
Json to_json(const AberrationCoeffs& c);

PsfOptions psf_options_from_json(const Json& j, const std::string& where = "psf");
Json to_json(const PsfOptions& o);

BoardPose pose_from_json(const Json& j, const std::string& where = "pose");
Json to_json(const BoardPose& p);

NoiseSpec noise_from_json(const Json& j, const std::string& where = "noise");
Json to_json(const NoiseSpec& n);

RefineConfig refine_config_from_json(const Json& j, const std::string& where = "refine");
Json to_json(const RefineConfig& c);

DetectOptions detect_options_from_json(const Json& j, const std::string& where = "detect");
Json to_json(const DetectOptions& o);

RigGeometry geometry_from_json(const Json& j, const std::string& where = "geometry");
Json to_json(const RigGeometry& g);

// `profile` ("ci" or "full") selects the base that the remaining keys override.
SweepConfig sweep_config_from_json(const Json& j, const std::string& where = "sweep");
Json to_json(const SweepConfig& c);

Json to_json(const SweepResult& r);
SweepResult sweep_result_from_json(const Json& j);

Json to_json(const CornerGrid& g);
CornerGrid corner_grid_from_json(const Json& j, const std::string& where = "grid");

}  // namespace rotstar
