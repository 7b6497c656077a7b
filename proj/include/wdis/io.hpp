#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wdis/disentangle.hpp"
#include "wdis/wannier.hpp"

namespace wdis {

// 17 significant digits, enough for a lossless round trip.
std::string format_double(double x);

// Io error when the file cannot be read, Parse error with the line number
// when it is not valid JSON.
std::string read_text_file(const std::string& path);
nlohmann::json parse_json(const std::string& text, const std::string& origin);
nlohmann::json read_json_file(const std::string& path);
// Creates missing parent directories.
void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::json& j);

nlohmann::json to_json(const CMat& m);
CMat cmat_from_json(const nlohmann::json& j);

// Field dumps carry the model description so they can be checked offline.
nlohmann::json to_json(const DisentangledField& field, const Model& model);
DisentangledField field_from_json(const nlohmann::json& j);
Provenance provenance_from_string(const std::string& s);

nlohmann::json to_json(const GridFrames& frames);
GridFrames frames_from_json(const nlohmann::json& j);

std::string charges_csv(const std::vector<ChargeEntry>& entries);
std::string decay_csv(const DecayProfile& d);
std::string interpolation_csv(const InterpolationReport& r);

}  // namespace wdis
