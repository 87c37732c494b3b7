#ifndef QRFVIMP_MODEL_IO_HPP
#define QRFVIMP_MODEL_IO_HPP

#include <string>

#include <json.hpp>

#include "qrfvimp/forest.hpp"

namespace qrfvimp {

inline constexpr const char* kModelFormatName = "qrfvimp-model";
inline constexpr int kModelFormatVersion = 1;

/// Versioned JSON document: config, per-tree node arrays, leaf
/// estimation-member indices. Loading reproduces identical weight queries.
nlohmann::json model_to_json(const ForestModel& model);
ForestModel model_from_json(const nlohmann::json& doc);

void save_model(const ForestModel& model, const std::string& path);
ForestModel load_model(const std::string& path);

}  // namespace qrfvimp

#endif  // QRFVIMP_MODEL_IO_HPP
