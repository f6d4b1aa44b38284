#pragma once

#include "partedit/dataset.hpp"
#include "partedit/shapeworld.hpp"

#include <nlohmann/json.hpp>

namespace partedit {

nlohmann::ordered_json params_to_json(const ShapeParams& p);
ShapeParams params_from_json(const nlohmann::json& j);

nlohmann::ordered_json boxes_to_json(const BoxSet& boxes);

nlohmann::ordered_json utterance_to_json(const Utterance& u);
nlohmann::ordered_json triplet_to_json(const Triplet& t);
Triplet triplet_from_json(const nlohmann::json& j);

}  // namespace partedit
