#include "partedit/json_io.hpp"

namespace partedit {

nlohmann::ordered_json params_to_json(const ShapeParams& p) {
  nlohmann::ordered_json j;
  j["category"] = std::string(to_string(p.category));
  for (std::size_t i = 0; i < kParamCount; ++i) {
    j[std::string(to_string(static_cast<Param>(i)))] = p.values[i];
  }
  j["has_arms"] = p.has_arms;
  j["has_back"] = p.has_back;
  return j;
}

ShapeParams params_from_json(const nlohmann::json& j) {
  try {
    ShapeParams p;
    p.category = category_from_string(j.at("category").get<std::string>());
    for (std::size_t i = 0; i < kParamCount; ++i) {
      p.values[i] = j.at(std::string(to_string(static_cast<Param>(i)))).get<double>();
    }
    p.has_arms = j.at("has_arms").get<bool>();
    p.has_back = j.at("has_back").get<bool>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidityError(std::string("malformed shape parameters: ") + e.what());
  }
}

nlohmann::ordered_json boxes_to_json(const BoxSet& boxes) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& b : boxes.boxes) {
    nlohmann::ordered_json jb;
    jb["min"] = {b.min[0], b.min[1], b.min[2]};
    jb["max"] = {b.max[0], b.max[1], b.max[2]};
    jb["part"] = std::string(to_string(b.part));
    arr.push_back(std::move(jb));
  }
  return arr;
}

nlohmann::ordered_json utterance_to_json(const Utterance& u) {
  nlohmann::ordered_json j;
  j["text"] = u.text;
  j["part"] = std::string(to_string(u.part));
  j["attribute"] = std::string(to_string(u.attribute));
  j["direction"] = std::string(to_string(u.direction));
  return j;
}

nlohmann::ordered_json triplet_to_json(const Triplet& t) {
  nlohmann::ordered_json j;
  j["context_id"] = t.context_id;
  j["labeler_id"] = t.labeler_id;
  j["source"] = params_to_json(t.source);
  j["target"] = params_to_json(t.target);
  auto utts = nlohmann::ordered_json::array();
  for (const auto& u : t.utterances) utts.push_back(utterance_to_json(u));
  j["utterances"] = std::move(utts);
  j["split"] = std::string(to_string(t.split));
  return j;
}

Triplet triplet_from_json(const nlohmann::json& j) {
  try {
    Triplet t;
    t.context_id = j.at("context_id").get<std::uint32_t>();
    t.labeler_id = j.at("labeler_id").get<std::uint32_t>();
    t.source = params_from_json(j.at("source"));
    t.target = params_from_json(j.at("target"));
    t.split = split_from_string(j.at("split").get<std::string>());
    for (const auto& ju : j.at("utterances")) {
      Utterance u;
      u.text = ju.at("text").get<std::string>();
      u.tokens = tokenize(u.text);
      u.context_id = t.context_id;
      u.labeler_id = t.labeler_id;
      u.part = part_from_string(ju.at("part").get<std::string>());
      u.attribute = attribute_from_string(ju.at("attribute").get<std::string>());
      u.direction = direction_from_string(ju.at("direction").get<std::string>());
      t.utterances.push_back(std::move(u));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidityError(std::string("malformed triplet record: ") + e.what());
  }
}

}  // namespace partedit
