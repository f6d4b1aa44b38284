#include "partedit/app/service.hpp"

#include "partedit/dataset.hpp"
#include "partedit/json_io.hpp"
#include "partedit/metrics.hpp"
#include "partedit/nn.hpp"

#include <random>

namespace partedit::app {

namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

constexpr std::size_t kMaxSteps = 1000;

ServiceReply error(int status, const std::string& message) { return {status, OJson{{"error", message}}}; }

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string_view::npos ? path.size() : j;
    if (end > i) out.emplace_back(path.substr(i, end - i));
    i = end;
  }
  return out;
}

}  // namespace

OJson shape_json(const ShapeParams& p) { return boxes_to_json(realize_shape(p)); }

EditService::EditService(std::shared_ptr<const JointSpaceModel> model, std::shared_ptr<const Autoencoder> ae,
                         std::shared_ptr<const NeighborIndex> index, ServiceOptions options)
    : model_(std::move(model)), ae_(std::move(ae)), index_(std::move(index)), options_(std::move(options)) {
  options_.edit.validate();
}

std::size_t EditService::session_count() const {
  const std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<EditService::Session> EditService::find(const std::string& id) {
  const std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

OJson EditService::session_json(const Session& s) const {
  OJson history = OJson::array();
  for (const auto& h : s.history) {
    history.push_back({{"action", h.action},
                       {"utterance", h.utterance},
                       {"params", params_to_json(h.params)},
                       {"h", h.h},
                       {"steps", h.steps}});
  }
  OJson j{{"sessionId", s.id},
          {"params", params_to_json(s.source)},
          {"shape", shape_json(s.source)},
          {"history", history},
          {"hasPendingEdit", s.pending.has_value()},
          {"canUndo", !s.previous.empty()}};
  return j;
}

ServiceReply EditService::create_session(const Json& req) {
  if (!req.is_object()) return error(400, "session request must be a JSON object");
  ShapeParams params = midpoint_chair();
  try {
    if (req.contains("params")) {
      params = params_from_json(req.at("params"));
      validate(params);
    } else if (req.contains("randomSeed")) {
      std::mt19937_64 rng(nn::derive_seed(req.at("randomSeed").get<std::uint64_t>(), 0x5E55));
      params = sample_shape(DatasetConfig{}, rng);
    }
  } catch (const ValidityError& e) {
    return error(400, e.what());
  } catch (const Json::exception& e) {
    return error(400, e.what());
  }
  auto s = std::make_shared<Session>();
  const std::uint64_t n = next_id_.fetch_add(1);
  s->id = "s" + std::to_string(n);
  s->source = params;
  s->latent = ae_->encode(params);
  OJson body;
  {
    const std::lock_guard lock(sessions_mutex_);
    sessions_[s->id] = s;
  }
  body = {{"sessionId", s->id}, {"shape", shape_json(params)}, {"params", params_to_json(params)}};
  return {200, body};
}

ServiceReply EditService::get_session(const std::string& id) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  const std::lock_guard lock(s->mutex);
  return {200, session_json(*s)};
}

ServiceReply EditService::edit(const std::string& id, const Json& req) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  if (!req.is_object() || !req.contains("utterance") || !req.at("utterance").is_string()) {
    return error(400, "edit request needs a string 'utterance'");
  }
  const std::string utterance = req.at("utterance").get<std::string>();
  if (normalize_text(utterance).empty()) return error(400, "utterance is empty");
  EditConfig cfg = options_.edit;
  try {
    if (req.contains("steps")) {
      const auto steps = req.at("steps").get<std::int64_t>();
      if (steps < 0 || static_cast<std::size_t>(steps) > kMaxSteps) {
        return error(400, "steps must lie in [0, " + std::to_string(kMaxSteps) + "]");
      }
      cfg.steps = static_cast<std::size_t>(steps);
    }
    if (req.contains("delta")) {
      cfg.delta = req.at("delta").get<double>();
      if (!(cfg.delta > 0.0)) return error(400, "delta must be positive");
    }
  } catch (const Json::exception& e) {
    return error(400, e.what());
  }

  const std::lock_guard lock(s->mutex);
  const std::uint64_t session_number = std::stoull(s->id.substr(1));
  const std::uint64_t seed = nn::derive_seed(nn::derive_seed(options_.seed, session_number), s->edits);
  EditTrace trace;
  try {
    trace = partedit::edit({*model_, *ae_, *index_}, s->latent, s->source, utterance, cfg, seed);
  } catch (const EditError& e) {
    return {500, OJson{{"error", e.what()}, {"step", e.step()}}};
  } catch (const std::invalid_argument& e) {
    return error(500, e.what());
  }
  ++s->edits;

  OJson steps = OJson::array();
  for (const auto& st : trace.steps) {
    steps.push_back({{"step", st.step},
                     {"h", st.h},
                     {"eta", st.eta},
                     {"deltaV", st.delta_v},
                     {"volume", st.volume},
                     {"clipped", st.clipped},
                     {"params", params_to_json(st.params)},
                     {"shape", shape_json(st.params)}});
  }
  const auto& last = trace.final_step();
  OJson body{{"trace", steps}, {"finalParams", params_to_json(last.params)}};
  const auto entry = pep_entry(realize_shape(s->source), realize_shape(last.params), utterance, options_.swell);
  if (entry.flag == PepFlag::no_part) {
    body["pepUnavailable"] = "no part word in the utterance";
  } else {
    body["pep"] = pep_entry_to_json(entry);
  }
  if (trace.failed) body["warning"] = trace.failure;
  s->pending = PendingEdit{utterance, last.latent, last.params, last.h, trace.steps.size() - 1};
  return {200, body};
}

ServiceReply EditService::accept(const std::string& id) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  const std::lock_guard lock(s->mutex);
  if (!s->pending) return error(409, "no edit to accept");
  s->previous.emplace_back(s->source, s->latent);
  s->source = s->pending->params;
  s->latent = s->pending->latent;
  s->history.push_back({"accept", s->pending->utterance, s->source, s->pending->h, s->pending->steps});
  s->pending.reset();
  return {200, OJson{{"newSourceParams", params_to_json(s->source)}, {"shape", shape_json(s->source)}}};
}

ServiceReply EditService::undo(const std::string& id) {
  const auto s = find(id);
  if (!s) return error(404, "unknown session " + id);
  const std::lock_guard lock(s->mutex);
  if (s->previous.empty()) return error(409, "nothing to undo");
  s->source = s->previous.back().first;
  s->latent = s->previous.back().second;
  s->previous.pop_back();
  s->pending.reset();
  s->history.push_back({"undo", "", s->source, 0.0, 0});
  return {200, OJson{{"sourceParams", params_to_json(s->source)}, {"shape", shape_json(s->source)}}};
}

ServiceReply EditService::encode_text(const Json& req) {
  if (!req.is_object() || !req.contains("utterance") || !req.at("utterance").is_string()) {
    return error(400, "encode request needs a string 'utterance'");
  }
  const auto text = req.at("utterance").get<std::string>();
  return {200, OJson{{"embedding", model_->encode_text(text)}, {"votingWeights", model_->voting_weights(text)}}};
}

ServiceReply EditService::model_info() const {
  return {200, OJson{{"checkpointHash", options_.checkpoint_hash},
                     {"k", model_->experts()},
                     {"jointDim", model_->joint_dim()},
                     {"miningStrategy", to_string(model_->metadata.mining)},
                     {"lambda", model_->metadata.lambda},
                     {"valAccuracy", model_->metadata.best_val_accuracy}}};
}

ServiceReply EditService::health() const { return {200, OJson{{"status", "ok"}}}; }

ServiceReply EditService::handle(std::string_view method, std::string_view path, std::string_view body) {
  const auto parts = split_path(path);
  Json req = Json::object();
  if (method == "POST" && !body.empty()) {
    try {
      req = Json::parse(body);
    } catch (const Json::exception& e) {
      return error(400, std::string("malformed JSON body: ") + e.what());
    }
  }
  auto only = [&](std::string_view m) -> std::optional<ServiceReply> {
    if (method != m) return error(405, "method not allowed");
    return std::nullopt;
  };
  if (parts.size() == 1 && parts[0] == "health") {
    if (auto r = only("GET")) return *r;
    return health();
  }
  if (parts.size() == 2 && parts[0] == "model" && parts[1] == "info") {
    if (auto r = only("GET")) return *r;
    return model_info();
  }
  if (parts.size() == 2 && parts[0] == "text" && parts[1] == "encode") {
    if (auto r = only("POST")) return *r;
    return encode_text(req);
  }
  if (!parts.empty() && parts[0] == "sessions") {
    if (parts.size() == 1) {
      if (auto r = only("POST")) return *r;
      return create_session(req);
    }
    if (parts.size() == 2) {
      if (auto r = only("GET")) return *r;
      return get_session(parts[1]);
    }
    if (parts.size() == 3) {
      if (auto r = only("POST")) return *r;
      if (parts[2] == "edit") return edit(parts[1], req);
      if (parts[2] == "accept") return accept(parts[1]);
      if (parts[2] == "undo") return undo(parts[1]);
    }
  }
  return error(404, "no route for " + std::string(path));
}

}  // namespace partedit::app
