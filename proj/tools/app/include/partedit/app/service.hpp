#pragma once

#include "partedit/autoencoder.hpp"
#include "partedit/editor.hpp"
#include "partedit/jointspace.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace partedit::app {

struct ServiceReply {
  int status = 200;
  nlohmann::ordered_json body;
};

struct ServiceOptions {
  EditConfig edit;
  double swell = 0.02;
  std::uint64_t seed = 1;
  std::string checkpoint_hash;
};

/// Interactive editing sessions over one frozen model. Transport-agnostic:
/// handle() maps (method, path, body) to a status and JSON body.
class EditService {
 public:
  EditService(std::shared_ptr<const JointSpaceModel> model, std::shared_ptr<const Autoencoder> ae,
              std::shared_ptr<const NeighborIndex> index, ServiceOptions options);

  ServiceReply handle(std::string_view method, std::string_view path, std::string_view body);

  ServiceReply create_session(const nlohmann::json& req);
  ServiceReply get_session(const std::string& id);
  ServiceReply edit(const std::string& id, const nlohmann::json& req);
  ServiceReply accept(const std::string& id);
  ServiceReply undo(const std::string& id);
  ServiceReply encode_text(const nlohmann::json& req);
  ServiceReply model_info() const;
  ServiceReply health() const;

  [[nodiscard]] std::size_t session_count() const;

 private:
  struct HistoryEntry {
    std::string action;  // "accept" or "undo"
    std::string utterance;
    ShapeParams params;
    double h = 0.0;
    std::size_t steps = 0;
  };
  struct PendingEdit {
    std::string utterance;
    LatentCode latent;
    ShapeParams params;
    double h = 0.0;
    std::size_t steps = 0;
  };
  struct Session {
    std::mutex mutex;
    std::string id;
    ShapeParams source;
    LatentCode latent;
    std::vector<HistoryEntry> history;
    /// Earlier accepted states, for undo.
    std::vector<std::pair<ShapeParams, LatentCode>> previous;
    std::optional<PendingEdit> pending;
    std::size_t edits = 0;
  };

  std::shared_ptr<Session> find(const std::string& id);
  nlohmann::ordered_json session_json(const Session& s) const;

  std::shared_ptr<const JointSpaceModel> model_;
  std::shared_ptr<const Autoencoder> ae_;
  std::shared_ptr<const NeighborIndex> index_;
  ServiceOptions options_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
};

/// Boxes with part labels, ready for rendering.
nlohmann::ordered_json shape_json(const ShapeParams& p);

}  // namespace partedit::app
