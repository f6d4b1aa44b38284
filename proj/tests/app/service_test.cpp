#include "partedit/app/http_server.hpp"
#include "partedit/app/service.hpp"
#include "partedit/dataset.hpp"
#include "partedit/json_io.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <random>
#include <thread>

using namespace partedit;
using namespace partedit::app;
using Json = nlohmann::json;

namespace {

class ServiceFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) shapes_.push_back(sample_shape(DatasetConfig{}, rng));
    auto ae = std::make_shared<Autoencoder>(32, 64, 5);
    ae->freeze();
    auto model = std::make_shared<JointSpaceModel>(JointSpaceConfig{}, 32, 6);
    model->freeze();
    ae_ = ae;
    model_ = model;
    index_ = std::make_shared<const NeighborIndex>(ae_->encode_all(shapes_));
    options_.edit.delta = default_delta(shapes_);
    options_.edit.steps = 10;
    options_.edit.neighbors = 16;
    options_.seed = 4;
    options_.checkpoint_hash = model_->hash();
  }
  static void TearDownTestSuite() {
    index_.reset();
    model_.reset();
    ae_.reset();
  }

  static EditService make_service() { return EditService(model_, ae_, index_, options_); }

  static std::string new_session(EditService& svc, const ShapeParams& p) {
    const auto r = svc.handle("POST", "/sessions", Json{{"params", params_to_json(p)}}.dump());
    EXPECT_EQ(r.status, 200) << r.body.dump();
    return r.body.at("sessionId").get<std::string>();
  }

  static ServiceReply post(EditService& svc, const std::string& path, const Json& body = Json::object()) {
    return svc.handle("POST", path, body.dump());
  }

  static std::vector<ShapeParams> shapes_;
  static std::shared_ptr<const Autoencoder> ae_;
  static std::shared_ptr<const JointSpaceModel> model_;
  static std::shared_ptr<const NeighborIndex> index_;
  static ServiceOptions options_;
};

std::vector<ShapeParams> ServiceFixture::shapes_;
std::shared_ptr<const Autoencoder> ServiceFixture::ae_;
std::shared_ptr<const JointSpaceModel> ServiceFixture::model_;
std::shared_ptr<const NeighborIndex> ServiceFixture::index_;
ServiceOptions ServiceFixture::options_;

ShapeParams params_of(const nlohmann::ordered_json& j) { return params_from_json(Json::parse(j.dump())); }

}  // namespace

TEST_F(ServiceFixture, HealthAndModelInfo) {
  auto svc = make_service();
  const auto h = svc.handle("GET", "/health", "");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body.at("status"), "ok");
  const auto info = svc.handle("GET", "/model/info", "");
  ASSERT_EQ(info.status, 200);
  EXPECT_EQ(info.body.at("checkpointHash"), model_->hash());
  EXPECT_EQ(info.body.at("k").get<std::size_t>(), model_->experts());
  EXPECT_EQ(info.body.at("jointDim").get<std::size_t>(), model_->joint_dim());
  EXPECT_EQ(info.body.at("miningStrategy"), "multiutterance");
  EXPECT_TRUE(info.body.contains("valAccuracy"));
}

TEST_F(ServiceFixture, SessionParamsRoundTrip) {
  auto svc = make_service();
  for (std::size_t i = 0; i < 20; ++i) {
    const auto id = new_session(svc, shapes_[i]);
    const auto g = svc.handle("GET", "/sessions/" + id, "");
    ASSERT_EQ(g.status, 200);
    EXPECT_EQ(params_of(g.body.at("params")), shapes_[i]);
    EXPECT_EQ(g.body.at("shape").size(), realize_shape(shapes_[i]).boxes.size());
    EXPECT_TRUE(g.body.at("history").empty());
    EXPECT_FALSE(g.body.at("canUndo").get<bool>());
  }
  EXPECT_EQ(svc.session_count(), 20u);
}

TEST_F(ServiceFixture, SessionFromSeedOrDefault) {
  auto svc = make_service();
  const auto a = post(svc, "/sessions", {{"randomSeed", 9}});
  const auto b = post(svc, "/sessions", {{"randomSeed", 9}});
  const auto c = post(svc, "/sessions", {{"randomSeed", 10}});
  ASSERT_EQ(a.status, 200);
  EXPECT_NE(a.body.at("sessionId"), b.body.at("sessionId"));
  EXPECT_EQ(a.body.at("params"), b.body.at("params"));
  EXPECT_NE(a.body.at("params"), c.body.at("params"));
  EXPECT_NO_THROW(validate(params_of(a.body.at("params"))));

  const auto d = svc.handle("POST", "/sessions", "");
  ASSERT_EQ(d.status, 200);
  EXPECT_EQ(params_of(d.body.at("params")), midpoint_chair());
}

TEST_F(ServiceFixture, EditTraceContract) {
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[0]);
  const auto r = post(svc, "/sessions/" + id + "/edit", {{"utterance", "the legs are longer"}, {"steps", 6}});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto& trace = r.body.at("trace");
  ASSERT_EQ(trace.size(), 7u);
  for (std::size_t b = 0; b < trace.size(); ++b) {
    const auto& st = trace[b];
    EXPECT_EQ(st.at("step").get<std::size_t>(), b);
    for (const char* key : {"h", "eta", "deltaV", "volume", "clipped", "params", "shape"}) {
      EXPECT_TRUE(st.contains(key)) << key;
    }
    const auto p = params_of(st.at("params"));
    EXPECT_NEAR(st.at("volume").get<double>(), volume(realize_shape(p)), 1e-12);
  }
  EXPECT_EQ(r.body.at("finalParams"), trace.back().at("params"));
  ASSERT_TRUE(r.body.contains("pep"));
  EXPECT_FALSE(r.body.contains("pepUnavailable"));
  EXPECT_EQ(r.body.at("pep").at("utterance"), "the legs are longer");
  EXPECT_TRUE(r.body.at("pep").contains("flag"));

  const auto g = svc.handle("GET", "/sessions/" + id, "");
  EXPECT_TRUE(g.body.at("hasPendingEdit").get<bool>());
  EXPECT_EQ(params_of(g.body.at("params")), shapes_[0]);
}

TEST_F(ServiceFixture, ZeroStepsReturnsInitializationOnly) {
  auto svc = make_service();
  const auto& src = shapes_[1];
  const auto id = new_session(svc, src);
  const auto r = post(svc, "/sessions/" + id + "/edit", {{"utterance", "the seat is wider"}, {"steps", 0}});
  ASSERT_EQ(r.status, 200);
  ASSERT_EQ(r.body.at("trace").size(), 1u);
  // gamma-scale initialization: within reach of the decoded source.
  const auto fin = params_of(r.body.at("finalParams"));
  const auto rec = ae_->decode(ae_->encode(src), src);
  const auto& bounds = bounds_for(src.category);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    EXPECT_NEAR(fin.values[i], rec.values[i], 0.05 * (bounds[i].max - bounds[i].min)) << i;
  }
}

TEST_F(ServiceFixture, PepOmittedWithReasonWithoutPartWord) {
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[2]);
  const auto r = post(svc, "/sessions/" + id + "/edit", {{"utterance", "make it nicer"}, {"steps", 2}});
  ASSERT_EQ(r.status, 200);
  EXPECT_FALSE(r.body.contains("pep"));
  EXPECT_TRUE(r.body.at("pepUnavailable").is_string());
}

TEST_F(ServiceFixture, MalformedRequestsAre400) {
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[3]);
  const std::string edit = "/sessions/" + id + "/edit";
  EXPECT_EQ(svc.handle("POST", edit, "{not json").status, 400);
  EXPECT_EQ(post(svc, edit, Json::object()).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", 3}}).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", "   "}}).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", "legs longer"}, {"steps", -1}}).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", "legs longer"}, {"steps", 1001}}).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", "legs longer"}, {"steps", "many"}}).status, 400);
  EXPECT_EQ(post(svc, edit, {{"utterance", "legs longer"}, {"delta", 0.0}}).status, 400);
  EXPECT_EQ(svc.handle("POST", edit, "[1, 2]").status, 400);

  auto bad = params_to_json(shapes_[3]);
  bad["leg_height"] = 50.0;
  EXPECT_EQ(post(svc, "/sessions", {{"params", bad}}).status, 400);
  auto missing = params_to_json(shapes_[3]);
  missing.erase("seat_width");
  EXPECT_EQ(post(svc, "/sessions", {{"params", missing}}).status, 400);
  auto sofa = params_to_json(shapes_[3]);
  sofa["category"] = "sofa";
  EXPECT_EQ(post(svc, "/sessions", {{"params", sofa}}).status, 400);
  EXPECT_EQ(post(svc, "/text/encode", {{"text", "x"}}).status, 400);
  // Failed requests do not create sessions or pending edits.
  EXPECT_EQ(svc.session_count(), 1u);
  EXPECT_FALSE(svc.handle("GET", "/sessions/" + id, "").body.at("hasPendingEdit").get<bool>());
}

TEST_F(ServiceFixture, UnknownSessionsAndRoutes) {
  auto svc = make_service();
  EXPECT_EQ(svc.handle("GET", "/sessions/s99", "").status, 404);
  EXPECT_EQ(post(svc, "/sessions/s99/edit", {{"utterance", "legs longer"}}).status, 404);
  EXPECT_EQ(post(svc, "/sessions/s99/accept").status, 404);
  EXPECT_EQ(post(svc, "/sessions/s99/undo").status, 404);
  EXPECT_EQ(svc.handle("GET", "/nothing", "").status, 404);
  EXPECT_EQ(post(svc, "/sessions/s1/rename").status, 404);
  EXPECT_EQ(svc.handle("POST", "/health", "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/sessions", "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/text/encode", "").status, 405);
  EXPECT_EQ(svc.handle("DELETE", "/sessions/s1", "").status, 405);
}

TEST_F(ServiceFixture, AcceptThenUndoRestoresExactParams) {
  auto svc = make_service();
  const auto& src = shapes_[4];
  const auto id = new_session(svc, src);
  const std::string base = "/sessions/" + id;
  EXPECT_EQ(post(svc, base + "/accept").status, 409);
  EXPECT_EQ(post(svc, base + "/undo").status, 409);

  const auto e1 = post(svc, base + "/edit", {{"utterance", "the back is taller"}, {"steps", 4}});
  ASSERT_EQ(e1.status, 200);
  const auto a1 = post(svc, base + "/accept");
  ASSERT_EQ(a1.status, 200);
  EXPECT_EQ(a1.body.at("newSourceParams"), e1.body.at("finalParams"));
  EXPECT_EQ(post(svc, base + "/accept").status, 409);

  const auto e2 = post(svc, base + "/edit", {{"utterance", "the legs are thicker"}, {"steps", 4}});
  ASSERT_EQ(e2.status, 200);
  ASSERT_EQ(post(svc, base + "/accept").status, 200);

  auto s = svc.handle("GET", base, "").body;
  ASSERT_EQ(s.at("history").size(), 2u);
  const auto first_entry = s.at("history")[0];
  EXPECT_EQ(first_entry.at("action"), "accept");
  EXPECT_EQ(first_entry.at("utterance"), "the back is taller");

  const auto u1 = post(svc, base + "/undo");
  ASSERT_EQ(u1.status, 200);
  EXPECT_EQ(params_of(u1.body.at("sourceParams")), params_of(a1.body.at("newSourceParams")));
  const auto u2 = post(svc, base + "/undo");
  ASSERT_EQ(u2.status, 200);
  EXPECT_EQ(params_of(u2.body.at("sourceParams")), src);
  EXPECT_EQ(post(svc, base + "/undo").status, 409);

  s = svc.handle("GET", base, "").body;
  EXPECT_EQ(params_of(s.at("params")), src);
  // History is append-only.
  ASSERT_EQ(s.at("history").size(), 4u);
  EXPECT_EQ(s.at("history")[0], first_entry);
  EXPECT_EQ(s.at("history")[2].at("action"), "undo");
  EXPECT_FALSE(s.at("canUndo").get<bool>());
}

TEST_F(ServiceFixture, UndoDiscardsPendingEdit) {
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[5]);
  const std::string base = "/sessions/" + id;
  ASSERT_EQ(post(svc, base + "/edit", {{"utterance", "the seat is thinner"}, {"steps", 2}}).status, 200);
  ASSERT_EQ(post(svc, base + "/accept").status, 200);
  ASSERT_EQ(post(svc, base + "/edit", {{"utterance", "the seat is thicker"}, {"steps", 2}}).status, 200);
  ASSERT_EQ(post(svc, base + "/undo").status, 200);
  EXPECT_EQ(post(svc, base + "/accept").status, 409);
}

TEST_F(ServiceFixture, TextEncodeWeightsFormSimplex) {
  auto svc = make_service();
  for (const char* u : {"the legs are longer", "make the back much thinner", "zzz"}) {
    const auto r = post(svc, "/text/encode", {{"utterance", u}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("embedding").size(), model_->joint_dim());
    const auto w = r.body.at("votingWeights").get<std::vector<double>>();
    ASSERT_EQ(w.size(), model_->experts());
    double sum = 0.0;
    for (double x : w) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST_F(ServiceFixture, EditsAreDeterministicPerSession) {
  auto a = make_service();
  auto b = make_service();
  const auto ia = new_session(a, shapes_[6]);
  const auto ib = new_session(b, shapes_[6]);
  ASSERT_EQ(ia, ib);
  const Json req{{"utterance", "the legs are longer"}, {"steps", 5}};
  const auto ra = post(a, "/sessions/" + ia + "/edit", req);
  const auto rb = post(b, "/sessions/" + ib + "/edit", req);
  EXPECT_EQ(ra.body.dump(), rb.body.dump());
  // A repeated request is a fresh edit with its own initialization.
  const auto ra2 = post(a, "/sessions/" + ia + "/edit", req);
  EXPECT_NE(ra.body.at("trace")[0].at("params"), ra2.body.at("trace")[0].at("params"));
}

TEST_F(ServiceFixture, ConcurrentSessionsMatchSequentialRuns) {
  constexpr std::size_t kSessions = 8;
  const Json req{{"utterance", "the legs are longer"}, {"steps", 5}};
  auto script = [&](EditService& svc, const std::string& id) {
    std::vector<std::string> out;
    const std::string base = "/sessions/" + id;
    for (int round = 0; round < 3; ++round) {
      out.push_back(post(svc, base + "/edit", req).body.dump());
      out.push_back(post(svc, base + "/accept").body.dump());
    }
    out.push_back(post(svc, base + "/undo").body.dump());
    out.push_back(svc.handle("GET", base, "").body.dump());
    return out;
  };

  auto seq = make_service();
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < kSessions; ++i) ids.push_back(new_session(seq, shapes_[10 + i]));
  std::vector<std::vector<std::string>> expected;
  for (const auto& id : ids) expected.push_back(script(seq, id));

  auto par = make_service();
  for (std::size_t i = 0; i < kSessions; ++i) ASSERT_EQ(new_session(par, shapes_[10 + i]), ids[i]);
  std::vector<std::vector<std::string>> got(kSessions);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < kSessions; ++i) {
    threads.emplace_back([&, i] { got[i] = script(par, ids[i]); });
  }
  for (auto& t : threads) t.join();
  for (std::size_t i = 0; i < kSessions; ++i) EXPECT_EQ(got[i], expected[i]) << ids[i];
}

TEST_F(ServiceFixture, ConcurrentRequestsInOneSessionAreSerialized) {
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[30]);
  const std::string base = "/sessions/" + id;
  ASSERT_EQ(post(svc, base + "/edit", {{"utterance", "the seat is wider"}, {"steps", 3}}).status, 200);
  std::atomic<int> accepted{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&] {
      if (post(svc, base + "/accept").status == 200) ++accepted;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(accepted.load(), 1);
  EXPECT_EQ(svc.handle("GET", base, "").body.at("history").size(), 1u);
}

TEST_F(ServiceFixture, ModelsUnchangedByServing) {
  const auto ae_hash = ae_->hash();
  const auto model_hash = model_->hash();
  auto svc = make_service();
  const auto id = new_session(svc, shapes_[40]);
  ASSERT_EQ(post(svc, "/sessions/" + id + "/edit", {{"utterance", "the legs are longer"}}).status, 200);
  EXPECT_EQ(ae_->hash(), ae_hash);
  EXPECT_EQ(model_->hash(), model_hash);
}

TEST_F(ServiceFixture, HttpBinding) {
  auto svc = make_service();
  HttpServer server(svc, "http://ui.local");
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  auto health = client.Get("/health");
  for (int tries = 0; !health && tries < 50; ++tries) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    health = client.Get("/health");
  }
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "http://ui.local");
  EXPECT_EQ(Json::parse(health->body).at("status"), "ok");

  const auto created = client.Post("/sessions", Json{{"params", params_to_json(shapes_[7])}}.dump(),
                                   "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 200);
  const auto id = Json::parse(created->body).at("sessionId").get<std::string>();

  const auto edited = client.Post("/sessions/" + id + "/edit",
                                  Json{{"utterance", "the legs are longer"}, {"steps", 3}}.dump(),
                                  "application/json");
  ASSERT_TRUE(edited);
  EXPECT_EQ(edited->status, 200);
  EXPECT_EQ(Json::parse(edited->body).at("trace").size(), 4u);

  const auto missing = client.Get("/sessions/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  const auto malformed = client.Post("/sessions/" + id + "/edit", "{", "application/json");
  ASSERT_TRUE(malformed);
  EXPECT_EQ(malformed->status, 400);
  const auto preflight = client.Options("/sessions");
  ASSERT_TRUE(preflight);
  EXPECT_EQ(preflight->status, 204);
  EXPECT_EQ(preflight->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");

  server.stop();
  loop.join();
}
