#include "forge/expert_gateway.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "forge/error.hpp"
#include "forge/mock_provider.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

const ImageRef kImage{"coco", "42", 640, 480, "42.jpg", std::nullopt};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

ProviderEndpoint endpoint(ProviderKind kind, int attempts = 3) {
  ProviderEndpoint e;
  e.kind = kind;
  e.retry.max_attempts = attempts;
  if (kind == ProviderKind::kDepthProvider) e.depth_convention = DepthConvention::kDistanceIncreasing;
  return e;
}

ProviderResponse reply(const ProviderRequest& req, Json body) { return {req.correlation_id, std::move(body)}; }

// Gateway whose `kind` client answers with `text`.
ExpertGateway text_gateway(ProviderKind kind, const std::string& text) {
  ExpertGateway g;
  g.configure(endpoint(kind), std::make_shared<FunctionTransport>([text](const ProviderRequest& r) {
                return reply(r, {{"text", text}});
              }),
              [](double) {});
  return g;
}

}  // namespace

TEST(CaptionParseTest, PromptFormat) {
  const auto r = parse_caption_response(
      "Caption: A dog chases a ball on grass. The sky is clear.\nObjects: [\"dog\", \"ball\", \"grass\"]");
  EXPECT_EQ(r.caption, "A dog chases a ball on grass. The sky is clear.");
  EXPECT_EQ(r.objects, (std::vector<std::string>{"dog", "ball", "grass"}));
}

TEST(CaptionParseTest, MissingObjectsMarker) {
  EXPECT_EQ(code_of([] { parse_caption_response("Caption: a cat"); }), ErrorCode::kMissingObjects);
}

TEST(CaptionParseTest, MissingCaptionMarker) {
  EXPECT_EQ(code_of([] { parse_caption_response("Objects: [\"cat\"]"); }), ErrorCode::kMissingCaption);
}

TEST(CaptionParseTest, EmptyList) {
  EXPECT_TRUE(parse_caption_response("Caption: empty road\nObjects: []").objects.empty());
}

TEST(CaptionParseTest, UnbalancedList) {
  EXPECT_EQ(code_of([] { parse_caption_response("Caption: x\nObjects: [\"cat\", \"dog\""); }),
            ErrorCode::kUnbalancedList);
}

TEST(CaptionParseTest, ArbitraryTextNeverCrashes) {
  const std::vector<std::string> junk = {"", "Objects:", "Caption:\nObjects: [", "]]]]", "Caption: [\"\nObjects: [\"\\\"]",
                                         std::string(1000, '['), "Caption: a\0b\nObjects: []"};
  for (const auto& s : junk) {
    try {
      parse_caption_response(s);
    } catch (const Error&) {
    }
  }
}

TEST(OrientationParseTest, Front) {
  const auto r = parse_orientation_response(
      R"({"description": "the young man in white hockey helmet and black jersey", "facing": "front"})");
  EXPECT_EQ(r.facing, FacingLabel::kFront);
  EXPECT_EQ(r.description, "the young man in white hockey helmet and black jersey");
}

TEST(OrientationParseTest, Errors) {
  EXPECT_EQ(code_of([] { parse_orientation_response(R"({"description": "x", "facing": "upward"})"); }),
            ErrorCode::kUnknownLabel);
  EXPECT_EQ(code_of([] { parse_orientation_response(R"({"facing": "back"})"); }), ErrorCode::kMissingKey);
  EXPECT_EQ(code_of([] { parse_orientation_response("facing: back"); }), ErrorCode::kInvalidJson);
}

TEST(RegionCaptionTest, AcceptsPromptExample) {
  const auto r =
      clean_region_caption("Red plastic bottle with white screw cap, cylindrical, located on the right side", 20);
  EXPECT_EQ(r.caption, "Red plastic bottle with white screw cap, cylindrical, located on the right side");
  EXPECT_FALSE(r.truncated);
  EXPECT_FALSE(r.warning.has_value());
}

TEST(RegionCaptionTest, Empty) {
  EXPECT_EQ(code_of([] { clean_region_caption("  \n", 20); }), ErrorCode::kEmptyCaption);
}

TEST(RegionCaptionTest, OverLimitIsTruncatedWithWarning) {
  std::string sixty;
  for (int i = 0; i < 60; ++i) sixty += "word" + std::to_string(i) + " ";
  const auto r = clean_region_caption(sixty, 20);
  EXPECT_TRUE(r.truncated);
  ASSERT_TRUE(r.warning.has_value());
  EXPECT_EQ(std::count(r.caption.begin(), r.caption.end(), ' '), 19);
  EXPECT_FALSE(clean_region_caption(sixty, 0).truncated);
}

TEST(ObjectNameTest, Normalization) {
  EXPECT_EQ(normalize_object_name("  Dogs "), "dog");
  EXPECT_EQ(normalize_object_name("image"), "");
}

TEST(ClientTest, ExhaustedRetries) {
  int calls = 0;
  ProviderClient c(endpoint(ProviderKind::kCaptioner, 3), std::make_shared<FunctionTransport>([&](const ProviderRequest&) -> ProviderResponse {
                     ++calls;
                     throw TransportError("connection refused");
                   }),
                   [](double) {});
  EXPECT_EQ(code_of([&] { c.call("caption", Json{{"x", 1}}); }), ErrorCode::kExhaustedRetries);
  EXPECT_EQ(calls, 3);
}

TEST(ClientTest, RecoversAfterTransientFailures) {
  int calls = 0;
  std::vector<double> sleeps;
  ProviderClient c(endpoint(ProviderKind::kCaptioner, 5), std::make_shared<FunctionTransport>([&](const ProviderRequest& r) {
                     if (++calls < 3) throw TransportError("503");
                     return reply(r, {{"text", "ok"}});
                   }),
                   [&](double ms) { sleeps.push_back(ms); });
  EXPECT_EQ(c.call("caption", Json{{"x", 1}}).body["text"], "ok");
  ASSERT_EQ(sleeps.size(), 2u);
  // Jittered within [base * 2^k / 2, base * 2^k].
  EXPECT_GE(sleeps[0], 25.0);
  EXPECT_LE(sleeps[0], 50.0);
  EXPECT_GE(sleeps[1], 50.0);
  EXPECT_LE(sleeps[1], 100.0);
}

TEST(ClientTest, PermanentErrorsAreNotRetried) {
  int calls = 0;
  ProviderClient c(endpoint(ProviderKind::kCaptioner, 5), std::make_shared<FunctionTransport>([&](const ProviderRequest&) -> ProviderResponse {
                     ++calls;
                     throw Error(ErrorCode::kUnparseableResponse, "bad");
                   }),
                   [](double) {});
  EXPECT_EQ(code_of([&] { c.call("caption", Json::object()); }), ErrorCode::kUnparseableResponse);
  EXPECT_EQ(calls, 1);
}

TEST(ClientTest, CorrelationMismatch) {
  ProviderClient c(endpoint(ProviderKind::kCaptioner), std::make_shared<FunctionTransport>([](const ProviderRequest&) {
                     return ProviderResponse{"someone-else", Json::object()};
                   }),
                   [](double) {});
  EXPECT_EQ(code_of([&] { c.call("caption", Json::object()); }), ErrorCode::kCorrelationMismatch);
}

TEST(ClientTest, CorrelationIdIsContentDerived) {
  const Json a = {{"b", 1}, {"a", 2}};
  const Json b = {{"a", 2}, {"b", 1}};
  EXPECT_EQ(make_correlation_id(ProviderKind::kJudge, "answer", a), make_correlation_id(ProviderKind::kJudge, "answer", b));
  EXPECT_NE(make_correlation_id(ProviderKind::kJudge, "answer", a),
            make_correlation_id(ProviderKind::kJudge, "answer", Json{{"a", 3}}));
  EXPECT_EQ(make_correlation_id(ProviderKind::kJudge, "answer", a).rfind("judge.answer.", 0), 0u);
}

TEST(ClientTest, InFlightBound) {
  auto ep = endpoint(ProviderKind::kJudge);
  ep.max_in_flight = 2;
  std::atomic<int> current{0}, worst{0};
  ProviderClient c(ep, std::make_shared<FunctionTransport>([&](const ProviderRequest& r) {
                     const int now = ++current;
                     int w = worst.load();
                     while (now > w && !worst.compare_exchange_weak(w, now)) {
                     }
                     std::this_thread::sleep_for(std::chrono::milliseconds(5));
                     --current;
                     return reply(r, {{"text", "x"}});
                   }),
                   [](double) {});
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { c.call("answer", Json{{"i", i}}); });
  for (auto& t : threads) t.join();
  EXPECT_LE(worst.load(), 2);
  EXPECT_LE(c.peak_in_flight(), 2);
}

TEST(EndpointTest, DepthNeedsConvention) {
  ProviderEndpoint e;
  e.kind = ProviderKind::kDepthProvider;
  EXPECT_THROW(e.validate(), Error);
  e.depth_convention = DepthConvention::kDistanceDecreasing;
  EXPECT_NO_THROW(e.validate());
}

TEST(GatewayTest, CaptionFromMock) {
  auto g = text_gateway(ProviderKind::kCaptioner, "Caption: A dog on grass.\nObjects: [\"dog\", \"grass\"]");
  const auto r = g.request_global_caption(kImage);
  EXPECT_EQ(r, (CaptionResult{"A dog on grass.", {"dog", "grass"}}));
}

TEST(GatewayTest, UnconfiguredProvider) {
  ExpertGateway g;
  EXPECT_EQ(code_of([&] { g.request_global_caption(kImage); }), ErrorCode::kUnconfiguredProvider);
}

TEST(GatewayTest, DetectionClipsAndKeepsDuplicates) {
  ExpertGateway g;
  g.configure(endpoint(ProviderKind::kDetector), std::make_shared<FunctionTransport>([](const ProviderRequest& r) {
                Json results = Json::array();
                for (size_t i = 0; i < r.body["queries"].size(); ++i) {
                  results.push_back({{"boxes", Json::array({{{"bbox", {-20, 10, 700, 200}}, {"confidence", 0.4}},
                                                            {{"bbox", {10, 10, 50, 50}}, {"confidence", 0.9}}})}});
                }
                return reply(r, {{"results", results}});
              }),
              [](double) {});
  const auto res = g.detect_objects(kImage, {"dog", "dog"});
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[0].boxes.size(), res[1].boxes.size());
  EXPECT_DOUBLE_EQ(res[0].boxes[0].confidence, 0.9);
  EXPECT_EQ(res[0].boxes[1].bbox, (BBox{0, 10, 640, 200}));
}

TEST(GatewayTest, JudgeAnswerIsPassedThrough) {
  auto g = text_gateway(ProviderKind::kJudge, "<box>[1, 2, 3, 4]</box>");
  EXPECT_EQ(g.judge_answer(kImage, "where?", "q1"), "<box>[1, 2, 3, 4]</box>");
}

TEST(GatewayTest, JudgeOutageAfterRetries) {
  ExpertGateway g;
  g.configure(endpoint(ProviderKind::kJudge, 2), std::make_shared<FunctionTransport>([](const ProviderRequest&) -> ProviderResponse {
                throw TransportError("timeout");
              }),
              [](double) {});
  EXPECT_EQ(code_of([&] { g.judge_answer(kImage, "q", "id"); }), ErrorCode::kExhaustedRetries);
}

TEST(GatewayTest, DepthProviderDecreasingIsCanonicalized) {
  ExpertGateway g;
  auto ep = endpoint(ProviderKind::kDepthProvider);
  ep.depth_convention = DepthConvention::kDistanceDecreasing;
  const ImageRef small{"s", "1", 2, 1, "1.png", std::nullopt};
  g.configure(ep, std::make_shared<FunctionTransport>([](const ProviderRequest& r) {
                return reply(r, {{"width", 2}, {"height", 1}, {"values", {2.0, 4.0}}});
              }),
              [](double) {});
  const DepthMap m = g.fetch_depth_map(small);
  EXPECT_EQ(m.convention, DepthConvention::kDistanceIncreasing);
  EXPECT_FLOAT_EQ(m.at(0, 0), 0.5f);
  EXPECT_FLOAT_EQ(m.at(1, 0), 0.25f);
}

TEST(GatewayTest, DepthDimensionMismatch) {
  ExpertGateway g;
  g.configure(endpoint(ProviderKind::kDepthProvider), std::make_shared<FunctionTransport>([](const ProviderRequest& r) {
                return reply(r, {{"width", 3}, {"height", 1}, {"values", {1.0, 1.0, 1.0}}});
              }),
              [](double) {});
  EXPECT_EQ(code_of([&] { g.fetch_depth_map(kImage); }), ErrorCode::kDimensionMismatch);
}

TEST(GatewayTest, DepthArtifactConstantMap) {
  const fs::path dir = fs::path(::testing::TempDir()) / "forge_gateway_depth";
  fs::create_directories(dir);
  DepthMap m;
  m.width = 8;
  m.height = 6;
  m.values.assign(48, 5.0f);
  write_depth_artifact((dir / "d.pfm").string(), m);
  ImageRef img{"s", "1", 8, 6, "1.png", (dir / "d.pfm").string()};
  ExpertGateway g;
  EXPECT_EQ(g.probe_depth_artifact(img).width, 8);
  const DepthMap back = g.fetch_depth_map(img);
  for (float v : back.values) EXPECT_EQ(v, 5.0f);
  img.width = 9;
  EXPECT_EQ(code_of([&] { g.probe_depth_artifact(img); }), ErrorCode::kDimensionMismatch);
}

TEST(ReplayTest, RecordThenReplay) {
  const std::string dir = (fs::path(::testing::TempDir()) / "forge_replay").string();
  fs::remove_all(dir);
  auto inner = std::make_shared<FunctionTransport>([](const ProviderRequest& r) { return reply(r, {{"text", "recorded"}}); });
  RecordingTransport rec(inner, dir);
  ProviderRequest req;
  req.kind = ProviderKind::kJudge;
  req.operation = "answer";
  req.body = {{"q", 1}};
  req.correlation_id = make_correlation_id(req.kind, req.operation, req.body);
  rec.send(req);
  EXPECT_TRUE(fs::exists(replay_fixture_path(dir, req)));
  ReplayTransport replay(dir);
  EXPECT_EQ(replay.send(req).body["text"], "recorded");
  req.body = {{"q", 2}};
  req.correlation_id = make_correlation_id(req.kind, req.operation, req.body);
  EXPECT_EQ(code_of([&] { replay.send(req); }), ErrorCode::kMissingFixture);
}

TEST(HttpTest, ConnectionFailureIsTransient) {
  HttpTransport t("http://127.0.0.1:1", "", 1.0);
  ProviderRequest req;
  req.kind = ProviderKind::kJudge;
  req.operation = "answer";
  EXPECT_THROW(t.send(req), TransportError);
}

TEST(MockTest, MutatedAnswersDiffer) {
  QARecord r;
  r.task = TaskKind::kCounting;
  r.answer = "3";
  EXPECT_EQ(mutate_answer(r), "4");
  r.task = TaskKind::kLeftRight;
  r.answer = "left";
  EXPECT_EQ(mutate_answer(r), "right");
}

TEST(MockTest, EmbeddingIsDeterministicUnitVector) {
  MockProvider p(std::make_shared<MockWorld>(), std::make_shared<GoldBoard>());
  const auto a = p.embed("street scene");
  EXPECT_EQ(a, p.embed("street scene"));
  double n = 0;
  for (double v : a) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-12);
}
