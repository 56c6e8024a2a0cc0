// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "saeforge/completion.hpp"
#include "saeforge/error.hpp"
#include "saeforge/prompts.hpp"

using namespace saeforge;

namespace {

std::string read_golden(const std::string& name) {
  std::ifstream in(std::string(SAEFORGE_TEST_DATA_DIR) + "/golden/" + name, std::ios::binary);
  REQUIRE(in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("interpreter prompt matches the golden rendering byte for byte") {
  const std::vector<ActivatingText> max = {
      {"We measure the CMB temperature anisotropy power spectrum.", 2.5},
      {"Polarization of the cosmic microwave background constrains reionization.", 1.125}};
  const std::vector<std::string> zero = {"A survey of exoplanet atmospheres.",
                                         "Stellar winds in massive binaries."};
  CHECK(render_interpreter_prompt("astrophysics", "astrophysics", max, zero) ==
        read_golden("interpreter_prompt.txt"));
  // Empty type falls back to the subject.
  CHECK(render_interpreter_prompt("astrophysics", "", max, zero) ==
        read_golden("interpreter_prompt.txt"));
}

TEST_CASE("predictor prompt matches the golden rendering byte for byte") {
  CHECK(render_predictor_prompt("astrophysics", "Cosmic Microwave Background",
                                "We present new Planck constraints on the optical depth to reionization.") ==
        read_golden("predictor_prompt.txt"));
}

TEST_CASE("example formatting") {
  const std::vector<ActivatingText> max = {{"alpha", 3.0}, {"beta", 0.12345}};
  CHECK(format_max_examples(max) == "Example 1 (activation 3.0000): alpha\nExample 2 (activation 0.1235): beta");
  const std::vector<std::string> zero = {"gamma"};
  CHECK(format_zero_examples(zero) == "Example 1: gamma");
}

TEST_CASE("FINAL label parsing") {
  CHECK(parse_final_label("reasoning...\nFINAL: Gravitational Lensing") == "Gravitational Lensing");
  CHECK(parse_final_label("FINAL: first\nmore\nFINAL: second label") == "second label");
  CHECK(parse_final_label("**FINAL:** \"Dark Matter Halos\"") == "Dark Matter Halos");
  CHECK_FALSE(parse_final_label("no label here").has_value());
  CHECK_FALSE(parse_final_label("FINAL:   ").has_value());
  CHECK(parse_final_label("FINAL: one two three four five six seven eight").has_value());
  CHECK_FALSE(parse_final_label("FINAL: one two three four five six seven eight nine").has_value());
}

TEST_CASE("PREDICTION parsing") {
  CHECK(parse_prediction("steps\nPREDICTION: 0.5") == doctest::Approx(0.5));
  CHECK(parse_prediction("PREDICTION: -0.75") == doctest::Approx(-0.75));
  CHECK(parse_prediction("PREDICTION: 0.1\nPREDICTION: 0.9") == doctest::Approx(0.9));
  CHECK(parse_prediction("PREDICTION: (0.3)") == doctest::Approx(0.3));
  CHECK(parse_prediction("PREDICTION: 1.7") == doctest::Approx(1.7));  // clamped by callers
  CHECK_FALSE(parse_prediction("PREDICTION: maybe").has_value());
  CHECK_FALSE(parse_prediction("nothing").has_value());
}

TEST_CASE("judge and rewriter parsing") {
  CHECK(parse_judge_answer("thinking\nANSWER: C") == 'C');
  CHECK(parse_judge_answer("ANSWER: (b)") == 'B');
  CHECK_FALSE(parse_judge_answer("no idea").has_value());
  CHECK(parse_rewritten_query("QUERY: dark energy surveys") == "dark energy surveys");
  CHECK(parse_rewritten_query("  plain text  ") == "plain text");
}

TEST_CASE("judge prompt lists options and truncates abstracts") {
  const std::vector<RetrievedText> before = {{"T1", std::string(500, 'a')}};
  const std::vector<RetrievedText> after = {{"T2", "short"}};
  const std::vector<JudgeOption> options = {{'A', "Lensing"}, {'B', "Exoplanets"}};
  const auto prompt = render_judge_prompt("query", before, after, true, options, 300);
  CHECK(prompt.find("A) Lensing") != std::string::npos);
  CHECK(prompt.find("B) Exoplanets") != std::string::npos);
  CHECK(prompt.find(std::string(301, 'a')) == std::string::npos);
  CHECK(prompt.find(std::string(300, 'a')) != std::string::npos);
}

TEST_CASE("mock completion client scripts") {
  MockCompletionClient mock(nlohmann::json::parse(R"({
    "interpreter": {"3": "FINAL: three", "*": ["FINAL: a", "FINAL: b"]},
    "predictor": {"3": {"d1": "PREDICTION: 1", "*": "PREDICTION: -1"}}
  })"));
  CompletionRequest req;
  req.role = Role::kInterpreter;
  req.feature_id = 3;
  CHECK(mock.complete(req) == "FINAL: three");
  req.feature_id = 7;
  CHECK(mock.complete(req) == "FINAL: a");
  CHECK(mock.complete(req) == "FINAL: b");
  CHECK(mock.complete(req) == "FINAL: b");
  req.role = Role::kPredictor;
  req.feature_id = 3;
  req.doc_id = "d1";
  CHECK(mock.complete(req) == "PREDICTION: 1");
  req.doc_id = "d2";
  CHECK(mock.complete(req) == "PREDICTION: -1");
  req.feature_id = 9;
  CHECK_THROWS_AS(mock.complete(req), ClientError);
  req.role = Role::kJudge;
  CHECK_THROWS_AS(mock.complete(req), ClientError);
  CHECK(mock.calls() == 8);
}

TEST_CASE("role names round trip") {
  for (auto role : {Role::kInterpreter, Role::kPredictor, Role::kSuperfeature, Role::kJudge, Role::kRewriter}) {
    CHECK(role_from_string(to_string(role)) == role);
  }
  CHECK_THROWS(role_from_string("oracle"));
}

TEST_CASE("endpoint config defaults") {
  const auto e = endpoint_from_json(nlohmann::json::parse(R"({"base_url": "http://x", "model": "m"})"),
                                    "/v1/chat/completions");
  CHECK(e.path == "/v1/chat/completions");
  CHECK(e.max_retries == 3);
  CHECK(e.model == "m");
}

TEST_CASE("unreachable endpoint raises ClientError") {
  HttpEndpoint e;
  e.base_url = "http://127.0.0.1:1";
  e.path = "/v1/chat/completions";
  e.max_retries = 0;
  e.timeout_seconds = 1;
  HttpCompletionClient client(e);
  CompletionRequest req;
  req.prompt = "hi";
  CHECK_THROWS_AS(client.complete(req), ClientError);
}
