#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "rox/advisory.hpp"
#include "rox/error.hpp"
#include "rox/pipeline.hpp"

using namespace rox;

namespace {

std::string read_golden(const char* name) {
  std::ifstream in(std::string(ROX_GOLDEN_DIR) + "/" + name, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::uint64_t reference_fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

RankedDistribution two_causes() {
  const CategoricalDomain d(Var::C, {"Leakage", "Accident"});
  const std::vector<double> p = {0.9, 0.1};
  return RankedDistribution::from_probabilities(Var::C, d, p);
}

const CbnModel& fixture_model() {
  static const CbnModel m = [] {
    TrainOptions options;
    options.seed = 42;
    return train_model(ingest_file(ROX_TEST_DATA_DIR "/fixture.jsonl").corpus, options);
  }();
  return m;
}

}  // namespace

TEST_CASE("compiled templates match the golden copies byte for byte") {
  CHECK(templates::query() == read_golden("query.txt"));
  CHECK(templates::instruction() == read_golden("instruction.txt"));
  CHECK(templates::safety() == read_golden("safety.txt"));
  const std::string all = read_golden("query.txt") + read_golden("instruction.txt") + read_golden("safety.txt");
  CHECK(templates::checksum() == reference_fnv1a(all));
  CHECK(templates::checksum() == templates::kPinnedChecksum);
}

TEST_CASE("prompt substitutes every placeholder into byte-exact blocks") {
  const std::vector<std::string> sols = {"Replace the worn pad.", "  Tighten bolts  "};
  const auto b = build_prompt("brake squeal at low speed", two_causes(), sols);

  std::string q = read_golden("query.txt");
  q.replace(q.find("{O}"), 3, "brake squeal at low speed");
  q.replace(q.find("{C}"), 3, "Leakage (p=0.90), Accident (p=0.10)");
  q.replace(q.find("{S}"), 3, "\n1. Replace the worn pad.\n2. Tighten bolts");
  CHECK(b.query_block == q);
  CHECK(b.instruction_block == read_golden("instruction.txt"));
  std::string s = read_golden("safety.txt");
  s.replace(s.find("{Q}"), 3, q);
  CHECK(b.safety_block == s);
  CHECK(b.assembled == b.instruction_block + "\n" + b.safety_block);
  for (const char* token : {"{O}", "{C}", "{S}", "{Q}"}) CHECK(b.assembled.find(token) == std::string::npos);
  CHECK(b.solutions == sols);
}

TEST_CASE("assembled prompt carries the instruction once and ends with the query sentence") {
  const auto b = build_prompt("door stuck", two_causes(), {"Lubricate the rail"});
  CHECK(count_of(b.assembled, "You are an advanced smart troubleshooter assistant") == 1);
  const std::string tail = "Now, give the Solution to this query: " + b.query_block + ".";
  REQUIRE(b.assembled.size() >= tail.size());
  CHECK(b.assembled.substr(b.assembled.size() - tail.size()) == tail);
}

TEST_CASE("empty solution list renders the empty-slot text") {
  const auto b = build_prompt("door stuck", two_causes(), {});
  CHECK(b.query_block.find("are: none on record.") != std::string::npos);
  CHECK_THROWS_AS(build_prompt("x", RankedDistribution{}, {}), Error);
}

TEST_CASE("placeholder-like text in inputs is not re-expanded") {
  const auto b = build_prompt("{C} {Q}", two_causes(), {"{S}"});
  CHECK(b.query_block.find("Observation: {C} {Q},") != std::string::npos);
  CHECK(b.query_block.find("1. {S}") != std::string::npos);
}

TEST_CASE("stub generator emits one option per retrieved text") {
  const auto b = build_prompt("x", two_causes(),
                              {"replace the pad and check the disc for scoring", "grease hinge", "tighten the bolts"});
  StubGenerator stub;
  const Advisory a = stub.generate(b);
  REQUIRE(a.options.size() == 3);
  CHECK(a.options[0] == "Option 1 : Replace the pad and check the disc for scoring");
  CHECK(a.options[1] == "Option 2 : Grease hinge");
  CHECK(a.provenance == "stub");
  CHECK(a.raw_generation.starts_with("- Option 1 : "));
  CHECK(stub.generate(b).raw_generation == a.raw_generation);
  CHECK(imperative_prefix("one two three four five six seven eight nine ten eleven twelve thirteen") ==
        "One two three four five six seven eight nine ten eleven twelve");
}

TEST_CASE("option parsing round trips through the listing layout") {
  const auto b = build_prompt("x", two_causes(), {"a", "b", "c", "d"});
  const Advisory a = StubGenerator{}.generate(b);
  CHECK(parse_options(format_options(a.options)) == a.options);
  CHECK(parse_options(a.raw_generation) == a.options);
}

TEST_CASE("option parser accepts bullet variants and ignores prose") {
  const std::string text =
      "Here are my ideas:\n"
      "  * option A : swap it\r\n"
      "- SOLUTION 2: check it\n"
      "\xE2\x80\xA2 Option 3 : log it\n"
      "- not an option line\n"
      "Option 4 without bullet\n";
  const auto opts = parse_options(text);
  REQUIRE(opts.size() == 3);
  CHECK(opts[0] == "option A : swap it");
  CHECK(opts[1] == "SOLUTION 2: check it");
  CHECK(opts[2] == "Option 3 : log it");
  CHECK(parse_options("The pads are worn. Replace them soon.").empty());
  CHECK(parse_options("").empty());
}

TEST_CASE("retrieval on a trained fixture model") {
  const CbnModel& m = fixture_model();
  REQUIRE(m.solution_index);
  const auto& index = *m.solution_index;
  CHECK(index.buckets.size() == m.domain(Var::S).size());

  std::size_t total = 0;
  for (std::size_t cat = 0; cat < index.buckets.size(); ++cat) {
    const auto& bucket = index.buckets[cat];
    total += bucket.size();
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      CHECK(m.encode_solution(bucket[i].text) == cat);
      if (i > 0) CHECK(bucket[i - 1].distance <= bucket[i].distance);
    }
    const auto got = retrieve(index, static_cast<CategoryId>(cat), bucket.size() + 10);
    CHECK(got.size() == bucket.size());
    CHECK(retrieve(index, static_cast<CategoryId>(cat), 0).empty());
    if (!bucket.empty()) CHECK(retrieve(index, static_cast<CategoryId>(cat), 1).front() == bucket.front().text);
  }
  CHECK(total == 120);
  try {
    retrieve(index, static_cast<CategoryId>(index.buckets.size()), 3);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLookup);
  }

  const auto corpus = ingest_file(ROX_TEST_DATA_DIR "/fixture.jsonl").corpus;
  CHECK(build_index(corpus, *m.solution_quantizer, m.text) == index);
  CHECK(build_index(corpus, *m.solution_quantizer, m.text) == build_index(corpus, *m.solution_quantizer, m.text));
}

TEST_CASE("remote generator posts the prompt and parses a long option list") {
  const std::vector<std::string> titles = {"Check and Replace Bolts",      "Address Oil Leakage",
                                           "Replace Snapped Earth Cable",  "Address Corrosion",
                                           "Adjust or Replace Fixings",    "Inspect Sanding Compressor",
                                           "Address Worn Cable Insulation", "Replace Damaged Component"};
  std::string reply = "Based on the records, consider:\n";
  for (std::size_t i = 0; i < titles.size(); ++i)
    reply += "- Solution " + std::to_string(i + 1) + ": " + titles[i] + ". Details follow.\n";
  reply += "These may not be exhaustive.";

  httplib::Server server;
  nlohmann::json request;
  std::string auth;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    request = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(nlohmann::json{{"text", reply}, {"model", "fake-gen-1"}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteGeneratorConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/generate";
  config.api_key = "test-token";
  config.max_tokens = 64;
  RemoteGenerator gen(config);
  const auto prompt = build_prompt("loose suspension", two_causes(), {"Tighten bolts"});
  const Advisory a = gen.generate(prompt);
  server.stop();
  t.join();

  CHECK(request.at("prompt") == prompt.assembled);
  CHECK(request.at("max_tokens") == 64);
  CHECK(auth == "Bearer test-token");
  REQUIRE(a.options.size() == 8);
  CHECK(a.options[0] == "Solution 1: Check and Replace Bolts. Details follow.");
  CHECK(a.options[7].starts_with("Solution 8: Replace Damaged Component"));
  CHECK(a.raw_generation == reply);
  CHECK(a.provenance == "fake-gen-1");
}

TEST_CASE("remote prose reply keeps the raw text and yields no options") {
  httplib::Server server;
  server.Post("/g", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text":"Check the bolts and the seals."})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  RemoteGeneratorConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/g";
  const Advisory a = RemoteGenerator(config).generate(build_prompt("x", two_causes(), {}));
  server.stop();
  t.join();
  CHECK(a.options.empty());
  CHECK(a.raw_generation == "Check the bolts and the seals.");
  CHECK(a.provenance == "remote");
}

TEST_CASE("remote generator failures are retryable transport errors") {
  RemoteGeneratorConfig config;
  config.url = "http://127.0.0.1:1/generate";
  config.timeout_ms = 500;
  config.api_key = "secret-value";
  try {
    RemoteGenerator(config).generate(build_prompt("x", two_causes(), {}));
    FAIL("expected an exception");
  } catch (const TransportError& e) {
    CHECK(e.endpoint() == config.url);
    const std::string what = e.what();
    CHECK(what.find("retryable") != std::string::npos);
    CHECK(what.find("secret-value") == std::string::npos);
  }
  CHECK_THROWS_AS(RemoteGenerator(RemoteGeneratorConfig{}), Error);
  config.max_concurrent = 0;
  CHECK_THROWS_AS(RemoteGenerator{config}, Error);
}
