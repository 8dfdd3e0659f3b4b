#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

#include "sdoh/errors.hpp"
#include "sdoh/llm.hpp"
#include "sdoh/util.hpp"
#include "test_support.hpp"

using namespace sdoh;

#ifndef SDOH_SOURCE_DIR
#define SDOH_SOURCE_DIR "."
#endif

namespace {

PromptTemplate simple_few_shot() {
  return make_prompt_template("Sentence: {{ text }}\nLabels:", PromptKind::few_shot);
}

}  // namespace

TEST_SUITE("llm") {

TEST_CASE("template slot invariants") {
  CHECK_NOTHROW(make_prompt_template("{{ text }}", PromptKind::few_shot));
  CHECK_NOTHROW(make_prompt_template("{{ text }} -> {{ labels }}", PromptKind::train));
  CHECK_THROWS_AS(make_prompt_template("no slots at all", PromptKind::few_shot),
                  ValidationError);
  CHECK_THROWS_AS(make_prompt_template("{{ text }} only", PromptKind::train), ValidationError);
  CHECK_THROWS_AS(make_prompt_template("{{ text }} {{ labels }}", PromptKind::few_shot),
                  ValidationError);
  CHECK_THROWS_AS(load_prompt_template("/nonexistent/prompt.txt", PromptKind::few_shot),
                  ParseError);
  CHECK(to_string(PromptKind::few_shot) == "few_shot");
  CHECK(to_string(PromptKind::train) == "train");
}

TEST_CASE("builtin templates stay byte-identical to the shipped files") {
  std::string few_file = testsup::read_file(SDOH_SOURCE_DIR "/prompts/few_shot.txt");
  std::string train_file = testsup::read_file(SDOH_SOURCE_DIR "/prompts/train.txt");
  CHECK(builtin_template(PromptKind::few_shot).body == few_file);
  CHECK(builtin_template(PromptKind::train).body == train_file);
  // and the files themselves pass the slot invariants
  CHECK_NOTHROW(load_prompt_template(SDOH_SOURCE_DIR "/prompts/few_shot.txt",
                                     PromptKind::few_shot));
  CHECK_NOTHROW(load_prompt_template(SDOH_SOURCE_DIR "/prompts/train.txt", PromptKind::train));
}

TEST_CASE("label sets render in declaration order") {
  CHECK(labels_to_prompt(LabelSet{}) == "-");
  CHECK(labels_to_prompt(LabelSet{SdohLabel::housing}) == "housing");
  CHECK(labels_to_prompt(LabelSet{SdohLabel::support, SdohLabel::housing,
                                  SdohLabel::employment}) ==
        "housing, employment, support");
  LabelSet all = LabelSet::from_mask(0x3f);
  CHECK(labels_to_prompt(all) ==
        "housing, transportation, relationship, parent, employment, support");
}

TEST_CASE("prompt rendering substitutes every slot occurrence") {
  PromptTemplate t =
      make_prompt_template("A {{ text }} B {{ text }} C", PromptKind::few_shot);
  CHECK(render_prompt(t, "xx") == "A xx B xx C");

  PromptTemplate tr =
      make_prompt_template("T: {{ text }}\nL: {{ labels }}", PromptKind::train);
  std::string out =
      render_prompt(tr, "lives with daughter", LabelSet{SdohLabel::parent, SdohLabel::housing});
  CHECK(out == "T: lives with daughter\nL: housing, parent");

  PromptTemplate withf =
      make_prompt_template("{{ features }} | {{ text }}", PromptKind::few_shot);
  CHECK(render_prompt(withf, "txt", std::nullopt, "POS=NOUN") == "POS=NOUN | txt");
  CHECK(render_prompt(withf, "txt") == " | txt");

  // a train template must get labels, a few_shot template must not
  CHECK_THROWS_AS(render_prompt(tr, "text"), ValidationError);
  CHECK_THROWS_AS(render_prompt(t, "text", LabelSet{SdohLabel::housing}), ValidationError);
}

TEST_CASE("parser prefers the last complete backtick group") {
  ParsedLLMOutput out = parse_output("reasoning...\n```housing, support```\ndone");
  CHECK(out.parse_mode == ParseMode::backtick);
  CHECK(out.labels == LabelSet{SdohLabel::housing, SdohLabel::support});
  CHECK(out.hallucinated_tokens.empty());
  CHECK(out.raw == "reasoning...\n```housing, support```\ndone");

  out = parse_output("```housing``` revised answer: ```employment```");
  CHECK(out.labels == LabelSet{SdohLabel::employment});

  // an unterminated trailing group does not shadow the complete one
  out = parse_output("```housing``` and then ```emplo");
  CHECK(out.parse_mode == ParseMode::backtick);
  CHECK(out.labels == LabelSet{SdohLabel::housing});

  out = parse_output("case noise ``` Housing , SUPPORT ```");
  CHECK(out.labels == LabelSet{SdohLabel::housing, SdohLabel::support});

  out = parse_output("``````");
  CHECK(out.parse_mode == ParseMode::backtick);
  CHECK(out.labels.empty());
  CHECK(out.hallucinated_tokens.empty());
}

TEST_CASE("parser surfaces hallucinated tokens instead of guessing") {
  ParsedLLMOutput out = parse_output("```housing, finance, support```");
  CHECK(out.labels == LabelSet{SdohLabel::housing, SdohLabel::support});
  CHECK(out.hallucinated_tokens == std::vector<std::string>{"finance"});

  out = parse_output("```-```");
  CHECK(out.parse_mode == ParseMode::backtick);
  CHECK(out.labels.empty());
  CHECK(out.hallucinated_tokens.empty());

  // "-" mixed with real labels is noise, not a no-label marker
  out = parse_output("```-, housing```");
  CHECK(out.labels == LabelSet{SdohLabel::housing});
  CHECK(out.hallucinated_tokens == std::vector<std::string>{"-"});
}

TEST_CASE("parser falls back to scanning the last line") {
  ParsedLLMOutput out = parse_output("thinking\nfinal: housing and transportation\n\n  \n");
  CHECK(out.parse_mode == ParseMode::fallback_scan);
  CHECK(out.labels == LabelSet{SdohLabel::housing, SdohLabel::transportation});

  // whole words only
  out = parse_output("the rehousing project");
  CHECK(out.parse_mode == ParseMode::failed);
  CHECK(out.labels.empty());

  out = parse_output("some thoughts\n-");
  CHECK(out.parse_mode == ParseMode::fallback_scan);
  CHECK(out.labels.empty());

  out = parse_output("");
  CHECK(out.parse_mode == ParseMode::failed);
  out = parse_output("nothing relevant here");
  CHECK(out.parse_mode == ParseMode::failed);
}

TEST_CASE("parser is total over arbitrary bytes") {
  sdoh::Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    std::string raw;
    std::size_t len = rng.next_below(120);
    for (std::size_t i = 0; i < len; ++i) {
      raw.push_back(static_cast<char>(rng.next_below(256)));
    }
    ParsedLLMOutput out = parse_output(raw);
    CHECK(out.raw == raw);
    bool known = out.parse_mode == ParseMode::backtick ||
                 out.parse_mode == ParseMode::fallback_scan ||
                 out.parse_mode == ParseMode::failed;
    CHECK(known);
  }
}

TEST_CASE("fine-tune export writes one prompt per selected record") {
  testsup::TempDir tmp("finetune");
  Corpus corpus;
  corpus.name = "ft";
  corpus.records = {
      {"a", "evicted last month", LabelSet{SdohLabel::housing}, SourceTag::base},
      {"b", "takes the bus", LabelSet{SdohLabel::transportation}, SourceTag::base},
      {"c", "nothing notable", LabelSet{}, SourceTag::base},
      {"d", "lost the job", LabelSet{SdohLabel::employment}, SourceTag::base},
  };
  SplitSpec split;
  split.train = {"a", "b", "c"};
  split.validation = {"d"};

  PromptTemplate t =
      make_prompt_template("S: {{ text }}\nA: {{ labels }}", PromptKind::train);
  LoraConfig lora;
  FinetuneManifest manifest = export_finetune_data(corpus, split, t, lora, tmp / "out");
  CHECK(manifest.n_prompts == 3);
  CHECK(manifest.include_negative_label);
  CHECK(manifest.template_hash == hex64(fnv1a64(t.body)));

  std::string lines = testsup::read_file(tmp / "out" / "prompts.jsonl");
  std::vector<std::string> rows = sdoh::split(lines, '\n');
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].find("evicted last month") != std::string::npos);
  CHECK(rows[0].find("housing") != std::string::npos);
  // the empty-gold record renders the explicit no-label marker
  CHECK(rows[2].find("A: -") != std::string::npos);

  std::string mblob = testsup::read_file(tmp / "out" / "manifest.json");
  CHECK(mblob.find("\"rank\": 64") != std::string::npos);
  CHECK(mblob.find("\"n_prompts\": 3") != std::string::npos);

  // dropping negatives shrinks the export and changes nothing else's order
  FinetuneExportOptions opts;
  opts.include_negative_label = false;
  FinetuneManifest lean = export_finetune_data(corpus, split, t, lora, tmp / "lean", opts);
  CHECK(lean.n_prompts == 2);
  std::string lean_lines = testsup::read_file(tmp / "lean" / "prompts.jsonl");
  CHECK(lean_lines.find("nothing notable") == std::string::npos);
  CHECK(lean.split_hash != manifest.split_hash);

  CHECK_THROWS_AS(export_finetune_data(corpus, split, simple_few_shot(), lora, tmp / "bad"),
                  ValidationError);
  SplitSpec foreign = split;
  foreign.train.push_back("ghost");
  CHECK_THROWS_AS(export_finetune_data(corpus, foreign, t, lora, tmp / "bad2"),
                  ValidationError);
}

TEST_CASE("scripted client replays responses and records prompts") {
  ScriptedClient client({"one", "two"});
  CHECK(client.generate("p1") == "one");
  CHECK(client.generate("p2") == "two");
  CHECK(client.prompts_seen() == std::vector<std::string>{"p1", "p2"});
  CHECK_THROWS_AS(client.generate("p3"), TransportError);

  ScriptedClient flaky({"ok"}, 1);
  CHECK_THROWS_AS(flaky.generate("x"), TransportError);
  CHECK(flaky.generate("x") == "ok");
  CHECK(flaky.failures_remaining() == 0);
}

TEST_CASE("classifier renders, retries transport failures, and parses") {
  auto client = std::make_shared<ScriptedClient>(
      std::vector<std::string>{"```housing```"});
  LlmClassifier clf(client, simple_few_shot());
  ParsedLLMOutput out = clf.classify("he was evicted");
  CHECK(out.labels == LabelSet{SdohLabel::housing});
  CHECK(out.parse_mode == ParseMode::backtick);
  REQUIRE(client->prompts_seen().size() == 1);
  CHECK(client->prompts_seen()[0] == "Sentence: he was evicted\nLabels:");

  // transport failures are retried up to the bound
  auto flaky = std::make_shared<ScriptedClient>(
      std::vector<std::string>{"```support```"}, 2);
  LlmClassifier retrying(flaky, simple_few_shot(), LlmClassifierConfig{2});
  CHECK(retrying.classify("t").labels == LabelSet{SdohLabel::support});
  CHECK(flaky->prompts_seen().size() == 3);

  auto dead = std::make_shared<ScriptedClient>(std::vector<std::string>{"x"}, 3);
  LlmClassifier exhausted(dead, simple_few_shot(), LlmClassifierConfig{2});
  CHECK_THROWS_AS(exhausted.classify("t"), TransportError);
  CHECK(dead->prompts_seen().size() == 3);

  // an unparseable answer is a result, not a retry
  auto garbled = std::make_shared<ScriptedClient>(
      std::vector<std::string>{"n/a", "```housing```"});
  LlmClassifier tolerant(garbled, simple_few_shot());
  CHECK(tolerant.classify("t").parse_mode == ParseMode::failed);
  CHECK(garbled->prompts_seen().size() == 1);

  CHECK_THROWS_AS(LlmClassifier(nullptr, simple_few_shot()), ValidationError);
}

TEST_CASE("batch classification keeps results aligned to inputs") {
  // serial path: responses pair positionally with inputs
  auto serial = std::make_shared<ScriptedClient>(
      std::vector<std::string>{"```housing```", "```employment```", "-"}, 0, 1);
  LlmClassifier clf(serial, simple_few_shot());
  std::vector<ParsedLLMOutput> results =
      clf.classify_batch({"first", "second", "third"});
  REQUIRE(results.size() == 3);
  CHECK(results[0].labels == LabelSet{SdohLabel::housing});
  CHECK(results[1].labels == LabelSet{SdohLabel::employment});
  CHECK(results[2].labels.empty());
  CHECK(results[2].parse_mode == ParseMode::fallback_scan);

  // concurrent path: every input gets exactly one request
  std::vector<std::string> texts;
  std::vector<std::string> responses;
  for (int i = 0; i < 12; ++i) {
    texts.push_back("sentence " + std::to_string(i));
    responses.push_back("```support```");
  }
  auto parallel = std::make_shared<ScriptedClient>(responses, 0, 4);
  LlmClassifier pclf(parallel, simple_few_shot());
  std::vector<ParsedLLMOutput> presults = clf.classify_batch({});
  CHECK(presults.empty());
  presults = pclf.classify_batch(texts);
  REQUIRE(presults.size() == 12);
  for (const auto& r : presults) CHECK(r.labels == LabelSet{SdohLabel::support});
  std::vector<std::string> seen = parallel->prompts_seen();
  std::sort(seen.begin(), seen.end());
  std::vector<std::string> expected;
  for (const auto& t : texts) expected.push_back("Sentence: " + t + "\nLabels:");
  std::sort(expected.begin(), expected.end());
  CHECK(seen == expected);

  // a worker failure surfaces after all joins
  auto failing = std::make_shared<ScriptedClient>(responses, 1, 4);
  LlmClassifier fclf(failing, simple_few_shot(), LlmClassifierConfig{0});
  CHECK_THROWS_AS(fclf.classify_batch(texts), TransportError);
}

TEST_CASE("http client round trip against a local server") {
  httplib::Server server;
  std::string seen_auth, seen_body;
  server.Post("/gen", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(R"({"text": "```employment```"})", "application/json");
  });
  server.Post("/boom", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("server on fire", "text/plain");
  });
  server.Post("/mangled", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json at all", "application/json");
  });
  server.Post("/empty", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"other": 1})", "application/json");
  });

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpGenerationClient client(base + "/gen", "secret-token");
  std::string text = client.generate("classify this");
  CHECK(text == "```employment```");
  CHECK(seen_auth == "Bearer secret-token");
  CHECK(seen_body.find("classify this") != std::string::npos);

  HttpGenerationClient boom(base + "/boom");
  CHECK_THROWS_AS(boom.generate("p"), TransportError);
  HttpGenerationClient mangled(base + "/mangled");
  CHECK_THROWS_AS(mangled.generate("p"), TransportError);
  HttpGenerationClient empty(base + "/empty");
  CHECK_THROWS_AS(empty.generate("p"), TransportError);

  // and the classifier composes with the live transport
  auto shared = std::make_shared<HttpGenerationClient>(base + "/gen");
  LlmClassifier clf(shared, simple_few_shot());
  CHECK(clf.classify("works part time").labels == LabelSet{SdohLabel::employment});

  server.stop();
  runner.join();
}

TEST_CASE("http client configuration errors") {
  unsetenv("SDOH_LLM_ENDPOINT");
  CHECK_THROWS_AS(HttpGenerationClient(), AdapterUnavailableError);

  setenv("SDOH_LLM_ENDPOINT", "http://example.invalid/gen", 1);
  HttpGenerationClient from_env;
  CHECK(from_env.endpoint() == "http://example.invalid/gen");
  unsetenv("SDOH_LLM_ENDPOINT");

  // reachable nobody: connection refused is a transport failure
  HttpGenerationClient refused("http://127.0.0.1:9/gen", "", 1);
  CHECK_THROWS_AS(refused.generate("p"), TransportError);
}

}  // TEST_SUITE
