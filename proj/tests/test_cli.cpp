#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "confx/cli.hpp"
#include "support.hpp"

using namespace confx;
using confx::testing::corpus_dir;
using confx::testing::corpus_file;
using confx::testing::fixture_dir;
using confx::testing::run_cli;

namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("confx-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path_ / name) << text; }
  void copy(const std::string& name) const { fs::copy_file(corpus_dir() / name, path_ / name); }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

}  // namespace

TEST(Config, TomlAndJson) {
  Config t = parse_config("depth_bound = 500\nruns = 20\nseed = 9\nstrategy = \"two_step\"\nstage = \"p3\"\n"
                          "temperature = 0.5\ntop_p = 1\nmax_attempts = 3\nllm = \"mock\"\n",
                          false);
  EXPECT_EQ(t.depth_bound, 500u);
  EXPECT_EQ(t.runs, 20u);
  EXPECT_EQ(t.seed, 9u);
  EXPECT_EQ(t.strategy, PromptStrategy::TwoStep);
  EXPECT_EQ(t.stage, FilterStage::CallGraphFiltered);
  EXPECT_DOUBLE_EQ(t.temperature, 0.5);
  EXPECT_DOUBLE_EQ(t.top_p, 1.0);
  EXPECT_EQ(t.max_attempts, 3);
  Config j = parse_config(R"({"runs": 7, "strategy": "direct"})", true);
  EXPECT_EQ(j.runs, 7u);
  EXPECT_EQ(j.strategy, PromptStrategy::Direct);
  EXPECT_EQ(j.depth_bound, 10000u);
  EXPECT_EQ(j.max_attempts, 5);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("colour = 1\n", false), Error);
  EXPECT_THROW(parse_config(R"({"runs": 0})", true), Error);
  EXPECT_THROW(parse_config(R"({"top_p": 1.5})", true), Error);
  EXPECT_THROW(parse_config(R"({"runs": "many"})", true), Error);
  EXPECT_THROW(parse_config("runs = [\n", false), Error);
  EXPECT_THROW(parse_config(R"({"llm": "gpt"})", true), Error);
}

TEST(Config, LoadByExtension) {
  TempDir d;
  d.write("c.toml", "runs = 3\n");
  d.write("c.json", "{\"runs\": 4}");
  EXPECT_EQ(load_config(d.path() / "c.toml").runs, 3u);
  EXPECT_EQ(load_config(d.path() / "c.json").runs, 4u);
}

TEST(Manifest, CorpusManifestsAreComplete) {
  std::set<std::string> types;
  for (const std::string& name : confx::testing::buggy_corpus()) {
    auto m = load_manifest(corpus_file(name));
    ASSERT_TRUE(m);
    types.insert(m->bug_type);
    EXPECT_FALSE(m->reference_patch_methods.empty()) << name;
    EXPECT_TRUE(fs::exists(corpus_dir() / m->fixture)) << name;
    EXPECT_TRUE(fs::exists(corpus_dir() / m->fixed)) << name;
  }
  EXPECT_EQ(types, (std::set<std::string>{"atomicity violation", "data race", "order violation",
                                          "resource deadlock", "communication deadlock"}));
  EXPECT_FALSE(load_manifest(corpus_dir() / "nonexistent.mc"));
}

TEST(Cli, DetectExitCodes) {
  auto [ok, ok_out] = run_cli("detect " + corpus_file("benign"));
  EXPECT_EQ(ok, 0);
  EXPECT_NE(ok_out.find("NoBugFound"), std::string::npos);
  auto [bug, bug_out] = run_cli("detect " + corpus_file("nested_monitor"));
  EXPECT_EQ(bug, 1);
  EXPECT_NE(bug_out.find("Deadlock"), std::string::npos);
  EXPECT_EQ(run_cli("detect /nonexistent/file.mc").first, 2);
  EXPECT_EQ(run_cli("detect " + (fixture_dir() / "all_broken.json").string()).first, 2);
}

TEST(Cli, DetectJson) {
  auto [code, out] = run_cli("--json detect " + corpus_file("two_writer_race"));
  EXPECT_EQ(code, 1);
  auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["verdict"], "AssertionFailure");
  auto [rcode, rout] = run_cli("--json detect --random 50 --seed 3 " + corpus_file("benign"));
  EXPECT_EQ(rcode, 0);
  EXPECT_EQ(nlohmann::json::parse(rout)["verdict"], "NoBugFound");
}

TEST(Cli, EmitShbgAndMarks) {
  TempDir d;
  const std::string base = (d.path() / "g").string();
  auto [code, out] = run_cli("detect --emit-shbg " + base + " --emit-marks " + corpus_file("nested_monitor"));
  EXPECT_EQ(code, 1);
  auto g = nlohmann::json::parse(read_file(base + ".json"));
  EXPECT_FALSE(g["nodes"].empty());
  EXPECT_TRUE(fs::exists(base + ".dot"));
  EXPECT_NE(out.find("DeadlockRelevant"), std::string::npos);
}

TEST(Cli, TraceOutThenClassifyAndReplay) {
  TempDir d;
  const std::string trace = (d.path() / "t.json").string();
  EXPECT_EQ(run_cli("detect --trace-out " + trace + " " + corpus_file("two_stage")).first, 1);
  auto [code, out] = run_cli("--json classify " + trace);
  EXPECT_EQ(code, 0);
  auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["class"], "atomicity violation");
  auto [rcode, rout] = run_cli("replay " + corpus_file("two_stage") + " " + trace);
  EXPECT_EQ(rcode, 1);
  EXPECT_NE(rout.find("AssertionFailure"), std::string::npos);
  EXPECT_EQ(run_cli("replay " + corpus_file("two_stage") + " 9,9,9").first, 2);
}

TEST(Cli, Extract) {
  auto [code, out] = run_cli("extract --stage p4 " + corpus_file("nested_monitor"));
  EXPECT_EQ(code, 0);
  EXPECT_NE(out.find("/* method formatStats omitted: unrelated to concurrency bugs */"), std::string::npos);
  auto [rcode, rout] = run_cli("--json extract --report " + corpus_file("bank_transfer"));
  EXPECT_EQ(rcode, 0);
  auto j = nlohmann::json::parse(rout);
  EXPECT_EQ(j["stages"].size(), 4u);
  EXPECT_EQ(run_cli("extract --stage p9 " + corpus_file("benign")).first, 2);
}

TEST(Cli, FixWithMock) {
  TempDir d;
  const std::string out = (d.path() / "fixed.mc").string();
  const std::string transcript = (d.path() / "t.json").string();
  auto [code, text] = run_cli("fix " + corpus_file("account") + " --llm mock:" +
                              (corpus_dir() / "account.fixture.json").string() + " --out " + out +
                              " --transcript " + transcript);
  EXPECT_EQ(code, 0);
  EXPECT_NE(text.find("Fixed"), std::string::npos);
  EXPECT_TRUE(structurally_equal(parse(read_file(out)), confx::testing::corpus_program("account.fixed")));
  EXPECT_TRUE(nlohmann::json::parse(read_file(transcript)).contains("history"));
  auto [bad, bad_text] = run_cli("fix " + corpus_file("two_writer_race") + " --llm mock:" +
                                 (fixture_dir() / "all_broken.json").string());
  EXPECT_EQ(bad, 1);
  EXPECT_NE(bad_text.find("ExhaustedAttempts"), std::string::npos);
}

TEST(Cli, ConfigFlag) {
  TempDir d;
  d.write("c.toml", "runs = 0\n");
  EXPECT_EQ(run_cli("--config " + (d.path() / "c.toml").string() + " detect " + corpus_file("benign")).first, 2);
}

TEST(Bench, ByteIdenticalAcrossRuns) {
  auto [a_code, a] = run_cli("bench " + corpus_dir().string());
  auto [b_code, b] = run_cli("bench " + corpus_dir().string());
  EXPECT_EQ(a_code, 0);
  EXPECT_EQ(a, b);
  auto [ja_code, ja] = run_cli("--json bench " + corpus_dir().string());
  auto [jb_code, jb] = run_cli("--json bench " + corpus_dir().string());
  EXPECT_EQ(ja, jb);
  auto j = nlohmann::json::parse(ja);
  EXPECT_EQ(j["rows"].size(), confx::testing::all_corpus().size());
}

TEST(Bench, TokensMatchStageReport) {
  Config cfg;
  cfg.llm = "none";
  BenchmarkReport r = run_bench(corpus_dir(), cfg);
  for (const BenchRow& row : r.rows) {
    StageReport sr = stage_report(confx::testing::corpus_program(row.name));
    ASSERT_EQ(row.stages.size(), sr.stages.size());
    for (std::size_t i = 0; i < sr.stages.size(); ++i) EXPECT_EQ(row.stages[i].tokens, sr.stages[i].tokens);
    EXPECT_EQ(row.tokens, sr.stages[0].tokens);
  }
}

TEST(Bench, EmptyCorpus) {
  TempDir d;
  BenchmarkReport r = run_bench(d.path(), Config{});
  EXPECT_TRUE(r.rows.empty());
  EXPECT_FALSE(r.repair_rate());
  EXPECT_NE(r.to_text().find("CR = n/a"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(r.to_json())["cr"], "n/a");
}

TEST(Bench, ThreeFileCorpusRate) {
  TempDir d;
  for (const char* name : {"two_writer_race", "even", "wrong_lock"}) {
    d.copy(std::string(name) + ".mc");
    d.copy(std::string(name) + ".fixed.mc");
    d.copy(std::string(name) + ".expect.json");
    d.copy(std::string(name) + ".fixture.json");
  }
  fs::copy_file(fixture_dir() / "all_broken.json", d.path() / "even.fixture.json",
                fs::copy_options::overwrite_existing);
  BenchmarkReport r = run_bench(d.path(), Config{});
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.attempted(), 3u);
  EXPECT_EQ(r.fixes(), 2u);
  ASSERT_TRUE(r.repair_rate());
  EXPECT_DOUBLE_EQ(*r.repair_rate(), 2.0 / 3.0);
}

TEST(Bench, PerFileErrorsBecomeRows) {
  TempDir d;
  d.copy("benign.mc");
  d.write("broken.mc", "main() { x = ; }\n");
  BenchmarkReport r = run_bench(d.path(), Config{});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].name, "benign");
  EXPECT_FALSE(r.rows[1].error.empty());
}

TEST(Bench, StageSweepTable) {
  auto [code, out] = run_cli("bench --stages p1,p2,p3,p4 --llm none " + corpus_dir().string());
  EXPECT_EQ(code, 0);
  for (const char* col : {"p1", "p2", "p3", "p4"}) EXPECT_NE(out.find(col), std::string::npos);
}

TEST(Util, CountLoc) {
  EXPECT_EQ(count_loc(""), 0u);
  EXPECT_EQ(count_loc("a\n\n  \nb"), 2u);
}
