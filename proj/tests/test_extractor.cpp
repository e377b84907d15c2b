#include <gtest/gtest.h>

#include <regex>

#include <nlohmann/json.hpp>

#include "confx/extractor.hpp"
#include "support.hpp"

using namespace confx;
using confx::testing::all_corpus;
using confx::testing::corpus_program;

namespace {

// Independent tokenizer: comments, identifiers/keywords, numbers, two-char
// operators, then single characters.
std::size_t regex_tokens(const std::string& text) {
  static const std::regex token(R"(//[^\n]*|/\*[\s\S]*?\*/|[A-Za-z_][A-Za-z0-9_]*|[0-9]+|==|!=|<=|>=|&&|\|\||\S)");
  return static_cast<std::size_t>(
      std::distance(std::sregex_iterator(text.begin(), text.end(), token), std::sregex_iterator()));
}

const std::vector<FilterStage> kStages{FilterStage::Original, FilterStage::CommentStripped,
                                       FilterStage::CallGraphFiltered, FilterStage::ShbFiltered};

}  // namespace

TEST(Extract, IdentityWhenNothingToFilter) {
  Program p = parse("shared int x = 0;\nmain() {\n    spawn a = w();\n    spawn b = w();\n}\nw() {\n    x = x + 1;\n}\n");
  for (FilterStage s : kStages) EXPECT_EQ(extract(p, s).text, p.source_text) << to_string(s);
}

TEST(Extract, NestedMonitorAtP4) {
  Program p = corpus_program("nested_monitor");
  FilteredSource f = extract(p, FilterStage::ShbFiltered);
  ASSERT_EQ(f.omitted.size(), 1u);
  EXPECT_EQ(f.omitted[0].name, "formatStats");
  EXPECT_NE(f.text.find("formatStats(total) { /* method formatStats omitted: unrelated to concurrency bugs */ }"),
            std::string::npos);
  Program q = parse(f.text);
  for (const char* m : {"main", "producer", "consumer", "put", "get", "up", "down"}) {
    EXPECT_FALSE(f.is_omitted(m));
    EXPECT_EQ(print(q).find(std::string(m) + "("), print(p).find(std::string(m) + "(")) << m;
  }
}

TEST(Extract, PlaceholderText) {
  EXPECT_EQ(placeholder_body("h"), "{ /* method h omitted: unrelated to concurrency bugs */ }");
}

TEST(Extract, P3OmitsUnreachableAndKeepsSignatures) {
  Program p = corpus_program("bank_transfer");
  FilteredSource f = extract(p, FilterStage::CallGraphFiltered);
  std::set<MethodId> omitted;
  for (const auto& o : f.omitted) omitted.insert(o.name);
  EXPECT_EQ(omitted, (std::set<MethodId>{"interest", "closeAccount", "printStatement"}));
  for (const auto& o : f.omitted) {
    EXPECT_EQ(f.text.substr(o.begin, o.end - o.begin), placeholder_body(o.name));
    EXPECT_NE(f.text.find(o.name + "("), std::string::npos);
  }
  FilteredSource f4 = extract(p, FilterStage::ShbFiltered);
  EXPECT_TRUE(f4.is_omitted("fee"));
  EXPECT_FALSE(f4.is_omitted("transfer"));
}

TEST(Extract, EveryStageReparsesAndIsMonotone) {
  for (const std::string& name : all_corpus()) {
    Program p = corpus_program(name);
    std::size_t prev = SIZE_MAX;
    MarkedMethodSet marks = mark_methods(p);
    for (FilterStage s : kStages) {
      FilteredSource f = extract(p, s);
      EXPECT_NO_THROW(parse(f.text)) << name << " " << to_string(s);
      EXPECT_LE(f.token_count, prev) << name << " " << to_string(s);
      prev = f.token_count;
      for (const MethodId& m : marks.methods) EXPECT_FALSE(f.is_omitted(m)) << name << " " << m;
      std::size_t markers = 0;
      for (std::size_t pos = f.text.find("omitted: unrelated"); pos != std::string::npos;
           pos = f.text.find("omitted: unrelated", pos + 1))
        ++markers;
      EXPECT_EQ(markers, f.omitted.size()) << name;
    }
  }
}

TEST(Extract, StageCountsAgreeWithIndependentTokenizer) {
  for (const std::string& name : all_corpus()) {
    Program p = corpus_program(name);
    StageReport r = stage_report(p);
    ASSERT_EQ(r.stages.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t oracle = regex_tokens(extract(p, kStages[i]).text);
      EXPECT_EQ(r.stages[i].tokens, oracle) << name << " " << to_string(kStages[i]);
      if (i == 0) {
        EXPECT_FALSE(r.stages[i].ratio);
      } else {
        const double prev = static_cast<double>(regex_tokens(extract(p, kStages[i - 1]).text));
        ASSERT_TRUE(r.stages[i].ratio);
        EXPECT_DOUBLE_EQ(*r.stages[i].ratio, 1.0 - static_cast<double>(oracle) / prev);
      }
    }
  }
}

TEST(Extract, HandCountedStages) {
  const std::map<std::string, std::vector<std::size_t>> hand{
      {"two_writer_race", {50, 49, 49, 49}},
      {"account", {107, 104, 93, 93}},
  };
  for (const auto& [name, counts] : hand) {
    StageReport r = stage_report(corpus_program(name));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.stages[i].tokens, counts[i]) << name << " stage " << i;
    EXPECT_DOUBLE_EQ(*r.stages[1].ratio, 1.0 - double(counts[1]) / double(counts[0]));
    EXPECT_DOUBLE_EQ(*r.stages[2].ratio, 1.0 - double(counts[2]) / double(counts[1]));
  }
}

TEST(Extract, CommentFreeSingleMethodRatios) {
  StageReport r = stage_report(parse("shared int x = 0;\nmain() {\n    x = 1;\n}\n"));
  EXPECT_FALSE(r.stages[0].ratio);
  EXPECT_DOUBLE_EQ(*r.stages[1].ratio, 0.0);
  EXPECT_DOUBLE_EQ(*r.stages[2].ratio, 0.0);
  EXPECT_GE(*r.stages[3].ratio, 0.0);
}

TEST(Extract, HeavilyCommentedFileShrinksAtP2) {
  StageReport r = stage_report(corpus_program("bank_transfer"));
  EXPECT_GT(*r.stages[1].ratio, 0.0);
  auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["stages"].size(), 4u);
}

TEST(Extract, AddingLocksNeverDropsRetainedMethods) {
  for (const std::string& name : confx::testing::buggy_corpus()) {
    Program buggy = corpus_program(name);
    Program fixed = corpus_program(name + ".fixed");
    if (count_lock_blocks(fixed) <= count_lock_blocks(buggy)) continue;
    FilteredSource before = extract(buggy, FilterStage::ShbFiltered);
    FilteredSource after = extract(fixed, FilterStage::ShbFiltered);
    for (const MethodId& m : buggy.method_order) {
      if (!before.is_omitted(m)) EXPECT_FALSE(after.is_omitted(m)) << name << " " << m;
    }
  }
}

TEST(Extract, IdealStage) {
  Program p = corpus_program("nested_monitor");
  ExtractOptions opts;
  opts.ideal_keep = {"main", "put", "get", "up", "down"};
  FilteredSource f = extract(p, FilterStage::Ideal, opts);
  EXPECT_TRUE(f.is_omitted("producer"));
  EXPECT_TRUE(f.is_omitted("formatStats"));
  EXPECT_FALSE(f.is_omitted("put"));
  EXPECT_EQ(parse_stage("ideal"), FilterStage::Ideal);
  EXPECT_THROW(parse_stage("p5"), Error);
}

TEST(Extract, RestoreOmittedBodies) {
  Program p = corpus_program("bank_transfer");
  FilteredSource f = extract(p, FilterStage::ShbFiltered);
  EXPECT_EQ(restore_omitted(f.text, f), strip_comments(p.source_text));
}
