// Prompt construction, SEARCH/REPLACE patches, LLM clients and the
// detect-fix-validate repair loop.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "confx/explorer.hpp"
#include "confx/extractor.hpp"
#include "confx/lang.hpp"

namespace confx {

class MissingReport : public Error {
  using Error::Error;
};
class LlmTransportError : public Error {
  using Error::Error;
};

class PatchError : public Error {
 public:
  enum class Kind {
    NoPatchFound,
    MalformedBlock,
    SearchNotFound,
    AmbiguousSearch,
    PostPatchSyntaxError,
    PolicyViolation,
  };
  PatchError(Kind kind, const std::string& message);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(PatchError::Kind k);

enum class PromptStrategy { OneStep, TwoStep, Direct, NoBugInfo };

std::string_view to_string(PromptStrategy s);
PromptStrategy parse_strategy(std::string_view text);

enum class PromptPart { Prelude, Code, BugReport, Instructions, FormatGuidance, Feedback };

std::string_view to_string(PromptPart p);

struct Prompt {
  std::vector<std::pair<PromptPart, std::string>> parts;

  std::string text() const;  // parts joined by blank lines
  bool has(PromptPart p) const;
};

inline constexpr const char* kInstructions =
    "Please fix the concurrency bug.\n"
    "Please note that some methods have been omitted. These methods are unrelated to concurrency "
    "bugs; performing any modifications to them would be considered violations. Please ensure "
    "that fixing doesn't introduce new bugs, such as deadlocks. Do not attempt to change the "
    "functionality of any function, and do not modify any code that is unrelated to concurrency "
    "bugs.";
inline constexpr const char* kDirectQuestion =
    "Does this concurrent program have any concurrency bugs? If yes, please fix them.";
inline constexpr const char* kLocalizationIntro =
    "You were given a program source code that may contain concurrency bugs";
inline constexpr const char* kFeedbackIntro =
    "Your patch introduced an error.\n"
    "Please review the report below and revise your fix accordingly.\n"
    "The error report is as follows: ";

std::string prelude(const std::string& detector);

struct PromptOptions {
  std::string detector = "the confx interleaving explorer";
  std::string file_name = "program.mc";
};

/// Repair prompt. TwoStep yields the localization prompt; its repair half
/// is build_repair_after_localization.
Prompt build_prompt1(const FilteredSource& code, const BugReport* report, PromptStrategy strategy,
                     const PromptOptions& options = {});
Prompt build_localization_prompt(const FilteredSource& code, const BugReport& report,
                                 const PromptOptions& options = {});
Prompt build_repair_after_localization(const FilteredSource& code, const std::string& localization,
                                       const PromptOptions& options = {});
Prompt build_prompt2(const std::string& error);

struct Edit {
  std::string file;
  std::vector<std::string> search;
  std::vector<std::string> replace;
};

struct PatchSet {
  std::vector<Edit> edits;
};

PatchSet parse_patches(std::string_view response);

struct ApplyOptions {
  std::vector<std::string> protected_markers;  // text that no search block may touch
  bool reparse = true;
};

/// Applies edits in order. Lines are compared with trailing whitespace
/// ignored; each search block must match exactly one run of lines.
std::string apply_patches(std::string_view src, const PatchSet& ps, const ApplyOptions& options = {});

// ---------------------------------------------------------------------------
// LLM clients

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
};

struct Sampling {
  double temperature = 0.2;
  double top_p = 1.0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& conversation,
                               const Sampling& sampling) = 0;
};

/// Replays scripted responses in order; fails once they run out.
class MockLlmClient : public LlmClient {
 public:
  explicit MockLlmClient(std::vector<std::string> responses);
  /// Reads `{"responses": [...]}`.
  static MockLlmClient from_file(const std::string& path);

  std::string complete(const std::vector<ChatMessage>& conversation, const Sampling& sampling) override;
  std::size_t consumed() const { return next_; }

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

/// OpenAI-compatible chat-completions endpoint.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient(std::string endpoint, std::string model, std::string api_key);
  /// CONFX_LLM_ENDPOINT, CONFX_LLM_MODEL and CONFX_API_KEY (or OPENAI_API_KEY).
  static HttpLlmClient from_env();

  std::string complete(const std::vector<ChatMessage>& conversation, const Sampling& sampling) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Repair loop

struct RepairConfig {
  PromptStrategy strategy = PromptStrategy::OneStep;
  FilterStage stage = FilterStage::ShbFiltered;
  int max_attempts = 5;
  Sampling sampling;
  std::size_t runs = 100;
  std::uint64_t seed = 0;
  ExploreOptions explore;
  ExtractOptions extract;
  PromptOptions prompt;
  int transport_retries = 2;
  bool functional_check = true;
};

enum class RepairOutcome { Fixed, Failed, ExhaustedAttempts };

std::string_view to_string(RepairOutcome o);

struct Turn {
  int attempt = 0;
  std::string kind;  // prompt1, localization, repair, prompt2
  std::string prompt;
  std::string response;
  std::string verdict;  // empty for intermediate turns
  std::string error;
};

struct RepairSession {
  int attempts = 0;
  std::vector<Turn> history;
  RepairOutcome outcome = RepairOutcome::Failed;
  std::string patched_source;
  std::size_t locks_added = 0;
  RepairConfig config;

  std::string transcript_json() const;
};

struct ValidationResult {
  bool ok = false;
  std::string stage;  // parse, explore, random, functional
  std::string error;
};

/// Re-parse, exhaustive exploration, seeded random runs, then the
/// functional check against `original`.
ValidationResult validate_patch(const Program& original, std::string_view patched,
                                const RepairConfig& cfg);

/// Asserts of `original` still present, and every method keeps its name
/// and parameter list.
std::optional<std::string> functional_difference(const Program& original, const Program& patched);

RepairSession repair(const Program& p, LlmClient& llm, const RepairConfig& cfg,
                     const BugReport* report = nullptr);

}  // namespace confx
