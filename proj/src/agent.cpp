#include "confx/agent.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace confx {

PatchError::PatchError(Kind kind, const std::string& message)
    : Error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

std::string_view to_string(PatchError::Kind k) {
  switch (k) {
    case PatchError::Kind::NoPatchFound: return "NoPatchFound";
    case PatchError::Kind::MalformedBlock: return "MalformedBlock";
    case PatchError::Kind::SearchNotFound: return "SearchNotFound";
    case PatchError::Kind::AmbiguousSearch: return "AmbiguousSearch";
    case PatchError::Kind::PostPatchSyntaxError: return "PostPatchSyntaxError";
    case PatchError::Kind::PolicyViolation: return "PolicyViolation";
  }
  return "?";
}

std::string_view to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::OneStep: return "one_step";
    case PromptStrategy::TwoStep: return "two_step";
    case PromptStrategy::Direct: return "direct";
    case PromptStrategy::NoBugInfo: return "no_bug_info";
  }
  return "?";
}

PromptStrategy parse_strategy(std::string_view text) {
  if (text == "one_step") return PromptStrategy::OneStep;
  if (text == "two_step") return PromptStrategy::TwoStep;
  if (text == "direct") return PromptStrategy::Direct;
  if (text == "no_bug_info") return PromptStrategy::NoBugInfo;
  throw Error("unknown strategy '" + std::string(text) +
              "' (expected one_step, two_step, direct or no_bug_info)");
}

std::string_view to_string(PromptPart p) {
  switch (p) {
    case PromptPart::Prelude: return "Prelude";
    case PromptPart::Code: return "Code";
    case PromptPart::BugReport: return "BugReport";
    case PromptPart::Instructions: return "Instructions";
    case PromptPart::FormatGuidance: return "FormatGuidance";
    case PromptPart::Feedback: return "Feedback";
  }
  return "?";
}

std::string_view to_string(RepairOutcome o) {
  switch (o) {
    case RepairOutcome::Fixed: return "Fixed";
    case RepairOutcome::Failed: return "Failed";
    case RepairOutcome::ExhaustedAttempts: return "ExhaustedAttempts";
  }
  return "?";
}

std::string Prompt::text() const {
  std::string out;
  for (const auto& [part, body] : parts) {
    if (!out.empty()) out += "\n\n";
    out += body;
  }
  return out;
}

bool Prompt::has(PromptPart p) const {
  return std::any_of(parts.begin(), parts.end(), [&](const auto& item) { return item.first == p; });
}

std::string prelude(const std::string& detector) {
  return "You are given a code snippet that may contain concurrency bugs, along with a bug report "
         "detected by " +
         detector + ". Some methods unrelated to the bugs have already been filtered out.";
}

namespace {

std::string code_part(const FilteredSource& code, const PromptOptions& options) {
  std::string text = code.text;
  if (!text.empty() && text.back() != '\n') text += '\n';
  return "File: " + options.file_name + "\n```\n" + text + "```";
}

std::string report_part(const BugReport& report) { return "Bug report:\n" + report.text(); }

std::string format_part(const PromptOptions& options) {
  return "Answer with one or more edits in this exact format, one per change:\n"
         "file: " +
         options.file_name +
         "\n"
         "<<<<<<< SEARCH\n"
         "<lines copied exactly from the code above>\n"
         "=======\n"
         "<replacement lines>\n"
         ">>>>>>> REPLACE\n"
         "Each SEARCH section must match exactly one place in the file. Keep edits small.";
}

std::string localization_format() {
  return "Report the bug in this format:\n"
         "Bug Type: <type of the bug detected>\n"
         "Bug Description: <a detailed description of the bug>\n"
         "Bug Location: <file name and line number>";
}

}  // namespace

Prompt build_prompt1(const FilteredSource& code, const BugReport* report, PromptStrategy strategy,
                     const PromptOptions& options) {
  if (strategy == PromptStrategy::TwoStep) {
    if (!report) throw MissingReport("the two_step strategy needs a bug report");
    return build_localization_prompt(code, *report, options);
  }
  Prompt p;
  switch (strategy) {
    case PromptStrategy::OneStep:
      if (!report) throw MissingReport("the one_step strategy needs a bug report");
      p.parts = {{PromptPart::Prelude, prelude(options.detector)},
                 {PromptPart::Code, code_part(code, options)},
                 {PromptPart::BugReport, report_part(*report)},
                 {PromptPart::Instructions, kInstructions},
                 {PromptPart::FormatGuidance, format_part(options)}};
      break;
    case PromptStrategy::Direct:
      p.parts = {{PromptPart::Instructions, kDirectQuestion},
                 {PromptPart::Code, code_part(code, options)}};
      if (report) p.parts.emplace_back(PromptPart::BugReport, report_part(*report));
      p.parts.emplace_back(PromptPart::FormatGuidance, format_part(options));
      break;
    case PromptStrategy::NoBugInfo:
      p.parts = {{PromptPart::Prelude, prelude(options.detector)},
                 {PromptPart::Code, code_part(code, options)},
                 {PromptPart::Instructions, kInstructions},
                 {PromptPart::FormatGuidance, format_part(options)}};
      break;
    case PromptStrategy::TwoStep:
      break;
  }
  return p;
}

Prompt build_localization_prompt(const FilteredSource& code, const BugReport& report,
                                 const PromptOptions& options) {
  Prompt p;
  p.parts = {{PromptPart::Prelude, std::string(kLocalizationIntro) + "."},
             {PromptPart::Code, code_part(code, options)},
             {PromptPart::BugReport, report_part(report)},
             {PromptPart::FormatGuidance, localization_format()}};
  return p;
}

Prompt build_repair_after_localization(const FilteredSource& code, const std::string& localization,
                                       const PromptOptions& options) {
  Prompt p;
  p.parts = {{PromptPart::Prelude, prelude(options.detector)},
             {PromptPart::Code, code_part(code, options)},
             {PromptPart::BugReport, "Bug localization:\n" + localization},
             {PromptPart::Instructions, kInstructions},
             {PromptPart::FormatGuidance, format_part(options)}};
  return p;
}

Prompt build_prompt2(const std::string& error) {
  Prompt p;
  p.parts = {{PromptPart::Feedback, std::string(kFeedbackIntro) + error}};
  return p;
}

// ---------------------------------------------------------------------------
// Patches

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    std::string line(text.substr(start, nl - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = nl + 1;
  }
  return out;
}

std::string rstrip(std::string_view s) {
  std::size_t n = s.size();
  while (n > 0 && (s[n - 1] == ' ' || s[n - 1] == '\t' || s[n - 1] == '\r')) --n;
  return std::string(s.substr(0, n));
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return rstrip(s.substr(b));
}

}  // namespace

PatchSet parse_patches(std::string_view response) {
  auto lines = split_lines(response);
  PatchSet ps;
  std::string file;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string t = trim(lines[i]);
    if (t.rfind("file:", 0) == 0) {
      file = trim(std::string_view(t).substr(5));
      continue;
    }
    if (t != "<<<<<<< SEARCH") continue;
    std::size_t start = i + 1;
    auto malformed = [&](const std::string& why) {
      return PatchError(PatchError::Kind::MalformedBlock,
                        "block starting at response line " + std::to_string(start) + ": " + why);
    };
    if (file.empty()) throw malformed("no 'file: <path>' line before the block");
    Edit e;
    e.file = file;
    ++i;
    while (i < lines.size() && trim(lines[i]) != "=======") {
      std::string inner = trim(lines[i]);
      if (inner == "<<<<<<< SEARCH" || inner == ">>>>>>> REPLACE") {
        throw malformed("expected '=======' before '" + inner + "'");
      }
      e.search.push_back(lines[i]);
      ++i;
    }
    if (i == lines.size()) throw malformed("missing '======='");
    ++i;
    while (i < lines.size() && trim(lines[i]) != ">>>>>>> REPLACE") {
      std::string inner = trim(lines[i]);
      if (inner == "<<<<<<< SEARCH" || inner == "=======") {
        throw malformed("expected '>>>>>>> REPLACE' before '" + inner + "'");
      }
      e.replace.push_back(lines[i]);
      ++i;
    }
    if (i == lines.size()) throw malformed("missing '>>>>>>> REPLACE'");
    if (e.search.empty()) throw malformed("empty SEARCH section");
    ps.edits.push_back(std::move(e));
  }
  if (ps.edits.empty()) throw PatchError(PatchError::Kind::NoPatchFound, "response contains no SEARCH/REPLACE block");
  return ps;
}

std::string apply_patches(std::string_view src, const PatchSet& ps, const ApplyOptions& options) {
  bool trailing_newline = !src.empty() && src.back() == '\n';
  auto lines = split_lines(src);
  if (trailing_newline) lines.pop_back();
  for (std::size_t n = 0; n < ps.edits.size(); ++n) {
    const Edit& e = ps.edits[n];
    std::vector<std::string> wanted;
    for (const auto& l : e.search) wanted.push_back(rstrip(l));
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i + wanted.size() <= lines.size(); ++i) {
      bool same = true;
      for (std::size_t k = 0; k < wanted.size() && same; ++k) same = rstrip(lines[i + k]) == wanted[k];
      if (same) hits.push_back(i);
    }
    std::string label = "edit " + std::to_string(n + 1);
    if (hits.empty()) {
      throw PatchError(PatchError::Kind::SearchNotFound,
                       label + ": the SEARCH lines do not occur in the file:\n" + e.search.front());
    }
    if (hits.size() > 1) {
      throw PatchError(PatchError::Kind::AmbiguousSearch,
                       label + ": the SEARCH lines occur " + std::to_string(hits.size()) +
                           " times; include more context");
    }
    std::size_t at = hits.front();
    for (std::size_t k = 0; k < wanted.size(); ++k) {
      for (const auto& marker : options.protected_markers) {
        if (lines[at + k].find(marker) != std::string::npos) {
          throw PatchError(PatchError::Kind::PolicyViolation,
                           label + " modifies an omitted method (line " + std::to_string(at + k + 1) + ")");
        }
      }
    }
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(at),
                lines.begin() + static_cast<std::ptrdiff_t>(at + wanted.size()));
    lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at), e.replace.begin(), e.replace.end());
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  if (trailing_newline) out += '\n';
  if (options.reparse) {
    try {
      parse(out);
    } catch (const Error& err) {
      throw PatchError(PatchError::Kind::PostPatchSyntaxError, err.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clients

MockLlmClient::MockLlmClient(std::vector<std::string> responses) : responses_(std::move(responses)) {}

MockLlmClient MockLlmClient::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mock fixture " + path);
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    return MockLlmClient(doc.at("responses").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed mock fixture " + path + ": " + e.what());
  }
}

std::string MockLlmClient::complete(const std::vector<ChatMessage>&, const Sampling&) {
  if (next_ >= responses_.size()) throw LlmTransportError("mock fixture has no more responses");
  return responses_[next_++];
}

HttpLlmClient::HttpLlmClient(std::string endpoint, std::string model, std::string api_key)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), api_key_(std::move(api_key)) {}

HttpLlmClient HttpLlmClient::from_env() {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  std::string key = env("CONFX_API_KEY");
  if (key.empty()) key = env("OPENAI_API_KEY");
  std::string endpoint = env("CONFX_LLM_ENDPOINT");
  if (endpoint.empty()) endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = env("CONFX_LLM_MODEL");
  if (model.empty()) model = "gpt-4";
  if (key.empty()) throw Error("no API key: set CONFX_API_KEY or OPENAI_API_KEY");
  return HttpLlmClient(endpoint, model, key);
}

// ---------------------------------------------------------------------------
// Repair

std::optional<std::string> functional_difference(const Program& original, const Program& patched) {
  std::multiset<std::string> before;
  std::multiset<std::string> after;
  for (const auto& [name, m] : original.methods) {
    for_each_stmt(m.statements, [&](const Stmt& s) {
      if (s.kind == StmtKind::Assert) before.insert(print(s.expr));
    });
  }
  for (const auto& [name, m] : patched.methods) {
    for_each_stmt(m.statements, [&](const Stmt& s) {
      if (s.kind == StmtKind::Assert) after.insert(print(s.expr));
    });
  }
  for (const auto& a : before) {
    if (after.count(a) < before.count(a)) return "assertion assert(" + a + ") was removed or changed";
  }
  for (const auto& [name, m] : original.methods) {
    auto it = patched.methods.find(name);
    if (it == patched.methods.end()) return "method " + name + " was removed";
    if (it->second.params != m.params) return "parameters of method " + name + " changed";
  }
  for (const auto& g : original.globals) {
    const GlobalDecl* other = patched.find_global(g.name);
    if (!other || other->initial != g.initial || other->type != g.type) {
      return "shared variable " + g.name + " was removed or its initial value changed";
    }
  }
  return std::nullopt;
}

ValidationResult validate_patch(const Program& original, std::string_view patched,
                                const RepairConfig& cfg) {
  ValidationResult v;
  Program q;
  try {
    q = parse(patched);
  } catch (const Error& e) {
    v.stage = "parse";
    v.error = std::string("PostPatchSyntaxError: ") + e.what();
    return v;
  }
  DetectionResult ex = explore(q, cfg.explore);
  if (ex.verdict != Verdict::NoBugFound) {
    v.stage = "explore";
    v.error = make_bug_report(q, ex).text();
    return v;
  }
  if (ex.partial) {
    v.stage = "explore";
    v.error = "exhaustive exploration of the patched program did not finish within its bounds";
    return v;
  }
  DetectionResult rnd = run_random(q, cfg.runs, cfg.seed, cfg.explore.depth_bound);
  if (rnd.verdict != Verdict::NoBugFound) {
    v.stage = "random";
    v.error = make_bug_report(q, rnd).text();
    return v;
  }
  if (cfg.functional_check) {
    if (auto diff = functional_difference(original, q)) {
      v.stage = "functional";
      v.error = "functional check failed: " + *diff;
      return v;
    }
  }
  v.ok = true;
  return v;
}

namespace {

class Conversation {
 public:
  Conversation(LlmClient& llm, const RepairConfig& cfg, RepairSession& session)
      : llm_(llm), cfg_(cfg), session_(session) {}

  // Returns false when the client keeps failing.
  bool ask(int attempt, const std::string& kind, const std::string& prompt, std::string& response) {
    messages_.push_back(ChatMessage{"user", prompt});
    Turn turn;
    turn.attempt = attempt;
    turn.kind = kind;
    turn.prompt = prompt;
    for (int tries = 0;; ++tries) {
      try {
        response = llm_.complete(messages_, cfg_.sampling);
        break;
      } catch (const LlmTransportError& e) {
        if (tries >= cfg_.transport_retries) {
          turn.error = e.what();
          turn.verdict = "transport error";
          session_.history.push_back(std::move(turn));
          return false;
        }
      }
    }
    messages_.push_back(ChatMessage{"assistant", response});
    turn.response = response;
    session_.history.push_back(std::move(turn));
    return true;
  }

 private:
  LlmClient& llm_;
  const RepairConfig& cfg_;
  RepairSession& session_;
  std::vector<ChatMessage> messages_;
};

}  // namespace

RepairSession repair(const Program& p, LlmClient& llm, const RepairConfig& cfg,
                     const BugReport* report) {
  RepairSession session;
  session.config = cfg;
  FilteredSource code = extract(p, cfg.stage, cfg.extract);

  std::optional<BugReport> own_report;
  bool needs_report = cfg.strategy == PromptStrategy::OneStep || cfg.strategy == PromptStrategy::TwoStep;
  if (!report && needs_report) {
    own_report = make_bug_report(p, explore(p, cfg.explore));
    report = &*own_report;
  }

  ApplyOptions apply;
  for (const OmittedMethod& o : code.omitted) apply.protected_markers.push_back(placeholder_body(o.name));

  Conversation chat(llm, cfg, session);
  std::string feedback;
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    session.attempts = attempt;
    std::string response;
    bool answered;
    if (attempt == 1 && cfg.strategy == PromptStrategy::TwoStep) {
      std::string localization;
      answered = chat.ask(attempt, "localization", build_localization_prompt(code, *report, cfg.prompt).text(),
                          localization);
      if (answered) {
        answered = chat.ask(attempt, "repair",
                            build_repair_after_localization(code, localization, cfg.prompt).text(), response);
      }
    } else if (attempt == 1) {
      answered = chat.ask(attempt, "prompt1", build_prompt1(code, report, cfg.strategy, cfg.prompt).text(),
                          response);
    } else {
      answered = chat.ask(attempt, "prompt2", build_prompt2(feedback).text(), response);
    }
    if (!answered) {
      session.outcome = RepairOutcome::Failed;
      return session;
    }
    Turn& turn = session.history.back();
    std::string full;
    try {
      PatchSet ps = parse_patches(response);
      std::string edited = apply_patches(code.text, ps, apply);
      full = restore_omitted(edited, code);
    } catch (const PatchError& e) {
      feedback = e.what();
    } catch (const Error& e) {
      feedback = std::string("PolicyViolation: ") + e.what();
    }
    if (full.empty()) {
      turn.verdict = "rejected";
      turn.error = feedback;
      continue;
    }
    ValidationResult v = validate_patch(p, full, cfg);
    if (!v.ok) {
      feedback = v.error;
      turn.verdict = "failed " + v.stage;
      turn.error = feedback;
      continue;
    }
    turn.verdict = "fixed";
    session.outcome = RepairOutcome::Fixed;
    session.patched_source = full;
    session.locks_added = count_locks_added(p, parse(full));
    return session;
  }
  session.outcome = RepairOutcome::ExhaustedAttempts;
  return session;
}

std::string RepairSession::transcript_json() const {
  nlohmann::json turns = nlohmann::json::array();
  for (const Turn& t : history) {
    turns.push_back({{"attempt", t.attempt},
                     {"kind", t.kind},
                     {"prompt", t.prompt},
                     {"response", t.response},
                     {"verdict", t.verdict},
                     {"error", t.error}});
  }
  nlohmann::json cfg{{"strategy", std::string(to_string(config.strategy))},
                     {"stage", std::string(to_string(config.stage))},
                     {"max_attempts", config.max_attempts},
                     {"temperature", config.sampling.temperature},
                     {"top_p", config.sampling.top_p},
                     {"runs", config.runs},
                     {"seed", config.seed},
                     {"depth_bound", config.explore.depth_bound}};
  nlohmann::json out{{"config", cfg},
                     {"attempts", attempts},
                     {"outcome", std::string(to_string(outcome))},
                     {"locks_added", locks_added},
                     {"history", turns},
                     {"patched_source", patched_source}};
  return out.dump(2);
}

}  // namespace confx
