// Staged context extraction: comments, unreachable methods and unmarked
// methods are filtered out of the source shown to the repair model.
#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "confx/analysis.hpp"
#include "confx/lang.hpp"

namespace confx {

enum class FilterStage { Original, CommentStripped, CallGraphFiltered, ShbFiltered, Ideal };

std::string_view to_string(FilterStage s);  // "p1" .. "p4", "ideal"
FilterStage parse_stage(std::string_view text);

struct OmittedMethod {
  MethodId name;
  std::size_t begin = 0;  // placeholder body span in the filtered text
  std::size_t end = 0;
  std::string original_body;  // comment-free body text, braces included
};

struct FilteredSource {
  FilterStage stage = FilterStage::Original;
  std::string text;
  std::vector<OmittedMethod> omitted;
  std::size_t token_count = 0;  // context_tokens(text)
  std::optional<double> tokens_filtered_ratio;  // against the previous stage

  bool is_omitted(const MethodId& m) const;
};

/// Lexer tokens of `text` with comments counted, the size measure for every
/// filtering stage.
std::size_t context_tokens(std::string_view text);

/// Body text that replaces an omitted method.
std::string placeholder_body(const MethodId& m);

struct ExtractOptions {
  ShbgOptions shbg;
  std::set<MethodId> ideal_keep;  // methods retained by the Ideal stage
};

FilteredSource extract(const Program& p, FilterStage stage, const ExtractOptions& options = {});

struct StageMetrics {
  FilterStage stage;
  std::size_t tokens = 0;
  std::optional<double> ratio;
};

struct StageReport {
  std::vector<StageMetrics> stages;
  std::string to_json() const;
};

StageReport stage_report(const Program& p, const ExtractOptions& options = {},
                         bool include_ideal = false);

/// Puts the original bodies back in place of the placeholders that survive
/// in `patched`. Throws PolicyViolation-style Error if a placeholder is gone.
std::string restore_omitted(std::string_view patched, const FilteredSource& source);

double filtered_ratio(std::size_t previous, std::size_t current);

}  // namespace confx
