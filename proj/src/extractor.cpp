#include "confx/extractor.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

namespace confx {

std::string_view to_string(FilterStage s) {
  switch (s) {
    case FilterStage::Original: return "p1";
    case FilterStage::CommentStripped: return "p2";
    case FilterStage::CallGraphFiltered: return "p3";
    case FilterStage::ShbFiltered: return "p4";
    case FilterStage::Ideal: return "ideal";
  }
  return "?";
}

FilterStage parse_stage(std::string_view text) {
  if (text == "p1") return FilterStage::Original;
  if (text == "p2") return FilterStage::CommentStripped;
  if (text == "p3") return FilterStage::CallGraphFiltered;
  if (text == "p4") return FilterStage::ShbFiltered;
  if (text == "ideal") return FilterStage::Ideal;
  throw Error("unknown stage '" + std::string(text) + "' (expected p1, p2, p3, p4 or ideal)");
}

bool FilteredSource::is_omitted(const MethodId& m) const {
  return std::any_of(omitted.begin(), omitted.end(),
                     [&](const OmittedMethod& o) { return o.name == m; });
}

std::string placeholder_body(const MethodId& m) {
  return "{ /* method " + m + " omitted: unrelated to concurrency bugs */ }";
}

double filtered_ratio(std::size_t previous, std::size_t current) {
  if (previous == 0) return 0.0;
  return 1.0 - static_cast<double>(current) / static_cast<double>(previous);
}

namespace {

FilteredSource omit(std::string base, const std::set<MethodId>& drop, FilterStage stage) {
  Program q = parse(base);
  std::vector<const MethodBody*> order;
  for (const auto& [name, m] : q.methods) {
    if (drop.count(name) && m.statement_count > 0) order.push_back(&m);
  }
  std::sort(order.begin(), order.end(), [](const MethodBody* a, const MethodBody* b) {
    return a->body_span.begin < b->body_span.begin;
  });
  FilteredSource out;
  out.stage = stage;
  std::size_t cursor = 0;
  for (const MethodBody* m : order) {
    out.text.append(base, cursor, m->body_span.begin - cursor);
    OmittedMethod o;
    o.name = m->name;
    o.original_body = base.substr(m->body_span.begin, m->body_span.end - m->body_span.begin);
    o.begin = out.text.size();
    out.text += placeholder_body(m->name);
    o.end = out.text.size();
    out.omitted.push_back(std::move(o));
    cursor = m->body_span.end;
  }
  out.text.append(base, cursor, std::string::npos);
  return out;
}

FilteredSource build(const Program& p, FilterStage stage, const ExtractOptions& options) {
  if (stage == FilterStage::Original) {
    FilteredSource out;
    out.stage = stage;
    out.text = p.source_text;
    return out;
  }
  std::string stripped = strip_comments(p.source_text);
  if (stage == FilterStage::CommentStripped) {
    FilteredSource out;
    out.stage = stage;
    out.text = std::move(stripped);
    return out;
  }
  CallGraph cg = build_call_graph(p);
  std::set<MethodId> drop = cg.unreachable;
  if (stage == FilterStage::ShbFiltered) {
    MarkedMethodSet marks = mark_methods(p, options.shbg);
    for (const MethodId& m : cg.nodes) {
      if (!marks.contains(m)) drop.insert(m);
    }
  } else if (stage == FilterStage::Ideal) {
    for (const MethodId& m : cg.nodes) {
      if (!options.ideal_keep.count(m)) drop.insert(m);
    }
  }
  return omit(std::move(stripped), drop, stage);
}

FilterStage previous(FilterStage s) {
  switch (s) {
    case FilterStage::CommentStripped: return FilterStage::Original;
    case FilterStage::CallGraphFiltered: return FilterStage::CommentStripped;
    case FilterStage::ShbFiltered:
    case FilterStage::Ideal: return FilterStage::CallGraphFiltered;
    default: return FilterStage::Original;
  }
}

}  // namespace

std::size_t context_tokens(std::string_view text) {
  const TokenCounts c = lex_counts(text);
  return c.tokens + c.comments;
}

FilteredSource extract(const Program& p, FilterStage stage, const ExtractOptions& options) {
  FilteredSource out = build(p, stage, options);
  out.token_count = context_tokens(out.text);
  if (stage != FilterStage::Original) {
    std::size_t prev = context_tokens(build(p, previous(stage), options).text);
    out.tokens_filtered_ratio = filtered_ratio(prev, out.token_count);
  }
  return out;
}

StageReport stage_report(const Program& p, const ExtractOptions& options, bool include_ideal) {
  StageReport report;
  std::vector<FilterStage> stages = {FilterStage::Original, FilterStage::CommentStripped,
                                     FilterStage::CallGraphFiltered, FilterStage::ShbFiltered};
  if (include_ideal) stages.push_back(FilterStage::Ideal);
  std::map<FilterStage, std::size_t> tokens;
  for (FilterStage s : stages) {
    StageMetrics m;
    m.stage = s;
    m.tokens = context_tokens(build(p, s, options).text);
    tokens[s] = m.tokens;
    if (s != FilterStage::Original) m.ratio = filtered_ratio(tokens.at(previous(s)), m.tokens);
    report.stages.push_back(m);
  }
  return report;
}

std::string StageReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const StageMetrics& m : stages) {
    nlohmann::json row{{"stage", std::string(to_string(m.stage))}, {"tokens", m.tokens}};
    row["ratio"] = m.ratio ? nlohmann::json(*m.ratio) : nlohmann::json(nullptr);
    rows.push_back(row);
  }
  return nlohmann::json{{"stages", rows}}.dump(2);
}

std::string restore_omitted(std::string_view patched, const FilteredSource& source) {
  std::string out(patched);
  for (const OmittedMethod& o : source.omitted) {
    std::string marker = placeholder_body(o.name);
    std::size_t at = out.find(marker);
    if (at == std::string::npos || out.find(marker, at + 1) != std::string::npos) {
      throw Error("placeholder of omitted method " + o.name + " was modified");
    }
    out.replace(at, marker.size(), o.original_body);
  }
  return out;
}

}  // namespace confx
