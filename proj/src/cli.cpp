#include "confx/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "confx/patterns.hpp"

namespace confx {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::size_t count_loc(std::string_view text) {
  std::size_t n = 0;
  bool blank = true;
  for (char c : text) {
    if (c == '\n') {
      if (!blank) ++n;
      blank = true;
    } else if (c != ' ' && c != '\t' && c != '\r') {
      blank = false;
    }
  }
  return blank ? n : n + 1;
}

void Config::validate() const {
  if (depth_bound == 0) throw Error("config: depth_bound must be positive");
  if (runs == 0) throw Error("config: runs must be positive");
  if (max_attempts < 1 || max_attempts > 100) throw Error("config: max_attempts must be in 1..100");
  if (temperature < 0.0 || temperature > 2.0) throw Error("config: temperature must be in [0, 2]");
  if (top_p <= 0.0 || top_p > 1.0) throw Error("config: top_p must be in (0, 1]");
  if (llm != "mock" && llm != "live" && llm != "none" && llm.rfind("mock:", 0) != 0) {
    throw Error("config: llm must be mock, mock:<fixture>, live or none");
  }
}

RepairConfig Config::repair_config() const {
  RepairConfig rc;
  rc.strategy = strategy;
  rc.stage = stage;
  rc.max_attempts = max_attempts;
  rc.sampling = Sampling{temperature, top_p};
  rc.runs = runs;
  rc.seed = seed;
  rc.explore.depth_bound = depth_bound;
  return rc;
}

namespace {

template <typename Get>
void apply_keys(Config& cfg, Get&& get) {
  if (auto v = get.template operator()<std::int64_t>("depth_bound")) cfg.depth_bound = static_cast<std::size_t>(*v);
  if (auto v = get.template operator()<std::int64_t>("runs")) cfg.runs = static_cast<std::size_t>(*v);
  if (auto v = get.template operator()<std::int64_t>("seed")) cfg.seed = static_cast<std::uint64_t>(*v);
  if (auto v = get.template operator()<std::int64_t>("max_attempts")) cfg.max_attempts = static_cast<int>(*v);
  if (auto v = get.template operator()<double>("temperature")) cfg.temperature = *v;
  if (auto v = get.template operator()<double>("top_p")) cfg.top_p = *v;
  if (auto v = get.template operator()<std::string>("strategy")) cfg.strategy = parse_strategy(*v);
  if (auto v = get.template operator()<std::string>("stage")) cfg.stage = parse_stage(*v);
  if (auto v = get.template operator()<std::string>("llm")) cfg.llm = *v;
}

const std::vector<std::string> kKeys = {"depth_bound", "runs", "seed", "max_attempts", "temperature",
                                        "top_p", "strategy", "stage", "llm"};

void reject_unknown(const std::vector<std::string>& keys) {
  for (const auto& k : keys) {
    if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end()) throw Error("config: unknown key '" + k + "'");
  }
}

}  // namespace

Config parse_config(std::string_view text, bool json) {
  Config cfg;
  if (json) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw Error("config: expected a JSON object");
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    reject_unknown(keys);
    auto get = [&]<typename T>(const char* key) -> std::optional<T> {
      if (!doc.contains(key)) return std::nullopt;
      try {
        return doc[key].get<T>();
      } catch (const nlohmann::json::exception&) {
        throw Error(std::string("config: wrong type for '") + key + "'");
      }
    };
    apply_keys(cfg, get);
  } else {
    toml::table table;
    try {
      table = toml::parse(text);
    } catch (const toml::parse_error& e) {
      std::ostringstream msg;
      msg << "config: " << e.description() << " at line " << e.source().begin.line;
      throw Error(msg.str());
    }
    std::vector<std::string> keys;
    for (const auto& [k, v] : table) keys.emplace_back(k.str());
    reject_unknown(keys);
    auto get = [&]<typename T>(const char* key) -> std::optional<T> {
      const toml::node* node = table.get(key);
      if (!node) return std::nullopt;
      if constexpr (std::is_same_v<T, double>) {
        if (auto i = node->value_exact<std::int64_t>()) return static_cast<double>(*i);
      }
      auto v = node->value_exact<T>();
      if (!v) throw Error(std::string("config: wrong type for '") + key + "'");
      return *v;
    };
    apply_keys(cfg, get);
  }
  cfg.validate();
  return cfg;
}

Config load_config(const fs::path& path) {
  std::string text = read_file(path);
  bool json = path.extension() == ".json";
  if (path.extension() != ".json" && path.extension() != ".toml") {
    auto first = text.find_first_not_of(" \t\r\n");
    json = first != std::string::npos && text[first] == '{';
  }
  return parse_config(text, json);
}

std::optional<Manifest> load_manifest(const fs::path& program) {
  fs::path path = program;
  path.replace_extension(".expect.json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    auto doc = nlohmann::json::parse(read_file(path));
    Manifest m;
    m.bug_type = doc.value("bug_type", "");
    m.reference_patch_methods = doc.value("reference_patch_methods", std::vector<std::string>{});
    m.fixture = doc.value("fixture", "");
    m.fixed = doc.value("fixed", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::size_t BenchmarkReport::attempted() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const BenchRow& r) { return r.attempted; }));
}

std::size_t BenchmarkReport::fixes() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const BenchRow& r) { return r.fixed; }));
}

std::optional<double> BenchmarkReport::repair_rate() const {
  if (attempted() == 0) return std::nullopt;
  return static_cast<double>(fixes()) / static_cast<double>(attempted());
}

namespace {

std::string percent(std::optional<double> r) {
  if (!r) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << *r * 100.0 << '%';
  return out.str();
}

}  // namespace

std::string BenchmarkReport::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(22) << "program" << std::setw(6) << "loc" << std::setw(8) << "tokens"
      << std::setw(24) << "bug type" << std::setw(18) << "verdict" << std::setw(8) << "fixed"
      << std::setw(6) << "iter" << std::setw(6) << "lock" << "retained\n";
  for (const BenchRow& r : rows) {
    out << std::setw(22) << r.name << std::setw(6) << r.loc << std::setw(8) << r.tokens << std::setw(24)
        << (r.bug_type.empty() ? "-" : r.bug_type) << std::setw(18) << (r.verdict.empty() ? "-" : r.verdict)
        << std::setw(8) << (r.attempted ? (r.fixed ? "yes" : "no") : "-") << std::setw(6)
        << (r.attempted ? std::to_string(r.iter) : "-") << std::setw(6)
        << (r.fixed ? std::to_string(r.locks_added) : "-")
        << (r.retained ? (*r.retained ? "yes" : "NO") : "-");
    if (!r.error.empty()) out << "  error: " << r.error;
    out << '\n';
  }
  if (!rows.empty() && !rows.front().stages.empty()) {
    out << "\nfiltering by stage (tokens, %filtered against the previous stage)\n";
    out << std::setw(22) << "program";
    for (const StageMetrics& m : rows.front().stages) out << std::setw(16) << to_string(m.stage);
    out << '\n';
    for (const BenchRow& r : rows) {
      out << std::setw(22) << r.name;
      for (const StageMetrics& m : r.stages) {
        out << std::setw(16) << (std::to_string(m.tokens) + " " + percent(m.ratio));
      }
      out << '\n';
    }
  }
  out << "\nrepairs: " << fixes() << '/' << attempted() << "  CR = ";
  if (auto cr = repair_rate()) {
    out << std::fixed << std::setprecision(3) << *cr;
  } else {
    out << "n/a";
  }
  out << '\n';
  return out.str();
}

std::string BenchmarkReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const BenchRow& r : rows) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageMetrics& m : r.stages) {
      stages.push_back({{"stage", std::string(to_string(m.stage))},
                        {"tokens", m.tokens},
                        {"ratio", m.ratio ? nlohmann::json(*m.ratio) : nlohmann::json(nullptr)}});
    }
    nlohmann::json row{{"name", r.name},         {"loc", r.loc},
                       {"tokens", r.tokens},     {"bug_type", r.bug_type},
                       {"verdict", r.verdict},   {"class", r.bug_class},
                       {"detected", r.detected}, {"attempted", r.attempted},
                       {"fixed", r.fixed},       {"iter", r.iter},
                       {"locks_added", r.locks_added}, {"stages", stages}};
    row["retained"] = r.retained ? nlohmann::json(*r.retained) : nlohmann::json(nullptr);
    if (!r.timings_ms.empty()) {
      nlohmann::json t;
      for (const auto& [phase, ms] : r.timings_ms) t[phase] = ms;
      row["time_ms"] = t;
    }
    if (!r.error.empty()) row["error"] = r.error;
    list.push_back(std::move(row));
  }
  auto cr = repair_rate();
  nlohmann::json out{{"rows", list},
                     {"attempted", attempted()},
                     {"fixes", fixes()},
                     {"cr", cr ? nlohmann::json(*cr) : nlohmann::json("n/a")}};
  return out.dump(2);
}

BenchmarkReport run_bench(const fs::path& corpus, const Config& cfg, const BenchOptions& options) {
  if (!fs::is_directory(corpus)) throw Error("not a directory: " + corpus.string());
  std::vector<fs::path> programs;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && entry.path().extension() == ".mc" && !name.ends_with(".fixed.mc")) {
      programs.push_back(entry.path());
    }
  }
  std::sort(programs.begin(), programs.end());

  BenchmarkReport report;
  for (const fs::path& path : programs) {
    BenchRow row;
    row.name = path.stem().string();
    using Clock = std::chrono::steady_clock;
    auto phase_start = Clock::now();
    auto lap = [&](const char* phase) {
      auto now = Clock::now();
      if (options.timings) {
        row.timings_ms.emplace_back(phase, std::chrono::duration<double, std::milli>(now - phase_start).count());
      }
      phase_start = now;
    };
    try {
      std::optional<Manifest> manifest = load_manifest(path);
      if (manifest) row.bug_type = manifest->bug_type;
      std::string text = read_file(path);
      row.loc = count_loc(text);
      row.tokens = context_tokens(text);
      Program p = parse(text);

      RepairConfig rc = cfg.repair_config();
      DetectionResult found = explore(p, rc.explore);
      row.verdict = std::string(to_string(found.verdict));
      row.detected = found.verdict != Verdict::NoBugFound;
      if (found.verdict != Verdict::NoBugFound) {
        try {
          row.bug_class = classify_bug(found).bug_class;
        } catch (const NoPatternFound& e) {
          row.bug_class = "unclassified";
        }
      }
      lap("detect");

      for (FilterStage s : options.stages) {
        FilteredSource fsrc = extract(p, s, rc.extract);
        row.stages.push_back(StageMetrics{s, fsrc.token_count, fsrc.tokens_filtered_ratio});
      }
      if (manifest && !manifest->reference_patch_methods.empty()) {
        FilteredSource p4 = extract(p, FilterStage::ShbFiltered, rc.extract);
        row.retained = std::none_of(manifest->reference_patch_methods.begin(),
                                    manifest->reference_patch_methods.end(),
                                    [&](const MethodId& m) { return p4.is_omitted(m); });
      }
      lap("extract");

      if (row.detected && cfg.llm != "none") {
        std::unique_ptr<LlmClient> llm;
        if (cfg.llm == "live") {
          llm = std::make_unique<HttpLlmClient>(HttpLlmClient::from_env());
        } else if (manifest && !manifest->fixture.empty()) {
          llm = std::make_unique<MockLlmClient>(MockLlmClient::from_file((corpus / manifest->fixture).string()));
        }
        if (llm) {
          rc.prompt.file_name = path.filename().string();
          BugReport br = make_bug_report(p, found);
          RepairSession session = repair(p, *llm, rc, &br);
          row.attempted = true;
          row.fixed = session.outcome == RepairOutcome::Fixed;
          row.iter = session.attempts;
          row.locks_added = session.locks_added;
        }
      }
      lap("fix");
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace confx
