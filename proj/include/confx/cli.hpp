// Configuration loading and the corpus benchmark harness behind `confx`.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "confx/agent.hpp"
#include "confx/extractor.hpp"

namespace confx {

struct Config {
  std::size_t depth_bound = 10000;
  std::size_t runs = 100;
  std::uint64_t seed = 0;
  PromptStrategy strategy = PromptStrategy::OneStep;
  FilterStage stage = FilterStage::ShbFiltered;
  std::string llm = "mock";  // "mock", "mock:<fixture>", "live" or "none"
  int max_attempts = 5;
  double temperature = 0.2;
  double top_p = 1.0;

  void validate() const;
  RepairConfig repair_config() const;
};

/// JSON object, or flat `key = value` TOML lines.
Config load_config(const std::filesystem::path& path);
Config parse_config(std::string_view text, bool json);

struct Manifest {
  std::string bug_type;
  std::vector<MethodId> reference_patch_methods;
  std::string fixture;  // mock LLM responses, relative to the corpus directory
  std::string fixed;    // reference-patched program
};

std::optional<Manifest> load_manifest(const std::filesystem::path& program);

struct BenchRow {
  std::string name;
  std::size_t loc = 0;
  std::size_t tokens = 0;
  std::string bug_type;
  std::string verdict;
  std::string bug_class;
  bool detected = false;
  bool attempted = false;
  bool fixed = false;
  int iter = 0;
  std::size_t locks_added = 0;
  std::optional<bool> retained;  // reference-patch methods kept at P4
  std::vector<StageMetrics> stages;
  std::vector<std::pair<std::string, double>> timings_ms;
  std::string error;
};

struct BenchmarkReport {
  std::vector<BenchRow> rows;

  std::size_t attempted() const;
  std::size_t fixes() const;
  std::optional<double> repair_rate() const;  // CR = fixes / attempted
  std::string to_text() const;
  std::string to_json() const;
};

struct BenchOptions {
  std::vector<FilterStage> stages = {FilterStage::Original, FilterStage::CommentStripped,
                                     FilterStage::CallGraphFiltered, FilterStage::ShbFiltered};
  bool timings = false;
};

BenchmarkReport run_bench(const std::filesystem::path& corpus, const Config& cfg,
                          const BenchOptions& options = {});

/// Non-empty lines.
std::size_t count_loc(std::string_view text);

std::string read_file(const std::filesystem::path& path);

}  // namespace confx
