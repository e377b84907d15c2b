// Shared helpers for the unit tests and the acceptance runner.
#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "confx/analysis.hpp"
#include "confx/cli.hpp"
#include "confx/explorer.hpp"
#include "confx/graphs.hpp"
#include "confx/lang.hpp"

namespace confx::testing {

std::filesystem::path corpus_dir();
std::filesystem::path fixture_dir();
std::string corpus_file(const std::string& name);  // "<name>.mc"
Program corpus_program(const std::string& name);

/// Names of corpus programs whose manifest declares a bug, sorted.
std::vector<std::string> buggy_corpus();
/// Every program in the corpus, reference-patched versions excluded.
std::vector<std::string> all_corpus();

/// Runs the binary with `args` and returns (exit status, stdout).
std::pair<int, std::string> run_cli(const std::string& args);

/// Brute-force ordering oracle. Enumerates every schedule of `p` and records,
/// for each ordered pair of SHBG event indices (i, j), whether some execution
/// runs an occurrence of i before an occurrence of j. Events observed at run
/// time that have no SHBG node are collected in `unmapped`.
struct ObservedOrders {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::set<std::string> unmapped;
  std::size_t states = 0;
};
ObservedOrders observe_orders(const Program& p, const StaticHappensBeforeGraph& g);

/// Probability that one run of the uniform random scheduler fails, computed
/// exactly over the schedule tree.
double exact_failure_probability(const Program& p);

/// Counts complete schedules (paths of the schedule tree) and failing ones.
struct InterleavingCount {
  double failing = 0;
  double total = 0;
};
InterleavingCount count_interleavings(const Program& p);

/// Final values of `global` over every complete schedule.
std::set<std::int64_t> final_values(const Program& p, const std::string& global);

/// A generated program with `threads` worker threads of `statements`
/// statements each; every statement reads one global and writes another.
std::string stress_program(int threads, int statements);

}  // namespace confx::testing
