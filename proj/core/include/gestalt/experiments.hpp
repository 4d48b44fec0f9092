#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gestalt/corpus.hpp"
#include "gestalt/head.hpp"
#include "gestalt/network.hpp"
#include "gestalt/stats.hpp"

namespace gestalt::expt {

// One congruent scenario paired with its reversal anomaly (agent and
// patient positions swapped in the realized sentence).
struct TestItem {
  int id = 0;
  corpus::Sentence congruent;
  corpus::Sentence reversal;
  std::string syntactic_agent_unit;  // reversal subject's identity feature
  std::string semantic_agent_unit;   // congruent agent's identity feature
  std::vector<std::string> nonrelevant_units;  // incompatible patients
};

// Loads the item fixture and derives tracked units. Non-relevant patients
// are object tokens that never appear in the item and are incompatible
// with its action per the event tables.
std::vector<TestItem> build_items(const std::filesystem::path& path,
                                  const corpus::Lexicon& lexicon,
                                  const corpus::EventTables& tables);

inline constexpr const char* kWordClassSyntacticAgent = "syntactic-agent";
inline constexpr const char* kWordClassSemanticAgent = "semantic-agent";
inline constexpr const char* kWordClassNonRelevant = "non-relevant-patients";

struct ActivationRecord {
  int run = 0;
  int item = 0;
  bool reversal = false;
  int word_pos = 0;  // 1-based constituent position
  corpus::Role probe = corpus::Role::kAgent;
  std::string word_class;  // tracked-set label
  std::string unit;        // feature label, or the set label for aggregates
  double mle = 0.0;
  double bayes_mean = 0.0;
  double bayes_sd = 0.0;  // particle spread of the predictive
};

// Incremental presentation: activations of the tracked units after each
// word, for every probe role and both conditions. Non-relevant patients
// are recorded as one set-mean row per context.
std::vector<ActivationRecord> evaluate_model(
    const net::NetworkParams& params, const head::PosteriorHead& posterior,
    const std::vector<TestItem>& items, const corpus::Lexicon& lexicon,
    int run_id);

void write_records(const std::filesystem::path& path,
                   const std::vector<ActivationRecord>& records);
std::vector<ActivationRecord> load_records(const std::filesystem::path& path);

// One analysis cell: either a test result or the degeneracy that
// prevented it (zero variance and similar).
struct CellResult {
  std::optional<stats::TestResult> result;
  std::string error;

  bool ok() const { return result.has_value(); }
};

struct AnalysisRow {
  std::string word_class;  // display label, matches the paper's tables
  corpus::Role probe;
  CellResult zero_mle;     // one-sample t vs 0 of the RA-minus-congruent
  CellResult zero_bayes;   //   contrast, per method
  CellResult paired;       // paired t of raw RA activations, bayes vs mle
};

struct AnalysisTable {
  std::vector<AnalysisRow> rows;
  int df = 0;
};

// Model analysis: activations averaged over items within each run; tests
// across the m runs (df = m-1).
AnalysisTable model_analysis(const std::vector<ActivationRecord>& records);
// Item analysis: averaged over runs, tested across the n items (df = n-1).
AnalysisTable item_analysis(const std::vector<ActivationRecord>& records);

// Paired MLE-vs-Bayesian tests per prior-covariance scale (model
// analysis), one column per scale.
struct SweepTable {
  std::vector<double> scales;
  std::vector<std::string> word_classes;
  std::vector<corpus::Role> probes;
  // cell [row][scale]
  std::vector<std::vector<CellResult>> paired;
};

SweepTable prior_sweep(
    const std::map<double, std::vector<ActivationRecord>>& records_by_scale);

void write_analysis_tables(const std::filesystem::path& out_dir,
                           const std::string& prefix,
                           const AnalysisTable& table);
void write_sweep_table(const std::filesystem::path& path,
                       const SweepTable& table);

// Grouped bar charts (MLE blue, Bayesian red, black sd error bars), one
// SVG per item and condition, panels per probe role.
void write_figures(const std::filesystem::path& out_dir,
                   const std::vector<TestItem>& items,
                   const std::vector<ActivationRecord>& records);

}  // namespace gestalt::expt
