#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gestalt/lexicon.hpp"
#include "gestalt/prng.hpp"

namespace gestalt::corpus {

// One sampled event. Tokens refer to lexicon entries; situation and
// location may be absent depending on the action's tables.
struct EventFrame {
  std::string action;
  std::string agent;
  std::string patient;
  std::optional<std::string> situation;
  std::optional<std::string> location;

  bool operator==(const EventFrame&) const = default;
};

// Realized surface form plus the frame it came from. Constituent order is
// [situation][agent][action][patient][location] when a situation is
// present, else [agent][action][patient][location-if-any].
struct Sentence {
  std::vector<std::string> constituents;
  EventFrame frame;

  bool operator==(const Sentence&) const = default;
};

struct WeightedChoice {
  std::string token;  // empty string encodes "slot absent"
  double weight = 0.0;
};

struct ActionTables {
  std::string action;
  std::vector<WeightedChoice> situations;
  std::vector<WeightedChoice> patients;
  std::vector<WeightedChoice> locations;
};

// Per-decision-point weight tables; every table must sum to 1.
struct EventTables {
  std::vector<WeightedChoice> agents;
  std::vector<ActionTables> actions;

  const ActionTables& for_action(const std::string& action) const;
};

EventTables load_event_tables(const std::filesystem::path& path,
                              const Lexicon& lexicon);

EventFrame sample_event(Rng& rng, const EventTables& tables);

Sentence realize_sentence(const EventFrame& frame, const Lexicon& lexicon);

// Inverse of realize_sentence; used for round-trip validation and for
// encoding arbitrary constituent sequences (including reversal anomalies,
// which have no valid frame).
EventFrame parse_sentence(const std::vector<std::string>& constituents,
                          const Lexicon& lexicon);

// Multi-hot activation over the constituent (token) units. Situation and
// location constituents activate their function word together with the
// content word.
Eigen::VectorXd encode_constituent(const std::string& constituent,
                                   const Lexicon& lexicon);

// One probe/target query against a sentence frame: the probe activates a
// single role unit, the target is that role unit plus the filler's
// semantic features.
struct RoleQuery {
  Role role;
  std::string filler;
  Eigen::VectorXd probe;
  Eigen::VectorXd target;
};

std::vector<RoleQuery> role_queries(const EventFrame& frame,
                                    const Lexicon& lexicon);

// Full training pair: a constituent prefix plus one role query. Emitted
// for every prefix length 1..L and every filled role, so targets are
// constant across prefixes of one sentence.
struct TrainingPair {
  int prefix_len = 0;
  Role role;
  Eigen::VectorXd probe;
  Eigen::VectorXd target;
};

std::vector<TrainingPair> emit_training_pairs(const Sentence& sentence,
                                              const Lexicon& lexicon);

struct CorpusHeader {
  std::uint64_t seed = 0;
  std::uint64_t n = 0;
  std::string generator_version;
};

struct GenerateStats {
  std::array<std::uint64_t, 6> length_histogram{};  // index = length
};

GenerateStats generate_corpus(std::uint64_t seed, std::uint64_t n,
                              const EventTables& tables,
                              const Lexicon& lexicon,
                              const std::filesystem::path& out_path);

std::vector<Sentence> load_corpus(const std::filesystem::path& path,
                                  const Lexicon& lexicon,
                                  CorpusHeader* header = nullptr);

}  // namespace gestalt::corpus
