#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace gestalt::corpus {

enum class Category {
  kAgent,
  kAction,
  kLocation,
  kSituation,
  kFood,
  kDrink,
  kGame,
  kGarment,
  kReadable,
  kFlower,
  kTree,
  kBird,
  kFish,
  kFunctionWord,
};

Category category_from_string(const std::string& s);
const char* category_to_string(Category c);

// Patient slots accept the 36 object tokens (foods, drinks, games,
// garments, readables, flowers, trees, birds, fish).
bool is_patient_category(Category c);

// Thematic roles probed during training and evaluation. Each role owns a
// dedicated output unit ("role-agent", ...) in the feature inventory.
enum class Role { kAgent, kAction, kPatient, kSituation, kLocation };
inline constexpr Role kAllRoles[] = {Role::kAgent, Role::kAction,
                                     Role::kPatient, Role::kSituation,
                                     Role::kLocation};
const char* role_to_string(Role r);
Role role_from_string(const std::string& s);
std::string role_feature_label(Role r);

struct Lexeme {
  std::string token;
  Category category;
  std::vector<std::string> features;  // labels; empty for function words
};

// Ordered feature labels. Index assignment is the file's first-appearance
// order followed by the explicitly declared extra labels, so it is stable
// across runs for a fixed lexicon file.
class FeatureInventory {
 public:
  int add(const std::string& label);  // returns index; rejects duplicates
  int index_of(const std::string& label) const;
  bool contains(const std::string& label) const;
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

class Lexicon {
 public:
  Lexicon(std::vector<Lexeme> entries, FeatureInventory features);

  const std::vector<Lexeme>& entries() const { return entries_; }
  const FeatureInventory& features() const { return features_; }
  int token_count() const { return static_cast<int>(entries_.size()); }

  bool has(const std::string& token) const;
  const Lexeme& require(const std::string& token) const;
  int token_index(const std::string& token) const;

  std::vector<std::string> tokens_of(Category c) const;

  // Binary semantic vector over the full inventory; all zeros for
  // function words.
  Eigen::VectorXd feature_vector(const std::string& token) const;
  Eigen::VectorXd role_vector(Role r) const;

 private:
  std::vector<Lexeme> entries_;
  FeatureInventory features_;
  std::unordered_map<std::string, int> token_index_;
};

// Parses the tab-separated lexicon file. The header declares the expected
// token and feature counts and both are validated; a mismatch is reported
// rather than silently adjusted.
Lexicon load_lexicon(const std::filesystem::path& path);

}  // namespace gestalt::corpus
