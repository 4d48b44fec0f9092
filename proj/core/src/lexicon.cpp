#include "gestalt/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gestalt/errors.hpp"

namespace gestalt::corpus {

namespace {

const std::pair<const char*, Category> kCategoryNames[] = {
    {"agent", Category::kAgent},       {"action", Category::kAction},
    {"location", Category::kLocation}, {"situation", Category::kSituation},
    {"food", Category::kFood},         {"drink", Category::kDrink},
    {"game", Category::kGame},         {"garment", Category::kGarment},
    {"readable", Category::kReadable}, {"flower", Category::kFlower},
    {"tree", Category::kTree},         {"bird", Category::kBird},
    {"fish", Category::kFish},         {"function-word", Category::kFunctionWord},
};

// Keeps trailing empty fields (function-word rows end in an empty column).
std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

Category category_from_string(const std::string& s) {
  for (const auto& [name, cat] : kCategoryNames)
    if (s == name) return cat;
  throw ParseError("unknown lexeme category: '" + s + "'");
}

const char* category_to_string(Category c) {
  for (const auto& [name, cat] : kCategoryNames)
    if (c == cat) return name;
  return "?";
}

bool is_patient_category(Category c) {
  switch (c) {
    case Category::kFood:
    case Category::kDrink:
    case Category::kGame:
    case Category::kGarment:
    case Category::kReadable:
    case Category::kFlower:
    case Category::kTree:
    case Category::kBird:
    case Category::kFish:
      return true;
    default:
      return false;
  }
}

const char* role_to_string(Role r) {
  switch (r) {
    case Role::kAgent: return "agent";
    case Role::kAction: return "action";
    case Role::kPatient: return "patient";
    case Role::kSituation: return "situation";
    case Role::kLocation: return "location";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  for (Role r : kAllRoles)
    if (s == role_to_string(r)) return r;
  throw ParseError("unknown role: '" + s + "'");
}

std::string role_feature_label(Role r) {
  return std::string("role-") + role_to_string(r);
}

int FeatureInventory::add(const std::string& label) {
  auto [it, inserted] = index_.emplace(label, static_cast<int>(labels_.size()));
  if (!inserted)
    throw ParseError("duplicate feature label: '" + label + "'");
  labels_.push_back(label);
  return it->second;
}

int FeatureInventory::index_of(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end())
    throw ParseError("feature referenced but undeclared: '" + label + "'");
  return it->second;
}

bool FeatureInventory::contains(const std::string& label) const {
  return index_.count(label) > 0;
}

Lexicon::Lexicon(std::vector<Lexeme> entries, FeatureInventory features)
    : entries_(std::move(entries)), features_(std::move(features)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Lexeme& lex = entries_[i];
    if (!token_index_.emplace(lex.token, static_cast<int>(i)).second)
      throw ParseError("duplicate token: '" + lex.token + "'");
    if (lex.category == Category::kFunctionWord && !lex.features.empty())
      throw ParseError("function word '" + lex.token +
                       "' must have an empty feature set");
    for (const std::string& f : lex.features) features_.index_of(f);
  }
}

bool Lexicon::has(const std::string& token) const {
  return token_index_.count(token) > 0;
}

const Lexeme& Lexicon::require(const std::string& token) const {
  return entries_[static_cast<std::size_t>(token_index(token))];
}

int Lexicon::token_index(const std::string& token) const {
  auto it = token_index_.find(token);
  if (it == token_index_.end())
    throw ParseError("token not in lexicon: '" + token + "'");
  return it->second;
}

std::vector<std::string> Lexicon::tokens_of(Category c) const {
  std::vector<std::string> out;
  for (const Lexeme& lex : entries_)
    if (lex.category == c) out.push_back(lex.token);
  return out;
}

Eigen::VectorXd Lexicon::feature_vector(const std::string& token) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(features_.size());
  for (const std::string& f : require(token).features)
    v(features_.index_of(f)) = 1.0;
  return v;
}

Eigen::VectorXd Lexicon::role_vector(Role r) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(features_.size());
  v(features_.index_of(role_feature_label(r))) = 1.0;
  return v;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file: " + path.string());

  std::string line;
  int line_no = 0;
  int declared_tokens = -1;
  int declared_features = -1;

  if (!std::getline(in, line))
    throw ParseError(path.string() + ": empty lexicon file");
  ++line_no;
  {
    const auto fields = split(line, '\t');
    if (fields.empty() || fields[0] != "#lexicon")
      throw ParseError(path.string() + ": missing '#lexicon' header");
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      if (f.rfind("tokens=", 0) == 0)
        declared_tokens = std::stoi(f.substr(7));
      else if (f.rfind("features=", 0) == 0)
        declared_features = std::stoi(f.substr(9));
    }
    if (declared_tokens < 0 || declared_features < 0)
      throw ParseError(path.string() +
                       ": header must declare tokens= and features=");
  }

  std::vector<Lexeme> entries;
  std::vector<std::string> extra_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split(line, '\t');
    const std::string where =
        path.string() + ":" + std::to_string(line_no);
    if (fields[0] == "!feature") {
      if (fields.size() != 2 || fields[1].empty())
        throw ParseError(where + ": expected '!feature\\t<label>'");
      extra_labels.push_back(fields[1]);
      continue;
    }
    if (fields.size() != 3)
      throw ParseError(where + ": expected 3 tab-separated fields");
    Lexeme lex;
    lex.token = fields[0];
    lex.category = category_from_string(fields[1]);
    if (!fields[2].empty()) {
      for (const std::string& f : split(fields[2], ',')) {
        if (f.empty()) throw ParseError(where + ": empty feature label");
        lex.features.push_back(f);
      }
    }
    entries.push_back(std::move(lex));
  }

  // Inventory order: first appearance across entries, then declared extras
  // (role units and reserved padding).
  FeatureInventory inv;
  for (const Lexeme& lex : entries)
    for (const std::string& f : lex.features)
      if (!inv.contains(f)) inv.add(f);
  for (const std::string& f : extra_labels) inv.add(f);

  if (static_cast<int>(entries.size()) != declared_tokens)
    throw ParseError(path.string() + ": header declares " +
                     std::to_string(declared_tokens) + " tokens but file has " +
                     std::to_string(entries.size()));
  if (inv.size() != declared_features)
    throw ParseError(path.string() + ": header declares " +
                     std::to_string(declared_features) +
                     " features but inventory has " +
                     std::to_string(inv.size()));

  return Lexicon(std::move(entries), std::move(inv));
}

}  // namespace gestalt::corpus
