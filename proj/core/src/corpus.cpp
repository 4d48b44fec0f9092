#include "gestalt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"

namespace gestalt::corpus {

namespace {

constexpr const char* kGeneratorVersion = "gestalt-corpus-v1";
constexpr double kWeightSumTolerance = 1e-6;

// Surface form of an action in third person ("eat" -> "eats",
// "fish" -> "fishes", "look at" -> "looks at").
std::string verb_surface(const std::string& token) {
  const auto space = token.find(' ');
  std::string head = space == std::string::npos ? token : token.substr(0, space);
  const std::string tail =
      space == std::string::npos ? "" : token.substr(space);
  if (head.ends_with("s") || head.ends_with("sh") || head.ends_with("ch") ||
      head.ends_with("x"))
    head += "es";
  else
    head += "s";
  return head + tail;
}

// Situations realize with a function-word particle; "at breakfast" follows
// the word table's example, everything else uses "during".
std::string situation_particle(const std::string& token) {
  return token == "breakfast" ? "at" : "during";
}

void check_normalized(const std::vector<WeightedChoice>& table,
                      const std::string& what) {
  if (table.empty()) throw ParseError(what + ": empty weight table");
  double sum = 0.0;
  for (const auto& c : table) {
    if (c.weight < 0.0)
      throw ParseError(what + ": negative weight for '" + c.token + "'");
    sum += c.weight;
  }
  if (std::fabs(sum - 1.0) > kWeightSumTolerance)
    throw ParseError(what + ": weights sum to " + std::to_string(sum) +
                     ", expected 1");
}

std::string draw(Rng& rng, const std::vector<WeightedChoice>& table) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& c : table) {
    acc += c.weight;
    if (u < acc) return c.token;
  }
  return table.back().token;  // guard against rounding at u ~ 1
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const ActionTables& EventTables::for_action(const std::string& action) const {
  for (const auto& a : actions)
    if (a.action == action) return a;
  throw ParseError("no event tables for action '" + action + "'");
}

EventTables load_event_tables(const std::filesystem::path& path,
                              const Lexicon& lexicon) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event tables: " + path.string());

  EventTables tables;
  ActionTables* current = nullptr;
  bool in_agents = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (!line.ends_with("]")) throw ParseError(where + ": unclosed section");
      const std::string section = trim(line.substr(1, line.size() - 2));
      if (section == "agents") {
        in_agents = true;
        current = nullptr;
      } else if (section.rfind("action ", 0) == 0) {
        in_agents = false;
        const std::string action = trim(section.substr(7));
        if (lexicon.require(action).category != Category::kAction)
          throw ParseError(where + ": '" + action + "' is not an action");
        tables.actions.push_back(ActionTables{action, {}, {}, {}});
        current = &tables.actions.back();
      } else {
        throw ParseError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(where + ": expected 'key = weight'");
    const std::string key = trim(line.substr(0, eq));
    double weight = 0.0;
    try {
      weight = std::stod(trim(line.substr(eq + 1)));
    } catch (const std::exception&) {
      throw ParseError(where + ": bad weight value");
    }
    if (in_agents) {
      if (lexicon.require(key).category != Category::kAgent)
        throw ParseError(where + ": '" + key + "' is not an agent");
      tables.agents.push_back({key, weight});
      continue;
    }
    if (current == nullptr)
      throw ParseError(where + ": entry outside any section");
    auto slot_entry = [&](const std::string& prefix,
                          std::vector<WeightedChoice>& table, Category want,
                          bool allow_none, bool patient_like) {
      std::string token = trim(key.substr(prefix.size()));
      if (token == "none") {
        if (!allow_none) throw ParseError(where + ": 'none' not allowed here");
        token.clear();
      } else {
        const Category cat = lexicon.require(token).category;
        const bool ok = patient_like ? is_patient_category(cat) : cat == want;
        if (!ok)
          throw ParseError(where + ": '" + token +
                           "' has the wrong category for this slot");
      }
      table.push_back({token, weight});
    };
    if (key.rfind("situation ", 0) == 0)
      slot_entry("situation ", current->situations, Category::kSituation,
                 true, false);
    else if (key.rfind("patient ", 0) == 0)
      slot_entry("patient ", current->patients, Category::kFood, false, true);
    else if (key.rfind("location ", 0) == 0)
      slot_entry("location ", current->locations, Category::kLocation, true,
                 false);
    else
      throw ParseError(where + ": unknown key '" + key + "'");
  }

  check_normalized(tables.agents, path.string() + " [agents]");
  for (const auto& a : tables.actions) {
    const std::string what = path.string() + " [action " + a.action + "]";
    check_normalized(a.situations, what + " situations");
    check_normalized(a.patients, what + " patients");
    check_normalized(a.locations, what + " locations");
    for (const auto& p : a.patients)
      if (p.token.empty())
        throw ParseError(what + ": action with empty patient entry");
  }
  if (tables.actions.empty())
    throw ParseError(path.string() + ": no action sections");
  return tables;
}

EventFrame sample_event(Rng& rng, const EventTables& tables) {
  EventFrame frame;
  // Decision order is fixed: action, agent, situation, patient, location.
  const std::size_t action_idx = rng.uniform_index(tables.actions.size());
  const ActionTables& action = tables.actions[action_idx];
  frame.action = action.action;
  frame.agent = draw(rng, tables.agents);
  if (const std::string s = draw(rng, action.situations); !s.empty())
    frame.situation = s;
  frame.patient = draw(rng, action.patients);
  if (const std::string l = draw(rng, action.locations); !l.empty())
    frame.location = l;
  return frame;
}

Sentence realize_sentence(const EventFrame& frame, const Lexicon& lexicon) {
  Sentence s;
  s.frame = frame;
  if (frame.situation)
    s.constituents.push_back(situation_particle(*frame.situation) + " " +
                             *frame.situation);
  s.constituents.push_back(frame.agent);
  s.constituents.push_back(verb_surface(frame.action));
  s.constituents.push_back(frame.patient);
  if (frame.location) s.constituents.push_back("in " + *frame.location);
  (void)lexicon.require(frame.action);
  (void)lexicon.require(frame.agent);
  (void)lexicon.require(frame.patient);
  return s;
}

namespace {

// Strips a leading function-word particle, returning the content token.
std::optional<std::string> strip_prefix(const std::string& text,
                                        std::initializer_list<const char*> ps) {
  for (const char* p : ps) {
    const std::string prefix = std::string(p) + " ";
    if (text.rfind(prefix, 0) == 0) return text.substr(prefix.size());
  }
  return std::nullopt;
}

std::string parse_action_token(const std::string& surface,
                               const Lexicon& lexicon) {
  for (const std::string& tok : lexicon.tokens_of(Category::kAction))
    if (verb_surface(tok) == surface) return tok;
  throw ParseError("cannot parse action surface form '" + surface + "'");
}

}  // namespace

EventFrame parse_sentence(const std::vector<std::string>& constituents,
                          const Lexicon& lexicon) {
  if (constituents.size() < 3 || constituents.size() > 5)
    throw ParseError("sentence must have 3-5 constituents, got " +
                     std::to_string(constituents.size()));
  EventFrame frame;
  std::size_t i = 0;
  if (auto sit = strip_prefix(constituents[i], {"during", "at"})) {
    if (lexicon.require(*sit).category != Category::kSituation)
      throw ParseError("'" + *sit + "' is not a situation token");
    frame.situation = *sit;
    ++i;
  }
  if (constituents.size() < i + 3)
    throw ParseError("too few constituents after situation");
  frame.agent = constituents[i++];
  frame.action = parse_action_token(constituents[i++], lexicon);
  frame.patient = constituents[i++];
  if (i < constituents.size()) {
    auto loc = strip_prefix(constituents[i], {"in"});
    if (!loc) throw ParseError("expected location constituent, got '" +
                               constituents[i] + "'");
    if (lexicon.require(*loc).category != Category::kLocation)
      throw ParseError("'" + *loc + "' is not a location token");
    frame.location = *loc;
    ++i;
  }
  if (i != constituents.size())
    throw ParseError("trailing constituents after location");
  (void)lexicon.require(frame.agent);
  (void)lexicon.require(frame.patient);
  return frame;
}

Eigen::VectorXd encode_constituent(const std::string& constituent,
                                   const Lexicon& lexicon) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(lexicon.token_count());
  if (auto sit = strip_prefix(constituent, {"during", "at"})) {
    v(lexicon.token_index("during/at")) = 1.0;
    v(lexicon.token_index(*sit)) = 1.0;
    return v;
  }
  if (auto loc = strip_prefix(constituent, {"in"})) {
    v(lexicon.token_index("in")) = 1.0;
    v(lexicon.token_index(*loc)) = 1.0;
    return v;
  }
  if (lexicon.has(constituent)) {
    v(lexicon.token_index(constituent)) = 1.0;
    return v;
  }
  v(lexicon.token_index(parse_action_token(constituent, lexicon))) = 1.0;
  return v;
}

std::vector<RoleQuery> role_queries(const EventFrame& frame,
                                    const Lexicon& lexicon) {
  std::vector<RoleQuery> out;
  auto push = [&](Role role, const std::string& filler) {
    RoleQuery q;
    q.role = role;
    q.filler = filler;
    q.probe = lexicon.role_vector(role);
    q.target = q.probe + lexicon.feature_vector(filler);
    out.push_back(std::move(q));
  };
  if (frame.situation) push(Role::kSituation, *frame.situation);
  push(Role::kAgent, frame.agent);
  push(Role::kAction, frame.action);
  push(Role::kPatient, frame.patient);
  if (frame.location) push(Role::kLocation, *frame.location);
  return out;
}

std::vector<TrainingPair> emit_training_pairs(const Sentence& sentence,
                                              const Lexicon& lexicon) {
  const auto queries = role_queries(sentence.frame, lexicon);
  std::vector<TrainingPair> out;
  out.reserve(sentence.constituents.size() * queries.size());
  for (std::size_t len = 1; len <= sentence.constituents.size(); ++len)
    for (const RoleQuery& q : queries)
      out.push_back(TrainingPair{static_cast<int>(len), q.role, q.probe,
                                 q.target});
  return out;
}

GenerateStats generate_corpus(std::uint64_t seed, std::uint64_t n,
                              const EventTables& tables,
                              const Lexicon& lexicon,
                              const std::filesystem::path& out_path) {
  if (n < 1) throw ConfigError("corpus size must be >= 1");
  std::ostringstream out;
  out << "#gestalt-corpus\tv1\tseed=" << hex64(seed) << "\tn=" << n
      << "\tgen=" << kGeneratorVersion << "\n";
  GenerateStats stats;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t record_seed = derive_seed(seed, "sentence", i);
    Rng rng(record_seed);
    const EventFrame frame = sample_event(rng, tables);
    const Sentence s = realize_sentence(frame, lexicon);
    stats.length_histogram[s.constituents.size()] += 1;

    nlohmann::ordered_json rec;
    rec["constituents"] = s.constituents;
    nlohmann::ordered_json jframe;
    jframe["action"] = frame.action;
    jframe["agent"] = frame.agent;
    jframe["patient"] = frame.patient;
    jframe["situation"] =
        frame.situation ? nlohmann::ordered_json(*frame.situation)
                        : nlohmann::ordered_json(nullptr);
    jframe["location"] =
        frame.location ? nlohmann::ordered_json(*frame.location)
                       : nlohmann::ordered_json(nullptr);
    rec["frame"] = std::move(jframe);
    rec["seed"] = hex64(record_seed);
    rec["gen"] = kGeneratorVersion;
    out << rec.dump() << "\n";
  }
  write_text_file(out_path, out.str());
  return stats;
}

std::vector<Sentence> load_corpus(const std::filesystem::path& path,
                                  const Lexicon& lexicon,
                                  CorpusHeader* header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("#gestalt-corpus", 0) != 0)
    throw ParseError(path.string() + ": missing corpus header");
  if (header != nullptr) {
    *header = CorpusHeader{};
    std::istringstream hdr(line);
    std::string field;
    while (std::getline(hdr, field, '\t')) {
      if (field.rfind("seed=", 0) == 0)
        header->seed = std::stoull(field.substr(5), nullptr, 16);
      else if (field.rfind("n=", 0) == 0)
        header->n = std::stoull(field.substr(2));
      else if (field.rfind("gen=", 0) == 0)
        header->generator_version = field.substr(4);
    }
  }

  std::vector<Sentence> sentences;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": bad record: " + e.what());
    }
    Sentence s;
    try {
      s.constituents = rec.at("constituents").get<std::vector<std::string>>();
      const auto& jf = rec.at("frame");
      s.frame.action = jf.at("action").get<std::string>();
      s.frame.agent = jf.at("agent").get<std::string>();
      s.frame.patient = jf.at("patient").get<std::string>();
      if (!jf.at("situation").is_null())
        s.frame.situation = jf.at("situation").get<std::string>();
      if (!jf.at("location").is_null())
        s.frame.location = jf.at("location").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": missing record field: " + e.what());
    }
    // Round-trip guard: the stored constituents must realize the stored
    // frame exactly.
    if (realize_sentence(s.frame, lexicon).constituents != s.constituents)
      throw ParseError(where + ": constituents do not match frame");
    sentences.push_back(std::move(s));
  }
  if (sentences.empty())
    throw ParseError(path.string() + ": corpus has no records");
  return sentences;
}

}  // namespace gestalt::corpus
