#include "gestalt/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <tuple>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"

namespace gestalt::expt {

namespace {

struct CellDef {
  const char* record_class;   // word_class value in records
  const char* display;        // row label in emitted tables
  corpus::Role probe;
};

constexpr CellDef kCells[3] = {
    {kWordClassSyntacticAgent, "syntactically indicated agents",
     corpus::Role::kAgent},
    {kWordClassSemanticAgent, "semantically plausible agents",
     corpus::Role::kPatient},
    {kWordClassNonRelevant, "all non-relevant patients", corpus::Role::kAgent},
};

constexpr corpus::Role kProbes[3] = {corpus::Role::kAgent,
                                     corpus::Role::kAction,
                                     corpus::Role::kPatient};

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

CellResult run_test(const std::function<stats::TestResult()>& fn) {
  CellResult cell;
  try {
    cell.result = fn();
  } catch (const StatError& e) {
    cell.error = e.what();
  }
  return cell;
}

std::string csv_stat(const CellResult& cell, bool p_value) {
  if (!cell.ok()) return "nan";
  return format_double(p_value ? cell.result->p_two_sided : cell.result->t);
}

// Cell values keyed by (run, item, condition): the final-word activation
// of the cell's tracked unit under the cell's probe, for each method.
struct CellValues {
  // [cell][method: 0=mle 1=bayes] -> map (run, item, reversal) -> value
  std::map<std::tuple<int, int, bool>, double> value[3][2];
};

CellValues collect_cell_values(const std::vector<ActivationRecord>& records) {
  std::map<int, int> final_pos;
  for (const ActivationRecord& r : records) {
    auto [it, inserted] = final_pos.emplace(r.item, r.word_pos);
    if (!inserted) it->second = std::max(it->second, r.word_pos);
  }
  CellValues out;
  for (const ActivationRecord& r : records) {
    if (r.word_pos != final_pos.at(r.item)) continue;
    for (int c = 0; c < 3; ++c) {
      if (r.word_class != kCells[c].record_class || r.probe != kCells[c].probe)
        continue;
      const auto key = std::make_tuple(r.run, r.item, r.reversal);
      out.value[c][0][key] = r.mle;
      out.value[c][1][key] = r.bayes_mean;
    }
  }
  return out;
}

std::vector<int> sorted_of(const std::set<int>& s) {
  return {s.begin(), s.end()};
}

double lookup(const CellValues& values, int cell, int method, int run,
              int item, bool reversal) {
  const auto key = std::make_tuple(run, item, reversal);
  const auto& map = values.value[cell][method];
  auto it = map.find(key);
  if (it == map.end())
    throw ParseError("analysis: missing record for run " +
                     std::to_string(run) + ", item " + std::to_string(item));
  return it->second;
}

// Shared core of the model and item analyses: `groups` are the units the
// tests run across (runs for the model analysis, items for the item
// analysis) and `averaged` the dimension averaged first.
AnalysisTable analyze(const std::vector<ActivationRecord>& records,
                      bool group_by_run) {
  if (records.empty()) throw ParseError("analysis: no records");
  const CellValues values = collect_cell_values(records);
  std::set<int> run_set;
  std::set<int> item_set;
  for (const ActivationRecord& r : records) {
    run_set.insert(r.run);
    item_set.insert(r.item);
  }
  const std::vector<int> groups =
      group_by_run ? sorted_of(run_set) : sorted_of(item_set);
  const std::vector<int> averaged =
      group_by_run ? sorted_of(item_set) : sorted_of(run_set);
  if (groups.size() < 2)
    throw StatError("analysis: need at least 2 " +
                    std::string(group_by_run ? "runs" : "items"));

  AnalysisTable table;
  table.df = static_cast<int>(groups.size()) - 1;
  for (int c = 0; c < 3; ++c) {
    // Per group: the RA-minus-congruent contrast (for the tests against
    // zero) and the raw RA activation (for the paired method comparison),
    // averaged over the other dimension.
    std::vector<double> contrast_mle;
    std::vector<double> contrast_bayes;
    std::vector<double> raw_mle;
    std::vector<double> raw_bayes;
    for (int g : groups) {
      double c_mle = 0.0;
      double c_bayes = 0.0;
      double r_mle = 0.0;
      double r_bayes = 0.0;
      for (int a : averaged) {
        const int run = group_by_run ? g : a;
        const int item = group_by_run ? a : g;
        const double mle_ra = lookup(values, c, 0, run, item, true);
        const double mle_cong = lookup(values, c, 0, run, item, false);
        const double bay_ra = lookup(values, c, 1, run, item, true);
        const double bay_cong = lookup(values, c, 1, run, item, false);
        c_mle += mle_ra - mle_cong;
        c_bayes += bay_ra - bay_cong;
        r_mle += mle_ra;
        r_bayes += bay_ra;
      }
      const double n = static_cast<double>(averaged.size());
      contrast_mle.push_back(c_mle / n);
      contrast_bayes.push_back(c_bayes / n);
      raw_mle.push_back(r_mle / n);
      raw_bayes.push_back(r_bayes / n);
    }
    AnalysisRow row;
    row.word_class = kCells[c].display;
    row.probe = kCells[c].probe;
    row.zero_mle =
        run_test([&] { return stats::one_sample_t(contrast_mle, 0.0); });
    row.zero_bayes =
        run_test([&] { return stats::one_sample_t(contrast_bayes, 0.0); });
    row.paired = run_test([&] { return stats::paired_t(raw_bayes, raw_mle); });
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

std::vector<TestItem> build_items(const std::filesystem::path& path,
                                  const corpus::Lexicon& lexicon,
                                  const corpus::EventTables& tables) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open items fixture: " + path.string());
  std::vector<TestItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_line(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 5)
      throw ParseError(where + ": expected 5 tab-separated fields");
    TestItem item;
    item.id = std::stoi(fields[0]);
    const std::string& situation = fields[1];
    const std::string& agent = fields[2];
    const std::string& action = fields[3];
    const std::string& patient = fields[4];
    if (lexicon.require(agent).category != corpus::Category::kAgent)
      throw ParseError(where + ": '" + agent + "' is not an agent");
    if (!corpus::is_patient_category(lexicon.require(patient).category))
      throw ParseError(where + ": '" + patient + "' is not a patient token");

    const corpus::ActionTables& at = tables.for_action(action);
    auto allowed = [](const std::vector<corpus::WeightedChoice>& table,
                      const std::string& token) {
      for (const auto& c : table)
        if (c.token == token) return true;
      return false;
    };
    if (!allowed(at.patients, patient))
      throw ParseError(where + ": patient '" + patient +
                       "' is not compatible with action '" + action + "'");
    if (!allowed(at.situations, situation))
      throw ParseError(where + ": situation '" + situation +
                       "' is not allowed for action '" + action + "'");

    corpus::EventFrame congruent_frame{action, agent, patient, situation, {}};
    item.congruent = corpus::realize_sentence(congruent_frame, lexicon);
    corpus::EventFrame reversal_frame{action, patient, agent, situation, {}};
    item.reversal = corpus::realize_sentence(reversal_frame, lexicon);

    item.syntactic_agent_unit = patient;  // identity feature == token label
    item.semantic_agent_unit = agent;
    if (!lexicon.features().contains(item.syntactic_agent_unit) ||
        !lexicon.features().contains(item.semantic_agent_unit))
      throw ParseError(where + ": tracked unit lacks an identity feature");

    for (const corpus::Lexeme& lex : lexicon.entries()) {
      if (!corpus::is_patient_category(lex.category)) continue;
      if (allowed(at.patients, lex.token)) continue;
      item.nonrelevant_units.push_back(lex.token);
    }
    if (item.nonrelevant_units.empty())
      throw ParseError(where + ": no non-relevant patients for this action");
    items.push_back(std::move(item));
  }
  if (items.empty()) throw ParseError(path.string() + ": no items");
  return items;
}

std::vector<ActivationRecord> evaluate_model(
    const net::NetworkParams& params, const head::PosteriorHead& posterior,
    const std::vector<TestItem>& items, const corpus::Lexicon& lexicon,
    int run_id) {
  const net::FeatureMap fmap = net::extract_feature_map(params);
  const Eigen::MatrixXd theta = params.output_layer_rows();
  std::vector<ActivationRecord> records;

  for (const TestItem& item : items) {
    for (const bool reversal : {false, true}) {
      const corpus::Sentence& sentence =
          reversal ? item.reversal : item.congruent;
      const auto len = static_cast<int>(sentence.constituents.size());
      Eigen::MatrixXd steps(lexicon.token_count(), len);
      for (int t = 0; t < len; ++t)
        steps.col(t) = corpus::encode_constituent(
            sentence.constituents[static_cast<std::size_t>(t)], lexicon);
      const Eigen::MatrixXd gestalts = net::run_update(params, steps);

      for (int pos = 1; pos <= len; ++pos) {
        for (const corpus::Role probe : kProbes) {
          const Eigen::VectorXd psi = fmap.psi_from_gestalt(
              gestalts.col(pos - 1), lexicon.role_vector(probe));
          auto emit = [&](const std::string& word_class,
                          const std::string& unit_label, double mle,
                          double mean, double sd) {
            ActivationRecord r;
            r.run = run_id;
            r.item = item.id;
            r.reversal = reversal;
            r.word_pos = pos;
            r.probe = probe;
            r.word_class = word_class;
            r.unit = unit_label;
            r.mle = mle;
            r.bayes_mean = mean;
            r.bayes_sd = sd;
            records.push_back(std::move(r));
          };
          auto unit_of = [&](const std::string& label) {
            return lexicon.features().index_of(label);
          };

          const int syn = unit_of(item.syntactic_agent_unit);
          emit(kWordClassSyntacticAgent, item.syntactic_agent_unit,
               head::predict_mle(theta, psi, syn),
               head::predict(posterior, psi, syn),
               head::predict_sd(posterior, psi, syn));

          const int sem = unit_of(item.semantic_agent_unit);
          emit(kWordClassSemanticAgent, item.semantic_agent_unit,
               head::predict_mle(theta, psi, sem),
               head::predict(posterior, psi, sem),
               head::predict_sd(posterior, psi, sem));

          double mle_sum = 0.0;
          double mean_sum = 0.0;
          double sd_sum = 0.0;
          for (const std::string& label : item.nonrelevant_units) {
            const int u = unit_of(label);
            mle_sum += head::predict_mle(theta, psi, u);
            mean_sum += head::predict(posterior, psi, u);
            sd_sum += head::predict_sd(posterior, psi, u);
          }
          const double n = static_cast<double>(item.nonrelevant_units.size());
          emit(kWordClassNonRelevant, kWordClassNonRelevant, mle_sum / n,
               mean_sum / n, sd_sum / n);
        }
      }
    }
  }
  return records;
}

void write_records(const std::filesystem::path& path,
                   const std::vector<ActivationRecord>& records) {
  std::ostringstream out;
  out << "run,item,condition,word_pos,probe,word_class,unit,"
         "mle_activation,bayes_mean,bayes_sd\n";
  for (const ActivationRecord& r : records) {
    out << r.run << ',' << r.item << ','
        << (r.reversal ? "reversal" : "congruent") << ',' << r.word_pos << ','
        << corpus::role_to_string(r.probe) << ',' << r.word_class << ','
        << r.unit << ',' << format_double(r.mle) << ','
        << format_double(r.bayes_mean) << ',' << format_double(r.bayes_sd)
        << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<ActivationRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("run,item,", 0) != 0)
    throw ParseError(path.string() + ": missing records header");
  std::vector<ActivationRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_line(line, ',');
    if (f.size() != 10)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 10 columns");
    ActivationRecord r;
    r.run = std::stoi(f[0]);
    r.item = std::stoi(f[1]);
    if (f[2] != "reversal" && f[2] != "congruent")
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": bad condition '" + f[2] + "'");
    r.reversal = f[2] == "reversal";
    r.word_pos = std::stoi(f[3]);
    r.probe = corpus::role_from_string(f[4]);
    r.word_class = f[5];
    r.unit = f[6];
    r.mle = std::stod(f[7]);
    r.bayes_mean = std::stod(f[8]);
    r.bayes_sd = std::stod(f[9]);
    records.push_back(std::move(r));
  }
  return records;
}

AnalysisTable model_analysis(const std::vector<ActivationRecord>& records) {
  return analyze(records, /*group_by_run=*/true);
}

AnalysisTable item_analysis(const std::vector<ActivationRecord>& records) {
  return analyze(records, /*group_by_run=*/false);
}

SweepTable prior_sweep(
    const std::map<double, std::vector<ActivationRecord>>& records_by_scale) {
  if (records_by_scale.empty()) throw ConfigError("prior_sweep: no scales");
  SweepTable table;
  for (int c = 0; c < 3; ++c) {
    table.word_classes.push_back(kCells[c].display);
    table.probes.push_back(kCells[c].probe);
    table.paired.emplace_back();
  }
  for (const auto& [scale, records] : records_by_scale) {
    table.scales.push_back(scale);
    const AnalysisTable t = model_analysis(records);
    for (int c = 0; c < 3; ++c)
      table.paired[static_cast<std::size_t>(c)].push_back(
          t.rows[static_cast<std::size_t>(c)].paired);
  }
  return table;
}

void write_analysis_tables(const std::filesystem::path& out_dir,
                           const std::string& prefix,
                           const AnalysisTable& table) {
  auto write = [&](const std::string& name, auto value_of) {
    std::ostringstream out;
    out << "word_class,role_probe,statistic,p_value\n";
    for (const AnalysisRow& row : table.rows) {
      const CellResult& cell = value_of(row);
      out << row.word_class << ',' << corpus::role_to_string(row.probe) << ','
          << csv_stat(cell, false) << ',' << csv_stat(cell, true) << '\n';
    }
    write_text_file(out_dir / (prefix + "_" + name + ".csv"), out.str());
  };
  write("zero_adam", [](const AnalysisRow& r) -> const CellResult& {
    return r.zero_mle;
  });
  write("zero_sampler", [](const AnalysisRow& r) -> const CellResult& {
    return r.zero_bayes;
  });
  write("paired", [](const AnalysisRow& r) -> const CellResult& {
    return r.paired;
  });
}

namespace {

std::string scale_tag(double scale) {
  std::string s = format_double(scale);
  s.erase(std::remove(s.begin(), s.end(), '.'), s.end());
  return s;
}

}  // namespace

void write_sweep_table(const std::filesystem::path& path,
                       const SweepTable& table) {
  std::ostringstream out;
  out << "word_class,role_probe";
  for (double s : table.scales) out << ",p_" << scale_tag(s);
  out << '\n';
  for (std::size_t c = 0; c < table.word_classes.size(); ++c) {
    out << table.word_classes[c] << ','
        << corpus::role_to_string(table.probes[c]);
    for (std::size_t s = 0; s < table.scales.size(); ++s)
      out << ',' << csv_stat(table.paired[c][s], true);
    out << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

// Aggregated bar for the figures: mean and across-run sd of an activation.
struct Bar {
  double mean = 0.0;
  double sd = 0.0;
};

Bar aggregate(const std::vector<double>& values) {
  Bar b;
  if (values.empty()) return b;
  const stats::Summary s = stats::describe(values);
  b.mean = s.mean;
  b.sd = s.sd_defined ? s.sd : 0.0;
  return b;
}

const char* kMleColor = "#1f77b4";
const char* kBayesColor = "#d62728";

void svg_rect(std::ostringstream& out, double x, double y, double w, double h,
              const char* fill) {
  out << "<rect x=\"" << format_double(x) << "\" y=\"" << format_double(y)
      << "\" width=\"" << format_double(w) << "\" height=\""
      << format_double(h) << "\" fill=\"" << fill << "\"/>\n";
}

void svg_line(std::ostringstream& out, double x1, double y1, double x2,
              double y2) {
  out << "<line x1=\"" << format_double(x1) << "\" y1=\"" << format_double(y1)
      << "\" x2=\"" << format_double(x2) << "\" y2=\"" << format_double(y2)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
}

void svg_text(std::ostringstream& out, double x, double y,
              const std::string& text, int size = 11,
              const char* anchor = "middle") {
  out << "<text x=\"" << format_double(x) << "\" y=\"" << format_double(y)
      << "\" font-size=\"" << size << "\" font-family=\"sans-serif\""
      << " text-anchor=\"" << anchor << "\">" << text << "</text>\n";
}

}  // namespace

void write_figures(const std::filesystem::path& out_dir,
                   const std::vector<TestItem>& items,
                   const std::vector<ActivationRecord>& records) {
  for (const TestItem& item : items) {
    for (const bool reversal : {false, true}) {
      const corpus::Sentence& sentence =
          reversal ? item.reversal : item.congruent;
      const int len = static_cast<int>(sentence.constituents.size());
      const std::string units[2] = {item.semantic_agent_unit,
                                    item.syntactic_agent_unit};

      // bars[pos][probe][unit][method]
      std::vector<double> samples[5][3][2][2];
      for (const ActivationRecord& r : records) {
        if (r.item != item.id || r.reversal != reversal) continue;
        if (r.word_pos < 1 || r.word_pos > len) continue;
        int probe_idx = -1;
        for (int p = 0; p < 3; ++p)
          if (kProbes[p] == r.probe) probe_idx = p;
        if (probe_idx < 0) continue;
        for (int u = 0; u < 2; ++u) {
          if (r.unit != units[u]) continue;
          samples[r.word_pos - 1][probe_idx][u][0].push_back(r.mle);
          samples[r.word_pos - 1][probe_idx][u][1].push_back(r.bayes_mean);
        }
      }

      const double panel_w = 760.0;
      const double panel_h = 180.0;
      const double margin_left = 60.0;
      const double margin_top = 40.0;
      const double panel_gap = 46.0;
      const double width = margin_left + panel_w + 30.0;
      const double height =
          margin_top + 3 * panel_h + 2 * panel_gap + 60.0;

      std::ostringstream out;
      out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
          << format_double(width) << "\" height=\"" << format_double(height)
          << "\" viewBox=\"0 0 " << format_double(width) << ' '
          << format_double(height) << "\">\n";
      std::string title = "item " + std::to_string(item.id) + " (" +
                          (reversal ? "reversal" : "congruent") + "): ";
      for (int t = 0; t < len; ++t) {
        if (t > 0) title += ", ";
        title += sentence.constituents[static_cast<std::size_t>(t)];
      }
      svg_text(out, width / 2, 20, title, 13);
      // Legend: blue MLE, red Bayesian; left bar of each pair is the
      // plausible-agent unit, right bar the syntactically indicated one.
      svg_rect(out, margin_left, 26, 10, 10, kMleColor);
      svg_text(out, margin_left + 16, 35, "MLE", 11, "start");
      svg_rect(out, margin_left + 60, 26, 10, 10, kBayesColor);
      svg_text(out, margin_left + 76, 35, "Bayesian", 11, "start");
      svg_text(out, margin_left + 160, 35,
               "pairs: " + units[0] + " | " + units[1], 11, "start");

      for (int p = 0; p < 3; ++p) {
        const double top = margin_top + 20.0 + p * (panel_h + panel_gap);
        const double base = top + panel_h;
        svg_text(out, margin_left - 8, top + 10,
                 std::string("probe: ") + corpus::role_to_string(kProbes[p]),
                 11, "end");
        // Axes and gridline at activation 1.0.
        svg_line(out, margin_left, base, margin_left + panel_w, base);
        svg_line(out, margin_left, top, margin_left, base);
        svg_text(out, margin_left - 6, base + 4, "0", 9, "end");
        svg_text(out, margin_left - 6, top + 4, "1", 9, "end");

        const double group_w = panel_w / len;
        for (int pos = 0; pos < len; ++pos) {
          const double gx = margin_left + pos * group_w;
          svg_text(out, gx + group_w / 2, base + 16,
                   sentence.constituents[static_cast<std::size_t>(pos)], 10);
          const double bar_w = group_w / 6.0;
          for (int u = 0; u < 2; ++u) {
            for (int m = 0; m < 2; ++m) {
              const Bar bar = aggregate(samples[pos][p][u][m]);
              const double x =
                  gx + bar_w * (0.5 + u * 2.5 + m) + bar_w * 0.05;
              const double h = std::clamp(bar.mean, 0.0, 1.0) * panel_h;
              svg_rect(out, x, base - h, bar_w * 0.9, h,
                       m == 0 ? kMleColor : kBayesColor);
              if (bar.sd > 0.0) {
                const double cx = x + bar_w * 0.45;
                const double y0 =
                    base - std::clamp(bar.mean - bar.sd, 0.0, 1.0) * panel_h;
                const double y1 =
                    base - std::clamp(bar.mean + bar.sd, 0.0, 1.0) * panel_h;
                svg_line(out, cx, y0, cx, y1);
                svg_line(out, cx - 3, y0, cx + 3, y0);
                svg_line(out, cx - 3, y1, cx + 3, y1);
              }
            }
          }
        }
      }
      out << "</svg>\n";

      const std::string name = "fig_item" + std::to_string(item.id) +
                               (reversal ? "_reversal" : "_congruent") +
                               ".svg";
      write_text_file(out_dir / name, out.str());
    }
  }
}

}  // namespace gestalt::expt
