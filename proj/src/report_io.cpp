#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmf/errors.hpp"
#include "mmf/evaluation.hpp"

namespace mmf {

using nlohmann::json;

json report_to_json(const EvalReport& r) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"label", r.confusion.labels().at(c)},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"error_rate", m.recall_undefined ? json(nullptr) : json(1.0 - m.recall)},
                         {"support", m.support},
                         {"precision_undefined", m.precision_undefined},
                         {"recall_undefined", m.recall_undefined}});
  }
  json rows = json::array();
  for (std::size_t i = 0; i < r.confusion.n_classes(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < r.confusion.n_classes(); ++j) row.push_back(r.confusion.at(i, j));
    rows.push_back(row);
  }
  return {{"name", r.name},
          {"seed", r.seed},
          {"split", r.split},
          {"split_fingerprint", r.split_fingerprint},
          {"averaging", "macro"},
          {"accuracy", r.accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"sample_count", r.sample_count},
          {"per_class", per_class},
          {"confusion", {{"labels", r.confusion.labels()}, {"counts", rows}}}};
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    r.name = j.at("name").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.split = j.at("split").get<std::string>();
    r.split_fingerprint = j.at("split_fingerprint").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.sample_count = j.at("sample_count").get<std::uint64_t>();
    r.confusion = ConfusionMatrix(j.at("confusion").at("labels").get<std::vector<std::string>>());
    const auto& rows = j.at("confusion").at("counts");
    if (rows.size() != r.confusion.n_classes()) throw DataError("report: confusion rows do not match labels");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != r.confusion.n_classes()) throw DataError("report: ragged confusion matrix");
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        r.confusion.add(static_cast<int>(i), static_cast<int>(k), rows[i][k].get<std::uint64_t>());
      }
    }
    for (const auto& m : j.at("per_class")) {
      ClassMetrics c;
      c.precision = m.at("precision").get<double>();
      c.recall = m.at("recall").get<double>();
      c.f1 = m.at("f1").get<double>();
      c.support = m.at("support").get<std::uint64_t>();
      c.precision_undefined = m.at("precision_undefined").get<bool>();
      c.recall_undefined = m.at("recall_undefined").get<bool>();
      r.per_class.push_back(c);
    }
    if (r.per_class.size() != r.confusion.n_classes()) throw DataError("report: per-class entries do not match labels");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << report_to_json(report).dump(2) << '\n';
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read report " + path.string());
  try {
    return report_from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    throw DataError("malformed report " + path.string() + ": " + e.what());
  }
}

std::string metrics_row(const EvalReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "Acc. %.2f  Prec. %.2f  Recall %.2f  F1 %.2f", r.accuracy * 100.0,
                r.macro_precision * 100.0, r.macro_recall * 100.0, r.macro_f1 * 100.0);
  return buf;
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& l : m.labels()) os << ',' << l;
  os << '\n';
  for (std::size_t i = 0; i < m.n_classes(); ++i) {
    os << m.labels()[i];
    for (std::size_t j = 0; j < m.n_classes(); ++j) os << ',' << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

std::string confusion_grid(const ConfusionMatrix& m) {
  std::size_t width = 4;
  for (const auto& l : m.labels()) width = std::max(width, l.size());
  for (std::size_t i = 0; i < m.n_classes(); ++i)
    for (std::size_t j = 0; j < m.n_classes(); ++j) width = std::max(width, std::to_string(m.at(i, j)).size());
  auto cell = [&](const std::string& s) { return std::string(width - s.size() + 1, ' ') + s; };

  std::ostringstream os;
  os << cell("t\\p");
  for (const auto& l : m.labels()) os << cell(l);
  os << '\n';
  for (std::size_t i = 0; i < m.n_classes(); ++i) {
    os << cell(m.labels()[i]);
    for (std::size_t j = 0; j < m.n_classes(); ++j) os << cell(std::to_string(m.at(i, j)));
    os << '\n';
  }
  return os.str();
}

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string comparison_csv(const Comparison& c) {
  std::ostringstream os;
  os << "name,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,accuracy_delta_vs_" << c.baseline
     << ",macro_f1_delta_vs_" << c.baseline << '\n';
  for (const auto& r : c.rows) {
    os << r.name << ',' << r.runs << ',' << fmt(r.accuracy_mean) << ',' << fmt(r.accuracy_std) << ','
       << fmt(r.macro_f1_mean) << ',' << fmt(r.macro_f1_std) << ',' << fmt(r.accuracy_delta) << ','
       << fmt(r.macro_f1_delta) << '\n';
  }
  return os.str();
}

std::string class_error_csv(const Comparison& c) {
  std::ostringstream os;
  os << "class";
  for (const auto& r : c.rows) os << ',' << r.name;
  os << '\n';
  for (std::size_t k = 0; k < c.class_labels.size(); ++k) {
    os << c.class_labels[k];
    for (const auto& r : c.rows) os << ',' << fmt_opt(r.class_error_mean[k]);
    os << '\n';
  }
  return os.str();
}

std::string class_error_svg(const Comparison& c) {
  static const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1"};
  const std::size_t n_classes = c.class_labels.size();
  const std::size_t n_series = std::max<std::size_t>(c.rows.size(), 1);
  const double bar = 12.0, group_gap = 14.0;
  const double left = 50.0, top = 30.0, plot_h = 200.0, bottom = 40.0;
  const double group_w = bar * static_cast<double>(n_series) + group_gap;
  const double width = left + group_w * static_cast<double>(n_classes) + 20.0;
  const double legend_h = 18.0 * static_cast<double>(c.rows.size());
  const double height = top + plot_h + bottom + legend_h;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\"" << fmt(height, 0)
     << "\" font-family=\"monospace\" font-size=\"11\">\n";
  os << "<text x=\"" << fmt(left, 0) << "\" y=\"18\">class-wise error rate (1 - recall)</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick * 0.25;
    const double y = top + plot_h * (1.0 - v);
    os << "<line x1=\"" << fmt(left, 1) << "\" y1=\"" << fmt(y, 1) << "\" x2=\"" << fmt(width - 10, 1) << "\" y2=\""
       << fmt(y, 1) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fmt(left - 6, 1) << "\" y=\"" << fmt(y + 4, 1) << "\" text-anchor=\"end\">" << fmt(v, 2)
       << "</text>\n";
  }
  for (std::size_t k = 0; k < n_classes; ++k) {
    const double gx = left + group_gap / 2 + group_w * static_cast<double>(k);
    for (std::size_t s = 0; s < c.rows.size(); ++s) {
      const auto& e = c.rows[s].class_error_mean[k];
      if (!e) continue;
      const double h = plot_h * std::clamp(*e, 0.0, 1.0);
      os << "<rect x=\"" << fmt(gx + bar * static_cast<double>(s), 1) << "\" y=\"" << fmt(top + plot_h - h, 1)
         << "\" width=\"" << fmt(bar - 1, 1) << "\" height=\"" << fmt(h, 1) << "\" fill=\""
         << kPalette[s % std::size(kPalette)] << "\"><title>" << xml_escape(c.rows[s].name) << ' '
         << xml_escape(c.class_labels[k]) << ": " << fmt(*e, 4) << "</title></rect>\n";
    }
    os << "<text x=\"" << fmt(gx + bar * static_cast<double>(n_series) / 2, 1) << "\" y=\""
       << fmt(top + plot_h + 16, 1) << "\" text-anchor=\"middle\">" << xml_escape(c.class_labels[k]) << "</text>\n";
  }
  for (std::size_t s = 0; s < c.rows.size(); ++s) {
    const double y = top + plot_h + bottom + 18.0 * static_cast<double>(s);
    os << "<rect x=\"" << fmt(left, 1) << "\" y=\"" << fmt(y - 10, 1) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[s % std::size(kPalette)] << "\"/>\n";
    os << "<text x=\"" << fmt(left + 16, 1) << "\" y=\"" << fmt(y, 1) << "\">" << xml_escape(c.rows[s].name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mmf
