#include "deepcat/report.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace deepcat {

using nlohmann::json;

const AtK& EvalReport::at(int k) const {
  for (const auto& a : at_k)
    if (a.k == k) return a;
  throw std::out_of_range("report has no metrics at K=" + std::to_string(k));
}

EvalReport evaluate_scores(const Mat& scores, const std::vector<QueryRecord>& records,
                           std::span<const std::int64_t> class_frequencies, const EvalConfig& cfg) {
  if (static_cast<std::size_t>(scores.rows()) != records.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(scores.rows()) + " score rows for " +
                                std::to_string(records.size()) + " records");
  }
  if (records.empty()) throw std::invalid_argument("evaluate: no records");
  EvalReport rep;
  rep.config = cfg;
  rep.num_queries = records.size();

  std::vector<std::vector<int>> gold;
  std::vector<Bucket> buckets;
  for (const auto& r : records) {
    gold.push_back(r.categories);
    buckets.push_back(r.bucket);
  }

  for (int k : cfg.ks) rep.at_k.push_back({k});
  for (Index q = 0; q < scores.rows(); ++q) {
    const Vec row = scores.row(q).transpose();
    const auto ranked = rank_categories(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    for (auto& a : rep.at_k) {
      const RankingMetrics m = ranking_metrics_at_k(ranked, gold[static_cast<std::size_t>(q)], a.k);
      a.precision += m.precision;
      a.recall += m.recall;
      a.f1 += m.f1;
      a.map += m.average_precision;
    }
  }
  const double n = static_cast<double>(records.size());
  for (auto& a : rep.at_k) {
    a.precision /= n;
    a.recall /= n;
    a.f1 /= n;
    a.map /= n;
  }

  const F1Summary f1 = macro_micro_f1(scores, gold, cfg.threshold);
  rep.macro_f1 = f1.macro_f1;
  rep.micro_f1 = f1.micro_f1;
  rep.bucket_f1_at3 = bucket_report(scores, gold, buckets, 3);
  rep.minority_classes = minority_classes(f1, class_frequencies, cfg.minority_m);
  rep.minority_macro_f1 = minority_report(scores, gold, class_frequencies, cfg.minority_m, cfg.threshold);
  return rep;
}

EvalReport evaluate(ModelParams& params, Ablation ablation, const std::vector<QueryRecord>& records,
                    std::span<const std::int64_t> class_frequencies, const EvalConfig& cfg) {
  std::vector<int> ids;
  for (const auto& r : records) {
    if (r.tokens.empty()) throw std::invalid_argument("evaluate: record '" + r.raw_text + "' is not encoded");
    ids.insert(ids.end(), r.tokens.begin(), r.tokens.end());
  }
  return evaluate_scores(predict_scores(params, ids, ablation), records, class_frequencies, cfg);
}

json report_to_json(const EvalReport& r, const json& extra) {
  json j = extra;
  j["format"] = "deepcat.eval_report";
  j["schema_version"] = kReportSchemaVersion;
  json at_k = json::array();
  for (const auto& a : r.at_k) {
    at_k.push_back({{"k", a.k}, {"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"map", a.map}});
  }
  j["at_k"] = at_k;
  j["macro_f1"] = r.macro_f1;
  j["micro_f1"] = r.micro_f1;
  json buckets = json::object();
  for (Bucket b : {Bucket::tail, Bucket::torso, Bucket::head}) {
    const auto& v = r.bucket_f1_at3[static_cast<std::size_t>(b)];
    buckets[std::string(to_string(b))] = v ? json(*v) : json(nullptr);
  }
  j["bucket_f1_at3"] = buckets;
  j["minority_macro_f1"] = r.minority_macro_f1;
  j["minority_classes"] = r.minority_classes;
  j["num_queries"] = r.num_queries;
  j["flagged_classes"] = r.flagged_classes;
  j["eval_config"] = {{"threshold", r.config.threshold}, {"minority_m", r.config.minority_m}, {"ks", r.config.ks}};
  return j;
}

EvalReport report_from_json(const json& j) {
  if (j.value("format", "") != "deepcat.eval_report") throw std::invalid_argument("not an eval report");
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw std::invalid_argument("unsupported report schema version " + j.value("schema_version", json()).dump());
  }
  EvalReport r;
  for (const auto& a : j.at("at_k")) {
    r.at_k.push_back({a.at("k").get<int>(), a.at("precision").get<double>(), a.at("recall").get<double>(),
                      a.at("f1").get<double>(), a.at("map").get<double>()});
  }
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.micro_f1 = j.at("micro_f1").get<double>();
  for (Bucket b : {Bucket::tail, Bucket::torso, Bucket::head}) {
    const json& v = j.at("bucket_f1_at3").at(std::string(to_string(b)));
    if (!v.is_null()) r.bucket_f1_at3[static_cast<std::size_t>(b)] = v.get<double>();
  }
  r.minority_macro_f1 = j.at("minority_macro_f1").get<double>();
  r.minority_classes = j.at("minority_classes").get<std::vector<int>>();
  r.num_queries = j.at("num_queries").get<std::size_t>();
  r.flagged_classes = j.value("flagged_classes", std::vector<int>{});
  const json& c = j.at("eval_config");
  r.config.threshold = c.at("threshold").get<double>();
  r.config.minority_m = c.at("minority_m").get<int>();
  r.config.ks = c.at("ks").get<std::vector<int>>();
  return r;
}

namespace {

/// (name, value) rows shared by the CSV and table renderers.
std::vector<std::pair<std::string, std::optional<double>>> flat_metrics(const EvalReport& r) {
  std::vector<std::pair<std::string, std::optional<double>>> rows;
  for (const auto& a : r.at_k) {
    const std::string k = std::to_string(a.k);
    rows.emplace_back("P@" + k, a.precision);
    rows.emplace_back("R@" + k, a.recall);
    rows.emplace_back("F1@" + k, a.f1);
    rows.emplace_back("MAP@" + k, a.map);
  }
  rows.emplace_back("macro_f1", r.macro_f1);
  rows.emplace_back("micro_f1", r.micro_f1);
  for (Bucket b : {Bucket::head, Bucket::torso, Bucket::tail}) {
    rows.emplace_back(std::string(to_string(b)) + "_F1@3", r.bucket_f1_at3[static_cast<std::size_t>(b)]);
  }
  rows.emplace_back("minority" + std::to_string(r.config.minority_m) + "_macro_f1", r.minority_macro_f1);
  return rows;
}

}  // namespace

std::string report_to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n";
  os << std::setprecision(17);
  for (const auto& [name, v] : flat_metrics(r)) {
    os << name << ',';
    if (v) os << *v;
    os << '\n';
  }
  os << "num_queries," << r.num_queries << '\n';
  return os.str();
}

std::string render_report_table(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  if (reports.empty()) return {};
  const auto names = flat_metrics(reports.front().second);
  std::size_t label_w = std::string("metric").size();
  for (const auto& [n, _] : names) label_w = std::max(label_w, n.size());
  std::vector<std::size_t> col_w;
  for (const auto& [title, _] : reports) col_w.push_back(std::max<std::size_t>(title.size(), 6));

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "metric";
  for (std::size_t c = 0; c < reports.size(); ++c) os << "  " << std::right << std::setw(static_cast<int>(col_w[c])) << reports[c].first;
  os << '\n';
  std::vector<std::vector<std::pair<std::string, std::optional<double>>>> cols;
  for (const auto& [_, r] : reports) cols.push_back(flat_metrics(r));
  for (std::size_t row = 0; row < names.size(); ++row) {
    os << std::left << std::setw(static_cast<int>(label_w)) << names[row].first;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      os << "  " << std::right << std::setw(static_cast<int>(col_w[c]));
      const auto& v = row < cols[c].size() ? cols[c][row].second : std::nullopt;
      if (v) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(4) << *v;
        os << cell.str();
      } else {
        os << "-";
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace deepcat
