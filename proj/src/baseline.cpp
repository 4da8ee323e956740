#include "deepcat/baseline.hpp"

#include "deepcat/corpus_io.hpp"
#include "deepcat/rng.hpp"
#include "deepcat/vocabulary.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace deepcat {

using nlohmann::json;

void BaselineConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("baseline epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("baseline learning_rate must be > 0");
  if (!(reg >= 0.0)) throw std::invalid_argument("baseline reg must be >= 0");
}

void fit_idf(TfidfModel& model, const std::vector<QueryRecord>& train) {
  model.terms.clear();
  model.term_index.clear();
  std::vector<std::int64_t> df;
  for (const auto& r : train) {
    auto toks = tokenize(r.raw_text);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (const auto& t : toks) {
      auto [it, inserted] = model.term_index.try_emplace(t, static_cast<int>(model.terms.size()));
      if (inserted) {
        model.terms.push_back(t);
        df.push_back(0);
      }
      ++df[static_cast<std::size_t>(it->second)];
    }
  }
  const double n = static_cast<double>(train.size());
  model.idf.resize(df.size());
  for (std::size_t i = 0; i < df.size(); ++i) model.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
}

SparseVec tfidf_vectorize(const std::vector<std::string>& tokens, const TfidfModel& model) {
  if (tokens.empty()) throw std::invalid_argument("tfidf_vectorize: empty token list");
  std::map<int, int> counts;
  for (const auto& t : tokens) {
    const auto it = model.term_index.find(t);
    if (it != model.term_index.end()) ++counts[it->second];
  }
  SparseVec v;
  double norm2 = 0.0;
  const double len = static_cast<double>(tokens.size());
  for (const auto& [idx, c] : counts) {
    const double x = static_cast<double>(c) / len * model.idf[static_cast<std::size_t>(idx)];
    v.index.push_back(idx);
    v.value.push_back(x);
    norm2 += x * x;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v.value) x *= inv;
  }
  return v;
}

namespace {

double sparse_dot(const double* w, const SparseVec& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.index.size(); ++i) s += w[x.index[i]] * x.value[i];
  return s;
}

std::vector<SparseVec> vectorize_all(const TfidfModel& model, const std::vector<QueryRecord>& records) {
  std::vector<SparseVec> xs;
  xs.reserve(records.size());
  for (const auto& r : records) xs.push_back(tfidf_vectorize(tokenize(r.raw_text), model));
  return xs;
}

}  // namespace

TfidfModel train_ovr_linear(const std::vector<QueryRecord>& train, int num_classes, const BaselineConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_ovr_linear: empty training split");
  TfidfModel model;
  model.config = cfg;
  fit_idf(model, train);
  const std::vector<SparseVec> xs = vectorize_all(model, train);
  const Index dim = static_cast<Index>(model.terms.size());
  model.weights = Mat::Zero(num_classes, dim);
  model.bias = Vec::Zero(num_classes);

  std::vector<std::vector<char>> positive(static_cast<std::size_t>(num_classes), std::vector<char>(train.size(), 0));
  for (std::size_t i = 0; i < train.size(); ++i)
    for (int c : train[i].categories) positive[static_cast<std::size_t>(c)][i] = 1;

  const Rng root(cfg.seed);
  std::vector<std::size_t> order(train.size());
  for (int c = 0; c < num_classes; ++c) {
    const auto& pos = positive[static_cast<std::size_t>(c)];
    if (std::find(pos.begin(), pos.end(), 1) == pos.end()) model.flagged_classes.push_back(c);

    // w = scale * v so the per-step shrink (1 - lr * reg) costs O(1).
    Vec v = Vec::Zero(dim);
    double scale = 1.0;
    double b = 0.0;
    Rng rng = root.split(static_cast<std::uint64_t>(c));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order.begin(), order.end());
      for (std::size_t i : order) {
        const double y = pos[i] ? 1.0 : -1.0;
        const double margin = scale * sparse_dot(v.data(), xs[i]) + b;
        scale *= 1.0 - cfg.learning_rate * cfg.reg;
        if (scale < 1e-9) {
          v *= scale;
          scale = 1.0;
        }
        if (y * margin < 1.0) {
          const double step = cfg.learning_rate * y / scale;
          for (std::size_t j = 0; j < xs[i].index.size(); ++j) v[xs[i].index[j]] += step * xs[i].value[j];
          b += cfg.learning_rate * y;
        }
      }
    }
    model.weights.row(c) = (scale * v).transpose();
    model.bias[c] = b;
  }
  return model;
}

Vec predict_margins(const TfidfModel& model, const SparseVec& x) {
  Vec out = model.bias;
  for (std::size_t j = 0; j < x.index.size(); ++j) out += model.weights.col(x.index[j]) * x.value[j];
  return out;
}

Mat predict_margins(const TfidfModel& model, const std::vector<QueryRecord>& records) {
  Mat out(static_cast<Index>(records.size()), model.num_classes());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.row(static_cast<Index>(i)) = predict_margins(model, tfidf_vectorize(tokenize(records[i].raw_text), model)).transpose();
  }
  return out;
}

double hinge_objective(const Vec& w, double b, const std::vector<SparseVec>& xs, const std::vector<int>& ys,
                       double reg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) loss += std::max(0.0, 1.0 - ys[i] * (sparse_dot(w.data(), xs[i]) + b));
  return 0.5 * reg * w.squaredNorm() + loss / static_cast<double>(xs.size());
}

std::pair<Vec, double> hinge_subgradient(const Vec& w, double b, const std::vector<SparseVec>& xs,
                                         const std::vector<int>& ys, double reg) {
  Vec gw = reg * w;
  double gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ys[i] * (sparse_dot(w.data(), xs[i]) + b) < 1.0) {
      for (std::size_t j = 0; j < xs[i].index.size(); ++j) gw[xs[i].index[j]] -= inv_n * ys[i] * xs[i].value[j];
      gb -= inv_n * ys[i];
    }
  }
  return {gw, gb};
}

json baseline_to_json(const TfidfModel& model) {
  json classes = json::array();
  for (Index c = 0; c < model.weights.rows(); ++c) {
    std::vector<double> w(model.weights.row(c).data(), model.weights.row(c).data() + model.weights.cols());
    classes.push_back({{"class", c}, {"bias", model.bias[c]}, {"weights", w}});
  }
  return {{"format", "deepcat.baseline"},
          {"version", 1},
          {"config",
           {{"epochs", model.config.epochs},
            {"learning_rate", model.config.learning_rate},
            {"reg", model.config.reg},
            {"seed", model.config.seed}}},
          {"terms", model.terms},
          {"idf", model.idf},
          {"flagged_classes", model.flagged_classes},
          {"classes", classes}};
}

TfidfModel baseline_from_json(const json& j) {
  if (j.value("format", "") != "deepcat.baseline" || j.value("version", 0) != 1) {
    throw std::invalid_argument("not a version-1 baseline dump");
  }
  TfidfModel m;
  const json& c = j.at("config");
  m.config.epochs = c.at("epochs").get<int>();
  m.config.learning_rate = c.at("learning_rate").get<double>();
  m.config.reg = c.at("reg").get<double>();
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.terms = j.at("terms").get<std::vector<std::string>>();
  m.idf = j.at("idf").get<std::vector<double>>();
  if (m.idf.size() != m.terms.size()) throw std::invalid_argument("baseline dump: idf/term count mismatch");
  for (std::size_t i = 0; i < m.terms.size(); ++i) m.term_index.emplace(m.terms[i], static_cast<int>(i));
  m.flagged_classes = j.at("flagged_classes").get<std::vector<int>>();
  const json& classes = j.at("classes");
  m.weights = Mat::Zero(static_cast<Index>(classes.size()), static_cast<Index>(m.terms.size()));
  m.bias = Vec::Zero(static_cast<Index>(classes.size()));
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto w = classes[k].at("weights").get<std::vector<double>>();
    if (w.size() != m.terms.size()) throw std::invalid_argument("baseline dump: weight vector has wrong length");
    m.weights.row(static_cast<Index>(k)) = Eigen::Map<const RowVec>(w.data(), static_cast<Index>(w.size()));
    m.bias[static_cast<Index>(k)] = classes[k].at("bias").get<double>();
  }
  return m;
}

void save_baseline(const std::filesystem::path& path, const TfidfModel& model) {
  write_file_atomic(path, baseline_to_json(model).dump(1) + "\n");
}

TfidfModel load_baseline(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open baseline '" + path.string() + "'");
  return baseline_from_json(json::parse(in));
}

}  // namespace deepcat
