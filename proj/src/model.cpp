#include "deepcat/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace deepcat {

void ModelConfig::validate() const {
  if (vocab_size < 2) throw NumericsError("model: vocab_size must include PAD and UNK");
  if (num_categories < 1) throw NumericsError("model: need at least one category");
  if (embed_dim < 1 || seq_len < 1 || conv_layers < 0) throw NumericsError("model: bad dimensions");
  if (kernel_width < 1 || kernel_width % 2 == 0) throw NumericsError("model: kernel_width must be odd");
  if (heads < 1 || attn_dim % heads != 0) throw NumericsError("model: attn_dim must be divisible by heads");
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::word_only: return "word_only";
    case Ablation::joint: return "joint";
    case Ablation::joint_plus_cm: return "joint_plus_cm";
  }
  return "?";
}

Ablation ablation_from_string(std::string_view s) {
  if (s == "word_only") return Ablation::word_only;
  if (s == "joint") return Ablation::joint;
  if (s == "joint_plus_cm") return Ablation::joint_plus_cm;
  throw std::invalid_argument("unknown ablation '" + std::string(s) + "'");
}

// ---- parameters ---------------------------------------------------------------

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out{&word_emb, &cat_emb};
  for (auto& c : conv) out.insert(out.end(), {&c.kernel, &c.bias});
  for (auto& h : highway)
    out.insert(out.end(), {&h.transform.weight, &h.transform.bias, &h.gate.weight, &h.gate.bias});
  auto& a = attention;
  out.insert(out.end(), {&a.input.weight, &a.input.bias, &a.query, &a.key, &a.value, &a.output.weight,
                         &a.output.bias, &fuse.weight, &fuse.bias, &output.weight, &output.bias});
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  auto mut = const_cast<ModelParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

void ModelParams::zero_grad() {
  for (Parameter* p : all()) p->zero_grad();
}

std::vector<const Parameter*> ModelParams::joint_only() const {
  const auto& a = attention;
  return {&cat_emb, &a.input.weight, &a.input.bias, &a.query, &a.key, &a.value,
          &a.output.weight, &a.output.bias, &fuse.weight, &fuse.bias};
}

namespace {

Mat uniform(Index rows, Index cols, double limit, Rng& rng) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Mat glorot(Index fan_in, Index fan_out, Rng& rng) {
  return uniform(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

LinearParams linear(const std::string& name, Index in, Index out, Rng& rng, double bias = 0.0) {
  return {Parameter(name + ".weight", glorot(in, out, rng)), Parameter(name + ".bias", Mat::Constant(1, out, bias))};
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const Index d = cfg.embed_dim;
  const Index c = cfg.num_categories;

  Mat words = uniform(cfg.vocab_size, d, 0.05, rng);
  words.row(Vocabulary::kPad).setZero();
  p.word_emb = Parameter("word_emb", std::move(words), Index{Vocabulary::kPad});

  Mat cats = uniform(c, d, 0.05, rng);
  for (Index r = 0; r < c; ++r)
    while (cats.row(r).norm() == 0.0) cats.row(r) = uniform(1, d, 0.05, rng);
  p.cat_emb = Parameter("cat_emb", std::move(cats));

  for (int l = 0; l < cfg.conv_layers; ++l) {
    const std::string n = "conv" + std::to_string(l);
    p.conv.push_back({Parameter(n + ".kernel", glorot(cfg.kernel_width * d, d, rng)),
                      Parameter(n + ".bias", Mat::Zero(1, d))});
    const std::string h = "highway" + std::to_string(l);
    // Negative gate bias starts each highway layer close to the carry path.
    p.highway.push_back({linear(h + ".transform", d, d, rng), linear(h + ".gate", d, d, rng, -1.0)});
  }

  const Index m = cfg.attn_dim;
  p.attention.input = linear("attn.input", c, m, rng);
  p.attention.query = Parameter("attn.query", glorot(m, m, rng));
  p.attention.key = Parameter("attn.key", glorot(m, m, rng));
  p.attention.value = Parameter("attn.value", glorot(m, m, rng));
  p.attention.output = linear("attn.output", m, c, rng);
  p.fuse = linear("fuse", 2 * d, d, rng);
  // Output bias starts at the logit of a 1/|C| prior.
  p.output = linear("output", d, c, rng, -std::log(static_cast<double>(c)));
  return p;
}

int load_word_vectors(ModelParams& params, const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors '" + path.string() + "'");
  const Index d = params.config.embed_dim;
  int found = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    RowVec v(d);
    for (Index i = 0; i < d; ++i) {
      if (!(ls >> v(i))) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(d) + " values");
      }
    }
    const int id = vocab.id(token);
    if (id == Vocabulary::kUnk || id == Vocabulary::kPad) continue;
    params.word_emb.value.row(id) = v;
    ++found;
  }
  return found;
}

// ---- building blocks ----------------------------------------------------------

namespace {

Tensor linear_apply(const Tensor& x, LinearParams& p) {
  Graph& g = x.graph();
  return add_row(matmul(x, g.parameter(p.weight)), g.parameter(p.bias));
}

}  // namespace

Mask token_mask(std::span<const int> token_ids) {
  Mask m(static_cast<Index>(token_ids.size()), 1);
  for (std::size_t i = 0; i < token_ids.size(); ++i) m(static_cast<Index>(i), 0) = token_ids[i] != Vocabulary::kPad;
  return m;
}

Tensor embed_query(Graph& g, ModelParams& p, std::span<const int> token_ids) {
  const auto n = static_cast<std::size_t>(p.config.seq_len);
  if (token_ids.empty() || token_ids.size() % n != 0) {
    throw NumericsError("embed_query: expected a multiple of " + std::to_string(n) + " token ids, got " +
                        std::to_string(token_ids.size()));
  }
  return gather_rows(g.parameter(p.word_emb), token_ids, Index{Vocabulary::kPad});
}

Tensor highway(const Tensor& x, HighwayLayer& layer) {
  const Tensor transformed = relu(linear_apply(x, layer.transform));
  const Tensor gate = sigmoid(linear_apply(x, layer.gate));
  // gate * h + (1 - gate) * x  ==  x + gate * (h - x)
  return add(x, mul(gate, sub(transformed, x)));
}

Tensor query2vector(const Tensor& q_w, ModelParams& p, const ForwardOptions& opt) {
  Graph& g = q_w.graph();
  Tensor x = q_w;
  for (std::size_t l = 0; l < p.conv.size(); ++l) {
    x = relu(add_row(conv1d(x, g.parameter(p.conv[l].kernel), p.config.seq_len), g.parameter(p.conv[l].bias)));
    x = highway(x, p.highway[l]);
    if (opt.training) x = dropout(x, opt.dropout, *opt.rng, true);
  }
  return block_max_rows(x, p.config.seq_len);
}

Tensor word_category_similarity(const Tensor& q_w, const Tensor& cat_emb) {
  return matmul_nt(row_l2_normalize(q_w), row_l2_normalize(cat_emb));
}

Tensor multi_head_self_attention(const Tensor& similarity, AttentionParams& p, const Mask& token_valid, int seq_len,
                                 int heads) {
  Graph& g = similarity.graph();
  const Tensor x = linear_apply(similarity, p.input);
  const Tensor q = matmul(x, g.parameter(p.query));
  const Tensor k = matmul(x, g.parameter(p.key));
  const Tensor v = matmul(x, g.parameter(p.value));
  const Tensor heads_out = multi_head_attention(q, k, v, token_valid, seq_len, heads);
  return linear_apply(heads_out, p.output);
}

Tensor attention_pool(const Tensor& a_wc, const Mask& token_valid, int seq_len) {
  const Index batch = a_wc.rows() / seq_len;
  const Tensor scores = reshape(row_max(a_wc), batch, seq_len);
  const Mask valid = Eigen::Map<const Mask>(token_valid.data(), batch, seq_len);
  return masked_row_softmax(scores, valid);
}

Tensor weighted_word_rep(const Tensor& q_w, const Tensor& word_weights) {
  const Index seq_len = word_weights.cols();
  const Tensor w = reshape(word_weights, word_weights.rows() * seq_len, 1);
  return block_sum_rows(mul_col(q_w, w), seq_len);
}

Tensor fuse(const Tensor& r_qw, const Tensor& r_wc, LinearParams& p) {
  return linear_apply(concat_cols(r_qw, r_wc), p);
}

Tensor predict_logits(const Tensor& r, LinearParams& p) { return linear_apply(r, p); }

Tensor estimate_category_cm(const Tensor& cat_emb) {
  const Mat& c = cat_emb.value();
  for (Index r = 0; r < c.rows(); ++r) {
    if (c.row(r).norm() == 0.0) {
      throw NumericsError("estimate_category_cm: category " + std::to_string(r) + " has a zero embedding");
    }
  }
  const Tensor normed = row_l2_normalize(cat_emb);
  const Mat& n = normed.value();
  const Index k = n.rows();
  Mat cm(k, k);
  for (Index i = 0; i < k; ++i) {
    cm(i, i) = 1.0;
    for (Index j = i + 1; j < k; ++j) cm(i, j) = cm(j, i) = n.row(i).dot(n.row(j));
  }
  return cat_emb.graph().record("cosine_gram", {normed}, std::move(cm), [](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    // The diagonal is the constant 1, so it carries no gradient.
    Mat sym = c.output_grad + c.output_grad.transpose();
    sym.diagonal().setZero();
    c.input_grads[0]->noalias() += sym * *c.inputs[0];
  });
}

// ---- full network ---------------------------------------------------------------

BatchOutput forward(Graph& g, ModelParams& p, std::span<const int> token_ids, const ForwardOptions& opt) {
  if (opt.training && opt.dropout > 0.0 && opt.rng == nullptr) {
    throw NumericsError("forward: training with dropout needs an Rng");
  }
  const int n = p.config.seq_len;
  const Tensor q_w = embed_query(g, p, token_ids);
  const Tensor r_qw = query2vector(q_w, p, opt);

  BatchOutput out;
  Tensor r = r_qw;
  if (opt.ablation != Ablation::word_only) {
    const Mask valid = token_mask(token_ids);
    const Tensor sim = word_category_similarity(q_w, g.parameter(p.cat_emb));
    const Tensor a_wc = multi_head_self_attention(sim, p.attention, valid, n, p.config.heads);
    out.word_weights = attention_pool(a_wc, valid, n);
    const Tensor r_wc = weighted_word_rep(q_w, out.word_weights);
    r = fuse(r_qw, r_wc, p.fuse);
  }
  if (opt.training) r = dropout(r, opt.dropout, *opt.rng, true);
  out.logits = predict_logits(r, p.output);
  return out;
}

Mat predict_scores(ModelParams& p, std::span<const int> token_ids, Ablation ablation, int batch_size) {
  const auto n = static_cast<std::size_t>(p.config.seq_len);
  const std::size_t total = token_ids.size() / n;
  Mat scores(static_cast<Index>(total), p.config.num_categories);
  ForwardOptions opt;
  opt.ablation = ablation;
  for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), total - start);
    Graph g;
    const auto out = forward(g, p, token_ids.subspan(start * n, count * n), opt);
    scores.middleRows(static_cast<Index>(start), static_cast<Index>(count)) = out.logits.value();
  }
  return scores;
}

ForwardTrace trace_query(ModelParams& p, std::span<const int> token_ids) {
  if (token_ids.size() != static_cast<std::size_t>(p.config.seq_len)) {
    throw NumericsError("trace_query: expected exactly one query");
  }
  const int n = p.config.seq_len;
  Graph g;
  ForwardOptions opt;
  const Mask valid = token_mask(token_ids);
  const Tensor q_w = embed_query(g, p, token_ids);
  const Tensor r_qw = query2vector(q_w, p, opt);
  const Tensor cats = g.parameter(p.cat_emb);
  const Tensor sim = word_category_similarity(q_w, cats);
  const Tensor a_wc = multi_head_self_attention(sim, p.attention, valid, n, p.config.heads);
  const Tensor weights = attention_pool(a_wc, valid, n);
  const Tensor r_wc = weighted_word_rep(q_w, weights);
  const Tensor r = fuse(r_qw, r_wc, p.fuse);
  const Tensor logits = predict_logits(r, p.output);

  ForwardTrace t;
  t.q_w = q_w.value();
  t.similarity = sim.value();
  const auto& att = p.attention;
  const Mat x = (sim.value() * att.input.weight.value).rowwise() + att.input.bias.value.row(0);
  t.head_probs = grouped_attention_probs(x * att.query.value, x * att.key.value, valid, n, p.config.heads);
  t.a_wc = a_wc.value();
  t.word_weights = weights.value();
  t.r_qw = r_qw.value();
  t.r_wc = r_wc.value();
  t.r = r.value();
  t.logits = logits.value();
  t.cm_hat = estimate_category_cm(cats).value();
  return t;
}

}  // namespace deepcat
