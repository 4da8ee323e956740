#include "deepcat/gradient_suite.hpp"

#include "deepcat/gradcheck.hpp"
#include "deepcat/loss.hpp"
#include "deepcat/model.hpp"
#include "deepcat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <limits>

namespace deepcat {

bool GradientCheckReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradientCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

std::vector<std::string> GradientCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.passed) out.push_back(e.component);
  return out;
}

namespace {

Mat random_mat(Index r, Index c, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// Random values kept at least `gap` away from zero.
Mat away_from_zero(Index r, Index c, Rng& rng, double gap = 1e-3) {
  Mat m = random_mat(r, c, rng);
  for (Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < gap) v = v < 0 ? -0.5 : 0.5;
  }
  return m;
}

/// Identity forward pass whose backward rule is off by 50%.
Tensor corrupt(const Tensor& t) {
  return t.graph().record("corrupt_grad", {t}, t.value(), [](const BackwardContext& c) {
    if (c.input_grads[0]) *c.input_grads[0] += 1.5 * c.output_grad;
  });
}

/// Scalar summary with non-uniform weights so every output entry matters.
Tensor project(const Tensor& out) {
  Rng rng(0x5eed, static_cast<std::uint64_t>(out.rows() * 131 + out.cols()));
  return sum(mul(out, out.graph().constant(random_mat(out.rows(), out.cols(), rng, 0.5, 1.5))));
}

struct Check {
  std::string name;
  std::function<double(Rng&, double eps, bool bug)> run;
};

using UnaryOp = std::function<Tensor(const Tensor&)>;
using BinaryOp = std::function<Tensor(const Tensor&, const Tensor&)>;

double check_unary(const UnaryOp& op, const Mat& x, double eps, bool bug) {
  return finite_diff_check(
      [&](Graph&, const Tensor& in) {
        Tensor out = op(in);
        return project(bug ? corrupt(out) : out);
      },
      x, eps);
}

double check_binary(const BinaryOp& op, const Mat& a, const Mat& b, double eps, bool bug) {
  const double wrt_a = finite_diff_check(
      [&](Graph& g, const Tensor& in) {
        Tensor out = op(in, g.constant(b));
        return project(bug ? corrupt(out) : out);
      },
      a, eps);
  const double wrt_b = finite_diff_check(
      [&](Graph& g, const Tensor& in) {
        Tensor out = op(g.constant(a), in);
        return project(bug ? corrupt(out) : out);
      },
      b, eps);
  return std::max(wrt_a, wrt_b);
}

/// Checks a graph-level function with respect to every parameter in `params`.
double check_params(const LossFn& f, const std::vector<Parameter*>& params, double eps) {
  double worst = 0.0;
  for (Parameter* p : params) worst = std::max(worst, finite_diff_check(f, *p, eps));
  return worst;
}

/// Moves parameters off initialisation values such as zero biases, where relu
/// sits exactly on its kink for all-PAD windows.
ModelParams jittered_params(const ModelConfig& mc, Rng& rng) {
  ModelParams p = init_params(mc, rng);
  for (Parameter* x : p.all()) {
    x->value += random_mat(x->value.rows(), x->value.cols(), rng, -0.1, 0.1);
    if (x->frozen_row) x->value.row(*x->frozen_row).setZero();
  }
  return p;
}

/// Distance of the recorded graph from the nearest relu or max kink. Exact
/// ties in a max (identical all-PAD positions) move together and are ignored.
double kink_distance(const Graph& g) {
  double dist = std::numeric_limits<double>::infinity();
  auto max_gap = [&](auto values) {
    const double top = values.maxCoeff();
    for (Index i = 0; i < values.size(); ++i)
      if (values[i] != top) dist = std::min(dist, top - values[i]);
  };
  for (int id = 0; id < static_cast<int>(g.size()); ++id) {
    const std::string& op = g.op_name(id);
    if (op != "relu" && op != "row_max" && op != "block_max_rows") continue;
    const Mat& in = g.value_of(g.inputs_of(id)[0]);
    if (op == "relu") {
      dist = std::min(dist, in.cwiseAbs().minCoeff());
    } else if (op == "row_max") {
      for (Index r = 0; r < in.rows(); ++r) max_gap(in.row(r));
    } else {
      const Index block = in.rows() / g.value_of(id).rows();
      for (Index b = 0; b < g.value_of(id).rows(); ++b)
        for (Index c = 0; c < in.cols(); ++c) max_gap(in.col(c).segment(b * block, block));
    }
  }
  return dist;
}

/// True when the point `f` is evaluated at sits at least 10 eps from any kink.
bool clear_of_kinks(const LossFn& f, double eps, int attempt) {
  if (attempt > 100) throw NumericsError("gradient suite: no kink-free point found");
  Graph probe;
  f(probe);
  return kink_distance(probe) >= 10.0 * eps;
}

std::vector<int> tiny_tokens(int batch, int seq_len, int vocab, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(batch * seq_len), Vocabulary::kPad);
  for (int b = 0; b < batch; ++b) {
    const int len = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(seq_len)));
    for (int t = 0; t < len; ++t)
      ids[static_cast<std::size_t>(b * seq_len + t)] = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 1)));
  }
  return ids;
}

std::vector<Check> build_checks(const GradientSuiteConfig& cfg) {
  std::vector<Check> checks;
  auto unary = [&](std::string name, UnaryOp op, Index r, Index c, bool kink = false) {
    checks.push_back({std::move(name), [op, r, c, kink](Rng& rng, double eps, bool bug) {
                        return check_unary(op, kink ? away_from_zero(r, c, rng) : random_mat(r, c, rng), eps, bug);
                      }});
  };
  auto binary = [&](std::string name, BinaryOp op, Index ar, Index ac, Index br, Index bc) {
    checks.push_back({std::move(name), [op, ar, ac, br, bc](Rng& rng, double eps, bool bug) {
                        const Mat a = random_mat(ar, ac, rng);
                        const Mat b = random_mat(br, bc, rng);
                        return check_binary(op, a, b, eps, bug);
                      }});
  };

  // ---- primitives
  binary("matmul", [](auto& a, auto& b) { return matmul(a, b); }, 3, 4, 4, 2);
  binary("matmul_nt", [](auto& a, auto& b) { return matmul_nt(a, b); }, 3, 4, 2, 4);
  binary("add", [](auto& a, auto& b) { return add(a, b); }, 3, 4, 3, 4);
  binary("sub", [](auto& a, auto& b) { return sub(a, b); }, 3, 4, 3, 4);
  binary("mul", [](auto& a, auto& b) { return mul(a, b); }, 3, 4, 3, 4);
  unary("scale", [](auto& x) { return scale(x, -1.7); }, 3, 4);
  binary("add_row", [](auto& a, auto& b) { return add_row(a, b); }, 3, 4, 1, 4);
  binary("mul_col", [](auto& a, auto& b) { return mul_col(a, b); }, 3, 4, 3, 1);
  unary("relu", [](auto& x) { return relu(x); }, 3, 4, true);
  unary("sigmoid", [](auto& x) { return sigmoid(x); }, 3, 4);
  unary("softplus", [](auto& x) { return softplus(x); }, 3, 4);
  unary("row_softmax", [](auto& x) { return row_softmax(x); }, 3, 4);
  unary("masked_row_softmax", [](auto& x) {
    Mask m = Mask::Constant(3, 4, true);
    m(0, 1) = m(1, 3) = m(2, 0) = m(2, 2) = false;
    return masked_row_softmax(x, m);
  }, 3, 4);
  unary("row_l2_normalize", [](auto& x) { return row_l2_normalize(x); }, 3, 4);
  unary("row_max", [](auto& x) { return row_max(x); }, 3, 4);
  unary("block_max_rows", [](auto& x) { return block_max_rows(x, 3); }, 6, 3);
  unary("block_sum_rows", [](auto& x) { return block_sum_rows(x, 2); }, 6, 3);
  binary("concat_cols", [](auto& a, auto& b) { return concat_cols(a, b); }, 3, 2, 3, 3);
  unary("reshape", [](auto& x) { return reshape(x, 2, 6); }, 3, 4);
  unary("dropout", [](auto& x) {
    Rng rng(11);
    return dropout(x, 0.3, rng, true);
  }, 3, 4);
  unary("gather_rows", [](auto& x) {
    static const int ids[] = {1, 0, 3, 1, 4};
    return gather_rows(x, ids);
  }, 5, 3);
  checks.push_back({"gather_rows[frozen]", [](Rng& rng, double eps, bool bug) {
                      static const int ids[] = {1, 0, 3, 0, 4};
                      Parameter table("table", random_mat(5, 3, rng), Index{0});
                      const double numeric_ok = finite_diff_check(
                          [&](Graph& g) {
                            Tensor out = gather_rows(g.parameter(table), ids, Index{0});
                            return project(bug ? corrupt(out) : out);
                          },
                          table, eps);
                      // The frozen row must come back with an exactly zero gradient.
                      table.zero_grad();
                      Graph g;
                      g.backward(project(gather_rows(g.parameter(table), ids, Index{0})));
                      return table.grad.row(0).isZero(0.0) ? numeric_ok : 1.0;
                    }});
  binary("conv1d", [](auto& a, auto& b) { return conv1d(a, b, 4); }, 8, 3, 9, 2);
  checks.push_back({"multi_head_attention", [](Rng& rng, double eps, bool bug) {
                      Mask valid = Mask::Constant(8, 1, true);
                      valid(2, 0) = valid(3, 0) = valid(7, 0) = false;
                      const Mat q = random_mat(8, 4, rng), k = random_mat(8, 4, rng), v = random_mat(8, 4, rng);
                      auto run = [&](int which) {
                        const Mat& point = which == 0 ? q : which == 1 ? k : v;
                        return finite_diff_check(
                            [&](Graph& g, const Tensor& in) {
                              const Tensor tq = which == 0 ? in : g.constant(q);
                              const Tensor tk = which == 1 ? in : g.constant(k);
                              const Tensor tv = which == 2 ? in : g.constant(v);
                              Tensor out = multi_head_attention(tq, tk, tv, valid, 4, 2);
                              return project(bug ? corrupt(out) : out);
                            },
                            point, eps);
                      };
                      return std::max({run(0), run(1), run(2)});
                    }});
  unary("sum", [](auto& x) { return scale(sum(x), 1.0); }, 3, 4);
  unary("mean", [](auto& x) { return mean(x); }, 3, 4);
  unary("cosine_gram", [](auto& x) { return estimate_category_cm(x); }, 4, 3);

  // ---- losses
  checks.push_back({"sigmoid_cross_entropy", [](Rng& rng, double eps, bool bug) {
                      Mat t = (random_mat(3, 5, rng).array() > 0.0).cast<double>();
                      return finite_diff_check(
                          [&](Graph&, const Tensor& s) {
                            const Tensor l = sigmoid_cross_entropy(s, t);
                            return bug ? corrupt(l) : l;
                          },
                          random_mat(3, 5, rng, -4, 4), eps);
                    }});
  checks.push_back({"sigmoid_cross_entropy[positive_only]", [](Rng& rng, double eps, bool bug) {
                      Mat t = (random_mat(3, 5, rng).array() > 0.0).cast<double>();
                      return finite_diff_check(
                          [&](Graph&, const Tensor& s) {
                            const Tensor l = sigmoid_cross_entropy(s, t, true);
                            return bug ? corrupt(l) : l;
                          },
                          random_mat(3, 5, rng, -4, 4), eps);
                    }});
  for (CmMode mode : {CmMode::literal, CmMode::shifted}) {
    checks.push_back({"matrix_approx_loss[" + std::string(to_string(mode)) + "]",
                      [mode](Rng& rng, double eps, bool bug) {
                        Mat cm = random_mat(4, 4, rng, 0.0, 1.0);
                        cm = (cm + cm.transpose()).eval() * 0.5;
                        cm.diagonal().setOnes();
                        return finite_diff_check(
                            [&](Graph&, const Tensor& x) {
                              const Tensor l = matrix_approx_loss(x, cm, mode);
                              return bug ? corrupt(l) : l;
                            },
                            random_mat(4, 4, rng, -1, 1), eps);
                      }});
  }
  checks.push_back({"overall_loss", [](Rng& rng, double eps, bool bug) {
                      LossConfig lc;
                      lc.lambda1 = 0.3;
                      lc.lambda2 = 1.2;
                      return finite_diff_check(
                          [&](Graph&, const Tensor& x) {
                            const Tensor l = overall_loss(sum(softplus(x)), mean(mul(x, x)), lc);
                            return bug ? corrupt(l) : l;
                          },
                          random_mat(3, 4, rng), eps);
                    }});

  // ---- model blocks and the composed model
  ModelConfig mc;
  mc.vocab_size = cfg.vocab_size;
  mc.num_categories = cfg.num_categories;
  mc.embed_dim = cfg.embed_dim;
  mc.heads = cfg.heads;
  mc.attn_dim = cfg.attn_dim;
  const int n = mc.seq_len;
  const int batch = cfg.batch;

  checks.push_back({"highway", [mc](Rng& rng, double eps, bool bug) {
                      ModelParams p;
                      Mat x;
                      LossFn probe = [&](Graph& g) { return sum(highway(g.constant(x), p.highway[0])); };
                      for (int attempt = 0; attempt == 0 || !clear_of_kinks(probe, eps, attempt); ++attempt) {
                        p = jittered_params(mc, rng);
                        x = random_mat(6, mc.embed_dim, rng, 0.0, 2.0);
                      }
                      auto& layer = p.highway[0];
                      const double wrt_x = finite_diff_check(
                          [&](Graph&, const Tensor& in) {
                            Tensor out = highway(in, layer);
                            return project(bug ? corrupt(out) : out);
                          },
                          x, eps);
                      LossFn f = [&](Graph& g) {
                        Tensor out = highway(g.constant(x), layer);
                        return project(bug ? corrupt(out) : out);
                      };
                      return std::max(wrt_x, check_params(f, {&layer.transform.weight, &layer.transform.bias,
                                                              &layer.gate.weight, &layer.gate.bias},
                                                          eps));
                    }});
  checks.push_back({"query2vector", [mc, n, batch](Rng& rng, double eps, bool bug) {
                      ModelParams p;
                      std::vector<int> ids;
                      LossFn f = [&](Graph& g) {
                        Tensor out = query2vector(embed_query(g, p, ids), p, ForwardOptions{});
                        return project(bug ? corrupt(out) : out);
                      };
                      for (int attempt = 0; attempt == 0 || !clear_of_kinks(f, eps, attempt); ++attempt) {
                        p = jittered_params(mc, rng);
                        ids = tiny_tokens(batch, n, mc.vocab_size, rng);
                      }
                      std::vector<Parameter*> ps{&p.word_emb};
                      for (auto& c : p.conv) ps.insert(ps.end(), {&c.kernel, &c.bias});
                      return check_params(f, ps, eps);
                    }});
  checks.push_back({"word_category_similarity", [mc, n](Rng& rng, double eps, bool bug) {
                      const Mat q = random_mat(n, mc.embed_dim, rng);
                      const Mat c = random_mat(mc.num_categories, mc.embed_dim, rng);
                      return check_binary(
                          [&](const Tensor& a, const Tensor& b) {
                            Tensor out = word_category_similarity(a, b);
                            return bug ? corrupt(out) : out;
                          },
                          q, c, eps, false);
                    }});
  checks.push_back({"multi_head_self_attention", [mc, n, batch](Rng& rng, double eps, bool bug) {
                      ModelParams p = jittered_params(mc, rng);
                      const auto ids = tiny_tokens(batch, n, mc.vocab_size, rng);
                      const Mask valid = token_mask(ids);
                      const Mat sim = random_mat(batch * n, mc.num_categories, rng, -1, 1);
                      const double wrt_sim = finite_diff_check(
                          [&](Graph&, const Tensor& in) {
                            Tensor out = multi_head_self_attention(in, p.attention, valid, n, mc.heads);
                            return project(bug ? corrupt(out) : out);
                          },
                          sim, eps);
                      LossFn f = [&](Graph& g) {
                        Tensor out = multi_head_self_attention(g.constant(sim), p.attention, valid, n, mc.heads);
                        return project(bug ? corrupt(out) : out);
                      };
                      auto& a = p.attention;
                      return std::max(wrt_sim, check_params(f, {&a.input.weight, &a.input.bias, &a.query, &a.key,
                                                                &a.value, &a.output.weight, &a.output.bias},
                                                            eps));
                    }});
  checks.push_back({"attention_pool", [mc, n, batch](Rng& rng, double eps, bool bug) {
                      const auto ids = tiny_tokens(batch, n, mc.vocab_size, rng);
                      const Mask valid = token_mask(ids);
                      return check_unary(
                          [&](const Tensor& x) { return attention_pool(x, valid, n); },
                          random_mat(batch * n, mc.num_categories, rng), eps, bug);
                    }});
  checks.push_back({"weighted_word_rep", [mc, n, batch](Rng& rng, double eps, bool bug) {
                      Mat w = random_mat(batch, n, rng, 0.0, 1.0);
                      for (Index r = 0; r < w.rows(); ++r) w.row(r) /= w.row(r).sum();
                      return check_binary(
                          [&](const Tensor& q, const Tensor& ww) {
                            Tensor out = weighted_word_rep(q, ww);
                            return bug ? corrupt(out) : out;
                          },
                          random_mat(batch * n, mc.embed_dim, rng), w, eps, false);
                    }});
  checks.push_back({"fuse", [mc, batch](Rng& rng, double eps, bool bug) {
                      ModelParams p = jittered_params(mc, rng);
                      const Mat a = random_mat(batch, mc.embed_dim, rng), b = random_mat(batch, mc.embed_dim, rng);
                      LossFn f = [&](Graph& g) {
                        Tensor out = fuse(g.constant(a), g.constant(b), p.fuse);
                        return project(bug ? corrupt(out) : out);
                      };
                      return std::max(check_binary(
                                          [&](const Tensor& x, const Tensor& y) {
                                            Tensor out = fuse(x, y, p.fuse);
                                            return bug ? corrupt(out) : out;
                                          },
                                          a, b, eps, false),
                                      check_params(f, {&p.fuse.weight, &p.fuse.bias}, eps));
                    }});
  checks.push_back({"predict_logits", [mc, batch](Rng& rng, double eps, bool bug) {
                      ModelParams p = jittered_params(mc, rng);
                      const Mat r = random_mat(batch, mc.embed_dim, rng);
                      LossFn f = [&](Graph& g) {
                        Tensor out = predict_logits(g.constant(r), p.output);
                        return project(bug ? corrupt(out) : out);
                      };
                      return check_params(f, {&p.output.weight, &p.output.bias}, eps);
                    }});

  struct ModelVariant {
    std::string name;
    Ablation ablation;
    CmMode mode;
  };
  for (const ModelVariant& v : {ModelVariant{"model[word_only]", Ablation::word_only, CmMode::shifted},
                                ModelVariant{"model[joint]", Ablation::joint, CmMode::shifted},
                                ModelVariant{"model[joint_plus_cm,literal]", Ablation::joint_plus_cm, CmMode::literal},
                                ModelVariant{"model[joint_plus_cm,shifted]", Ablation::joint_plus_cm, CmMode::shifted}}) {
    checks.push_back({v.name, [mc, n, batch, v](Rng& rng, double eps, bool bug) {
                        TrainConfig tc;
                        tc.ablation = v.ablation;
                        tc.loss.cm_mode = v.mode;
                        tc.loss.lambda1 = 0.5;
                        // Resample until the point is well clear of every kink, the
                        // composed-model analogue of checking relu away from 0.
                        for (int attempt = 0;; ++attempt) {
                          ModelParams p = jittered_params(mc, rng);
                          const auto ids = tiny_tokens(batch, n, mc.vocab_size, rng);
                          Mat targets = Mat::Zero(batch, mc.num_categories);
                          for (int b = 0; b < batch; ++b)
                            targets(b, static_cast<Index>(rng.below(mc.num_categories))) = 1.0;
                          Mat cm = random_mat(mc.num_categories, mc.num_categories, rng, 0.0, 1.0);
                          cm = (cm + cm.transpose()).eval() * 0.5;
                          cm.diagonal().setOnes();
                          LossFn f = [&](Graph& g) {
                            Tensor l = batch_loss(g, p, ids, targets, cm, tc, false, nullptr).total;
                            return bug ? corrupt(l) : l;
                          };
                          if (!clear_of_kinks(f, eps, attempt)) continue;
                          return check_params(f, trainable_parameters(p, v.ablation), eps);
                        }
                      }});
  }
  return checks;
}
}  // namespace

std::vector<std::string> gradient_suite_components() {
  std::vector<std::string> names;
  for (const auto& c : build_checks(GradientSuiteConfig{})) names.push_back(c.name);
  return names;
}

GradientCheckReport gradient_check_suite(const GradientSuiteConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  GradientCheckReport report;
  report.tolerance = cfg.tolerance;
  const Rng root(cfg.seed);
  std::uint64_t stream = 0;
  for (const Check& check : build_checks(cfg)) {
    Rng rng = root.split(++stream);
    const bool is_model = check.name.starts_with("model[");
    const int points = is_model ? std::min(cfg.points, 2) : cfg.points;
    const bool bug = check.name == cfg.inject_bug;
    double worst = 0.0;
    for (int i = 0; i < points; ++i) worst = std::max(worst, check.run(rng, cfg.eps, bug));
    report.entries.push_back({check.name, worst, worst < cfg.tolerance});
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace deepcat
