#pragma once

#include "deepcat/tensor.hpp"
#include "deepcat/vocabulary.hpp"

#include <filesystem>
#include <span>
#include <string_view>

namespace deepcat {

struct ModelConfig {
  int vocab_size = 0;
  int num_categories = 0;
  int embed_dim = 100;
  int seq_len = kMaxQueryLength;
  int conv_layers = 3;
  int kernel_width = 3;
  int heads = 10;
  /// Width the similarity matrix is projected to before attention.
  int attn_dim = 100;

  void validate() const;
};

/// Which parts of the network are active. Mirrors the three ablation rows:
/// query encoder only, plus word-category attention, plus the co-occurrence loss.
enum class Ablation { word_only, joint, joint_plus_cm };

std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view s);

struct LinearParams {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

struct ConvLayer {
  Parameter kernel;  // (width * dim) x dim
  Parameter bias;
};

struct HighwayLayer {
  LinearParams transform;
  LinearParams gate;
};

struct AttentionParams {
  LinearParams input;   // |C| -> attn_dim
  Parameter query;      // attn_dim x attn_dim, split into heads by column
  Parameter key;
  Parameter value;
  LinearParams output;  // attn_dim -> |C|
};

struct ModelParams {
  ModelConfig config;
  Parameter word_emb;  // vocab x dim, PAD row frozen at zero
  Parameter cat_emb;   // |C| x dim
  std::vector<ConvLayer> conv;
  std::vector<HighwayLayer> highway;
  AttentionParams attention;
  LinearParams fuse;    // 2*dim -> dim
  LinearParams output;  // dim -> |C|

  /// Every parameter in a fixed order (the checkpoint and optimizer order).
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  /// Parameters that word_only mode never touches.
  std::vector<const Parameter*> joint_only() const;
};

ModelParams init_params(const ModelConfig& config, Rng& rng);

/// Overwrites rows of word_emb from a whitespace-separated "token v1 .. vD"
/// text file. Returns the number of vocabulary tokens found.
int load_word_vectors(ModelParams& params, const Vocabulary& vocab, const std::filesystem::path& path);

struct ForwardOptions {
  Ablation ablation = Ablation::joint_plus_cm;
  bool training = false;
  double dropout = 0.5;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

// ---- building blocks (graph level) -----------------------------------------

/// (B*n) x dim; PAD rows are zero.
Tensor embed_query(Graph& g, ModelParams& p, std::span<const int> token_ids);
Tensor highway(const Tensor& x, HighwayLayer& layer);
/// B x dim query encoding (conv + highway stack, max over positions).
Tensor query2vector(const Tensor& q_w, ModelParams& p, const ForwardOptions& opt);
/// rowL2(q_w) * rowL2(cat_emb)^T.
Tensor word_category_similarity(const Tensor& q_w, const Tensor& cat_emb);
/// (B*n) x |C| attention matrix A_wc; PAD keys are masked.
Tensor multi_head_self_attention(const Tensor& similarity, AttentionParams& p, const Mask& token_valid,
                                 int seq_len, int heads);
/// B x n softmax over words of the per-word maximum attention; PAD words get 0.
Tensor attention_pool(const Tensor& a_wc, const Mask& token_valid, int seq_len);
/// B x dim convex combination of word embeddings.
Tensor weighted_word_rep(const Tensor& q_w, const Tensor& word_weights);
Tensor fuse(const Tensor& r_qw, const Tensor& r_wc, LinearParams& p);
Tensor predict_logits(const Tensor& r, LinearParams& p);
/// Cosine-similarity matrix of category embeddings: symmetric, unit diagonal.
Tensor estimate_category_cm(const Tensor& cat_emb);

/// (B*n) x 1 validity flags for a batch of token ids.
Mask token_mask(std::span<const int> token_ids);

struct BatchOutput {
  Tensor logits;        // B x |C|
  Tensor word_weights;  // B x n, undefined in word_only mode
};

BatchOutput forward(Graph& g, ModelParams& p, std::span<const int> token_ids, const ForwardOptions& opt);

/// Inference-mode logits for many queries, evaluated in batches.
Mat predict_scores(ModelParams& p, std::span<const int> token_ids, Ablation ablation, int batch_size = 256);

/// Every intermediate of one inference-mode forward pass.
struct ForwardTrace {
  Mat q_w;           // n x dim
  Mat similarity;    // G, n x |C|
  Mat head_probs;    // n x (heads * n)
  Mat a_wc;          // n x |C|
  Mat word_weights;  // 1 x n
  Mat r_qw;          // 1 x dim
  Mat r_wc;          // 1 x dim
  Mat r;             // 1 x dim
  Mat logits;        // 1 x |C|
  Mat cm_hat;        // |C| x |C|
};

ForwardTrace trace_query(ModelParams& p, std::span<const int> token_ids);

}  // namespace deepcat
