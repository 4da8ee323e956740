#pragma once

#include "deepcat/model.hpp"
#include "deepcat/taxonomy.hpp"
#include "deepcat/vocabulary.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>

namespace deepcat {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian):
///   "DEEPCATCKPT\n" | u32 version | u64 meta_len | meta JSON
///   | u32 tensor count | { u32 name_len | name | u64 rows | u64 cols | f64[rows*cols] }*
///   | "END\n"
/// meta carries model_config, vocab_hash, taxonomy_hash, vocab tokens and
/// whatever the caller adds (train config, cm_mode, data split).
struct Checkpoint {
  ModelParams params;
  nlohmann::json meta;
};

std::string hash_hex(std::uint64_t h);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes atomically; `meta` gets the hashes, vocab and model config added.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const Vocabulary& vocab,
                     const Taxonomy& taxonomy, nlohmann::json meta = nlohmann::json::object());

/// Parses the whole file before returning; throws CheckpointError on a bad
/// magic, a version mismatch or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, then verifies the vocabulary and taxonomy hashes.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab, const Taxonomy& taxonomy);

void verify_compatible(const Checkpoint& ckpt, const Vocabulary& vocab, const Taxonomy& taxonomy);
/// Vocabulary stored inside the checkpoint.
Vocabulary checkpoint_vocabulary(const Checkpoint& ckpt);

}  // namespace deepcat
