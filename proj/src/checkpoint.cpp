#include "deepcat/checkpoint.hpp"

#include "deepcat/corpus_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace deepcat {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = "DEEPCATCKPT\n";
constexpr char kTrailer[] = "END\n";

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

json model_config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"num_categories", c.num_categories}, {"embed_dim", c.embed_dim},
          {"seq_len", c.seq_len},       {"conv_layers", c.conv_layers},       {"kernel_width", c.kernel_width},
          {"heads", c.heads},           {"attn_dim", c.attn_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.num_categories = j.at("num_categories").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.conv_layers = j.at("conv_layers").get<int>();
  c.kernel_width = j.at("kernel_width").get<int>();
  c.heads = j.at("heads").get<int>();
  c.attn_dim = j.at("attn_dim").get<int>();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const Vocabulary& vocab,
                     const Taxonomy& taxonomy, json meta) {
  meta["model_config"] = model_config_to_json(params.config);
  meta["vocab_hash"] = hash_hex(vocab.hash());
  meta["taxonomy_hash"] = hash_hex(taxonomy.hash());
  meta["vocab"] = vocab.tokens();
  const std::string meta_text = meta.dump();

  std::string out(kMagic, sizeof(kMagic) - 1);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  const auto all = params.all();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const Parameter* p : all) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    out.append(reinterpret_cast<const char*>(p->value.data()), static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  out.append(kTrailer, sizeof(kTrailer) - 1);
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  if (r.str(sizeof(kMagic) - 1) != std::string(kMagic, sizeof(kMagic) - 1)) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  try {
    ck.meta = json::parse(r.str(r.get<std::uint64_t>()));
    ck.params.config = model_config_from_json(ck.meta.at("model_config"));
    ck.params.config.validate();
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad metadata: " + e.what());
  }
  // Build the parameter layout from the config, then fill values by name.
  Rng dummy(0);
  ck.params = init_params(ck.params.config, dummy);
  auto all = ck.params.all();
  const auto count = r.get<std::uint32_t>();
  if (count != all.size()) throw CheckpointError(path.string() + ": parameter count mismatch");
  for (Parameter* p : all) {
    const std::string name = r.str(r.get<std::uint32_t>());
    if (name != p->name) throw CheckpointError(path.string() + ": expected tensor " + p->name + ", found " + name);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(p->value.rows()) || cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw CheckpointError(path.string() + ": shape mismatch for " + name);
    }
    std::memcpy(p->value.data(), r.take(rows * cols * sizeof(double)), rows * cols * sizeof(double));
  }
  if (r.str(sizeof(kTrailer) - 1) != std::string(kTrailer, sizeof(kTrailer) - 1) || !r.done()) {
    throw CheckpointError(path.string() + ": corrupt trailer");
  }
  return ck;
}

void verify_compatible(const Checkpoint& ckpt, const Vocabulary& vocab, const Taxonomy& taxonomy) {
  if (ckpt.meta.value("vocab_hash", "") != hash_hex(vocab.hash())) {
    throw CheckpointError("checkpoint vocabulary hash mismatch: trained against " +
                          ckpt.meta.value("vocab_hash", std::string("?")) + ", given " + hash_hex(vocab.hash()));
  }
  if (ckpt.meta.value("taxonomy_hash", "") != hash_hex(taxonomy.hash())) {
    throw CheckpointError("checkpoint taxonomy hash mismatch: trained against " +
                          ckpt.meta.value("taxonomy_hash", std::string("?")) + ", given " + hash_hex(taxonomy.hash()));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab, const Taxonomy& taxonomy) {
  Checkpoint ck = load_checkpoint(path);
  verify_compatible(ck, vocab, taxonomy);
  return ck;
}

Vocabulary checkpoint_vocabulary(const Checkpoint& ckpt) {
  Vocabulary v(ckpt.meta.at("vocab").get<std::vector<std::string>>());
  if (hash_hex(v.hash()) != ckpt.meta.value("vocab_hash", "")) {
    throw CheckpointError("embedded vocabulary does not match its recorded hash");
  }
  return v;
}

}  // namespace deepcat
