#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "als/approx_check.hpp"
#include "als/error.hpp"
#include "als/random.hpp"
#include "als/tokens.hpp"

namespace als::model {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

struct ModelConfig {
  unsigned num_inputs = 8;
  unsigned d_model = 64;
  unsigned n_heads = 4;
  unsigned n_enc_layers = 2;
  unsigned n_dec_layers = 2;
  unsigned d_ff = 256;
  std::size_t max_len = kDefaultMaxLen;
  std::vector<ErrorBound> epsilon_buckets{ErrorBound(), ErrorBound::ratio(1, 100), ErrorBound::ratio(1, 20),
                                          ErrorBound::ratio(1, 10)};

  /// Output vocabulary: circuit tokens only.
  std::uint32_t vocab_size() const { return als::vocab_size(num_inputs); }
  /// Embedding rows: circuit tokens, BOS, then one row per epsilon bucket.
  std::uint32_t embedding_rows() const { return vocab_size() + 1 + static_cast<std::uint32_t>(epsilon_buckets.size()); }
  std::uint32_t bos_id() const { return vocab_size(); }
  unsigned head_dim() const { return d_model / n_heads; }

  /// Largest bucket not above eps.
  std::uint32_t bucket_id(const ErrorBound& eps) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < epsilon_buckets.size(); ++i)
      if (epsilon_buckets[i] <= eps) k = i;
    return vocab_size() + 1 + static_cast<std::uint32_t>(k);
  }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw ContractError("d_model must be a positive multiple of n_heads");
    if (n_enc_layers == 0 || n_dec_layers == 0 || d_ff == 0) throw ContractError("empty model");
    if (num_inputs == 0 || num_inputs > Circuit::kMaxInputs) throw ContractError("bad input count");
    if (max_len < 2) throw ContractError("max_len too small");
    if (epsilon_buckets.empty()) throw ContractError("need at least one epsilon bucket");
  }

  static ModelConfig micro(unsigned num_inputs) {
    ModelConfig c;
    c.num_inputs = num_inputs;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.d_ff = 16;
    c.max_len = 32;
    return c;
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : c.epsilon_buckets) buckets.push_back(to_string(b));
  return {{"num_inputs", c.num_inputs}, {"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"n_enc_layers", c.n_enc_layers}, {"n_dec_layers", c.n_dec_layers}, {"d_ff", c.d_ff},
          {"max_len", c.max_len},       {"vocab_size", c.vocab_size()}, {"epsilon_buckets", buckets}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_inputs = j.at("num_inputs").get<unsigned>();
  c.d_model = j.at("d_model").get<unsigned>();
  c.n_heads = j.at("n_heads").get<unsigned>();
  c.n_enc_layers = j.at("n_enc_layers").get<unsigned>();
  c.n_dec_layers = j.at("n_dec_layers").get<unsigned>();
  c.d_ff = j.at("d_ff").get<unsigned>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.epsilon_buckets.clear();
  for (const auto& b : j.at("epsilon_buckets")) c.epsilon_buckets.push_back(ErrorBound::parse(b.get<std::string>()));
  c.validate();
  return c;
}

/// Position of one tensor inside the flat parameter vector.
struct Slot {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

struct AttnSlots {
  Slot wq, wk, wv, wo;
};
struct NormSlots {
  Slot g, b;
};
struct FfSlots {
  Slot w1, b1, w2, b2;
};
struct EncLayerSlots {
  NormSlots ln1;
  AttnSlots attn;
  NormSlots ln2;
  FfSlots ff;
};
struct DecLayerSlots {
  NormSlots ln1;
  AttnSlots self_attn;
  NormSlots ln2;
  AttnSlots cross_attn;
  NormSlots ln3;
  FfSlots ff;
};

/// Declared order of every tensor; the checkpoint payload follows it.
struct Layout {
  Slot embedding;
  std::vector<EncLayerSlots> enc;
  NormSlots enc_norm;
  std::vector<DecLayerSlots> dec;
  NormSlots dec_norm;
  Slot head_w, head_b;
  std::vector<std::pair<std::string, Slot>> named;
  std::size_t total = 0;

  explicit Layout(const ModelConfig& c) {
    const std::size_t d = c.d_model, f = c.d_ff;
    auto add = [&](const std::string& name, std::size_t r, std::size_t k) {
      Slot s{total, r, k};
      total += r * k;
      named.emplace_back(name, s);
      return s;
    };
    auto norm = [&](const std::string& p) { return NormSlots{add(p + ".g", 1, d), add(p + ".b", 1, d)}; };
    auto attn = [&](const std::string& p) {
      return AttnSlots{add(p + ".wq", d, d), add(p + ".wk", d, d), add(p + ".wv", d, d), add(p + ".wo", d, d)};
    };
    auto ff = [&](const std::string& p) {
      return FfSlots{add(p + ".w1", d, f), add(p + ".b1", 1, f), add(p + ".w2", f, d), add(p + ".b2", 1, d)};
    };
    embedding = add("embedding", c.embedding_rows(), d);
    for (unsigned l = 0; l < c.n_enc_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      EncLayerSlots s;
      s.ln1 = norm(p + ".ln1");
      s.attn = attn(p + ".attn");
      s.ln2 = norm(p + ".ln2");
      s.ff = ff(p + ".ff");
      enc.push_back(s);
    }
    enc_norm = norm("enc.norm");
    for (unsigned l = 0; l < c.n_dec_layers; ++l) {
      const std::string p = "dec" + std::to_string(l);
      DecLayerSlots s;
      s.ln1 = norm(p + ".ln1");
      s.self_attn = attn(p + ".self");
      s.ln2 = norm(p + ".ln2");
      s.cross_attn = attn(p + ".cross");
      s.ln3 = norm(p + ".ln3");
      s.ff = ff(p + ".ff");
      dec.push_back(s);
    }
    dec_norm = norm("dec.norm");
    head_w = add("head.w", d, c.vocab_size());
    head_b = add("head.b", 1, c.vocab_size());
  }
};

/// Model parameters: a config plus one flat vector of reals.
class ModelParams {
public:
  explicit ModelParams(ModelConfig cfg) : cfg_(std::move(cfg)), layout_((cfg_.validate(), cfg_)) {
    data_.assign(layout_.total, 0.0);
  }

  /// Normal init scaled by fan-in; norms start at identity and the output
  /// head small so the initial policy is close to uniform.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p(cfg);
    Rng rng(seed);
    for (const auto& [name, s] : p.layout_.named) {
      double std = 1.0 / std::sqrt(static_cast<double>(s.rows));
      if (name == "embedding") std = 1.0;
      if (name == "head.w") std *= 0.1;
      const bool gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
      const bool bias = s.rows == 1 && !gain;
      for (std::size_t i = 0; i < s.size(); ++i)
        p.data_[s.offset + i] = gain ? 1.0 : (bias ? 0.0 : std * rng.normal());
    }
    return p;
  }

  /// Same shape, all zeros (gradient accumulator).
  ModelParams zeros_like() const { return ModelParams(cfg_); }

  const ModelConfig& config() const noexcept { return cfg_; }
  const Layout& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  MatMap mat(const Slot& s) { return MatMap(data_.data() + s.offset, static_cast<long>(s.rows), static_cast<long>(s.cols)); }
  CMatMap mat(const Slot& s) const {
    return CMatMap(data_.data() + s.offset, static_cast<long>(s.rows), static_cast<long>(s.cols));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }
  ModelParams& operator+=(const ModelParams& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  ModelParams& operator*=(double k) {
    for (double& v : data_) v *= k;
    return *this;
  }
  friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.data_ == b.data_; }

private:
  ModelConfig cfg_;
  Layout layout_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Checkpoints: "ALSCKPT1\n", u64 header length, JSON header, f32 payload.

inline constexpr char kCheckpointMagic[] = "ALSCKPT1\n";

inline void save_checkpoint(const ModelParams& p, const std::string& path, const nlohmann::json& extra = {}) {
  nlohmann::json header{{"config", to_json(p.config())}, {"dtype", "f32le"}, {"count", p.size()}};
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, s] : p.layout().named) tensors.push_back({name, s.rows, s.cols});
  header["tensors"] = tensors;
  if (!extra.is_null()) header["meta"] = extra;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u64(text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : p.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  if (!out) throw Error("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw ParseError("not a checkpoint", 0);
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  if (!in || len > (1u << 24)) throw ParseError("bad checkpoint header", 0);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  ModelParams p(config_from_json(header.at("config")));
  if (header.at("count").get<std::size_t>() != p.size()) throw ParseError("tensor count mismatch", 0);
  for (double& v : p.data()) {
    unsigned char w[4];
    in.read(reinterpret_cast<char*>(w), 4);
    if (!in) throw ParseError("truncated checkpoint", 0);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(w[i]) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  return p;
}

}  // namespace als::model
