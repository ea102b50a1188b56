#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rereadnet/data.hpp"
#include "rereadnet/drr.hpp"
#include "rereadnet/embedding.hpp"
#include "rereadnet/encoder.hpp"
#include "rereadnet/local.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

// [x; y; y (.) x; y - x], dimension 4d.
Tensor heuristic_match(const Tensor& x, const Tensor& y);

// ReLU hidden layers, softmax output; probabilities sum to 1.
struct MlpParams {
  std::vector<Tensor> weights;  // [out, in] per layer
  std::vector<Tensor> biases;   // [out, 1]

  static MlpParams init(std::int64_t in, const std::vector<std::int64_t>& hidden,
                        std::int64_t out, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

Tensor mlp_forward(const Tensor& x, const MlpParams& p);

// Scalar sigmoid gates over the two class distributions.
struct FusionGateParams {
  Tensor wh, bh;  // [n_classes], [1]
  Tensor wv, bv;

  static FusionGateParams init(std::int64_t n_classes, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

// MLP3(alpha_h * p_h + alpha_v * p_v) with alpha = sigmoid(w.p + b).
Tensor fusion_gate(const Tensor& p_h, const Tensor& p_v, const FusionGateParams& gate,
                   const MlpParams& mlp3);

// --- DRr-Net -------------------------------------------------------------------

struct DrrNetConfig {
  EmbeddingConfig emb;
  std::int64_t d_g = 256;
  std::int64_t d_a = 200;
  std::int64_t l_s = 3;
  int steps = 6;  // T1
  double beta = 100.0;
  std::int64_t mlp_hidden = 300;
  std::int64_t n_classes = 3;
};

class DrrNet {
 public:
  DrrNet(const DrrNetConfig& cfg, WordTable words, std::optional<AntonymLexicon> antonyms,
         CharVocab chars, Rng& rng);

  struct Output {
    Tensor probs;
    std::vector<TraceEntry> trace_a, trace_b;
  };

  // pad_a / pad_b extend either sentence with pad rows; probabilities are
  // invariant to them.
  Output forward(const PairExample& ex, std::int64_t pad_a = 0, std::int64_t pad_b = 0) const;

  std::vector<std::pair<std::string, Tensor>> parameters();
  const DrrNetConfig& config() const { return cfg_; }
  Embedder& embedder() { return embedder_; }

 private:
  DrrNetConfig cfg_;
  Embedder embedder_;
  StackGruParams stack_;
  AttnPoolParams pool_;
  DrrReaderParams reader_;  // shared between both directions
  MlpParams mlp1_, mlp2_, mlp3_;
  FusionGateParams gate_;
};

// --- LadRa-Net -------------------------------------------------------------------

struct LadraNetConfig {
  // Internal encoder substitute (ignored when encodings come from a file).
  EmbeddingConfig emb;
  std::int64_t enc_d_g = 256;
  std::int64_t enc_l_s = 1;

  std::vector<std::int64_t> kernels = {2, 3};
  std::int64_t pcnn_inner = 500;
  std::int64_t d_a = 200;
  int steps = 5;  // T2
  double beta = 100.0;
  std::int64_t mlp_hidden = 300;
  std::int64_t n_classes = 3;
  bool coverage = true;
};

inline const char* kSepToken = "<sep>";

class LadraNet {
 public:
  // Internal stack-encoder substitute (L = 1).
  LadraNet(const LadraNetConfig& cfg, WordTable words, std::optional<AntonymLexicon> antonyms,
           CharVocab chars, Rng& rng);
  // Externally produced multi-layer encodings of known shape.
  LadraNet(const LadraNetConfig& cfg, std::int64_t n_layers, std::int64_t d_enc, Rng& rng);

  struct Output {
    Tensor probs;
    std::vector<DsaStepTrace> trace;
  };

  Output forward(const PairExample& ex, std::int64_t pad = 0) const;
  Output forward_encoding(const MultiLayerEncoding& enc) const;

  // Joined-pair encoding from the internal encoder: a <sep> b, then pads.
  MultiLayerEncoding encode_internal(const PairExample& ex, std::int64_t pad = 0) const;

  std::vector<std::pair<std::string, Tensor>> parameters();
  const LadraNetConfig& config() const { return cfg_; }
  std::int64_t d_enc() const { return d_enc_; }
  bool internal_encoder() const { return embedder_.has_value(); }

 private:
  void init_local(std::int64_t n_layers, Rng& rng);

  LadraNetConfig cfg_;
  std::int64_t d_enc_ = 0;
  std::optional<Embedder> embedder_;
  std::optional<StackGruParams> enc_stack_;
  std::optional<AttnPoolParams> enc_cls_pool_;
  Tensor layer_logits_;  // [L]
  PcnnParams pcnn_;
  LocalPoolParams pools_;
  DsaParams dsa_;
  MlpParams mlp_;
};

}  // namespace rereadnet
