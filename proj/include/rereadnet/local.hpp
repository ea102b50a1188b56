#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rereadnet/encoder.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

// Multi-layer token encodings of a joined sentence pair, either produced by
// the internal stack encoder (L=1) or loaded from a precomputed file.
struct MultiLayerEncoding {
  std::vector<Tensor> layers;  // L tensors, each [l_ab, d_enc]
  Tensor cls;                  // [d_enc] sentence-level vector
  std::vector<std::uint8_t> mask;
  std::vector<std::string> tokens;
  std::int64_t real_len = 0;

  std::int64_t length() const { return layers.empty() ? 0 : layers[0].dim(0); }
  std::int64_t d_enc() const { return layers.empty() ? 0 : layers[0].dim(1); }
};

// h_t = sum_l softmax(weights)_l * layer_l[t]; a convex combination so a
// dominant weight pins the output to that layer.
Tensor weighted_layer_sum(const MultiLayerEncoding& enc, const Tensor& layer_logits);

// Phrase-CNN unit: two same-length conv layers (d_enc -> inner -> d_enc)
// with a relu between them.
struct PcnnUnit {
  std::int64_t ksize = 0;
  Tensor k1, b1;  // [k, d_enc, inner], [inner]
  Tensor k2, b2;  // [k, inner, d_enc], [d_enc]

  static PcnnUnit init(std::int64_t ksize, std::int64_t d_enc, std::int64_t inner, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

struct PcnnParams {
  std::vector<PcnnUnit> units;

  static PcnnParams init(const std::vector<std::int64_t>& kernel_sizes, std::int64_t d_enc,
                         std::int64_t inner, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

std::vector<Tensor> pcnn_forward(const Tensor& h0, const PcnnParams& p);

// Token states per granularity (index 0 = fused encoder output, then one per
// PCNN kernel), their pooled vectors, and the averaged pair vector.
struct LocalEncoding {
  std::vector<Tensor> granularities;  // (l_r+1) x [l_ab, d_enc]
  std::vector<Tensor> pooled;         // h^r for r = 1..l_r
  Tensor h_ab;                        // [d_enc]
  std::vector<std::uint8_t> mask;
  std::vector<std::string> tokens;
};

struct LocalPoolParams {
  std::vector<AttnPoolParams> per_kernel;  // r = 1..l_r

  static LocalPoolParams init(std::int64_t l_r, std::int64_t d_a, std::int64_t d_enc, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

// Pools each PCNN granularity with additive self-attention; h_ab is the
// arithmetic mean of [cls, h^1, ..., h^l_r].
LocalEncoding local_self_attn_pool(const MultiLayerEncoding& enc, const Tensor& fused,
                                   const std::vector<Tensor>& pcnn_out,
                                   const LocalPoolParams& p);

// Dynamic sequential attention over granularities with a per-granularity
// coverage budget; parameters are shared across granularities. The reader
// GRU keeps width d_enc so its state can start as h_ab and average with it.
struct DsaParams {
  Tensor Wrd;   // [d_a, d_enc]
  Tensor Urd;   // [d_a, d_enc]
  Tensor Mrd;   // [d_a, d_enc]
  Tensor Vrd;   // [d_a, d_enc]
  Tensor wrd;   // [d_a]
  Tensor wphi;  // [d_enc]  coverage scale projection
  Tensor Wf;    // [d_a, d_enc]  fusion
  Tensor wf;    // [d_a]
  GruParams gru;  // d_enc -> d_enc
  int steps = 5;
  double beta = 100.0;
  bool coverage_enabled = true;

  static DsaParams init(std::int64_t d_a, std::int64_t d_enc, int steps, double beta, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

struct DsaSelectOut {
  Tensor picked;         // [d_enc]
  Tensor coverage_next;  // [l_ab]
  std::int64_t index = 0;
  double weight = 0.0;
};

// One granularity pick: coverage scales the pre-softmax scores, the pick is
// the sharpened convex combination, and coverage loses (1/phi) of the
// attention mass with phi = T * sigmoid(wphi . mean token state).
DsaSelectOut dsa_select(const Tensor& states, const std::vector<std::uint8_t>& mask,
                        const Tensor& h_prev, const Tensor& h_ab,
                        const std::vector<Tensor>& prior_picks, const Tensor& coverage,
                        const DsaParams& p);

// Learned softmax mixture of this step's per-granularity picks.
Tensor dsa_fuse_step(const std::vector<Tensor>& picks, const DsaParams& p);

struct DsaStepTrace {
  int step = 0;
  int granularity = 0;
  std::int64_t index = 0;
  std::string token;
  double weight = 0.0;
  std::vector<double> coverage;  // snapshot after the update
};

struct DsaReadOut {
  std::vector<Tensor> hidden;  // T states, each [d_enc]
  std::vector<DsaStepTrace> trace;
};

DsaReadOut dsa_read(const LocalEncoding& local, const DsaParams& p);

}  // namespace rereadnet
