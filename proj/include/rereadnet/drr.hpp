#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rereadnet/encoder.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

// Attention block of the re-read unit: scores every token against the
// reader state and the partner sentence's global vector.
struct DrrAttnParams {
  Tensor Wd;  // [d_a, d_in]
  Tensor Ud;  // [d_a, d_g]
  Tensor Md;  // [d_a, d_in]
  Tensor wd;  // [d_a]

  static DrrAttnParams init(std::int64_t d_a, std::int64_t d_in, std::int64_t d_g, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

// One selection step in the trace: which token won and with what weight.
struct TraceEntry {
  int step = 0;
  std::int64_t index = 0;
  std::string token;
  double weight = 0.0;
};

struct DrrSelectOut {
  Tensor picked;  // [d_in], convex combination of token states
  std::int64_t index = 0;
  double weight = 0.0;
};

// Sharpened-attention pick of one token state. Ties break toward the
// lowest index so traces are reproducible.
DrrSelectOut drr_select(const StackOutput& h, const Tensor& h_prev, const Tensor& guide,
                        const DrrAttnParams& p, double beta);

// Reader over the selected words. Both directions share one parameter set;
// the initial state is a learned projection of the sentence's own global
// vector (reader width d_g differs from the token-state width).
struct DrrReaderParams {
  DrrAttnParams attn;
  GruParams gru;   // d_in -> d_g
  Tensor w_init;   // [d_g, d_in]
  int steps = 6;
  double beta = 100.0;

  static DrrReaderParams init(std::int64_t d_a, std::int64_t d_in, std::int64_t d_g, int steps,
                              double beta, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

struct DrrReadOut {
  Tensor v;  // [d_g]
  std::vector<TraceEntry> trace;
};

DrrReadOut drr_read(const StackOutput& h_self, const Tensor& h_self_global,
                    const Tensor& h_other_global, const DrrReaderParams& p);

}  // namespace rereadnet
