#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rereadnet/embedding.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

// Gated recurrent unit: z and r gates plus candidate state,
// h' = (1-z) (.) h + z (.) h~.
struct GruParams {
  Tensor Wz, Uz, bz;
  Tensor Wr, Ur, br;
  Tensor Wh, Uh, bh;
  std::int64_t d_in = 0, d_g = 0;

  static GruParams init(std::int64_t d_in, std::int64_t d_g, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p);

// Stack of GRU layers where layer l consumes [h^(l-1); x^(l-1)]; the final
// per-token state keeps every stream, dim d_w + l_s * d_g.
struct StackGruParams {
  std::vector<GruParams> layers;
  std::int64_t d_in = 0, d_g = 0;

  static StackGruParams init(std::int64_t d_in, std::int64_t d_g, std::int64_t l_s, Rng& rng);
  std::int64_t out_dim() const {
    return d_in + static_cast<std::int64_t>(layers.size()) * d_g;
  }
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

struct StackOutput {
  Tensor states;  // [len, d_in + l_s*d_g], pad rows zero
  std::vector<std::uint8_t> mask;
  std::vector<std::string> tokens;
  std::int64_t real_len = 0;
};

StackOutput stack_gru_forward(const EmbeddedSentence& x, const StackGruParams& p);

// Additive self-attention pooling: alpha = w^T tanh(W h_i + b), pooled
// vector is the softmax-weighted sum over unmasked positions.
struct AttnPoolParams {
  Tensor W;  // [d_a, d_in]
  Tensor b;  // [d_a, 1]
  Tensor w;  // [d_a]

  static AttnPoolParams init(std::int64_t d_a, std::int64_t d_in, Rng& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& out);
};

Tensor self_attn_pool(const Tensor& states, const std::vector<std::uint8_t>& mask,
                      const AttnPoolParams& p);

inline Tensor self_attn_pool(const StackOutput& h, const AttnPoolParams& p) {
  return self_attn_pool(h.states, h.mask, p);
}

}  // namespace rereadnet
