#include "rereadnet/encoder.hpp"

#include <stdexcept>

namespace rereadnet {

GruParams GruParams::init(std::int64_t d_in, std::int64_t d_g, Rng& rng) {
  GruParams p;
  p.d_in = d_in;
  p.d_g = d_g;
  p.Wz = Tensor::glorot_uniform({d_g, d_in}, rng);
  p.Uz = Tensor::glorot_uniform({d_g, d_g}, rng);
  p.bz = Tensor::zeros({d_g, 1}, true);
  p.Wr = Tensor::glorot_uniform({d_g, d_in}, rng);
  p.Ur = Tensor::glorot_uniform({d_g, d_g}, rng);
  p.br = Tensor::zeros({d_g, 1}, true);
  p.Wh = Tensor::glorot_uniform({d_g, d_in}, rng);
  p.Uh = Tensor::glorot_uniform({d_g, d_g}, rng);
  p.bh = Tensor::zeros({d_g, 1}, true);
  return p;
}

void GruParams::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".Wz", Wz);
  out.emplace_back(prefix + ".Uz", Uz);
  out.emplace_back(prefix + ".bz", bz);
  out.emplace_back(prefix + ".Wr", Wr);
  out.emplace_back(prefix + ".Ur", Ur);
  out.emplace_back(prefix + ".br", br);
  out.emplace_back(prefix + ".Wh", Wh);
  out.emplace_back(prefix + ".Uh", Uh);
  out.emplace_back(prefix + ".bh", bh);
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  if (x.rank() != 1 || x.dim(0) != p.d_in)
    throw std::invalid_argument("gru_cell: input dim " + std::to_string(x.size()) +
                                " != " + std::to_string(p.d_in));
  if (h_prev.rank() != 1 || h_prev.dim(0) != p.d_g)
    throw std::invalid_argument("gru_cell: state dim " + std::to_string(h_prev.size()) +
                                " != " + std::to_string(p.d_g));
  Tensor xc = as_col(x);
  Tensor hc = as_col(h_prev);
  Tensor z = sigmoid(add(add(matmul(p.Wz, xc), matmul(p.Uz, hc)), p.bz));
  Tensor r = sigmoid(add(add(matmul(p.Wr, xc), matmul(p.Ur, hc)), p.br));
  Tensor cand = tanh_op(add(add(matmul(p.Wh, xc), matmul(p.Uh, mul(r, hc))), p.bh));
  Tensor next = add(mul(scalar_minus(1.0, z), hc), mul(z, cand));
  return reshape(next, {p.d_g});
}

StackGruParams StackGruParams::init(std::int64_t d_in, std::int64_t d_g, std::int64_t l_s,
                                    Rng& rng) {
  if (l_s < 1) throw std::invalid_argument("stack_gru: l_s must be >= 1");
  StackGruParams p;
  p.d_in = d_in;
  p.d_g = d_g;
  std::int64_t in = d_in;
  for (std::int64_t l = 0; l < l_s; ++l) {
    p.layers.push_back(GruParams::init(in, d_g, rng));
    in += d_g;  // next layer reads [h; x] of this one
  }
  return p;
}

void StackGruParams::collect(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t l = 0; l < layers.size(); ++l)
    layers[l].collect(prefix + ".l" + std::to_string(l), out);
}

StackOutput stack_gru_forward(const EmbeddedSentence& x, const StackGruParams& p) {
  const std::int64_t len = x.features.dim(0);
  const std::int64_t n = x.real_len;

  // Per-token input stream of the current layer; starts as the embedding.
  std::vector<Tensor> stream(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < n; ++t)
    stream[static_cast<std::size_t>(t)] = reshape(slice(x.features, 0, t, 1), {p.d_in});

  for (const auto& layer : p.layers) {
    Tensor h = Tensor::zeros({p.d_g});
    std::vector<Tensor> next(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
      h = gru_cell(stream[static_cast<std::size_t>(t)], h, layer);
      next[static_cast<std::size_t>(t)] = concat({h, stream[static_cast<std::size_t>(t)]}, 0);
    }
    stream = std::move(next);
  }

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n) + 1);
  for (std::int64_t t = 0; t < n; ++t) rows.push_back(as_row(stream[static_cast<std::size_t>(t)]));
  if (len > n) rows.push_back(Tensor::zeros({len - n, p.out_dim()}));

  StackOutput out;
  out.states = concat(std::span<const Tensor>(rows.data(), rows.size()), 0);
  out.mask = x.mask;
  out.tokens = x.tokens;
  out.real_len = n;
  return out;
}

AttnPoolParams AttnPoolParams::init(std::int64_t d_a, std::int64_t d_in, Rng& rng) {
  AttnPoolParams p;
  p.W = Tensor::glorot_uniform({d_a, d_in}, rng);
  p.b = Tensor::zeros({d_a, 1}, true);
  p.w = Tensor::glorot_uniform({d_a}, rng);
  return p;
}

void AttnPoolParams::collect(const std::string& prefix,
                             std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
  out.emplace_back(prefix + ".w", w);
}

Tensor self_attn_pool(const Tensor& states, const std::vector<std::uint8_t>& mask,
                      const AttnPoolParams& p) {
  const std::int64_t len = states.dim(0);
  Tensor a = transpose(states);  // [d_in, len]
  Tensor scores = matmul(as_row(p.w), tanh_op(add(matmul(p.W, a), p.b)));  // [1, len]
  Tensor weights = softmax(reshape(scores, {len}), mask);
  return reshape(matmul(a, as_col(weights)), {states.dim(1)});
}

}  // namespace rereadnet
