#include "rereadnet/local.hpp"

#include <stdexcept>

namespace rereadnet {

Tensor weighted_layer_sum(const MultiLayerEncoding& enc, const Tensor& layer_logits) {
  const std::int64_t l = static_cast<std::int64_t>(enc.layers.size());
  if (l == 0) throw std::invalid_argument("weighted_layer_sum: no layers");
  if (layer_logits.rank() != 1 || layer_logits.dim(0) != l)
    throw std::invalid_argument("weighted_layer_sum: need one weight per layer");
  Tensor w = softmax(layer_logits, {});
  Tensor out;
  for (std::int64_t i = 0; i < l; ++i) {
    Tensor term = mul(enc.layers[static_cast<std::size_t>(i)], slice(w, 0, i, 1));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

PcnnUnit PcnnUnit::init(std::int64_t ksize, std::int64_t d_enc, std::int64_t inner, Rng& rng) {
  if (ksize < 2) throw std::invalid_argument("pcnn: kernel sizes are >= 2");
  PcnnUnit u;
  u.ksize = ksize;
  u.k1 = Tensor::glorot_uniform({ksize, d_enc, inner}, rng);
  u.b1 = Tensor::zeros({inner}, true);
  u.k2 = Tensor::glorot_uniform({ksize, inner, d_enc}, rng);
  u.b2 = Tensor::zeros({d_enc}, true);
  return u;
}

void PcnnUnit::collect(const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".k1", k1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".k2", k2);
  out.emplace_back(prefix + ".b2", b2);
}

PcnnParams PcnnParams::init(const std::vector<std::int64_t>& kernel_sizes, std::int64_t d_enc,
                            std::int64_t inner, Rng& rng) {
  PcnnParams p;
  for (auto k : kernel_sizes) p.units.push_back(PcnnUnit::init(k, d_enc, inner, rng));
  return p;
}

void PcnnParams::collect(const std::string& prefix,
                         std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t i = 0; i < units.size(); ++i)
    units[i].collect(prefix + ".k" + std::to_string(units[i].ksize), out);
}

std::vector<Tensor> pcnn_forward(const Tensor& h0, const PcnnParams& p) {
  std::vector<Tensor> out;
  out.reserve(p.units.size());
  for (const auto& u : p.units) {
    Tensor inner = relu(conv1d_same(h0, u.k1, u.b1));
    out.push_back(conv1d_same(inner, u.k2, u.b2));
  }
  return out;
}

LocalPoolParams LocalPoolParams::init(std::int64_t l_r, std::int64_t d_a, std::int64_t d_enc,
                                      Rng& rng) {
  LocalPoolParams p;
  for (std::int64_t r = 0; r < l_r; ++r)
    p.per_kernel.push_back(AttnPoolParams::init(d_a, d_enc, rng));
  return p;
}

void LocalPoolParams::collect(const std::string& prefix,
                              std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t r = 0; r < per_kernel.size(); ++r)
    per_kernel[r].collect(prefix + ".r" + std::to_string(r + 1), out);
}

LocalEncoding local_self_attn_pool(const MultiLayerEncoding& enc, const Tensor& fused,
                                   const std::vector<Tensor>& pcnn_out,
                                   const LocalPoolParams& p) {
  if (pcnn_out.size() != p.per_kernel.size())
    throw std::invalid_argument("local_self_attn_pool: params/granularity count mismatch");
  LocalEncoding out;
  out.mask = enc.mask;
  out.tokens = enc.tokens;
  out.granularities.push_back(fused);
  for (const auto& g : pcnn_out) out.granularities.push_back(g);

  // h_ab = mean([cls, h^1, ..., h^l_r]).
  Tensor acc = enc.cls;
  for (std::size_t r = 0; r < pcnn_out.size(); ++r) {
    Tensor pooled = self_attn_pool(pcnn_out[r], enc.mask, p.per_kernel[r]);
    out.pooled.push_back(pooled);
    acc = add(acc, pooled);
  }
  out.h_ab = mul_scalar(acc, 1.0 / static_cast<double>(pcnn_out.size() + 1));
  return out;
}

DsaParams DsaParams::init(std::int64_t d_a, std::int64_t d_enc, int steps, double beta,
                          Rng& rng) {
  if (steps < 1) throw std::invalid_argument("dsa_read: T must be >= 1");
  DsaParams p;
  p.Wrd = Tensor::glorot_uniform({d_a, d_enc}, rng);
  p.Urd = Tensor::glorot_uniform({d_a, d_enc}, rng);
  p.Mrd = Tensor::glorot_uniform({d_a, d_enc}, rng);
  p.Vrd = Tensor::glorot_uniform({d_a, d_enc}, rng);
  p.wrd = Tensor::glorot_uniform({d_a}, rng);
  p.wphi = Tensor::glorot_uniform({d_enc}, rng);
  p.Wf = Tensor::glorot_uniform({d_a, d_enc}, rng);
  p.wf = Tensor::glorot_uniform({d_a}, rng);
  p.gru = GruParams::init(d_enc, d_enc, rng);
  p.steps = steps;
  p.beta = beta;
  return p;
}

void DsaParams::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".Wrd", Wrd);
  out.emplace_back(prefix + ".Urd", Urd);
  out.emplace_back(prefix + ".Mrd", Mrd);
  out.emplace_back(prefix + ".Vrd", Vrd);
  out.emplace_back(prefix + ".wrd", wrd);
  out.emplace_back(prefix + ".wphi", wphi);
  out.emplace_back(prefix + ".Wf", Wf);
  out.emplace_back(prefix + ".wf", wf);
  gru.collect(prefix + ".gru", out);
}

DsaSelectOut dsa_select(const Tensor& states, const std::vector<std::uint8_t>& mask,
                        const Tensor& h_prev, const Tensor& h_ab,
                        const std::vector<Tensor>& prior_picks, const Tensor& coverage,
                        const DsaParams& p) {
  const std::int64_t len = states.dim(0);
  for (double c : coverage.data())
    if (c < 0.0 || c > 1.0)
      throw std::invalid_argument("dsa_select: coverage outside [0,1]");

  Tensor a = transpose(states);  // [d_enc, len]
  Tensor ctx = add(matmul(p.Urd, as_col(h_prev)), matmul(p.Mrd, as_col(h_ab)));
  if (!prior_picks.empty()) {
    Tensor prior_sum = prior_picks[0];
    for (std::size_t j = 1; j < prior_picks.size(); ++j)
      prior_sum = add(prior_sum, prior_picks[j]);
    ctx = add(ctx, matmul(p.Vrd, as_col(prior_sum)));
  }
  Tensor scores = reshape(matmul(as_row(p.wrd), tanh_op(add(matmul(p.Wrd, a), ctx))), {len});
  Tensor scaled = p.coverage_enabled ? mul(scores, coverage) : scores;
  Tensor weights = softmax_sharp(scaled, p.beta, mask);

  DsaSelectOut out;
  out.picked = reshape(matmul(a, as_col(weights)), {states.dim(1)});
  out.index = -1;
  double best = 0.0;
  for (std::int64_t i = 0; i < len; ++i) {
    if (!mask.empty() && mask[static_cast<std::size_t>(i)] == 0) continue;
    const double v = scaled.at(i);
    if (out.index < 0 || v > best) {
      best = v;
      out.index = i;
    }
  }
  out.weight = weights.at(out.index);

  if (p.coverage_enabled) {
    // phi = T * sigmoid(wphi . mean token state), a positive scalar.
    Tensor mean_state = pool_avg(states, mask);
    Tensor phi = mul_scalar(
        sigmoid(matmul(as_row(p.wphi), as_col(mean_state))), static_cast<double>(p.steps));
    Tensor spent = mul(weights, reshape(reciprocal(phi), {1}));
    out.coverage_next = clamp01(sub(coverage, spent));
  } else {
    out.coverage_next = coverage;
  }
  return out;
}

Tensor dsa_fuse_step(const std::vector<Tensor>& picks, const DsaParams& p) {
  if (picks.empty()) throw std::invalid_argument("dsa_fuse_step: no candidates");
  std::vector<Tensor> scores;
  scores.reserve(picks.size());
  for (const auto& pick : picks)
    scores.push_back(reshape(matmul(as_row(p.wf), tanh_op(matmul(p.Wf, as_col(pick)))), {1}));
  Tensor w = softmax(concat(std::span<const Tensor>(scores.data(), scores.size()), 0), {});
  Tensor fused;
  for (std::size_t r = 0; r < picks.size(); ++r) {
    Tensor term = mul(picks[r], slice(w, 0, static_cast<std::int64_t>(r), 1));
    fused = fused.defined() ? add(fused, term) : term;
  }
  return fused;
}

DsaReadOut dsa_read(const LocalEncoding& local, const DsaParams& p) {
  const std::int64_t len = local.granularities.at(0).dim(0);
  const std::size_t n_gran = local.granularities.size();

  Tensor h = local.h_ab;  // reader state starts as the pair-level vector
  std::vector<Tensor> coverage(n_gran, Tensor::ones({len}));

  DsaReadOut out;
  for (int t = 1; t <= p.steps; ++t) {
    std::vector<Tensor> picks;
    picks.reserve(n_gran);
    for (std::size_t r = 0; r < n_gran; ++r) {
      DsaSelectOut sel = dsa_select(local.granularities[r], local.mask, h, local.h_ab, picks,
                                    coverage[r], p);
      coverage[r] = sel.coverage_next;
      DsaStepTrace tr;
      tr.step = t;
      tr.granularity = static_cast<int>(r);
      tr.index = sel.index;
      tr.token = local.tokens.empty() ? std::string()
                                      : local.tokens[static_cast<std::size_t>(sel.index)];
      tr.weight = sel.weight;
      tr.coverage.assign(coverage[r].data().begin(), coverage[r].data().end());
      out.trace.push_back(std::move(tr));
      picks.push_back(sel.picked);
    }
    h = gru_cell(dsa_fuse_step(picks, p), h, p.gru);
    out.hidden.push_back(h);
  }
  return out;
}

}  // namespace rereadnet
