#include "rereadnet/drr.hpp"

#include <stdexcept>

namespace rereadnet {

DrrAttnParams DrrAttnParams::init(std::int64_t d_a, std::int64_t d_in, std::int64_t d_g,
                                  Rng& rng) {
  DrrAttnParams p;
  p.Wd = Tensor::glorot_uniform({d_a, d_in}, rng);
  p.Ud = Tensor::glorot_uniform({d_a, d_g}, rng);
  p.Md = Tensor::glorot_uniform({d_a, d_in}, rng);
  p.wd = Tensor::glorot_uniform({d_a}, rng);
  return p;
}

void DrrAttnParams::collect(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".Wd", Wd);
  out.emplace_back(prefix + ".Ud", Ud);
  out.emplace_back(prefix + ".Md", Md);
  out.emplace_back(prefix + ".wd", wd);
}

DrrSelectOut drr_select(const StackOutput& h, const Tensor& h_prev, const Tensor& guide,
                        const DrrAttnParams& p, double beta) {
  const std::int64_t len = h.states.dim(0);
  Tensor a = transpose(h.states);  // [d_in, len]
  Tensor ctx = add(matmul(p.Ud, as_col(h_prev)), matmul(p.Md, as_col(guide)));  // [d_a,1]
  Tensor scores = matmul(as_row(p.wd), tanh_op(add(matmul(p.Wd, a), ctx)));     // [1,len]
  Tensor logits = reshape(scores, {len});
  Tensor weights = softmax_sharp(logits, beta, h.mask);

  DrrSelectOut out;
  out.picked = reshape(matmul(a, as_col(weights)), {h.states.dim(1)});
  out.index = -1;
  double best = 0.0;
  for (std::int64_t i = 0; i < len; ++i) {
    if (!h.mask.empty() && h.mask[static_cast<std::size_t>(i)] == 0) continue;
    const double v = logits.at(i);
    if (out.index < 0 || v > best) {
      best = v;
      out.index = i;
    }
  }
  out.weight = weights.at(out.index);
  return out;
}

DrrReaderParams DrrReaderParams::init(std::int64_t d_a, std::int64_t d_in, std::int64_t d_g,
                                      int steps, double beta, Rng& rng) {
  if (steps < 1) throw std::invalid_argument("drr_read: T must be >= 1");
  DrrReaderParams p;
  p.attn = DrrAttnParams::init(d_a, d_in, d_g, rng);
  p.gru = GruParams::init(d_in, d_g, rng);
  p.w_init = Tensor::glorot_uniform({d_g, d_in}, rng);
  p.steps = steps;
  p.beta = beta;
  return p;
}

void DrrReaderParams::collect(const std::string& prefix,
                              std::vector<std::pair<std::string, Tensor>>& out) {
  attn.collect(prefix + ".attn", out);
  gru.collect(prefix + ".gru", out);
  out.emplace_back(prefix + ".w_init", w_init);
}

DrrReadOut drr_read(const StackOutput& h_self, const Tensor& h_self_global,
                    const Tensor& h_other_global, const DrrReaderParams& p) {
  Tensor h = reshape(tanh_op(matmul(p.w_init, as_col(h_self_global))), {p.gru.d_g});
  DrrReadOut out;
  out.trace.reserve(static_cast<std::size_t>(p.steps));
  for (int t = 1; t <= p.steps; ++t) {
    DrrSelectOut sel = drr_select(h_self, h, h_other_global, p.attn, p.beta);
    h = gru_cell(sel.picked, h, p.gru);
    TraceEntry entry;
    entry.step = t;
    entry.index = sel.index;
    entry.token = h_self.tokens[static_cast<std::size_t>(sel.index)];
    entry.weight = sel.weight;
    out.trace.push_back(std::move(entry));
  }
  out.v = h;
  return out;
}

}  // namespace rereadnet
