#include "rereadnet/heads.hpp"

#include <stdexcept>

namespace rereadnet {

Tensor heuristic_match(const Tensor& x, const Tensor& y) {
  if (x.rank() != 1 || y.rank() != 1 || x.dim(0) != y.dim(0))
    throw std::invalid_argument("heuristic_match: operands must be equal-length vectors");
  return concat({x, y, mul(y, x), sub(y, x)}, 0);
}

MlpParams MlpParams::init(std::int64_t in, const std::vector<std::int64_t>& hidden,
                          std::int64_t out, Rng& rng) {
  MlpParams p;
  std::int64_t prev = in;
  for (auto h : hidden) {
    p.weights.push_back(Tensor::glorot_uniform({h, prev}, rng));
    p.biases.push_back(Tensor::zeros({h, 1}, true));
    prev = h;
  }
  p.weights.push_back(Tensor::glorot_uniform({out, prev}, rng));
  p.biases.push_back(Tensor::zeros({out, 1}, true));
  return p;
}

void MlpParams::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".W" + std::to_string(l), weights[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), biases[l]);
  }
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  if (x.rank() != 1) throw std::invalid_argument("mlp_forward: input must be rank 1");
  Tensor h = as_col(x);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    h = add(matmul(p.weights[l], h), p.biases[l]);
    if (l + 1 < p.weights.size()) h = relu(h);
  }
  const std::int64_t n = h.dim(0);
  return softmax(reshape(h, {n}), {});
}

FusionGateParams FusionGateParams::init(std::int64_t n_classes, Rng& rng) {
  FusionGateParams p;
  p.wh = Tensor::glorot_uniform({n_classes}, rng);
  p.bh = Tensor::zeros({1}, true);
  p.wv = Tensor::glorot_uniform({n_classes}, rng);
  p.bv = Tensor::zeros({1}, true);
  return p;
}

void FusionGateParams::collect(const std::string& prefix,
                               std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".wh", wh);
  out.emplace_back(prefix + ".bh", bh);
  out.emplace_back(prefix + ".wv", wv);
  out.emplace_back(prefix + ".bv", bv);
}

Tensor fusion_gate(const Tensor& p_h, const Tensor& p_v, const FusionGateParams& gate,
                   const MlpParams& mlp3) {
  if (p_h.shape() != p_v.shape())
    throw std::invalid_argument("fusion_gate: class counts differ");
  Tensor alpha_h =
      sigmoid(add(reshape(matmul(as_row(gate.wh), as_col(p_h)), {1}), gate.bh));
  Tensor alpha_v =
      sigmoid(add(reshape(matmul(as_row(gate.wv), as_col(p_v)), {1}), gate.bv));
  Tensor mixed = add(mul(p_h, alpha_h), mul(p_v, alpha_v));
  return mlp_forward(mixed, mlp3);
}

// --- DRr-Net ----------------------------------------------------------------

DrrNet::DrrNet(const DrrNetConfig& cfg, WordTable words,
               std::optional<AntonymLexicon> antonyms, CharVocab chars, Rng& rng)
    : cfg_(cfg),
      embedder_(cfg.emb, std::move(words), std::move(antonyms), std::move(chars), rng) {
  const std::int64_t d_w = cfg_.emb.d_w();
  stack_ = StackGruParams::init(d_w, cfg_.d_g, cfg_.l_s, rng);
  const std::int64_t d_state = stack_.out_dim();
  pool_ = AttnPoolParams::init(cfg_.d_a, d_state, rng);
  reader_ = DrrReaderParams::init(cfg_.d_a, d_state, cfg_.d_g, cfg_.steps, cfg_.beta, rng);
  mlp1_ = MlpParams::init(4 * d_state, {cfg_.mlp_hidden, cfg_.mlp_hidden}, cfg_.n_classes, rng);
  mlp2_ = MlpParams::init(4 * cfg_.d_g, {cfg_.mlp_hidden, cfg_.mlp_hidden}, cfg_.n_classes, rng);
  mlp3_ = MlpParams::init(cfg_.n_classes, {cfg_.mlp_hidden, cfg_.mlp_hidden}, cfg_.n_classes,
                          rng);
  gate_ = FusionGateParams::init(cfg_.n_classes, rng);
}

DrrNet::Output DrrNet::forward(const PairExample& ex, std::int64_t pad_a,
                               std::int64_t pad_b) const {
  if (ex.tokens_a.empty() || ex.tokens_b.empty())
    throw std::invalid_argument("drrnet_forward: empty sentence");
  EmbeddedSentence ea = embedder_.embed(
      ex.tokens_a, ex.pos_a, ex.tokens_b,
      static_cast<std::int64_t>(ex.tokens_a.size()) + pad_a);
  EmbeddedSentence eb = embedder_.embed(
      ex.tokens_b, ex.pos_b, ex.tokens_a,
      static_cast<std::int64_t>(ex.tokens_b.size()) + pad_b);
  StackOutput ha = stack_gru_forward(ea, stack_);
  StackOutput hb = stack_gru_forward(eb, stack_);
  Tensor ga = self_attn_pool(ha, pool_);
  Tensor gb = self_attn_pool(hb, pool_);
  DrrReadOut ra = drr_read(ha, ga, gb, reader_);
  DrrReadOut rb = drr_read(hb, gb, ga, reader_);

  Tensor p_h = mlp_forward(heuristic_match(ga, gb), mlp1_);
  Tensor p_v = mlp_forward(heuristic_match(ra.v, rb.v), mlp2_);

  Output out;
  out.probs = fusion_gate(p_h, p_v, gate_, mlp3_);
  out.trace_a = std::move(ra.trace);
  out.trace_b = std::move(rb.trace);
  return out;
}

std::vector<std::pair<std::string, Tensor>> DrrNet::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  embedder_.collect_parameters("embed", out);
  stack_.collect("stack", out);
  pool_.collect("pool", out);
  reader_.collect("reader", out);
  mlp1_.collect("mlp1", out);
  mlp2_.collect("mlp2", out);
  mlp3_.collect("mlp3", out);
  gate_.collect("gate", out);
  return out;
}

// --- LadRa-Net --------------------------------------------------------------

void LadraNet::init_local(std::int64_t n_layers, Rng& rng) {
  layer_logits_ = Tensor::zeros({n_layers}, true);
  pcnn_ = PcnnParams::init(cfg_.kernels, d_enc_, cfg_.pcnn_inner, rng);
  pools_ = LocalPoolParams::init(static_cast<std::int64_t>(cfg_.kernels.size()), cfg_.d_a,
                                 d_enc_, rng);
  dsa_ = DsaParams::init(cfg_.d_a, d_enc_, cfg_.steps, cfg_.beta, rng);
  dsa_.coverage_enabled = cfg_.coverage;
  mlp_ = MlpParams::init(d_enc_, {cfg_.mlp_hidden}, cfg_.n_classes, rng);
}

LadraNet::LadraNet(const LadraNetConfig& cfg, WordTable words,
                   std::optional<AntonymLexicon> antonyms, CharVocab chars, Rng& rng)
    : cfg_(cfg) {
  embedder_.emplace(cfg_.emb, std::move(words), std::move(antonyms), std::move(chars), rng);
  enc_stack_ = StackGruParams::init(cfg_.emb.d_w(), cfg_.enc_d_g, cfg_.enc_l_s, rng);
  d_enc_ = enc_stack_->out_dim();
  enc_cls_pool_ = AttnPoolParams::init(cfg_.d_a, d_enc_, rng);
  init_local(/*n_layers=*/1, rng);
}

LadraNet::LadraNet(const LadraNetConfig& cfg, std::int64_t n_layers, std::int64_t d_enc,
                   Rng& rng)
    : cfg_(cfg), d_enc_(d_enc) {
  if (n_layers < 1) throw std::invalid_argument("ladranet: need at least one encoder layer");
  init_local(n_layers, rng);
}

MultiLayerEncoding LadraNet::encode_internal(const PairExample& ex, std::int64_t pad) const {
  if (!embedder_) throw std::logic_error("ladranet: no internal encoder configured");
  if (ex.tokens_a.empty() || ex.tokens_b.empty())
    throw std::invalid_argument("ladranet_forward: empty sentence");

  // Joined sequence built from real tokens only, so pads appended to either
  // sentence never sit inside convolution windows.
  EmbeddedSentence ea = embedder_->embed(ex.tokens_a, ex.pos_a, ex.tokens_b);
  EmbeddedSentence esep = embedder_->embed({kSepToken}, {}, {});
  EmbeddedSentence eb = embedder_->embed(ex.tokens_b, ex.pos_b, ex.tokens_a);

  EmbeddedSentence joined;
  joined.real_len = ea.real_len + 1 + eb.real_len;
  joined.tokens = ex.tokens_a;
  joined.tokens.push_back(kSepToken);
  joined.tokens.insert(joined.tokens.end(), ex.tokens_b.begin(), ex.tokens_b.end());
  const std::int64_t total = joined.real_len + pad;
  joined.mask.assign(static_cast<std::size_t>(total), 0);
  for (std::int64_t i = 0; i < joined.real_len; ++i)
    joined.mask[static_cast<std::size_t>(i)] = 1;
  if (pad > 0) {
    Tensor padrows = Tensor::zeros({pad, embedder_->config().d_w()});
    joined.features = concat({ea.features, esep.features, eb.features, padrows}, 0);
  } else {
    joined.features = concat({ea.features, esep.features, eb.features}, 0);
  }

  StackOutput enc = stack_gru_forward(joined, *enc_stack_);
  MultiLayerEncoding out;
  out.layers = {enc.states};
  out.cls = self_attn_pool(enc, *enc_cls_pool_);
  out.mask = enc.mask;
  out.tokens = joined.tokens;
  out.real_len = joined.real_len;
  return out;
}

LadraNet::Output LadraNet::forward_encoding(const MultiLayerEncoding& enc) const {
  if (static_cast<std::int64_t>(enc.layers.size()) != layer_logits_.dim(0))
    throw std::invalid_argument("ladranet: encoding has " +
                                std::to_string(enc.layers.size()) + " layers, model expects " +
                                std::to_string(layer_logits_.dim(0)));
  if (enc.d_enc() != d_enc_)
    throw std::invalid_argument("ladranet: encoding dim " + std::to_string(enc.d_enc()) +
                                " != model d_enc " + std::to_string(d_enc_));
  Tensor h0 = weighted_layer_sum(enc, layer_logits_);
  std::vector<Tensor> grains = pcnn_forward(h0, pcnn_);
  LocalEncoding local = local_self_attn_pool(enc, h0, grains, pools_);
  DsaReadOut read = dsa_read(local, dsa_);

  // v = mean([h_ab, hbar_1..hbar_T]).
  Tensor acc = local.h_ab;
  for (const auto& h : read.hidden) acc = add(acc, h);
  Tensor v = mul_scalar(acc, 1.0 / static_cast<double>(read.hidden.size() + 1));

  Output out;
  out.probs = mlp_forward(v, mlp_);
  out.trace = std::move(read.trace);
  return out;
}

LadraNet::Output LadraNet::forward(const PairExample& ex, std::int64_t pad) const {
  return forward_encoding(encode_internal(ex, pad));
}

std::vector<std::pair<std::string, Tensor>> LadraNet::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  if (embedder_) embedder_->collect_parameters("embed", out);
  if (enc_stack_) enc_stack_->collect("enc_stack", out);
  if (enc_cls_pool_) enc_cls_pool_->collect("cls_pool", out);
  out.emplace_back("layer_logits", layer_logits_);
  pcnn_.collect("pcnn", out);
  pools_.collect("local_pool", out);
  dsa_.collect("dsa", out);
  mlp_.collect("mlp", out);
  return out;
}

}  // namespace rereadnet
