#include "rereadnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rereadnet/drr.hpp"
#include "rereadnet/embedding.hpp"
#include "rereadnet/encoder.hpp"
#include "rereadnet/heads.hpp"
#include "rereadnet/local.hpp"
#include "rereadnet/train.hpp"

namespace rereadnet {

double grad_check_param(const std::function<Tensor()>& loss_fn, Tensor param, double eps) {
  param.zero_grad();
  backward(loss_fn());
  std::vector<double> analytic(param.grad().begin(), param.grad().end());
  auto data = param.raw_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + eps;
    const double fp = loss_fn().item();
    data[i] = orig - eps;
    const double fm = loss_fn().item();
    data[i] = orig;
    const double cd = (fp - fm) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(cd), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - cd) / denom);
  }
  return worst;
}

namespace {

Tensor rnd(const std::vector<std::int64_t>& shape, Rng& rng, double lo = -0.9,
           double hi = 0.9) {
  return Tensor::uniform(shape, lo, hi, rng);
}

// Uniform magnitudes in [0.2, 0.9] with random sign; keeps relu probes off
// the kink at the 1e-5 step size.
Tensor rnd_off_kink(const std::vector<std::int64_t>& shape, Rng& rng) {
  Tensor t = Tensor::uniform(shape, 0.2, 0.9, rng);
  auto d = t.raw_data();
  for (double& v : d)
    if (rng.next_u64() & 1) v = -v;
  return t;
}

struct CaseBuilder {
  GradCheckReport& report;
  double threshold;

  void direct(const std::string& name,
              const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
              double eps = 1e-5) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = grad_check(f, x, eps);
    e.pass = e.max_rel_err < threshold;
    report.entries.push_back(std::move(e));
  }

  void inplace(const std::string& name, const std::function<Tensor()>& loss,
               Tensor param, double eps = 1e-5) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = grad_check_param(loss, param, eps);
    e.pass = e.max_rel_err < threshold;
    report.entries.push_back(std::move(e));
  }
};

std::vector<std::vector<std::string>> tiny_corpus() {
  return {{"a", "red", "dog"}, {"blue", "cat", "ran", "a"}, {"<sep>"}};
}

DrrNetConfig tiny_drr_config() {
  DrrNetConfig cfg;
  cfg.emb.word_dim = 8;
  cfg.emb.char_dim = 6;
  cfg.emb.char_emb_dim = 4;
  cfg.emb.char_kernel = 3;
  cfg.d_g = 6;
  cfg.d_a = 5;
  cfg.l_s = 2;
  cfg.steps = 2;
  cfg.beta = 8.0;  // sharp enough to exercise the path, soft enough for stable cd
  cfg.mlp_hidden = 7;
  cfg.n_classes = 3;
  return cfg;
}

LadraNetConfig tiny_ladra_config() {
  LadraNetConfig cfg;
  cfg.emb.word_dim = 8;
  cfg.emb.char_dim = 6;
  cfg.emb.char_emb_dim = 4;
  cfg.emb.char_kernel = 3;
  cfg.enc_d_g = 6;
  cfg.enc_l_s = 1;
  cfg.kernels = {2, 3};
  cfg.pcnn_inner = 5;
  cfg.d_a = 5;
  cfg.steps = 2;
  cfg.beta = 8.0;
  cfg.mlp_hidden = 7;
  cfg.n_classes = 3;
  cfg.coverage = true;
  return cfg;
}

PairExample tiny_pair() {
  PairExample ex;
  ex.tokens_a = {"a", "red", "dog"};
  ex.tokens_b = {"blue", "cat"};
  ex.label = "entailment";
  ex.label_index = 0;
  return ex;
}

}  // namespace

GradCheckReport run_gradcheck_all(double threshold) {
  GradCheckReport report;
  report.threshold = threshold;
  CaseBuilder cb{report, threshold};
  Rng rng(20240901);

  // --- primitive ops ---------------------------------------------------------
  {
    Tensor b = rnd({4, 3}, rng);
    cb.direct("matmul", [&](const Tensor& a) { return sum_all(tanh_op(matmul(a, b))); },
              rnd({3, 4}, rng));
  }
  cb.direct("transpose",
            [](const Tensor& a) { return sum_all(mul(transpose(a), transpose(a))); },
            rnd({3, 4}, rng));
  cb.direct("reshape",
            [](const Tensor& a) { return sum_all(mul(reshape(a, {6}), reshape(a, {6}))); },
            rnd({2, 3}, rng));
  {
    Tensor b = rnd({3, 4}, rng);
    cb.direct("add", [&](const Tensor& a) { return sum_all(mul(add(a, b), a)); },
              rnd({3, 4}, rng));
    cb.direct("sub", [&](const Tensor& a) { return sum_all(mul(sub(b, a), a)); },
              rnd({3, 4}, rng));
    cb.direct("mul", [&](const Tensor& a) { return sum_all(tanh_op(mul(a, b))); },
              rnd({3, 4}, rng));
  }
  {
    Tensor a = rnd({3, 4}, rng);
    cb.direct("add_broadcast_col",
              [&](const Tensor& c) { return sum_all(tanh_op(add(a, c))); }, rnd({3, 1}, rng));
    cb.direct("mul_broadcast_col",
              [&](const Tensor& c) { return sum_all(tanh_op(mul(a, c))); }, rnd({3, 1}, rng));
    cb.direct("add_broadcast_scalar",
              [&](const Tensor& c) { return sum_all(tanh_op(add(a, c))); }, rnd({1}, rng));
  }
  cb.direct("add_scalar", [](const Tensor& a) { return sum_all(mul(add_scalar(a, 0.7), a)); },
            rnd({5}, rng));
  cb.direct("mul_scalar", [](const Tensor& a) { return sum_all(mul(mul_scalar(a, -1.3), a)); },
            rnd({5}, rng));
  cb.direct("scalar_minus",
            [](const Tensor& a) { return sum_all(mul(scalar_minus(2.0, a), a)); },
            rnd({5}, rng));
  cb.direct("reciprocal",
            [](const Tensor& a) { return sum_all(mul(reciprocal(a), a)); },
            rnd({5}, rng, 0.4, 1.4));
  cb.direct("tanh", [](const Tensor& a) { return sum_all(mul(tanh_op(a), a)); },
            rnd({2, 3}, rng));
  cb.direct("sigmoid", [](const Tensor& a) { return sum_all(mul(sigmoid(a), a)); },
            rnd({2, 3}, rng));
  cb.direct("relu", [](const Tensor& a) { return sum_all(mul(relu(a), a)); },
            rnd_off_kink({2, 3}, rng));
  {
    Tensor w = rnd({6}, rng);
    cb.direct("softmax",
              [&](const Tensor& a) { return sum_all(mul(softmax(a, {}), w)); },
              rnd({6}, rng));
    std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1, 1};
    cb.direct("softmax_sharp",
              [&](const Tensor& a) { return sum_all(mul(softmax_sharp(a, 5.0, mask), w)); },
              rnd({6}, rng));
  }
  {
    Tensor b = rnd({2, 3}, rng);
    cb.direct("concat",
              [&](const Tensor& a) {
                Tensor c = concat({a, b}, 1);
                return sum_all(mul(c, c));
              },
              rnd({2, 4}, rng));
  }
  cb.direct("slice",
            [](const Tensor& a) {
              Tensor s = slice(a, 0, 1, 2);
              return sum_all(mul(s, s));
            },
            rnd({4, 3}, rng));
  cb.direct("take_rows",
            [](const Tensor& a) {
              Tensor t = take_rows(a, {2, 0, 2, 1});
              return sum_all(mul(t, t));
            },
            rnd({3, 4}, rng));
  {
    Tensor x = rnd({5, 2}, rng);
    Tensor k3 = rnd({3, 2, 3}, rng);
    Tensor k2 = rnd({2, 2, 3}, rng);
    Tensor bias = rnd({3}, rng);
    Tensor w = rnd({5, 3}, rng);
    cb.direct("conv1d_same_odd",
              [&](const Tensor& kk) { return sum_all(mul(conv1d_same(x, kk, bias), w)); }, k3);
    cb.direct("conv1d_same_even",
              [&](const Tensor& kk) { return sum_all(mul(conv1d_same(x, kk, bias), w)); }, k2);
    cb.direct("conv1d_same_input",
              [&](const Tensor& xx) { return sum_all(mul(conv1d_same(xx, k3, bias), w)); }, x);
  }
  {
    std::vector<std::uint8_t> mask = {1, 0, 1, 1};
    Tensor w = rnd({3}, rng);
    cb.direct("pool_max",
              [&](const Tensor& a) { return sum_all(mul(pool_max(a, mask), w)); },
              rnd({4, 3}, rng));
    cb.direct("pool_avg",
              [&](const Tensor& a) { return sum_all(mul(pool_avg(a, mask), w)); },
              rnd({4, 3}, rng));
  }
  cb.direct("sum_all", [](const Tensor& a) { return sum_all(tanh_op(a)); }, rnd({3, 3}, rng));
  cb.direct("log_clamped", [](const Tensor& a) { return sum_all(log_clamped(a)); },
            rnd({5}, rng, 0.3, 1.2));
  cb.direct("clamp01", [](const Tensor& a) { return sum_all(mul(clamp01(a), a)); },
            rnd({5}, rng, 0.15, 0.85));

  // --- architecture blocks -----------------------------------------------------
  {
    Rng prng(7);
    GruParams gru = GruParams::init(4, 3, prng);
    Tensor x = rnd({4}, rng);
    Tensor h = rnd({3}, rng, -0.5, 0.5);
    Tensor w = rnd({3}, rng);
    cb.direct("gru_cell_input",
              [&](const Tensor& xx) { return sum_all(mul(gru_cell(xx, h, gru), w)); }, x);
    cb.direct("gru_cell_state",
              [&](const Tensor& hh) { return sum_all(mul(gru_cell(x, hh, gru), w)); }, h);
    cb.inplace("gru_cell_params",
               [&]() { return sum_all(mul(gru_cell(x, h, gru), w)); }, gru.Wh);
  }
  {
    Rng prng(11);
    const std::int64_t d = 5;
    HighwayParams hw;
    auto mk = [&](HighwayParams::Layer& l) {
      l.Wt = Tensor::glorot_uniform({d, d}, prng);
      l.bt = Tensor::zeros({d, 1}, true);
      l.Wg = Tensor::glorot_uniform({d, d}, prng);
      l.bg = Tensor::zeros({d, 1}, true);
    };
    mk(hw.layer1);
    mk(hw.layer2);
    Tensor x = rnd_off_kink({3, d}, rng);
    Tensor w = rnd({3, d}, rng);
    cb.direct("highway2",
              [&](const Tensor& xx) { return sum_all(mul(highway2(xx, hw), w)); }, x);
  }
  {
    Rng prng(13);
    AttnPoolParams pool = AttnPoolParams::init(4, 6, prng);
    Tensor states = rnd({5, 6}, rng);
    std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0};
    Tensor w = rnd({6}, rng);
    cb.direct("self_attn_pool",
              [&](const Tensor& s) { return sum_all(mul(self_attn_pool(s, mask, pool), w)); },
              states);
  }
  {
    Rng prng(17);
    DrrAttnParams attn = DrrAttnParams::init(4, 6, 3, prng);
    StackOutput h;
    h.states = rnd({4, 6}, rng);
    h.mask = {1, 1, 1, 1};
    h.tokens = {"w0", "w1", "w2", "w3"};
    h.real_len = 4;
    Tensor hp = rnd({3}, rng, -0.5, 0.5);
    Tensor guide = rnd({6}, rng, -0.5, 0.5);
    Tensor w = rnd({6}, rng);
    cb.inplace("drr_select",
               [&]() {
                 return sum_all(mul(drr_select(h, hp, guide, attn, 6.0).picked, w));
               },
               attn.Wd);
    DrrReaderParams reader = DrrReaderParams::init(4, 6, 3, 2, 6.0, prng);
    Tensor self_g = rnd({6}, rng, -0.5, 0.5);
    Tensor w3 = rnd({3}, rng);
    cb.inplace("drr_read",
               [&]() {
                 return sum_all(mul(drr_read(h, self_g, guide, reader).v, w3));
               },
               reader.attn.Md);
  }
  {
    Rng prng(19);
    MultiLayerEncoding enc;
    enc.layers = {rnd({4, 5}, rng), rnd({4, 5}, rng)};
    enc.cls = rnd({5}, rng);
    enc.mask = {1, 1, 1, 1};
    enc.real_len = 4;
    Tensor w = rnd({4, 5}, rng);
    Tensor logits = Tensor::values({2}, {0.3, -0.2}, true);
    cb.inplace("weighted_layer_sum",
               [&]() { return sum_all(mul(weighted_layer_sum(enc, logits), w)); }, logits);

    PcnnParams pcnn = PcnnParams::init({2, 3}, 5, 4, prng);
    Tensor h0 = rnd({4, 5}, rng);
    cb.inplace("pcnn_forward",
               [&]() {
                 auto outs = pcnn_forward(h0, pcnn);
                 return add(sum_all(mul(outs[0], w)), sum_all(mul(outs[1], w)));
               },
               pcnn.units[1].k1);

    LocalPoolParams pools = LocalPoolParams::init(2, 4, 5, prng);
    Tensor w5 = rnd({5}, rng);
    cb.inplace("local_self_attn_pool",
               [&]() {
                 auto grains = pcnn_forward(h0, pcnn);
                 auto local = local_self_attn_pool(enc, h0, grains, pools);
                 return sum_all(mul(local.h_ab, w5));
               },
               pools.per_kernel[0].W);

    DsaParams dsa = DsaParams::init(4, 5, 2, 6.0, prng);
    Tensor hp = rnd({5}, rng, -0.5, 0.5);
    Tensor hab = rnd({5}, rng, -0.5, 0.5);
    Tensor cov = Tensor::uniform({4}, 0.35, 0.95, rng);
    Tensor w4 = rnd({4}, rng);
    cb.inplace("dsa_select",
               [&]() {
                 auto sel = dsa_select(enc.layers[0], enc.mask, hp, hab, {}, cov, dsa);
                 return add(sum_all(mul(sel.picked, w5)),
                            sum_all(mul(sel.coverage_next, w4)));
               },
               dsa.Wrd);
    cb.inplace("dsa_fuse_step",
               [&]() {
                 std::vector<Tensor> picks = {hp, hab};
                 return sum_all(mul(dsa_fuse_step(picks, dsa), w5));
               },
               dsa.Wf);
    cb.inplace("dsa_read",
               [&]() {
                 auto grains = pcnn_forward(h0, pcnn);
                 LocalEncoding local = local_self_attn_pool(enc, h0, grains, pools);
                 auto read = dsa_read(local, dsa);
                 Tensor acc = read.hidden[0];
                 for (std::size_t i = 1; i < read.hidden.size(); ++i)
                   acc = add(acc, read.hidden[i]);
                 return sum_all(mul(acc, w5));
               },
               dsa.Urd);
  }
  {
    Tensor y = rnd({4}, rng);
    Tensor w = rnd({16}, rng);
    cb.direct("heuristic_match",
              [&](const Tensor& x) { return sum_all(mul(heuristic_match(x, y), w)); },
              rnd({4}, rng));
  }
  {
    Rng prng(23);
    MlpParams mlp = MlpParams::init(5, {4, 4}, 3, prng);
    Tensor x = rnd_off_kink({5}, rng);
    cb.inplace("mlp_forward", [&]() { return cross_entropy(mlp_forward(x, mlp), 1); },
               mlp.weights[0]);
    FusionGateParams gate = FusionGateParams::init(3, prng);
    MlpParams mlp3 = MlpParams::init(3, {4}, 3, prng);
    Tensor ph = softmax(rnd({3}, rng), {}).clone();
    Tensor pv = softmax(rnd({3}, rng), {}).clone();
    cb.inplace("fusion_gate",
               [&]() { return cross_entropy(fusion_gate(ph, pv, gate, mlp3), 2); }, gate.wh);
    cb.direct("cross_entropy",
              [&](const Tensor& logits) {
                return cross_entropy(softmax(logits, {}), 1);
              },
              rnd({4}, rng));
  }

  // --- full models -------------------------------------------------------------
  {
    Rng prng(27);
    Rng vrng(29);
    GloveTable empty_glove;
    WordTable words = build_vocab(tiny_corpus(), empty_glove, 8, vrng);
    DrrNetModel model(tiny_drr_config(), words, std::nullopt, build_char_vocab(tiny_corpus()),
                      prng);
    PairExample ex = tiny_pair();
    auto loss = [&]() { return cross_entropy(model.forward_probs(ex), ex.label_index); };
    auto params = model.parameters();
    auto find = [&](const std::string& name) -> Tensor {
      for (auto& [n, t] : params)
        if (n == name) return t;
      throw std::logic_error("gradcheck: no parameter " + name);
    };
    cb.inplace("drrnet_full/stack", loss, find("stack.l0.Wz"));
    cb.inplace("drrnet_full/reader", loss, find("reader.attn.Wd"));
    cb.inplace("drrnet_full/char_cnn", loss, find("embed.char_kernel"));
    cb.inplace("drrnet_full/gate", loss, find("gate.wh"));
  }
  {
    Rng prng(31);
    Rng vrng(37);
    GloveTable empty_glove;
    WordTable words = build_vocab(tiny_corpus(), empty_glove, 8, vrng);
    LadraNetModel model(tiny_ladra_config(), words, std::nullopt,
                        build_char_vocab(tiny_corpus()), prng);
    PairExample ex = tiny_pair();
    auto loss = [&]() { return cross_entropy(model.forward_probs(ex), ex.label_index); };
    auto params = model.parameters();
    auto find = [&](const std::string& name) -> Tensor {
      for (auto& [n, t] : params)
        if (n == name) return t;
      throw std::logic_error("gradcheck: no parameter " + name);
    };
    cb.inplace("ladranet_full/enc_stack", loss, find("enc_stack.l0.Wz"));
    cb.inplace("ladranet_full/pcnn", loss, find("pcnn.k2.k1"));
    cb.inplace("ladranet_full/dsa", loss, find("dsa.Wrd"));
    cb.inplace("ladranet_full/layer_weights", loss, find("layer_logits"));
  }

  report.all_pass = std::all_of(report.entries.begin(), report.entries.end(),
                                [](const GradCheckEntry& e) { return e.pass; });
  return report;
}

}  // namespace rereadnet
