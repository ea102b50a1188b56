#include "rereadnet/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace rereadnet {

GloveTable load_glove(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_glove: cannot read " + path);
  GloveTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) {
      ++table.skipped;
      continue;
    }
    std::vector<double> vec;
    double v;
    bool bad = false;
    while (ls >> v) vec.push_back(v);
    if (!ls.eof()) bad = true;  // trailing non-numeric garbage
    if (vec.empty()) bad = true;
    if (table.dim == 0 && !bad) table.dim = static_cast<std::int64_t>(vec.size());
    if (bad || static_cast<std::int64_t>(vec.size()) != table.dim) {
      ++table.skipped;
      continue;
    }
    table.vectors[tok] = std::move(vec);
  }
  if (table.vectors.empty())
    throw std::runtime_error("load_glove: no usable lines in " + path);
  return table;
}

WordTable build_vocab(const std::vector<std::vector<std::string>>& corpus,
                      const GloveTable& glove, std::int64_t word_dim, Rng& rng) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (glove.dim > 0 && glove.dim != word_dim)
    throw std::invalid_argument("build_vocab: word_dim " + std::to_string(word_dim) +
                                " != glove dim " + std::to_string(glove.dim));
  WordTable wt;
  wt.vocab.tokens = {"<pad>", "<oov>"};
  wt.vocab.index["<pad>"] = Vocab::kPad;
  wt.vocab.index["<oov>"] = Vocab::kOov;
  for (const auto& sent : corpus)
    for (const auto& tok : sent)
      if (!wt.vocab.index.contains(tok)) {
        wt.vocab.index[tok] = wt.vocab.size();
        wt.vocab.tokens.push_back(tok);
      }

  const std::int64_t v = wt.vocab.size();
  std::vector<double> data(static_cast<std::size_t>(v * word_dim), 0.0);
  wt.pretrained.assign(static_cast<std::size_t>(v), 0);
  const double bound = std::sqrt(6.0 / (1.0 + static_cast<double>(word_dim)));
  for (std::int64_t i = 1; i < v; ++i) {  // row 0 stays zero for PAD
    auto it = glove.vectors.find(wt.vocab.tokens[static_cast<std::size_t>(i)]);
    double* row = data.data() + i * word_dim;
    if (it != glove.vectors.end()) {
      std::copy(it->second.begin(), it->second.end(), row);
      wt.pretrained[static_cast<std::size_t>(i)] = 1;
    } else {
      for (std::int64_t c = 0; c < word_dim; ++c) row[c] = rng.uniform(-bound, bound);
    }
  }
  wt.table = Tensor::values({v, word_dim}, std::move(data), /*requires_grad=*/false);
  return wt;
}

bool AntonymLexicon::contains_antonym_of(const std::string& tok,
                                         const std::vector<std::string>& other) const {
  auto it = pairs.find(tok);
  if (it == pairs.end()) return false;
  for (const auto& o : other)
    if (it->second.contains(o)) return true;
  return false;
}

AntonymLexicon load_antonyms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_antonyms: cannot read " + path);
  AntonymLexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    std::string a = line.substr(0, tab), b = line.substr(tab + 1);
    if (a.empty() || b.empty()) continue;
    lex.pairs[a].insert(b);
    lex.pairs[b].insert(a);
  }
  return lex;
}

const std::vector<std::string>& pos_tag_set() {
  static const std::vector<std::string> tags = {"NN", "VB", "JJ", "RB", "PRP",
                                                "DT", "IN", "CD", "CC", "UH"};
  return tags;
}

Tensor char_cnn_features(const std::string& token, const CharCnnParams& p) {
  if (token.empty()) throw std::invalid_argument("char_cnn_features: empty token");
  std::vector<std::int64_t> ids;
  ids.reserve(token.size());
  for (char c : token) ids.push_back(p.chars.lookup(c));
  Tensor embs = take_rows(p.table, ids);              // [n, char_emb_dim]
  Tensor conv = conv1d_same(embs, p.kernel, p.bias);  // [n, char_dim]
  return pool_max(conv, {});
}

Tensor syntactic_features(const std::string& token, const std::string& pos_tag,
                          const std::vector<std::string>& other_tokens,
                          const AntonymLexicon* antonyms, std::int64_t syn_dim,
                          std::set<std::string>* warned_tags) {
  std::vector<double> feat(static_cast<std::size_t>(syn_dim), 0.0);
  const auto& tags = pos_tag_set();
  if (!pos_tag.empty()) {
    auto it = std::find(tags.begin(), tags.end(), pos_tag);
    if (it != tags.end()) {
      feat[static_cast<std::size_t>(it - tags.begin())] = 1.0;
    } else if (warned_tags == nullptr || warned_tags->insert(pos_tag).second) {
      std::cerr << "[embedding] unknown POS tag '" << pos_tag << "', POS block zeroed\n";
    }
  }
  const bool match =
      std::find(other_tokens.begin(), other_tokens.end(), token) != other_tokens.end();
  feat[static_cast<std::size_t>(syn_dim - 2)] = match ? 1.0 : 0.0;
  const bool anto = antonyms != nullptr && antonyms->contains_antonym_of(token, other_tokens);
  feat[static_cast<std::size_t>(syn_dim - 1)] = anto ? 1.0 : 0.0;
  return Tensor::values({syn_dim}, std::move(feat));
}

namespace {

Tensor highway_layer(const Tensor& xt, const HighwayParams::Layer& l) {
  // xt is [d, len]; biases broadcast over columns.
  Tensor t = relu(add(matmul(l.Wt, xt), l.bt));
  Tensor g = sigmoid(add(matmul(l.Wg, xt), l.bg));
  return add(mul(g, t), mul(scalar_minus(1.0, g), xt));
}

}  // namespace

Tensor highway2(const Tensor& x, const HighwayParams& p) {
  if (x.rank() != 2) throw std::invalid_argument("highway2 expects [len,d]");
  const std::int64_t d = x.dim(1);
  if (p.layer1.Wt.dim(0) != d || p.layer1.Wt.dim(1) != d)
    throw std::invalid_argument("highway2: transform must be square [d,d]");
  Tensor xt = transpose(x);
  xt = highway_layer(xt, p.layer1);
  xt = highway_layer(xt, p.layer2);
  return transpose(xt);
}

CharVocab CharVocab::from_chars(const std::vector<char>& ordered) {
  CharVocab cv;
  for (char c : ordered)
    if (!cv.index.contains(c)) {
      cv.index[c] = cv.size();  // 0 reserved for OOV
      cv.chars.push_back(c);
    }
  return cv;
}

CharVocab build_char_vocab(const std::vector<std::vector<std::string>>& corpus) {
  std::vector<char> ordered;
  CharVocab seen;
  for (const auto& sent : corpus)
    for (const auto& tok : sent)
      for (char c : tok)
        if (!seen.index.contains(c)) {
          seen.index[c] = seen.size();
          ordered.push_back(c);
        }
  return CharVocab::from_chars(ordered);
}

Embedder::Embedder(EmbeddingConfig cfg, WordTable words,
                   std::optional<AntonymLexicon> antonyms, CharVocab chars, Rng& rng)
    : cfg_(cfg), words_(std::move(words)), antonyms_(std::move(antonyms)) {
  char_cnn_.chars = std::move(chars);
  char_cnn_.table = Tensor::glorot_uniform({char_cnn_.chars.size(), cfg_.char_emb_dim}, rng);
  char_cnn_.kernel =
      Tensor::glorot_uniform({cfg_.char_kernel, cfg_.char_emb_dim, cfg_.char_dim}, rng);
  char_cnn_.bias = Tensor::zeros({cfg_.char_dim}, true);

  const std::int64_t d = cfg_.d_w();
  auto make_layer = [&](HighwayParams::Layer& l) {
    l.Wt = Tensor::glorot_uniform({d, d}, rng);
    l.bt = Tensor::zeros({d, 1}, true);
    l.Wg = Tensor::glorot_uniform({d, d}, rng);
    // Gate bias at -1 favors the carry path early in training.
    l.bg = Tensor::values({d, 1}, std::vector<double>(static_cast<std::size_t>(d), -1.0), true);
  };
  make_layer(highway_.layer1);
  make_layer(highway_.layer2);
}

EmbeddedSentence Embedder::embed(const std::vector<std::string>& tokens,
                                 const std::vector<std::string>& pos_tags,
                                 const std::vector<std::string>& other_tokens,
                                 std::int64_t pad_to) const {
  if (tokens.empty()) throw std::invalid_argument("embed: empty sentence");
  if (!pos_tags.empty() && pos_tags.size() != tokens.size())
    throw std::invalid_argument("embed: POS tags do not align with tokens");
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());

  std::vector<std::int64_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(words_.vocab.lookup(t));
  Tensor word = take_rows(words_.table, ids);  // [n, word_dim]

  std::vector<Tensor> char_rows, syn_rows;
  char_rows.reserve(tokens.size());
  syn_rows.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    char_rows.push_back(as_row(char_cnn_features(tokens[i], char_cnn_)));
    const std::string& tag = pos_tags.empty() ? std::string() : pos_tags[i];
    syn_rows.push_back(as_row(syntactic_features(tokens[i], tag, other_tokens,
                                                 antonyms_ ? &*antonyms_ : nullptr,
                                                 cfg_.syn_dim, &warned_tags_)));
  }
  Tensor chars = concat(std::span<const Tensor>(char_rows.data(), char_rows.size()), 0);
  Tensor syn = concat(std::span<const Tensor>(syn_rows.data(), syn_rows.size()), 0);

  Tensor feats = highway2(concat({word, chars, syn}, 1), highway_);

  EmbeddedSentence out;
  out.real_len = n;
  out.tokens = tokens;
  out.mask.assign(static_cast<std::size_t>(std::max(pad_to, n)), 0);
  for (std::int64_t i = 0; i < n; ++i) out.mask[static_cast<std::size_t>(i)] = 1;
  if (pad_to > n) {
    Tensor pad = Tensor::zeros({pad_to - n, cfg_.d_w()});
    out.features = concat({feats, pad}, 0);
  } else {
    out.features = feats;
  }
  return out;
}

void Embedder::collect_parameters(const std::string& prefix,
                                  std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".word_table", words_.table);  // frozen, saved for round-trips
  out.emplace_back(prefix + ".char_table", char_cnn_.table);
  out.emplace_back(prefix + ".char_kernel", char_cnn_.kernel);
  out.emplace_back(prefix + ".char_bias", char_cnn_.bias);
  auto layer = [&](const std::string& name, HighwayParams::Layer& l) {
    out.emplace_back(prefix + ".highway." + name + ".Wt", l.Wt);
    out.emplace_back(prefix + ".highway." + name + ".bt", l.bt);
    out.emplace_back(prefix + ".highway." + name + ".Wg", l.Wg);
    out.emplace_back(prefix + ".highway." + name + ".bg", l.bg);
  };
  layer("l1", highway_.layer1);
  layer("l2", highway_.layer2);
}

}  // namespace rereadnet
