#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rereadnet/tensor.hpp"

namespace rereadnet {

// GloVe-format text embeddings: one token followed by whitespace-separated
// floats per line. Malformed lines are skipped and counted.
struct GloveTable {
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::int64_t dim = 0;
  std::int64_t skipped = 0;
};

GloveTable load_glove(const std::string& path);

// Token vocabulary. Index 0 is PAD (zero row, frozen), index 1 is OOV.
struct Vocab {
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kOov = 1;

  std::unordered_map<std::string, std::int64_t> index;
  std::vector<std::string> tokens;  // index -> token, including specials

  std::int64_t lookup(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? kOov : it->second;
  }
  std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }
};

// Word table with pretrained rows frozen (the full table takes no gradients;
// rows found in GloVe are copied bit-exactly, the rest are random and fixed).
struct WordTable {
  Vocab vocab;
  Tensor table;  // [V, word_dim], requires_grad = false
  std::vector<std::uint8_t> pretrained;
};

WordTable build_vocab(const std::vector<std::vector<std::string>>& corpus,
                      const GloveTable& glove, std::int64_t word_dim, Rng& rng);

// Optional antonym lexicon: TSV lines "word<TAB>word", symmetric.
struct AntonymLexicon {
  std::unordered_map<std::string, std::unordered_set<std::string>> pairs;
  bool contains_antonym_of(const std::string& tok,
                           const std::vector<std::string>& other) const;
};

AntonymLexicon load_antonyms(const std::string& path);

// Fixed coarse tag set; one-hot block of syntactic features.
const std::vector<std::string>& pos_tag_set();

struct EmbeddingConfig {
  std::int64_t word_dim = 300;
  std::int64_t char_dim = 100;      // char CNN output channels
  std::int64_t char_emb_dim = 16;   // learned per-character embedding
  std::int64_t char_kernel = 3;
  std::int64_t syn_dim = 12;        // 10-slot POS one-hot + match bit + antonym bit

  std::int64_t d_w() const { return word_dim + char_dim + syn_dim; }
};

// Characters seen when building; unseen characters map to index 0.
struct CharVocab {
  static constexpr std::int64_t kOov = 0;
  std::unordered_map<char, std::int64_t> index;
  std::vector<char> chars;

  std::int64_t lookup(char c) const {
    auto it = index.find(c);
    return it == index.end() ? kOov : it->second;
  }
  std::int64_t size() const { return static_cast<std::int64_t>(chars.size()) + 1; }

  static CharVocab from_chars(const std::vector<char>& ordered);
};

CharVocab build_char_vocab(const std::vector<std::vector<std::string>>& corpus);

struct CharCnnParams {
  CharVocab chars;
  Tensor table;   // [n_chars, char_emb_dim], trainable
  Tensor kernel;  // [char_kernel, char_emb_dim, char_dim]
  Tensor bias;    // [char_dim]
};

struct HighwayParams {
  struct Layer {
    Tensor Wt, bt;  // transform, [d,d] and [d,1]
    Tensor Wg, bg;  // gate
  };
  Layer layer1, layer2;
};

// Per-token feature rows plus the pad mask. Pad rows are exactly zero.
struct EmbeddedSentence {
  Tensor features;  // [len, d_w]
  std::vector<std::uint8_t> mask;
  std::vector<std::string> tokens;  // real tokens only
  std::int64_t real_len = 0;
};

Tensor char_cnn_features(const std::string& token, const CharCnnParams& p);

Tensor syntactic_features(const std::string& token, const std::string& pos_tag,
                          const std::vector<std::string>& other_tokens,
                          const AntonymLexicon* antonyms, std::int64_t syn_dim,
                          std::set<std::string>* warned_tags);

// Two highway layers over row-major token features: per layer
// y = g (.) relu(Wx+b) + (1-g) (.) x with g = sigmoid(Wg x + bg).
Tensor highway2(const Tensor& x, const HighwayParams& p);

class Embedder {
 public:
  Embedder(EmbeddingConfig cfg, WordTable words, std::optional<AntonymLexicon> antonyms,
           CharVocab chars, Rng& rng);

  // Features for one sentence given the partner sentence (exact-match and
  // antonym bits compare against other_tokens). pad_to extends with zero
  // rows and false mask entries.
  EmbeddedSentence embed(const std::vector<std::string>& tokens,
                         const std::vector<std::string>& pos_tags,
                         const std::vector<std::string>& other_tokens,
                         std::int64_t pad_to = 0) const;

  const EmbeddingConfig& config() const { return cfg_; }
  const WordTable& words() const { return words_; }
  const CharCnnParams& char_cnn() const { return char_cnn_; }
  HighwayParams& highway() { return highway_; }

  void collect_parameters(const std::string& prefix,
                          std::vector<std::pair<std::string, Tensor>>& out);

 private:
  EmbeddingConfig cfg_;
  WordTable words_;
  CharCnnParams char_cnn_;
  HighwayParams highway_;
  std::optional<AntonymLexicon> antonyms_;
  mutable std::set<std::string> warned_tags_;
};

}  // namespace rereadnet
