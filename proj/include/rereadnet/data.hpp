#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rereadnet/embedding.hpp"
#include "rereadnet/local.hpp"
#include "rereadnet/tensor.hpp"

namespace rereadnet {

enum class Task { Nli, Pi };

// Label order is fixed for checkpoint compatibility.
const std::vector<std::string>& task_labels(Task task);
Task task_from_string(const std::string& s);
const char* task_to_string(Task task);

struct PairExample {
  std::uint64_t id = 0;  // position in the parsed dataset; keys encoding files
  std::vector<std::string> tokens_a, tokens_b;
  std::vector<std::string> pos_a, pos_b;  // empty when the file has no tags
  std::string label;
  std::int64_t label_index = -1;
};

struct ParseResult {
  std::vector<PairExample> examples;
  std::int64_t dropped_unlabeled = 0;  // gold label "-"
  std::int64_t truncated = 0;          // sentences cut at the length cap
};

inline constexpr std::int64_t kMaxSentenceLen = 64;

// JSONL: {"sentence1": ..., "sentence2": ..., "gold_label": ...}, optional
// "pos1"/"pos2" arrays. TSV: label \t sentence_a \t sentence_b, optionally
// \t pos_a \t pos_b. Tokenization is lowercased whitespace splitting.
// Malformed lines raise an error naming the line number.
ParseResult parse_dataset(const std::string& path, const std::string& format, Task task);

struct Batch {
  std::vector<std::size_t> example_ids;
  std::vector<std::vector<std::int64_t>> ids_a, ids_b;  // padded with index 0
  std::vector<std::vector<std::uint8_t>> mask_a, mask_b;
  std::vector<std::int64_t> labels;
  std::vector<std::int64_t> len_a, len_b;
  std::int64_t max_a = 0, max_b = 0;
};

// Deterministic shuffle from the caller's rng, then fixed-size batches padded
// to each batch's max length.
std::vector<Batch> batch_pad(const std::vector<PairExample>& examples,
                             std::int64_t batch_size, const Vocab& vocab, Rng& rng);

// --- checkpoints -------------------------------------------------------------

inline constexpr std::uint64_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t version = kCheckpointVersion;
  std::uint64_t seed = 0;
  std::string config_json;  // resolved run configuration, vocab included
  std::vector<std::pair<std::string, Tensor>> tensors;
};

// Little-endian binary layout; payload guarded by an FNV-1a checksum.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies stored tensor values into the model's tensors; every name must
// resolve and shapes must match.
void restore_parameters(std::vector<std::pair<std::string, Tensor>>& params,
                        const Checkpoint& ckpt);

// --- precomputed encodings ----------------------------------------------------

inline constexpr std::uint64_t kEncodingsVersion = 1;

// Records of {pair_id, L, l_ab, d_enc} followed by L*l_ab*d_enc layer values
// and a d_enc cls vector, all little-endian 64-bit floats.
void save_encodings(const std::string& path,
                    const std::vector<std::pair<std::uint64_t, MultiLayerEncoding>>& encs);
std::map<std::uint64_t, MultiLayerEncoding> load_encodings(const std::string& path);

}  // namespace rereadnet
