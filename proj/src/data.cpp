#include "rereadnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "serialized formats are pinned little-endian");

namespace rereadnet {

namespace {

using nlohmann::json;

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream ss(lower(text));
  std::vector<std::string> toks;
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

[[noreturn]] void line_error(const std::string& path, std::int64_t line, const std::string& msg) {
  throw std::runtime_error("parse_dataset: " + path + ":" + std::to_string(line) + ": " + msg);
}

std::int64_t find_label(Task task, const std::string& raw) {
  const auto& labels = task_labels(task);
  const std::string needle = lower(raw);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (lower(labels[i]) == needle) return static_cast<std::int64_t>(i);
  return -1;
}

void truncate_sentence(std::vector<std::string>& toks, std::vector<std::string>& pos,
                       std::int64_t& truncated) {
  if (static_cast<std::int64_t>(toks.size()) > kMaxSentenceLen) {
    toks.resize(static_cast<std::size_t>(kMaxSentenceLen));
    ++truncated;
  }
  if (!pos.empty() && pos.size() > toks.size()) pos.resize(toks.size());
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

const std::vector<std::string>& task_labels(Task task) {
  static const std::vector<std::string> nli = {"entailment", "contradiction", "neutral"};
  static const std::vector<std::string> pi = {"No", "Yes"};
  return task == Task::Nli ? nli : pi;
}

Task task_from_string(const std::string& s) {
  if (s == "nli") return Task::Nli;
  if (s == "pi") return Task::Pi;
  throw std::invalid_argument("unknown task '" + s + "' (expected nli or pi)");
}

const char* task_to_string(Task task) { return task == Task::Nli ? "nli" : "pi"; }

ParseResult parse_dataset(const std::string& path, const std::string& format, Task task) {
  if (format != "jsonl" && format != "tsv")
    throw std::invalid_argument("parse_dataset: format must be jsonl or tsv, got " + format);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_dataset: cannot read " + path);

  ParseResult result;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    PairExample ex;
    if (format == "jsonl") {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::exception& e) {
        line_error(path, lineno, std::string("invalid JSON: ") + e.what());
      }
      for (const char* key : {"sentence1", "sentence2", "gold_label"})
        if (!obj.contains(key)) line_error(path, lineno, std::string("missing key '") + key + "'");
      ex.label = obj["gold_label"].get<std::string>();
      ex.tokens_a = tokenize(obj["sentence1"].get<std::string>());
      ex.tokens_b = tokenize(obj["sentence2"].get<std::string>());
      if (obj.contains("pos1")) ex.pos_a = obj["pos1"].get<std::vector<std::string>>();
      if (obj.contains("pos2")) ex.pos_b = obj["pos2"].get<std::vector<std::string>>();
    } else {
      const auto fields = split_tabs(line);
      if (fields.size() != 3 && fields.size() != 5)
        line_error(path, lineno,
                   "expected 3 or 5 tab-separated columns, got " + std::to_string(fields.size()));
      ex.label = fields[0];
      ex.tokens_a = tokenize(fields[1]);
      ex.tokens_b = tokenize(fields[2]);
      if (fields.size() == 5) {
        std::istringstream pa(fields[3]), pb(fields[4]);
        std::string t;
        while (pa >> t) ex.pos_a.push_back(t);
        while (pb >> t) ex.pos_b.push_back(t);
      }
    }

    if (ex.label == "-") {
      ++result.dropped_unlabeled;
      continue;
    }
    ex.label_index = find_label(task, ex.label);
    if (ex.label_index < 0)
      line_error(path, lineno, "label '" + ex.label + "' not in the " +
                                   std::string(task_to_string(task)) + " label set");
    ex.label = task_labels(task)[static_cast<std::size_t>(ex.label_index)];
    if (ex.tokens_a.empty() || ex.tokens_b.empty())
      line_error(path, lineno, "empty sentence after tokenization");
    if (!ex.pos_a.empty() && ex.pos_a.size() != ex.tokens_a.size())
      line_error(path, lineno, "pos tags do not align with sentence1 tokens");
    if (!ex.pos_b.empty() && ex.pos_b.size() != ex.tokens_b.size())
      line_error(path, lineno, "pos tags do not align with sentence2 tokens");
    truncate_sentence(ex.tokens_a, ex.pos_a, result.truncated);
    truncate_sentence(ex.tokens_b, ex.pos_b, result.truncated);
    ex.id = result.examples.size();
    result.examples.push_back(std::move(ex));
  }
  if (result.truncated > 0)
    std::fprintf(stderr, "[data] %lld sentence(s) truncated to %lld tokens\n",
                 static_cast<long long>(result.truncated),
                 static_cast<long long>(kMaxSentenceLen));
  if (result.examples.empty())
    throw std::runtime_error("parse_dataset: no usable examples in " + path);
  return result;
}

std::vector<Batch> batch_pad(const std::vector<PairExample>& examples,
                             std::int64_t batch_size, const Vocab& vocab, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_pad: batch_size must be >= 1");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    Batch b;
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = examples[order[i]];
      b.example_ids.push_back(order[i]);
      b.len_a.push_back(static_cast<std::int64_t>(ex.tokens_a.size()));
      b.len_b.push_back(static_cast<std::int64_t>(ex.tokens_b.size()));
      b.labels.push_back(ex.label_index);
      b.max_a = std::max(b.max_a, b.len_a.back());
      b.max_b = std::max(b.max_b, b.len_b.back());
    }
    auto encode = [&vocab](const std::vector<std::string>& toks, std::int64_t padded,
                           std::vector<std::int64_t>& ids, std::vector<std::uint8_t>& mask) {
      ids.assign(static_cast<std::size_t>(padded), Vocab::kPad);
      mask.assign(static_cast<std::size_t>(padded), 0);
      for (std::size_t t = 0; t < toks.size(); ++t) {
        ids[t] = vocab.lookup(toks[t]);
        mask[t] = 1;
      }
    };
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = examples[order[i]];
      b.ids_a.emplace_back();
      b.mask_a.emplace_back();
      encode(ex.tokens_a, b.max_a, b.ids_a.back(), b.mask_a.back());
      b.ids_b.emplace_back();
      b.mask_b.emplace_back();
      encode(ex.tokens_b, b.max_b, b.ids_b.back(), b.mask_b.back());
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// --- binary io helpers -----------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'R', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr char kEncodingsMagic[8] = {'R', 'R', 'N', 'E', 'N', 'C', 'S', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_doubles(std::ostream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error(std::string("truncated file while reading ") + what);
  return v;
}

std::string read_string(std::istream& in, const char* what) {
  const auto n = read_u64(in, what);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error(std::string("truncated file while reading ") + what);
  return s;
}

void read_doubles(std::istream& in, double* p, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error(std::string("truncated file while reading ") + what);
}

std::uint64_t fnv1a(const double* p, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(p);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(out, ckpt.version);
  write_u64(out, ckpt.seed);
  write_string(out, ckpt.config_json);
  write_u64(out, ckpt.tensors.size());
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_string(out, name);
    write_u64(out, tensor.shape().size());
    for (auto d : tensor.shape()) write_u64(out, static_cast<std::uint64_t>(d));
    write_u64(out, offset);
    offset += static_cast<std::uint64_t>(tensor.size());
  }
  write_u64(out, offset);
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  for (const auto& [name, tensor] : ckpt.tensors) {
    write_doubles(out, tensor.data().data(), static_cast<std::size_t>(tensor.size()));
    const auto* bytes = reinterpret_cast<const unsigned char*>(tensor.data().data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(tensor.size()) * sizeof(double); ++i) {
      checksum ^= bytes[i];
      checksum *= 0x100000001b3ull;
    }
  }
  write_u64(out, checksum);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
  Checkpoint ckpt;
  ckpt.version = read_u64(in, "version");
  if (ckpt.version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: version " + std::to_string(ckpt.version) +
                             " unsupported (expected " + std::to_string(kCheckpointVersion) +
                             ")");
  ckpt.seed = read_u64(in, "seed");
  ckpt.config_json = read_string(in, "config");
  const auto n_tensors = read_u64(in, "tensor count");
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::vector<Entry> entries;
  std::uint64_t expect_offset = 0;
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    Entry e;
    e.name = read_string(in, "tensor name");
    const auto rank = read_u64(in, "tensor rank");
    std::uint64_t count = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      e.shape.push_back(static_cast<std::int64_t>(read_u64(in, "tensor dim")));
      count *= static_cast<std::uint64_t>(e.shape.back());
    }
    e.offset = read_u64(in, "tensor offset");
    e.count = count;
    if (e.offset != expect_offset)
      throw std::runtime_error("load_checkpoint: manifest offsets do not partition the payload");
    expect_offset += count;
    entries.push_back(std::move(e));
  }
  const auto payload_count = read_u64(in, "payload size");
  if (payload_count != expect_offset)
    throw std::runtime_error("load_checkpoint: manifest covers " + std::to_string(expect_offset) +
                             " values but payload has " + std::to_string(payload_count));
  std::vector<double> payload(payload_count);
  read_doubles(in, payload.data(), payload.size(), "payload");
  const auto stored_checksum = read_u64(in, "checksum");
  if (fnv1a(payload.data(), payload.size()) != stored_checksum)
    throw std::runtime_error("load_checkpoint: payload checksum mismatch (corrupted file)");
  for (const auto& e : entries) {
    std::vector<double> values(payload.begin() + static_cast<std::ptrdiff_t>(e.offset),
                               payload.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count));
    ckpt.tensors.emplace_back(e.name, Tensor::values(e.shape, std::move(values)));
  }
  return ckpt;
}

void restore_parameters(std::vector<std::pair<std::string, Tensor>>& params,
                        const Checkpoint& ckpt) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, tensor] : ckpt.tensors) stored[name] = &tensor;
  for (auto& [name, tensor] : params) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw std::runtime_error("restore_parameters: checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != tensor.shape())
      throw std::runtime_error("restore_parameters: shape conflict for '" + name + "'");
    auto dst = tensor.raw_data();
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void save_encodings(const std::string& path,
                    const std::vector<std::pair<std::uint64_t, MultiLayerEncoding>>& encs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_encodings: cannot write " + path);
  out.write(kEncodingsMagic, sizeof(kEncodingsMagic));
  write_u64(out, kEncodingsVersion);
  write_u64(out, encs.size());
  for (const auto& [pair_id, enc] : encs) {
    write_u64(out, pair_id);
    write_u64(out, enc.layers.size());
    write_u64(out, static_cast<std::uint64_t>(enc.length()));
    write_u64(out, static_cast<std::uint64_t>(enc.d_enc()));
    for (const auto& layer : enc.layers)
      write_doubles(out, layer.data().data(), static_cast<std::size_t>(layer.size()));
    write_doubles(out, enc.cls.data().data(), static_cast<std::size_t>(enc.cls.size()));
  }
  if (!out) throw std::runtime_error("save_encodings: write failed for " + path);
}

std::map<std::uint64_t, MultiLayerEncoding> load_encodings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_encodings: cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kEncodingsMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_encodings: " + path + " is not an encodings file");
  const auto version = read_u64(in, "version");
  if (version != kEncodingsVersion)
    throw std::runtime_error("load_encodings: version " + std::to_string(version) +
                             " unsupported");
  const auto n = read_u64(in, "pair count");
  std::map<std::uint64_t, MultiLayerEncoding> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto pair_id = read_u64(in, "pair_id");
    const auto layers = read_u64(in, "layer count");
    const auto l_ab = read_u64(in, "token count");
    const auto d_enc = read_u64(in, "encoding dim");
    if (layers == 0 || l_ab == 0 || d_enc == 0)
      throw std::runtime_error("load_encodings: degenerate record for pair " +
                               std::to_string(pair_id));
    MultiLayerEncoding enc;
    for (std::uint64_t l = 0; l < layers; ++l) {
      std::vector<double> vals(l_ab * d_enc);
      read_doubles(in, vals.data(), vals.size(), "layer values");
      enc.layers.push_back(Tensor::values(
          {static_cast<std::int64_t>(l_ab), static_cast<std::int64_t>(d_enc)},
          std::move(vals)));
    }
    std::vector<double> cls(d_enc);
    read_doubles(in, cls.data(), cls.size(), "cls vector");
    enc.cls = Tensor::values({static_cast<std::int64_t>(d_enc)}, std::move(cls));
    enc.mask.assign(l_ab, 1);
    enc.real_len = static_cast<std::int64_t>(l_ab);
    out[pair_id] = std::move(enc);
  }
  return out;
}

}  // namespace rereadnet
