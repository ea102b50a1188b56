#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rereadnet/data.hpp"
#include "rereadnet/train.hpp"

namespace rereadnet {

// Flat run configuration; JSON keys mirror the field names and command-line
// flags override file values.
struct RunConfig {
  std::string model = "drrnet";  // drrnet | ladranet
  std::string task = "nli";      // nli | pi
  std::string format = "jsonl";  // jsonl | tsv

  std::string train_path, val_path, test_path;
  std::string glove_path, antonyms_path, encodings_path;
  std::string checkpoint_path;
  std::string out_dir = "run_out";

  std::int64_t word_dim = 300;
  std::int64_t char_dim = 100;
  std::int64_t char_emb_dim = 16;
  std::int64_t syn_dim = 12;
  std::int64_t d_g = 256;
  std::int64_t d_a = 200;
  std::int64_t l_s = 3;
  std::int64_t t1 = 6;
  std::int64_t t2 = 5;
  std::vector<std::int64_t> pcnn_kernels = {2, 3};
  std::int64_t pcnn_inner = 500;
  std::int64_t enc_l_s = 1;  // internal encoder depth for ladranet
  double beta = 100.0;
  std::int64_t mlp_hidden = 300;
  bool coverage = true;

  double lr = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::int64_t batch_size = 32;
  std::int64_t max_epochs = 50;
  double warmup_frac = 0.1;
  std::int64_t patience_batches = 1000;
  std::int64_t val_every = 100;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::int64_t seeds = 1;
  double stop_at_train_acc = -1.0;
};

RunConfig load_run_config(const std::string& path);
void merge_config_json(RunConfig& cfg, const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

// A trained model rebuilt from a checkpoint, ready for eval or tracing.
struct LoadedModel {
  RunConfig cfg;
  Task task = Task::Nli;
  std::unique_ptr<PairModel> model;
  DrrNet* drr = nullptr;     // set when cfg.model == "drrnet"
  LadraNet* ladra = nullptr; // set when cfg.model == "ladranet"
};

LoadedModel model_from_checkpoint(const std::string& path);

// Subcommand entry points shared by the CLI and the python bindings.
// Results go to stdout as JSON; logs and config echoes go to stderr.
int run_train(const RunConfig& cfg);
int run_eval(const RunConfig& cfg);
int run_trace(const RunConfig& cfg, const std::string& sentence_a,
              const std::string& sentence_b, std::int64_t index);
int run_gradcheck();

}  // namespace rereadnet
