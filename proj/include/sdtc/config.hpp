#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdtc/corpus.hpp"

namespace sdtc {

// Flat `key = value` configuration, `#` comments. Unknown keys are
// rejected; keys left at their defaults are reported back to the caller.
struct RunConfig {
  // corpus
  int num_topics = 8;
  int word_vocab = 40;
  int phoneme_vocab = 13;
  int words_per_doc_min = 8;
  int words_per_doc_max = 14;
  int frames_per_phoneme_min = 2;
  int frames_per_phoneme_max = 4;
  int phonemes_per_word_min = 2;
  int phonemes_per_word_max = 4;
  double sigma = 0.3;
  double preferred_mass = 0.8;
  int d_feat = 16;
  std::uint64_t corpus_seed = 1234;
  int train_docs = 240;
  int dev_docs = 24;
  int test_docs = 48;

  // model
  int a2p_hidden = 32;
  int a2p_layers = 3;
  int p2w_hidden = 32;
  int p2w_layers = 2;
  int head_hidden = 32;
  int num_heads = 4;
  int window = 10;  // local attention band size L
  int max_len = 256;
  double a2p_dropout = 0.1;
  double p2w_dropout = 0.1;
  double head_dropout = 0.5;

  // training
  double a2p_lr = 1e-3;
  double p2w_lr = 3e-3;
  double attention_lr = 1e-4;
  double head_lr = 1e-3;
  int a2p_epochs = 60;
  int p2w_epochs = 100;
  int fusion_epochs = 30;
  int batch_size = 8;
  std::uint64_t model_seed = 7;
  std::uint64_t train_seed = 11;

  // paths
  std::string data_dir = "data";
  std::string ckpt_dir = "ckpt";

  CorpusSpec corpus_spec() const;

  // Normalized key=value lines for every field, in a fixed order.
  std::vector<std::string> to_lines() const;

  // Parses a config file; returns keys that kept their defaults.
  static RunConfig load(const std::string& path,
                        std::vector<std::string>* defaulted = nullptr);
  static RunConfig from_lines(const std::vector<std::string>& lines,
                              std::vector<std::string>* defaulted = nullptr);
};

}  // namespace sdtc
