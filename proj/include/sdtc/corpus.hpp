#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sdtc/ctc.hpp"
#include "sdtc/tensor.hpp"

namespace sdtc {

// Synthetic corpus generator settings. Vocab sizes include blank (id 0).
struct CorpusSpec {
  int num_topics = 8;
  int word_vocab = 40;
  int phoneme_vocab = 13;
  int words_per_doc_min = 6;
  int words_per_doc_max = 10;
  int frames_per_phoneme_min = 2;
  int frames_per_phoneme_max = 4;
  int phonemes_per_word_min = 2;
  int phonemes_per_word_max = 4;
  double sigma = 0.3;           // frame noise stddev
  double preferred_mass = 0.8;  // probability of drawing from the topic subset
  int d_feat = 16;
  std::uint64_t seed = 1234;
  int train_docs = 120;
  int dev_docs = 24;
  int test_docs = 48;

  void validate() const;  // throws on an infeasible spec
};

struct SpokenDocument {
  Tensor frames;  // [T_raw × d_feat]
  ctc::LabelSequence phoneme_labels;
  ctc::LabelSequence word_labels;
  int topic = 0;
};

struct Corpus {
  std::vector<SpokenDocument> train, dev, test;
};

// Fixed word -> phoneme-sequence mapping plus per-phoneme frame embeddings,
// derived deterministically from the spec seed.
struct Lexicon {
  std::vector<ctc::LabelSequence> word_to_phonemes;  // [word_vocab], [0] empty
  std::vector<std::vector<double>> phoneme_embedding;  // [phoneme_vocab][d_feat]
};

Lexicon build_lexicon(const CorpusSpec& spec);

// Each phoneme emits k frames, k uniform in the configured range;
// frame = embedding(phoneme) + N(0, sigma^2).
Tensor render_frames(const ctc::LabelSequence& phoneme_ids, const Lexicon& lex,
                     const CorpusSpec& spec, std::mt19937_64& rng);

Corpus generate_corpus(const CorpusSpec& spec);

// On-disk layout: one directory per split, one file per document
// (text header, then the frame matrix as length-prefixed LE doubles).
void save_corpus(const Corpus& corpus, const std::string& dir);
std::vector<SpokenDocument> load_split(const std::string& dir,
                                       const std::string& split);

void save_document(const SpokenDocument& doc, const std::string& path);
SpokenDocument load_document(const std::string& path);

}  // namespace sdtc
