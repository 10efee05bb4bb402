#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "sdtc/corpus.hpp"
#include "sdtc/ctc.hpp"

using namespace sdtc;
namespace fs = std::filesystem;

namespace {

CorpusSpec small_spec() {
  CorpusSpec s;
  s.num_topics = 4;
  s.word_vocab = 21;
  s.phoneme_vocab = 9;
  s.words_per_doc_min = 3;
  s.words_per_doc_max = 5;
  s.d_feat = 6;
  s.seed = 77;
  s.train_docs = 12;
  s.dev_docs = 4;
  s.test_docs = 4;
  return s;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sdtc_corpus_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter;
};
int TempDir::counter = 0;

}  // namespace

TEST_CASE("spec validation rejects infeasible settings") {
  CorpusSpec s = small_spec();
  CHECK_NOTHROW(s.validate());

  CorpusSpec bad = s;
  bad.frames_per_phoneme_min = 1;  // breaks CTC feasibility for repeats
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.word_vocab = bad.num_topics;  // one word short
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.preferred_mass = 1.5;
  CHECK_THROWS(bad.validate());

  bad = s;
  bad.words_per_doc_max = bad.words_per_doc_min - 1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("generation is deterministic in the seed") {
  CorpusSpec s = small_spec();
  Corpus a = generate_corpus(s);
  Corpus b = generate_corpus(s);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].frames.data() == b.train[i].frames.data());
    CHECK(a.train[i].phoneme_labels == b.train[i].phoneme_labels);
    CHECK(a.train[i].word_labels == b.train[i].word_labels);
    CHECK(a.train[i].topic == b.train[i].topic);
  }

  CorpusSpec s2 = s;
  s2.seed = 78;
  Corpus c = generate_corpus(s2);
  CHECK(a.train[0].frames.data() != c.train[0].frames.data());
}

TEST_CASE("split sizes are exact") {
  CorpusSpec s = small_spec();
  s.train_docs = 100;
  s.dev_docs = 20;
  s.test_docs = 40;
  Corpus c = generate_corpus(s);
  CHECK(c.train.size() == 100);
  CHECK(c.dev.size() == 20);
  CHECK(c.test.size() == 40);
}

TEST_CASE("sigma zero renders identical frames per phoneme") {
  CorpusSpec s = small_spec();
  s.sigma = 0.0;
  s.frames_per_phoneme_min = 2;
  s.frames_per_phoneme_max = 2;
  Lexicon lex = build_lexicon(s);
  std::mt19937_64 rng(1);
  ctc::LabelSequence ph = {3, 3, 5};
  Tensor f = render_frames(ph, lex, s, rng);
  REQUIRE(f.dim(0) == 6);
  // both frames of one phoneme instance equal the embedding exactly
  for (int d = 0; d < s.d_feat; ++d) {
    CHECK(f.at(0, d) == f.at(1, d));
    CHECK(f.at(0, d) == f.at(2, d));  // repeated phoneme, same embedding
    CHECK(f.at(4, d) == f.at(5, d));
    CHECK(f.at(0, d) == lex.phoneme_embedding[3][static_cast<size_t>(d)]);
  }
}

TEST_CASE("render length is the sum of per-phoneme frame counts") {
  CorpusSpec s = small_spec();
  s.frames_per_phoneme_min = 2;
  s.frames_per_phoneme_max = 2;
  Lexicon lex = build_lexicon(s);
  std::mt19937_64 rng(2);
  Tensor f = render_frames({1, 2, 3}, lex, s, rng);
  CHECK(f.dim(0) == 6);
  CHECK(f.dim(1) == s.d_feat);
}

TEST_CASE("lexicon pronunciations are distinct, sized, and in range") {
  CorpusSpec s = small_spec();
  Lexicon lex = build_lexicon(s);
  REQUIRE(lex.word_to_phonemes.size() == static_cast<size_t>(s.word_vocab));
  CHECK(lex.word_to_phonemes[0].empty());  // blank has no pronunciation
  std::set<ctc::LabelSequence> seen;
  for (int w = 1; w < s.word_vocab; ++w) {
    const auto& pron = lex.word_to_phonemes[static_cast<size_t>(w)];
    CHECK(pron.size() >= static_cast<size_t>(s.phonemes_per_word_min));
    CHECK(pron.size() <= static_cast<size_t>(s.phonemes_per_word_max));
    for (int p : pron) {
      CHECK(p >= 1);
      CHECK(p < s.phoneme_vocab);
    }
    CHECK(seen.insert(pron).second);
  }
}

TEST_CASE("documents are internally consistent") {
  CorpusSpec s = small_spec();
  Corpus c = generate_corpus(s);
  Lexicon lex = build_lexicon(s);
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (const SpokenDocument& doc : *split) {
      CHECK(doc.topic >= 0);
      CHECK(doc.topic < s.num_topics);
      CHECK(doc.word_labels.size() >=
            static_cast<size_t>(s.words_per_doc_min));
      CHECK(doc.word_labels.size() <=
            static_cast<size_t>(s.words_per_doc_max));
      // phoneme labels are the concatenated pronunciations
      ctc::LabelSequence expect;
      for (int w : doc.word_labels) {
        CHECK(w >= 1);
        CHECK(w < s.word_vocab);
        const auto& pron = lex.word_to_phonemes[static_cast<size_t>(w)];
        expect.insert(expect.end(), pron.begin(), pron.end());
      }
      CHECK(doc.phoneme_labels == expect);
      // frame budget admits a CTC alignment by construction
      CHECK(doc.frames.dim(0) >= ctc::required_length(doc.phoneme_labels));
      CHECK(doc.frames.dim(0) >= ctc::required_length(doc.word_labels));
      CHECK(doc.frames.dim(1) == s.d_feat);
    }
  }
}

TEST_CASE("document save/load round trip is bit exact") {
  CorpusSpec s = small_spec();
  Corpus c = generate_corpus(s);
  TempDir tmp;
  fs::path p = tmp.path / "doc.sdoc";
  save_document(c.train[0], p.string());
  SpokenDocument back = load_document(p.string());
  CHECK(back.frames.shape() == c.train[0].frames.shape());
  CHECK(back.frames.data() == c.train[0].frames.data());
  CHECK(back.phoneme_labels == c.train[0].phoneme_labels);
  CHECK(back.word_labels == c.train[0].word_labels);
  CHECK(back.topic == c.train[0].topic);
}

TEST_CASE("corpus save produces identical bytes across runs") {
  CorpusSpec s = small_spec();
  Corpus c = generate_corpus(s);
  TempDir t1, t2;
  save_corpus(c, t1.path.string());
  save_corpus(generate_corpus(s), t2.path.string());
  for (const char* split : {"train", "dev", "test"}) {
    fs::path d1 = t1.path / split, d2 = t2.path / split;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d1)) files.push_back(e.path());
    CHECK(!files.empty());
    for (const fs::path& f : files)
      CHECK(slurp(f) == slurp(d2 / f.filename()));
  }
}

TEST_CASE("load_split restores every document") {
  CorpusSpec s = small_spec();
  Corpus c = generate_corpus(s);
  TempDir tmp;
  save_corpus(c, tmp.path.string());
  auto train = load_split(tmp.path.string(), "train");
  auto dev = load_split(tmp.path.string(), "dev");
  REQUIRE(train.size() == c.train.size());
  REQUIRE(dev.size() == c.dev.size());
  for (size_t i = 0; i < train.size(); ++i) {
    CHECK(train[i].frames.data() == c.train[i].frames.data());
    CHECK(train[i].topic == c.train[i].topic);
  }
}

TEST_CASE("loading a missing split fails loudly") {
  TempDir tmp;
  CHECK_THROWS(load_split(tmp.path.string(), "train"));
}

TEST_CASE("unwritable output location is an IO error") {
  TempDir tmp;
  fs::path blocker = tmp.path / "file";
  std::ofstream(blocker) << "x";
  CorpusSpec s = small_spec();
  s.train_docs = 1;
  s.dev_docs = 0;
  s.test_docs = 0;
  // the target directory path is occupied by a regular file
  CHECK_THROWS(save_corpus(generate_corpus(s), (blocker / "sub").string()));
}
