#include "sdtc/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sdtc {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Words 1..W-1: the tail fifth is shared across topics, the rest is
// partitioned contiguously so topic word distributions stay far apart.
struct TopicWords {
  std::vector<std::vector<int>> preferred;  // per topic
  std::vector<int> all_words;
};

TopicWords partition_words(const CorpusSpec& spec) {
  TopicWords tw;
  const int n_words = spec.word_vocab - 1;
  const int shared = std::max(1, n_words / 5);
  const int owned = n_words - shared;
  tw.preferred.resize(static_cast<size_t>(spec.num_topics));
  for (int w = 1; w <= n_words; ++w) tw.all_words.push_back(w);
  for (int i = 0; i < owned; ++i) {
    const int topic = i * spec.num_topics / owned;
    tw.preferred[static_cast<size_t>(topic)].push_back(1 + i);
  }
  return tw;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("truncated document file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(os, bits);
}

double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void CorpusSpec::validate() const {
  if (num_topics < 1) throw std::invalid_argument("corpus: num_topics < 1");
  if (word_vocab - 1 < num_topics)
    throw std::invalid_argument("corpus: need at least one word per topic");
  if (phoneme_vocab < 2)
    throw std::invalid_argument("corpus: phoneme_vocab must be >= 2");
  if (d_feat < 1) throw std::invalid_argument("corpus: d_feat must be >= 1");
  if (words_per_doc_min < 1 || words_per_doc_max < words_per_doc_min)
    throw std::invalid_argument("corpus: bad words_per_doc range");
  // k >= 2 frames per phoneme keeps every document CTC-feasible, including
  // the blank needed between adjacent repeated phonemes.
  if (frames_per_phoneme_min < 2 ||
      frames_per_phoneme_max < frames_per_phoneme_min)
    throw std::invalid_argument("corpus: frames_per_phoneme_min must be >= 2");
  if (phonemes_per_word_min < 1 ||
      phonemes_per_word_max < phonemes_per_word_min)
    throw std::invalid_argument("corpus: bad phonemes_per_word range");
  if (sigma < 0) throw std::invalid_argument("corpus: sigma must be >= 0");
  if (preferred_mass < 0 || preferred_mass > 1)
    throw std::invalid_argument("corpus: preferred_mass must be in [0,1]");
  if (train_docs < 1 || dev_docs < 0 || test_docs < 0)
    throw std::invalid_argument("corpus: bad split sizes");
}

Lexicon build_lexicon(const CorpusSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix(spec.seed, 0xA11CE));
  Lexicon lex;
  lex.word_to_phonemes.resize(static_cast<size_t>(spec.word_vocab));
  std::uniform_int_distribution<int> len_d(spec.phonemes_per_word_min,
                                           spec.phonemes_per_word_max);
  std::uniform_int_distribution<int> ph_d(1, spec.phoneme_vocab - 1);
  std::set<ctc::LabelSequence> used;
  for (int w = 1; w < spec.word_vocab; ++w) {
    ctc::LabelSequence seq;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      seq.clear();
      const int len = len_d(rng);
      for (int i = 0; i < len; ++i) seq.push_back(ph_d(rng));
      if (used.insert(seq).second) break;
      if (attempt == 999)
        throw std::runtime_error("lexicon: cannot draw distinct pronunciations");
    }
    lex.word_to_phonemes[static_cast<size_t>(w)] = seq;
  }
  std::normal_distribution<double> n01(0.0, 1.0);
  lex.phoneme_embedding.assign(static_cast<size_t>(spec.phoneme_vocab),
                               std::vector<double>());
  for (int p = 0; p < spec.phoneme_vocab; ++p) {
    auto& e = lex.phoneme_embedding[static_cast<size_t>(p)];
    e.resize(static_cast<size_t>(spec.d_feat));
    for (double& x : e) x = n01(rng);
  }
  return lex;
}

Tensor render_frames(const ctc::LabelSequence& phoneme_ids, const Lexicon& lex,
                     const CorpusSpec& spec, std::mt19937_64& rng) {
  if (phoneme_ids.empty())
    throw std::invalid_argument("render_frames: empty phoneme sequence");
  std::uniform_int_distribution<int> k_d(spec.frames_per_phoneme_min,
                                         spec.frames_per_phoneme_max);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> frames;
  int t_raw = 0;
  for (int p : phoneme_ids) {
    const int k = k_d(rng);
    for (int r = 0; r < k; ++r) {
      const auto& e = lex.phoneme_embedding[static_cast<size_t>(p)];
      for (int j = 0; j < spec.d_feat; ++j)
        frames.push_back(e[static_cast<size_t>(j)] +
                         spec.sigma * noise(rng));
      ++t_raw;
    }
  }
  return Tensor::from({t_raw, spec.d_feat}, std::move(frames));
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const Lexicon lex = build_lexicon(spec);
  const TopicWords tw = partition_words(spec);
  Corpus corpus;
  const int sizes[3] = {spec.train_docs, spec.dev_docs, spec.test_docs};
  std::vector<SpokenDocument>* splits[3] = {&corpus.train, &corpus.dev,
                                            &corpus.test};
  for (int s = 0; s < 3; ++s) {
    for (int d = 0; d < sizes[s]; ++d) {
      // seed space partitioned per (split, document)
      std::mt19937_64 rng(mix(spec.seed, mix(static_cast<std::uint64_t>(s + 1),
                                             static_cast<std::uint64_t>(d))));
      SpokenDocument doc;
      std::uniform_int_distribution<int> topic_d(0, spec.num_topics - 1);
      doc.topic = topic_d(rng);
      std::uniform_int_distribution<int> nw_d(spec.words_per_doc_min,
                                              spec.words_per_doc_max);
      const int n_words = nw_d(rng);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const auto& pref = tw.preferred[static_cast<size_t>(doc.topic)];
      for (int i = 0; i < n_words; ++i) {
        int w;
        if (!pref.empty() && u(rng) < spec.preferred_mass) {
          std::uniform_int_distribution<size_t> pick(0, pref.size() - 1);
          w = pref[pick(rng)];
        } else {
          std::uniform_int_distribution<size_t> pick(0,
                                                     tw.all_words.size() - 1);
          w = tw.all_words[pick(rng)];
        }
        doc.word_labels.push_back(w);
        const auto& ph = lex.word_to_phonemes[static_cast<size_t>(w)];
        doc.phoneme_labels.insert(doc.phoneme_labels.end(), ph.begin(),
                                  ph.end());
      }
      doc.frames = render_frames(doc.phoneme_labels, lex, spec, rng);
      splits[s]->push_back(std::move(doc));
    }
  }
  return corpus;
}

void save_document(const SpokenDocument& doc, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "SDTC-DOC 1\n";
  os << "topic " << doc.topic << "\n";
  os << "phonemes " << doc.phoneme_labels.size();
  for (int p : doc.phoneme_labels) os << ' ' << p;
  os << "\nwords " << doc.word_labels.size();
  for (int w : doc.word_labels) os << ' ' << w;
  os << "\nframes " << doc.frames.dim(0) << ' ' << doc.frames.dim(1) << "\n";
  os << "DATA\n";
  write_u64(os, doc.frames.data().size());
  for (double v : doc.frames.data()) write_f64(os, v);
  if (!os) throw std::runtime_error("write failed: " + path);
}

SpokenDocument load_document(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::getline(is, line);
  if (line != "SDTC-DOC 1")
    throw std::runtime_error("bad document header in " + path);
  SpokenDocument doc;
  int t_raw = 0, d_feat = 0;
  while (std::getline(is, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "topic") {
      ls >> doc.topic;
    } else if (key == "phonemes" || key == "words") {
      size_t n;
      ls >> n;
      auto& dst = (key == "phonemes") ? doc.phoneme_labels : doc.word_labels;
      dst.resize(n);
      for (size_t i = 0; i < n; ++i) ls >> dst[i];
    } else if (key == "frames") {
      ls >> t_raw >> d_feat;
    } else {
      throw std::runtime_error("unknown document field '" + key + "' in " +
                               path);
    }
    if (!ls) throw std::runtime_error("malformed document header in " + path);
  }
  const std::uint64_t count = read_u64(is);
  if (count != static_cast<std::uint64_t>(t_raw) *
                   static_cast<std::uint64_t>(d_feat))
    throw std::runtime_error("frame payload count mismatch in " + path);
  std::vector<double> data(count);
  for (auto& v : data) v = read_f64(is);
  doc.frames = Tensor::from({t_raw, d_feat}, std::move(data));
  return doc;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  const std::vector<SpokenDocument>* splits[3] = {&corpus.train, &corpus.dev,
                                                  &corpus.test};
  const char* names[3] = {"train", "dev", "test"};
  for (int s = 0; s < 3; ++s) {
    const fs::path split_dir = fs::path(dir) / names[s];
    fs::create_directories(split_dir);
    char buf[32];
    for (size_t d = 0; d < splits[s]->size(); ++d) {
      std::snprintf(buf, sizeof buf, "doc_%05zu.sdd", d);
      save_document((*splits[s])[d], (split_dir / buf).string());
    }
  }
}

std::vector<SpokenDocument> load_split(const std::string& dir,
                                       const std::string& split) {
  const fs::path split_dir = fs::path(dir) / split;
  if (!fs::is_directory(split_dir))
    throw std::runtime_error("missing corpus split directory: " +
                             split_dir.string());
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.path().extension() == ".sdd") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<SpokenDocument> docs;
  docs.reserve(paths.size());
  for (const auto& p : paths) docs.push_back(load_document(p));
  return docs;
}

}  // namespace sdtc
