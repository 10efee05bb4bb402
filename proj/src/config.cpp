#include "sdtc/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace sdtc {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (!is || !is.eof())
    throw std::invalid_argument("config: bad value '" + v + "' for key '" +
                                key + "'");
  return out;
}

std::vector<Field> fields() {
  std::vector<Field> f;
  auto add_int = [&](const std::string& key, int RunConfig::* mem) {
    f.push_back({key,
                 [key, mem](RunConfig& c, const std::string& v) {
                   c.*mem = parse_num<int>(key, v);
                 },
                 [mem](const RunConfig& c) { return std::to_string(c.*mem); }});
  };
  auto add_f64 = [&](const std::string& key, double RunConfig::* mem) {
    f.push_back({key,
                 [key, mem](RunConfig& c, const std::string& v) {
                   c.*mem = parse_num<double>(key, v);
                 },
                 [mem](const RunConfig& c) { return fmt_double(c.*mem); }});
  };
  auto add_u64 = [&](const std::string& key, std::uint64_t RunConfig::* mem) {
    f.push_back({key,
                 [key, mem](RunConfig& c, const std::string& v) {
                   c.*mem = parse_num<std::uint64_t>(key, v);
                 },
                 [mem](const RunConfig& c) { return std::to_string(c.*mem); }});
  };
  auto add_str = [&](const std::string& key, std::string RunConfig::* mem) {
    f.push_back({key,
                 [mem](RunConfig& c, const std::string& v) { c.*mem = v; },
                 [mem](const RunConfig& c) { return c.*mem; }});
  };
  add_int("num_topics", &RunConfig::num_topics);
  add_int("word_vocab", &RunConfig::word_vocab);
  add_int("phoneme_vocab", &RunConfig::phoneme_vocab);
  add_int("words_per_doc_min", &RunConfig::words_per_doc_min);
  add_int("words_per_doc_max", &RunConfig::words_per_doc_max);
  add_int("frames_per_phoneme_min", &RunConfig::frames_per_phoneme_min);
  add_int("frames_per_phoneme_max", &RunConfig::frames_per_phoneme_max);
  add_int("phonemes_per_word_min", &RunConfig::phonemes_per_word_min);
  add_int("phonemes_per_word_max", &RunConfig::phonemes_per_word_max);
  add_f64("sigma", &RunConfig::sigma);
  add_f64("preferred_mass", &RunConfig::preferred_mass);
  add_int("d_feat", &RunConfig::d_feat);
  add_u64("corpus_seed", &RunConfig::corpus_seed);
  add_int("train_docs", &RunConfig::train_docs);
  add_int("dev_docs", &RunConfig::dev_docs);
  add_int("test_docs", &RunConfig::test_docs);
  add_int("a2p_hidden", &RunConfig::a2p_hidden);
  add_int("a2p_layers", &RunConfig::a2p_layers);
  add_int("p2w_hidden", &RunConfig::p2w_hidden);
  add_int("p2w_layers", &RunConfig::p2w_layers);
  add_int("head_hidden", &RunConfig::head_hidden);
  add_int("num_heads", &RunConfig::num_heads);
  add_int("window", &RunConfig::window);
  add_int("max_len", &RunConfig::max_len);
  add_f64("a2p_dropout", &RunConfig::a2p_dropout);
  add_f64("p2w_dropout", &RunConfig::p2w_dropout);
  add_f64("head_dropout", &RunConfig::head_dropout);
  add_f64("a2p_lr", &RunConfig::a2p_lr);
  add_f64("p2w_lr", &RunConfig::p2w_lr);
  add_f64("attention_lr", &RunConfig::attention_lr);
  add_f64("head_lr", &RunConfig::head_lr);
  add_int("a2p_epochs", &RunConfig::a2p_epochs);
  add_int("p2w_epochs", &RunConfig::p2w_epochs);
  add_int("fusion_epochs", &RunConfig::fusion_epochs);
  add_int("batch_size", &RunConfig::batch_size);
  add_u64("model_seed", &RunConfig::model_seed);
  add_u64("train_seed", &RunConfig::train_seed);
  add_str("data_dir", &RunConfig::data_dir);
  add_str("ckpt_dir", &RunConfig::ckpt_dir);
  return f;
}

}  // namespace

CorpusSpec RunConfig::corpus_spec() const {
  CorpusSpec s;
  s.num_topics = num_topics;
  s.word_vocab = word_vocab;
  s.phoneme_vocab = phoneme_vocab;
  s.words_per_doc_min = words_per_doc_min;
  s.words_per_doc_max = words_per_doc_max;
  s.frames_per_phoneme_min = frames_per_phoneme_min;
  s.frames_per_phoneme_max = frames_per_phoneme_max;
  s.phonemes_per_word_min = phonemes_per_word_min;
  s.phonemes_per_word_max = phonemes_per_word_max;
  s.sigma = sigma;
  s.preferred_mass = preferred_mass;
  s.d_feat = d_feat;
  s.seed = corpus_seed;
  s.train_docs = train_docs;
  s.dev_docs = dev_docs;
  s.test_docs = test_docs;
  return s;
}

std::vector<std::string> RunConfig::to_lines() const {
  std::vector<std::string> out;
  for (const Field& fld : fields())
    out.push_back(fld.key + " = " + fld.get(*this));
  return out;
}

RunConfig RunConfig::from_lines(const std::vector<std::string>& lines,
                                std::vector<std::string>* defaulted) {
  RunConfig cfg;
  const auto fs = fields();
  std::vector<bool> seen(fs.size(), false);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = lines[ln];
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(ln + 1) +
                                  " is not 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    bool found = false;
    for (size_t i = 0; i < fs.size(); ++i) {
      if (fs[i].key == key) {
        fs[i].set(cfg, val);
        seen[i] = true;
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  if (defaulted) {
    defaulted->clear();
    for (size_t i = 0; i < fs.size(); ++i)
      if (!seen[i]) defaulted->push_back(fs[i].key);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path,
                          std::vector<std::string>* defaulted) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return from_lines(lines, defaulted);
}

}  // namespace sdtc
