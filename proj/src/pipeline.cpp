#include "sdtc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "sdtc/adam.hpp"
#include "sdtc/ctc.hpp"
#include "sdtc/ops.hpp"

namespace sdtc {

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

std::vector<std::uint8_t> all_real(int n) {
  return std::vector<std::uint8_t>(static_cast<size_t>(n), 1);
}

// Band and/or key-padding mask for cross-attention; padded query rows fall
// back to their own position so no row is fully masked.
BoolMatrix attention_mask(SystemVariant variant, int t_len, int window,
                          const std::vector<std::uint8_t>& pad_mask) {
  BoolMatrix m;
  if (variant_uses_band(variant)) {
    m = band_mask(t_len, t_len, window);
  } else {
    m.rows = t_len;
    m.cols = t_len;
    m.v.assign(static_cast<size_t>(t_len) * static_cast<size_t>(t_len), 1);
  }
  for (int u = 0; u < t_len; ++u)
    if (!pad_mask[static_cast<size_t>(u)])
      for (int t = 0; t < t_len; ++t) m.set(t, u, false);
  for (int t = 0; t < t_len; ++t) {
    bool any = false;
    for (int u = 0; u < t_len && !any; ++u) any = m.at(t, u);
    if (!any) m.set(t, t, true);
  }
  return m;
}

}  // namespace

SystemVariant variant_from_string(const std::string& s) {
  if (s == "dafs") return SystemVariant::kDafsOnly;
  if (s == "dlfs") return SystemVariant::kDlfsOnly;
  if (s == "conc") return SystemVariant::kConcFusion;
  if (s == "gmha_add") return SystemVariant::kGmhaAdd;
  if (s == "gmha_cat") return SystemVariant::kGmhaCat;
  if (s == "lmha_add") return SystemVariant::kLmhaAdd;
  if (s == "lmha_cat") return SystemVariant::kLmhaCat;
  throw std::invalid_argument("unknown system variant '" + s + "'");
}

std::string to_string(SystemVariant v) {
  switch (v) {
    case SystemVariant::kDafsOnly: return "dafs";
    case SystemVariant::kDlfsOnly: return "dlfs";
    case SystemVariant::kConcFusion: return "conc";
    case SystemVariant::kGmhaAdd: return "gmha_add";
    case SystemVariant::kGmhaCat: return "gmha_cat";
    case SystemVariant::kLmhaAdd: return "lmha_add";
    case SystemVariant::kLmhaCat: return "lmha_cat";
  }
  throw std::logic_error("unreachable variant");
}

bool variant_uses_attention(SystemVariant v) {
  return v == SystemVariant::kGmhaAdd || v == SystemVariant::kGmhaCat ||
         v == SystemVariant::kLmhaAdd || v == SystemVariant::kLmhaCat;
}

bool variant_uses_band(SystemVariant v) {
  return v == SystemVariant::kLmhaAdd || v == SystemVariant::kLmhaCat;
}

bool variant_uses_cat(SystemVariant v) {
  return v == SystemVariant::kGmhaCat || v == SystemVariant::kLmhaCat;
}

ModelConfig ModelConfig::from(const RunConfig& rc) {
  ModelConfig c;
  c.d_feat = rc.d_feat;
  c.phoneme_vocab = rc.phoneme_vocab;
  c.word_vocab = rc.word_vocab;
  c.num_topics = rc.num_topics;
  c.a2p_hidden = rc.a2p_hidden;
  c.a2p_layers = rc.a2p_layers;
  c.p2w_hidden = rc.p2w_hidden;
  c.p2w_layers = rc.p2w_layers;
  c.head_hidden = rc.head_hidden;
  c.num_heads = rc.num_heads;
  c.window = rc.window;
  c.max_len = rc.max_len;
  c.a2p_dropout = rc.a2p_dropout;
  c.p2w_dropout = rc.p2w_dropout;
  c.head_dropout = rc.head_dropout;
  c.a2p_lr = rc.a2p_lr;
  c.p2w_lr = rc.p2w_lr;
  c.attention_lr = rc.attention_lr;
  c.head_lr = rc.head_lr;
  c.a2p_epochs = rc.a2p_epochs;
  c.p2w_epochs = rc.p2w_epochs;
  c.fusion_epochs = rc.fusion_epochs;
  c.batch_size = rc.batch_size;
  c.model_seed = rc.model_seed;
  c.train_seed = rc.train_seed;
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1)
      throw std::invalid_argument(std::string("config: ") + name +
                                  " must be positive");
  };
  positive(d_feat, "d_feat");
  positive(phoneme_vocab - 1, "phoneme_vocab-1");
  positive(word_vocab - 1, "word_vocab-1");
  positive(num_topics, "num_topics");
  positive(a2p_hidden, "a2p_hidden");
  positive(a2p_layers, "a2p_layers");
  positive(p2w_hidden, "p2w_hidden");
  positive(p2w_layers, "p2w_layers");
  positive(head_hidden, "head_hidden");
  positive(num_heads, "num_heads");
  positive(max_len, "max_len");
  positive(batch_size, "batch_size");
  if (window < 0) throw std::invalid_argument("config: window must be >= 0");
  if (d_daf() != d_dlf())
    throw std::invalid_argument(
        "config: attention needs d_daf == d_dlf (a2p_hidden == p2w_hidden)");
  if (d_model() % num_heads != 0)
    throw std::invalid_argument("config: d_model " +
                                std::to_string(d_model()) +
                                " not divisible by num_heads " +
                                std::to_string(num_heads));
}

A2pModel A2pModel::create(const ModelConfig& cfg, std::mt19937_64& rng) {
  A2pModel m;
  m.dropout_rate = cfg.a2p_dropout;
  // stand-in for an acoustic front-end: one linear projection
  m.proj_w = init_uniform({cfg.d_feat, cfg.a2p_hidden}, cfg.d_feat, rng);
  m.proj_b = Tensor::zeros({cfg.a2p_hidden}, true);
  int in_dim = cfg.a2p_hidden;
  for (int i = 0; i < cfg.a2p_layers; ++i) {
    m.layers.push_back(LstmLayer::create(in_dim, cfg.a2p_hidden, rng));
    in_dim = 2 * cfg.a2p_hidden;
  }
  m.cls_w = init_uniform({cfg.d_daf(), cfg.phoneme_vocab}, cfg.d_daf(), rng);
  m.cls_b = Tensor::zeros({cfg.phoneme_vocab}, true);
  return m;
}

std::vector<NamedTensor> A2pModel::parameters() {
  std::vector<NamedTensor> out = {{"a2p.proj.w", proj_w},
                                  {"a2p.proj.b", proj_b}};
  for (size_t i = 0; i < layers.size(); ++i) {
    auto lp = layers[i].parameters("a2p.lstm" + std::to_string(i));
    out.insert(out.end(), lp.begin(), lp.end());
  }
  out.push_back({"a2p.cls.w", cls_w});
  out.push_back({"a2p.cls.b", cls_b});
  return out;
}

std::pair<Tensor, Tensor> A2pModel::forward(Tape* tape, const Tensor& frames,
                                            bool training,
                                            std::uint64_t seed) {
  if (frames.rank() != 2 || frames.dim(1) != proj_w.dim(0))
    throw std::invalid_argument("a2p_forward: frames " + frames.shape_str() +
                                " do not match d_feat " +
                                std::to_string(proj_w.dim(0)));
  Tensor x = ops::linear(tape, frames, proj_w, proj_b);
  Tensor daf = bilstm_forward(tape, x, layers, dropout_rate, training, seed);
  Tensor logits = ops::linear(tape, daf, cls_w, cls_b);
  return {daf, logits};
}

P2wModel P2wModel::create(const ModelConfig& cfg, std::mt19937_64& rng) {
  P2wModel m;
  m.dropout_rate = cfg.p2w_dropout;
  int in_dim = cfg.d_daf();
  for (int i = 0; i < cfg.p2w_layers; ++i) {
    m.layers.push_back(LstmLayer::create(in_dim, cfg.p2w_hidden, rng));
    in_dim = 2 * cfg.p2w_hidden;
  }
  m.cls_w = init_uniform({cfg.d_dlf(), cfg.word_vocab}, cfg.d_dlf(), rng);
  m.cls_b = Tensor::zeros({cfg.word_vocab}, true);
  return m;
}

std::vector<NamedTensor> P2wModel::parameters() {
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    auto lp = layers[i].parameters("p2w.lstm" + std::to_string(i));
    out.insert(out.end(), lp.begin(), lp.end());
  }
  out.push_back({"p2w.cls.w", cls_w});
  out.push_back({"p2w.cls.b", cls_b});
  return out;
}

std::pair<Tensor, Tensor> P2wModel::forward(Tape* tape, const Tensor& daf,
                                            bool training,
                                            std::uint64_t seed) {
  if (daf.rank() != 2 || daf.dim(0) < 1)
    throw std::invalid_argument("p2w_forward: empty input");
  Tensor dlf = bilstm_forward(tape, daf, layers, dropout_rate, training, seed);
  Tensor logits = ops::linear(tape, dlf, cls_w, cls_b);
  return {dlf, logits};
}

TopicHead TopicHead::create(int input_dim, int hidden, int num_topics,
                            double dropout, std::mt19937_64& rng) {
  TopicHead h;
  h.dropout_rate = dropout;
  h.lstm = LstmLayer::create(input_dim, hidden, rng);
  h.fc_w = init_uniform({2 * hidden, num_topics}, 2 * hidden, rng);
  h.fc_b = Tensor::zeros({num_topics}, true);
  return h;
}

std::vector<NamedTensor> TopicHead::parameters(const std::string& prefix) {
  auto out = lstm.parameters(prefix + ".lstm");
  out.push_back({prefix + ".fc.w", fc_w});
  out.push_back({prefix + ".fc.b", fc_b});
  return out;
}

Tensor TopicHead::forward(Tape* tape, const Tensor& seq,
                          const std::vector<std::uint8_t>& pad_mask,
                          bool training, std::uint64_t seed) {
  // LstmLayer holds shared tensor handles, so this copy trains in place.
  std::vector<LstmLayer> stack{lstm};
  Tensor hidden =
      bilstm_forward(tape, seq, stack, dropout_rate, training, seed);
  Tensor pooled = ops::maxpool_rows(tape, hidden, pad_mask);
  return ops::log_softmax(tape, ops::vec_linear(tape, pooled, fc_w, fc_b));
}

FeaturePair pad_or_truncate(const FeaturePair& pair, int n) {
  if (n < 1) throw std::invalid_argument("pad_or_truncate: n must be >= 1");
  const int t = pair.daf.dim(0);
  const int d_daf = pair.daf.dim(1);
  const int d_dlf = pair.dlf.dim(1);
  FeaturePair out;
  out.daf = Tensor::zeros({n, d_daf});
  out.dlf = Tensor::zeros({n, d_dlf});
  out.pad_mask.assign(static_cast<size_t>(n), 0);
  const int keep = std::min(t, n);
  for (int i = 0; i < keep; ++i) {
    for (int j = 0; j < d_daf; ++j) out.daf.at(i, j) = pair.daf.at(i, j);
    for (int j = 0; j < d_dlf; ++j) out.dlf.at(i, j) = pair.dlf.at(i, j);
    out.pad_mask[static_cast<size_t>(i)] = 1;
  }
  return out;
}

FusionModel FusionModel::create(SystemVariant variant, const ModelConfig& cfg,
                                std::mt19937_64& rng) {
  FusionModel m;
  m.variant = variant;
  m.window = cfg.window;
  m.head_dropout = cfg.head_dropout;
  switch (variant) {
    case SystemVariant::kDafsOnly:
      m.head = TopicHead::create(cfg.d_daf(), cfg.head_hidden, cfg.num_topics,
                                 cfg.head_dropout, rng);
      break;
    case SystemVariant::kDlfsOnly:
      m.head = TopicHead::create(cfg.d_dlf(), cfg.head_hidden, cfg.num_topics,
                                 cfg.head_dropout, rng);
      break;
    case SystemVariant::kConcFusion:
      m.enc_daf = LstmLayer::create(cfg.d_daf(), cfg.head_hidden, rng);
      m.enc_dlf = LstmLayer::create(cfg.d_dlf(), cfg.head_hidden, rng);
      m.conc_w = init_uniform({4 * cfg.head_hidden, cfg.num_topics},
                              4 * cfg.head_hidden, rng);
      m.conc_b = Tensor::zeros({cfg.num_topics}, true);
      break;
    default:
      m.mha = MhaParams::create(cfg.num_heads, cfg.d_model(), rng);
      m.ln_gain = Tensor::from(
          {variant_uses_cat(variant) ? 2 * cfg.d_model() : cfg.d_model()},
          std::vector<double>(
              static_cast<size_t>(variant_uses_cat(variant) ? 2 * cfg.d_model()
                                                            : cfg.d_model()),
              1.0),
          true);
      m.ln_bias = Tensor::zeros({m.ln_gain.dim(0)}, true);
      m.head = TopicHead::create(m.ln_gain.dim(0), cfg.head_hidden,
                                 cfg.num_topics, cfg.head_dropout, rng);
      break;
  }
  return m;
}

Tensor FusionModel::forward(Tape* tape, const FeaturePair& pair, bool training,
                            std::uint64_t seed) {
  const std::vector<std::uint8_t>& keep = pair.pad_mask;
  switch (variant) {
    case SystemVariant::kDafsOnly:
      return head.forward(tape, pair.daf, keep, training, seed);
    case SystemVariant::kDlfsOnly:
      return head.forward(tape, pair.dlf, keep, training, seed);
    case SystemVariant::kConcFusion: {
      std::vector<LstmLayer> daf_enc{enc_daf};
      std::vector<LstmLayer> dlf_enc{enc_dlf};
      Tensor hd = bilstm_forward(tape, pair.daf, daf_enc, 0.0, false, 0);
      Tensor hl = bilstm_forward(tape, pair.dlf, dlf_enc, 0.0, false, 0);
      Tensor pooled = ops::concat_vec(
          tape, {ops::maxpool_rows(tape, hd, keep),
                 ops::maxpool_rows(tape, hl, keep)});
      return ops::log_softmax(tape,
                              ops::vec_linear(tape, pooled, conc_w, conc_b));
    }
    default: {
      const BoolMatrix mask =
          attention_mask(variant, pair.daf.dim(0), window, keep);
      Tensor attn = mha_forward(tape, pair.daf, pair.dlf, mha, &mask);
      Tensor fused = variant_uses_cat(variant)
                         ? fuse_concat(tape, pair.daf, attn)
                         : fuse_add(tape, pair.daf, attn);
      fused = ops::layer_norm(tape, fused, ln_gain, ln_bias);
      return head.forward(tape, fused, keep, training, seed);
    }
  }
}

std::vector<NamedTensor> FusionModel::attention_parameters() {
  if (!variant_uses_attention(variant)) return {};
  auto out = mha.parameters("fusion.mha");
  out.push_back({"fusion.ln.gain", ln_gain});
  out.push_back({"fusion.ln.bias", ln_bias});
  return out;
}

std::vector<NamedTensor> FusionModel::head_parameters() {
  if (variant == SystemVariant::kConcFusion) {
    auto out = enc_daf.parameters("fusion.enc_daf");
    auto more = enc_dlf.parameters("fusion.enc_dlf");
    out.insert(out.end(), more.begin(), more.end());
    out.push_back({"fusion.conc.w", conc_w});
    out.push_back({"fusion.conc.b", conc_b});
    return out;
  }
  return head.parameters("fusion.head");
}

std::vector<NamedTensor> FusionModel::parameters() {
  auto out = attention_parameters();
  auto more = head_parameters();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

Pipeline Pipeline::create(const ModelConfig& cfg) {
  cfg.validate();
  Pipeline p;
  p.cfg = cfg;
  std::mt19937_64 rng(cfg.model_seed);
  p.a2p = A2pModel::create(cfg, rng);
  p.p2w = P2wModel::create(cfg, rng);
  return p;
}

std::pair<Tensor, Tensor> Pipeline::a2p_forward(const Tensor& frames) {
  return a2p.forward(nullptr, frames, /*training=*/false, 0);
}

std::pair<Tensor, std::vector<int>> Pipeline::extract_daf_filtered(
    const Tensor& frames) {
  auto [daf_full, logits] = a2p_forward(frames);
  const std::vector<int> greedy = ctc::per_frame_argmax(logits);
  std::vector<int> kept;
  for (int t = 0; t < static_cast<int>(greedy.size()); ++t)
    if (greedy[static_cast<size_t>(t)] != ctc::kBlank) kept.push_back(t);
  if (kept.empty())
    throw EmptyDocumentError("all frames decoded as blank; no DAFs to keep");
  const int d = daf_full.dim(1);
  Tensor daf = Tensor::zeros({static_cast<int>(kept.size()), d});
  for (size_t i = 0; i < kept.size(); ++i)
    for (int j = 0; j < d; ++j)
      daf.at(static_cast<int>(i), j) = daf_full.at(kept[i], j);
  return {daf, kept};
}

std::pair<Tensor, Tensor> Pipeline::p2w_forward(const Tensor& daf) {
  return p2w.forward(nullptr, daf, /*training=*/false, 0);
}

FeaturePair Pipeline::feature_pair(const Tensor& frames) {
  auto [daf, kept] = extract_daf_filtered(frames);
  auto [dlf, word_logits] = p2w_forward(daf);
  FeaturePair fp;
  fp.daf = daf;
  fp.dlf = dlf;
  fp.pad_mask = all_real(daf.dim(0));
  return fp;
}

int Pipeline::classify_document(const SpokenDocument& doc,
                                FusionModel& fusion) {
  FeaturePair fp = pad_or_truncate(feature_pair(doc.frames), cfg.max_len);
  Tensor logp = fusion.forward(nullptr, fp, /*training=*/false, 0);
  return argmax_class(logp);
}

int argmax_class(const Tensor& log_probs) {
  int best = 0;
  for (int k = 1; k < log_probs.dim(0); ++k)
    if (log_probs.at(k) > log_probs.at(best)) best = k;
  return best;
}

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& truths) {
  if (predictions.empty())
    throw std::invalid_argument("accuracy: empty prediction list");
  if (predictions.size() != truths.size())
    throw std::invalid_argument("accuracy: length mismatch");
  int correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == truths[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

namespace {

std::vector<size_t> epoch_order(size_t n, std::uint64_t seed, int epoch) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

TrainResult train_a2p(Pipeline& pipe, const std::vector<SpokenDocument>& train,
                      std::ostream& log) {
  const ModelConfig& cfg = pipe.cfg;
  Adam opt(pipe.a2p.parameters(), cfg.a2p_lr);
  TrainResult res;
  for (int epoch = 0; epoch < cfg.a2p_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.train_seed, epoch);
    double epoch_loss = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      Tape tape;
      std::vector<Tensor> losses;
      opt.zero_grad();
      for (int b = 0; b < cfg.batch_size && pos < order.size(); ++b, ++pos) {
        const SpokenDocument& doc = train[order[pos]];
        const std::uint64_t seed =
            mix(cfg.train_seed, mix(static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(order[pos])));
        auto [daf, logits] =
            pipe.a2p.forward(&tape, doc.frames, /*training=*/true, seed);
        losses.push_back(ctc::ctc_loss(&tape, logits, doc.phoneme_labels));
      }
      Tensor loss = ops::mean_scalars(&tape, losses);
      tape.backward(loss);
      opt.step();
      epoch_loss += loss.item() * static_cast<double>(losses.size());
    }
    epoch_loss /= static_cast<double>(train.size());
    res.epoch_losses.push_back(epoch_loss);
    log << "a2p epoch " << epoch + 1 << "/" << cfg.a2p_epochs
        << " ctc_loss=" << epoch_loss << "\n";
  }
  res.epochs = cfg.a2p_epochs;
  res.final_loss = res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back();
  return res;
}

TrainResult train_p2w(Pipeline& pipe, const std::vector<SpokenDocument>& train,
                      std::ostream& log) {
  const ModelConfig& cfg = pipe.cfg;
  TrainResult res;
  // DAFs come from the frozen, fully trained A2P; extract once.
  struct Item {
    Tensor daf;
    const SpokenDocument* doc;
  };
  std::vector<Item> items;
  for (const SpokenDocument& doc : train) {
    try {
      auto [daf, kept] = pipe.extract_daf_filtered(doc.frames);
      if (daf.dim(0) < ctc::required_length(doc.word_labels)) {
        log << "warning: skipping document, " << daf.dim(0)
            << " non-blank frames cannot align " << doc.word_labels.size()
            << " words\n";
        ++res.skipped_docs;
        continue;
      }
      items.push_back({daf, &doc});
    } catch (const EmptyDocumentError&) {
      log << "warning: skipping document with no non-blank frames\n";
      ++res.skipped_docs;
    }
  }
  if (items.empty()) throw std::runtime_error("p2w: no trainable documents");
  Adam opt(pipe.p2w.parameters(), cfg.p2w_lr);
  for (int epoch = 0; epoch < cfg.p2w_epochs; ++epoch) {
    const auto order = epoch_order(items.size(), mix(cfg.train_seed, 2), epoch);
    double epoch_loss = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      Tape tape;
      std::vector<Tensor> losses;
      opt.zero_grad();
      for (int b = 0; b < cfg.batch_size && pos < order.size(); ++b, ++pos) {
        const Item& item = items[order[pos]];
        const std::uint64_t seed =
            mix(mix(cfg.train_seed, 3), mix(static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(order[pos])));
        auto [dlf, logits] =
            pipe.p2w.forward(&tape, item.daf, /*training=*/true, seed);
        losses.push_back(ctc::ctc_loss(&tape, logits, item.doc->word_labels));
      }
      Tensor loss = ops::mean_scalars(&tape, losses);
      tape.backward(loss);
      opt.step();
      epoch_loss += loss.item() * static_cast<double>(losses.size());
    }
    epoch_loss /= static_cast<double>(items.size());
    res.epoch_losses.push_back(epoch_loss);
    log << "p2w epoch " << epoch + 1 << "/" << cfg.p2w_epochs
        << " ctc_loss=" << epoch_loss << "\n";
  }
  res.epochs = cfg.p2w_epochs;
  res.final_loss = res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back();
  return res;
}

TrainResult train_fusion(Pipeline& pipe, FusionModel& fusion,
                         const std::vector<SpokenDocument>& train,
                         const std::vector<SpokenDocument>& dev,
                         std::ostream& log) {
  const ModelConfig& cfg = pipe.cfg;
  TrainResult res;
  struct Item {
    FeaturePair pair;
    int topic;
  };
  std::vector<Item> items;
  for (const SpokenDocument& doc : train) {
    try {
      items.push_back({pad_or_truncate(pipe.feature_pair(doc.frames),
                                       cfg.max_len),
                       doc.topic});
    } catch (const EmptyDocumentError&) {
      log << "warning: skipping document with no non-blank frames\n";
      ++res.skipped_docs;
    }
  }
  if (items.empty()) throw std::runtime_error("fusion: no trainable documents");
  auto attn_params = fusion.attention_parameters();
  Adam head_opt(fusion.head_parameters(), cfg.head_lr);
  std::unique_ptr<Adam> attn_opt;
  if (!attn_params.empty())
    attn_opt = std::make_unique<Adam>(attn_params, cfg.attention_lr);
  for (int epoch = 0; epoch < cfg.fusion_epochs; ++epoch) {
    const auto order = epoch_order(items.size(), mix(cfg.train_seed, 5), epoch);
    double epoch_loss = 0;
    size_t pos = 0;
    while (pos < order.size()) {
      Tape tape;
      std::vector<Tensor> losses;
      head_opt.zero_grad();
      if (attn_opt) attn_opt->zero_grad();
      for (int b = 0; b < cfg.batch_size && pos < order.size(); ++b, ++pos) {
        Item& item = items[order[pos]];
        const std::uint64_t seed =
            mix(mix(cfg.train_seed, 7), mix(static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(order[pos])));
        Tensor logp =
            fusion.forward(&tape, item.pair, /*training=*/true, seed);
        losses.push_back(ops::nll(&tape, logp, item.topic));
      }
      Tensor loss = ops::mean_scalars(&tape, losses);
      tape.backward(loss);
      head_opt.step();
      if (attn_opt) attn_opt->step();
      epoch_loss += loss.item() * static_cast<double>(losses.size());
    }
    epoch_loss /= static_cast<double>(items.size());
    res.epoch_losses.push_back(epoch_loss);
    log << "fusion[" << to_string(fusion.variant) << "] epoch " << epoch + 1
        << "/" << cfg.fusion_epochs << " ce_loss=" << epoch_loss;
    if (!dev.empty()) {
      EvalResult er = evaluate(pipe, fusion, dev, log);
      res.dev_acc = er.acc;
      log << " dev_acc=" << er.acc;
    }
    log << "\n";
  }
  res.epochs = cfg.fusion_epochs;
  res.final_loss = res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back();
  return res;
}

EvalResult evaluate(Pipeline& pipe, FusionModel& fusion,
                    const std::vector<SpokenDocument>& docs,
                    std::ostream& log) {
  if (docs.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalResult res;
  res.confusion.assign(
      static_cast<size_t>(pipe.cfg.num_topics),
      std::vector<int>(static_cast<size_t>(pipe.cfg.num_topics), 0));
  for (const SpokenDocument& doc : docs) {
    try {
      const int pred = pipe.classify_document(doc, fusion);
      ++res.total;
      if (pred == doc.topic) ++res.correct;
      ++res.confusion[static_cast<size_t>(doc.topic)][static_cast<size_t>(pred)];
    } catch (const EmptyDocumentError&) {
      log << "warning: skipping document with no non-blank frames\n";
      ++res.skipped;
    }
  }
  if (res.total == 0) throw std::runtime_error("evaluate: no scorable documents");
  res.acc = static_cast<double>(res.correct) / static_cast<double>(res.total);
  return res;
}

}  // namespace sdtc
