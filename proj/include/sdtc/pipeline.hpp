#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdtc/attention.hpp"
#include "sdtc/config.hpp"
#include "sdtc/corpus.hpp"
#include "sdtc/lstm.hpp"
#include "sdtc/tensor.hpp"

namespace sdtc {

enum class SystemVariant {
  kDafsOnly,
  kDlfsOnly,
  kConcFusion,
  kGmhaAdd,
  kGmhaCat,
  kLmhaAdd,
  kLmhaCat,
};

SystemVariant variant_from_string(const std::string& s);
std::string to_string(SystemVariant v);
bool variant_uses_attention(SystemVariant v);
bool variant_uses_band(SystemVariant v);
bool variant_uses_cat(SystemVariant v);

// Aligned DAF/DLF sequences for one document (equal length by
// construction); pad_mask marks real frames after pad_or_truncate.
struct FeaturePair {
  Tensor daf;
  Tensor dlf;
  std::vector<std::uint8_t> pad_mask;  // 1 = real frame
};

struct ModelConfig {
  int d_feat = 16;
  int phoneme_vocab = 13;
  int word_vocab = 40;
  int num_topics = 8;
  int a2p_hidden = 32;
  int a2p_layers = 3;
  int p2w_hidden = 32;
  int p2w_layers = 2;
  int head_hidden = 32;
  int num_heads = 4;
  int window = 10;
  int max_len = 256;
  double a2p_dropout = 0.1;
  double p2w_dropout = 0.1;
  double head_dropout = 0.0;
  double a2p_lr = 1e-3;
  double p2w_lr = 1e-3;
  double attention_lr = 1e-4;
  double head_lr = 1e-3;
  int a2p_epochs = 10;
  int p2w_epochs = 10;
  int fusion_epochs = 20;
  int batch_size = 8;
  std::uint64_t model_seed = 7;
  std::uint64_t train_seed = 11;

  int d_daf() const { return 2 * a2p_hidden; }
  int d_dlf() const { return 2 * p2w_hidden; }
  int d_model() const { return d_daf(); }

  static ModelConfig from(const RunConfig& rc);
  void validate() const;
};

// Document produced no non-blank frames; skipped with a warning in batch
// mode, an error when classifying a single document.
struct EmptyDocumentError : std::runtime_error {
  explicit EmptyDocumentError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Acoustic-to-phoneme model: linear input projection, stacked biLSTM,
// linear phoneme classifier. The DAF sequence is the last biLSTM output.
struct A2pModel {
  Tensor proj_w, proj_b;
  std::vector<LstmLayer> layers;
  Tensor cls_w, cls_b;
  double dropout_rate = 0.0;

  static A2pModel create(const ModelConfig& cfg, std::mt19937_64& rng);
  std::vector<NamedTensor> parameters();
  // -> (daf_full [T×d_daf], phoneme_logits [T×phoneme_vocab])
  std::pair<Tensor, Tensor> forward(Tape* tape, const Tensor& frames,
                                    bool training, std::uint64_t seed);
};

// Phoneme-to-word model over filtered DAFs; DLFs keep all input frames.
struct P2wModel {
  std::vector<LstmLayer> layers;
  Tensor cls_w, cls_b;
  double dropout_rate = 0.0;

  static P2wModel create(const ModelConfig& cfg, std::mt19937_64& rng);
  std::vector<NamedTensor> parameters();
  // -> (dlf [T'×d_dlf], word_logits [T'×word_vocab])
  std::pair<Tensor, Tensor> forward(Tape* tape, const Tensor& daf,
                                    bool training, std::uint64_t seed);
};

// 1-layer biLSTM, max pool over real frames, fully connected, log-softmax.
struct TopicHead {
  LstmLayer lstm;
  Tensor fc_w, fc_b;
  double dropout_rate = 0.0;

  static TopicHead create(int input_dim, int hidden, int num_topics,
                          double dropout, std::mt19937_64& rng);
  std::vector<NamedTensor> parameters(const std::string& prefix);
  Tensor forward(Tape* tape, const Tensor& seq,
                 const std::vector<std::uint8_t>& pad_mask, bool training,
                 std::uint64_t seed);
};

// Fusion stage for one system variant: attention + fusion + layer norm +
// topic head, or the attention-free contrastive routes.
struct FusionModel {
  SystemVariant variant = SystemVariant::kLmhaAdd;
  int window = 10;
  // attention route
  MhaParams mha;
  Tensor ln_gain, ln_bias;
  TopicHead head;
  // CONC route: two sequence encoders, pooled vectors concatenated
  LstmLayer enc_daf, enc_dlf;
  Tensor conc_w, conc_b;
  double head_dropout = 0.0;

  static FusionModel create(SystemVariant variant, const ModelConfig& cfg,
                            std::mt19937_64& rng);
  Tensor forward(Tape* tape, const FeaturePair& pair, bool training,
                 std::uint64_t seed);
  // jointly trained, but with separate learning rates
  std::vector<NamedTensor> attention_parameters();
  std::vector<NamedTensor> head_parameters();
  std::vector<NamedTensor> parameters();
};

FeaturePair pad_or_truncate(const FeaturePair& pair, int n);

// Frozen A2P + P2W feature extraction plus document classification.
struct Pipeline {
  ModelConfig cfg;
  A2pModel a2p;
  P2wModel p2w;

  static Pipeline create(const ModelConfig& cfg);

  // Inference-mode A2P pass (dropout off).
  std::pair<Tensor, Tensor> a2p_forward(const Tensor& frames);
  // Keeps frames greedily decoded non-blank; throws EmptyDocumentError
  // when every frame decodes to blank.
  std::pair<Tensor, std::vector<int>> extract_daf_filtered(
      const Tensor& frames);
  std::pair<Tensor, Tensor> p2w_forward(const Tensor& daf);
  // Unpadded aligned features for one document.
  FeaturePair feature_pair(const Tensor& frames);
  int classify_document(const SpokenDocument& doc, FusionModel& fusion);
};

int argmax_class(const Tensor& log_probs);

struct TrainResult {
  long epochs = 0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
  double dev_acc = -1.0;
  int skipped_docs = 0;
};

TrainResult train_a2p(Pipeline& pipe, const std::vector<SpokenDocument>& train,
                      std::ostream& log);
TrainResult train_p2w(Pipeline& pipe, const std::vector<SpokenDocument>& train,
                      std::ostream& log);
TrainResult train_fusion(Pipeline& pipe, FusionModel& fusion,
                         const std::vector<SpokenDocument>& train,
                         const std::vector<SpokenDocument>& dev,
                         std::ostream& log);

struct EvalResult {
  double acc = 0.0;
  int total = 0;
  int correct = 0;
  int skipped = 0;
  std::vector<std::vector<int>> confusion;  // [truth][pred]
};

EvalResult evaluate(Pipeline& pipe, FusionModel& fusion,
                    const std::vector<SpokenDocument>& docs,
                    std::ostream& log);

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& truths);

}  // namespace sdtc
