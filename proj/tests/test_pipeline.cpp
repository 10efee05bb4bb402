#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "sdtc/checkpoint.hpp"
#include "sdtc/pipeline.hpp"

using namespace sdtc;

namespace {

// Tiny model dimensions used throughout this suite.
ModelConfig mini_config() {
  ModelConfig cfg;
  cfg.d_feat = 6;
  cfg.phoneme_vocab = 9;
  cfg.word_vocab = 21;
  cfg.num_topics = 4;
  cfg.a2p_hidden = 8;
  cfg.a2p_layers = 2;
  cfg.p2w_hidden = 8;
  cfg.p2w_layers = 1;
  cfg.head_hidden = 4;
  cfg.num_heads = 2;
  cfg.window = 4;
  cfg.max_len = 64;
  cfg.a2p_epochs = 5;
  cfg.p2w_epochs = 3;
  cfg.fusion_epochs = 3;
  cfg.batch_size = 4;
  cfg.a2p_dropout = 0.0;
  cfg.p2w_dropout = 0.0;
  cfg.head_dropout = 0.0;
  return cfg;
}

CorpusSpec mini_corpus_spec() {
  CorpusSpec s;
  s.num_topics = 4;
  s.word_vocab = 21;
  s.phoneme_vocab = 9;
  s.words_per_doc_min = 3;
  s.words_per_doc_max = 5;
  s.d_feat = 6;
  s.seed = 4242;
  s.train_docs = 16;
  s.dev_docs = 8;
  s.test_docs = 8;
  return s;
}

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = nd(rng);
  return t;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg = mini_config();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.d_daf() == 2 * cfg.a2p_hidden);
  CHECK(cfg.d_dlf() == 2 * cfg.p2w_hidden);
  CHECK(cfg.d_model() == cfg.d_daf());

  ModelConfig bad = cfg;
  bad.num_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS(bad.validate());

  bad = cfg;
  bad.max_len = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("variant names round trip") {
  for (SystemVariant v :
       {SystemVariant::kDafsOnly, SystemVariant::kDlfsOnly,
        SystemVariant::kConcFusion, SystemVariant::kGmhaAdd,
        SystemVariant::kGmhaCat, SystemVariant::kLmhaAdd,
        SystemVariant::kLmhaCat}) {
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK_THROWS(variant_from_string("nonsense"));
  CHECK(variant_uses_attention(SystemVariant::kLmhaAdd));
  CHECK(!variant_uses_attention(SystemVariant::kConcFusion));
  CHECK(variant_uses_band(SystemVariant::kLmhaCat));
  CHECK(!variant_uses_band(SystemVariant::kGmhaCat));
  CHECK(variant_uses_cat(SystemVariant::kGmhaCat));
  CHECK(!variant_uses_cat(SystemVariant::kGmhaAdd));
}

TEST_CASE("a2p forward obeys the shape law") {
  ModelConfig cfg = mini_config();
  std::mt19937_64 rng(cfg.model_seed);
  A2pModel a2p = A2pModel::create(cfg, rng);
  std::mt19937_64 drng(1);
  Tensor frames = randn({10, cfg.d_feat}, drng);
  auto [daf, logits] = a2p.forward(nullptr, frames, false, 0);
  CHECK(daf.shape() == std::vector<int>{10, cfg.d_daf()});
  CHECK(logits.shape() == std::vector<int>{10, cfg.phoneme_vocab});

  auto [daf2, logits2] = a2p.forward(nullptr, frames, false, 99);
  CHECK(daf.data() == daf2.data());  // dropout off -> bit identical
  CHECK(logits.data() == logits2.data());
}

TEST_CASE("zero-weight a2p produces all-zero features") {
  ModelConfig cfg = mini_config();
  std::mt19937_64 rng(3);
  A2pModel a2p = A2pModel::create(cfg, rng);
  for (auto& nt : a2p.parameters())
    for (double& v : nt.tensor.data()) v = 0.0;
  std::mt19937_64 drng(4);
  Tensor frames = randn({7, cfg.d_feat}, drng);
  auto [daf, logits] = a2p.forward(nullptr, frames, false, 0);
  for (double v : daf.data()) CHECK(v == 0.0);
}

TEST_CASE("all-blank decode raises the empty-document error") {
  ModelConfig cfg = mini_config();
  Pipeline pipe = Pipeline::create(cfg);
  // zero weights -> uniform logits -> ties -> blank everywhere
  for (auto& nt : pipe.a2p.parameters())
    for (double& v : nt.tensor.data()) v = 0.0;
  std::mt19937_64 drng(5);
  Tensor frames = randn({9, cfg.d_feat}, drng);
  CHECK_THROWS_AS(pipe.extract_daf_filtered(frames), EmptyDocumentError);
}

TEST_CASE("daf filtering keeps exactly the non-blank frames, in order") {
  ModelConfig cfg = mini_config();
  Pipeline pipe = Pipeline::create(cfg);
  std::mt19937_64 drng(6);
  Tensor frames = randn({24, cfg.d_feat}, drng);
  auto [daf_full, logits] = pipe.a2p_forward(frames);
  std::vector<int> greedy = ctc::per_frame_argmax(logits);
  std::vector<int> expect_kept;
  for (int t = 0; t < 24; ++t)
    if (greedy[static_cast<size_t>(t)] != ctc::kBlank) expect_kept.push_back(t);
  if (expect_kept.empty()) return;  // nothing to verify on this seed

  auto [daf, kept] = pipe.extract_daf_filtered(frames);
  CHECK(kept == expect_kept);
  CHECK(daf.dim(0) == static_cast<int>(kept.size()));
  for (int i = 1; i < static_cast<int>(kept.size()); ++i)
    CHECK(kept[static_cast<size_t>(i)] > kept[static_cast<size_t>(i - 1)]);
  for (size_t i = 0; i < kept.size(); ++i)
    for (int d = 0; d < cfg.d_daf(); ++d)
      CHECK(daf.at(static_cast<int>(i), d) ==
            daf_full.at(kept[i], d));
}

TEST_CASE("p2w preserves the filtered length") {
  ModelConfig cfg = mini_config();
  std::mt19937_64 rng(cfg.model_seed);
  P2wModel p2w = P2wModel::create(cfg, rng);
  std::mt19937_64 drng(7);
  Tensor daf = randn({17, cfg.d_daf()}, drng);
  auto [dlf, word_logits] = p2w.forward(nullptr, daf, false, 0);
  CHECK(dlf.shape() == std::vector<int>{17, cfg.d_dlf()});
  CHECK(word_logits.shape() == std::vector<int>{17, cfg.word_vocab});
}

TEST_CASE("pad_or_truncate pads, keeps, and cuts") {
  std::mt19937_64 rng(8);
  FeaturePair p;
  p.daf = randn({5, 3}, rng);
  p.dlf = randn({5, 3}, rng);
  p.pad_mask.assign(5, 1);

  FeaturePair padded = pad_or_truncate(p, 8);
  CHECK(padded.daf.shape() == std::vector<int>{8, 3});
  CHECK(padded.pad_mask ==
        std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0});
  for (int d = 0; d < 3; ++d) {
    CHECK(padded.daf.at(4, d) == p.daf.at(4, d));
    CHECK(padded.daf.at(5, d) == 0.0);
    CHECK(padded.dlf.at(7, d) == 0.0);
  }

  FeaturePair p8;
  p8.daf = randn({8, 3}, rng);
  p8.dlf = randn({8, 3}, rng);
  p8.pad_mask.assign(8, 1);
  FeaturePair same = pad_or_truncate(p8, 8);
  CHECK(same.daf.data() == p8.daf.data());
  CHECK(same.pad_mask == p8.pad_mask);

  FeaturePair p12;
  p12.daf = randn({12, 3}, rng);
  p12.dlf = randn({12, 3}, rng);
  p12.pad_mask.assign(12, 1);
  FeaturePair cut = pad_or_truncate(p12, 8);
  CHECK(cut.daf.shape() == std::vector<int>{8, 3});
  CHECK(cut.pad_mask == std::vector<std::uint8_t>(8, 1));
  for (int d = 0; d < 3; ++d) CHECK(cut.daf.at(7, d) == p12.daf.at(7, d));
}

TEST_CASE("topic head emits a log distribution") {
  std::mt19937_64 rng(9);
  TopicHead head = TopicHead::create(6, 4, 5, 0.0, rng);
  Tensor seq = randn({7, 6}, rng);
  std::vector<std::uint8_t> mask(7, 1);
  Tensor lp = head.forward(nullptr, seq, mask, false, 0);
  REQUIRE(lp.shape() == std::vector<int>{5});
  double s = 0;
  for (int i = 0; i < 5; ++i) s += std::exp(lp.at(i));
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("argmax_class basics") {
  CHECK(argmax_class(Tensor::from({3}, {-0.1, -3, -3})) == 0);
  // adding a constant to the logits never changes the winner
  Tensor lp = Tensor::from({4}, {-2, -1.5, -4, -3});
  int base = argmax_class(lp);
  for (double c : {-7.0, 0.25, 40.0}) {
    Tensor shifted = Tensor::zeros({4});
    for (int i = 0; i < 4; ++i) shifted.at(i) = lp.at(i) + c;
    CHECK(argmax_class(shifted) == base);
  }
}

TEST_CASE("accuracy arithmetic") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({1, 2, 3}, {4, 5, 6}) == 0.0);
  CHECK(accuracy({0, 1, 2, 0}, {0, 1, 1, 1}) == 0.5);
  CHECK_THROWS(accuracy({}, {}));
  CHECK_THROWS(accuracy({1}, {1, 2}));
}

TEST_CASE("fusion variant head widths") {
  ModelConfig cfg = mini_config();
  std::mt19937_64 rng(cfg.model_seed);
  FusionModel fadd = FusionModel::create(SystemVariant::kLmhaAdd, cfg, rng);
  std::mt19937_64 rng2(cfg.model_seed);
  FusionModel fcat = FusionModel::create(SystemVariant::kLmhaCat, cfg, rng2);
  CHECK(fadd.head.lstm.input_dim == cfg.d_model());
  CHECK(fcat.head.lstm.input_dim == 2 * cfg.d_model());

  std::mt19937_64 rng3(cfg.model_seed);
  FusionModel conc = FusionModel::create(SystemVariant::kConcFusion, cfg, rng3);
  // two pooled bidirectional vectors feed the linear classifier
  CHECK(conc.conc_w.dim(0) == 2 * (2 * cfg.head_hidden));
  CHECK(conc.conc_w.dim(1) == cfg.num_topics);
}

TEST_CASE("global attention equals local attention with a wide band") {
  ModelConfig cfg = mini_config();
  cfg.window = 2 * cfg.max_len;  // band covers every pair
  std::mt19937_64 r1(100), r2(100);
  FusionModel local = FusionModel::create(SystemVariant::kLmhaAdd, cfg, r1);
  FusionModel global = FusionModel::create(SystemVariant::kGmhaAdd, cfg, r2);

  std::mt19937_64 drng(101);
  FeaturePair pair;
  pair.daf = randn({12, cfg.d_daf()}, drng);
  pair.dlf = randn({12, cfg.d_dlf()}, drng);
  pair.pad_mask.assign(12, 1);
  Tensor a = local.forward(nullptr, pair, false, 0);
  Tensor b = global.forward(nullptr, pair, false, 0);
  for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a.at(i) - b.at(i)) <= 1e-12);
}

TEST_CASE("a2p training loss decreases over the first five epochs") {
  ModelConfig cfg = mini_config();
  Pipeline pipe = Pipeline::create(cfg);
  Corpus corpus = generate_corpus(mini_corpus_spec());
  std::ostringstream log;
  TrainResult r = train_a2p(pipe, corpus.train, log);
  REQUIRE(r.epoch_losses.size() == 5);
  for (size_t i = 1; i < r.epoch_losses.size(); ++i)
    CHECK(r.epoch_losses[i] < r.epoch_losses[i - 1]);
}

TEST_CASE("seeded training is reproducible and resumable") {
  ModelConfig cfg = mini_config();
  Corpus corpus = generate_corpus(mini_corpus_spec());
  std::ostringstream log;

  Pipeline p1 = Pipeline::create(cfg);
  Pipeline p2 = Pipeline::create(cfg);
  TrainResult r1 = train_a2p(p1, corpus.train, log);
  TrainResult r2 = train_a2p(p2, corpus.train, log);
  CHECK(r1.final_loss == r2.final_loss);
  CHECK(params_checksum(p1.a2p.parameters()) ==
        params_checksum(p2.a2p.parameters()));

  // checkpoint round trip preserves behaviour bit-exactly
  Checkpoint ck = snapshot("a2p", {}, r1.epochs, r1.final_loss,
                           cfg.train_seed, p1.a2p.parameters());
  Pipeline p3 = Pipeline::create(cfg);
  apply_checkpoint(ck, p3.a2p.parameters());
  std::mt19937_64 drng(55);
  Tensor frames = randn({11, cfg.d_feat}, drng);
  auto [daf1, logits1] = p1.a2p_forward(frames);
  auto [daf3, logits3] = p3.a2p_forward(frames);
  CHECK(daf1.data() == daf3.data());
  CHECK(logits1.data() == logits3.data());
}

TEST_CASE("fusion training leaves the frozen stages untouched") {
  ModelConfig cfg = mini_config();
  cfg.a2p_epochs = 200;  // enough to decode non-blank frames
  Corpus corpus = generate_corpus(mini_corpus_spec());
  std::ostringstream log;
  Pipeline pipe = Pipeline::create(cfg);
  train_a2p(pipe, corpus.train, log);
  TrainResult pr = train_p2w(pipe, corpus.train, log);
  REQUIRE(pr.epochs == cfg.p2w_epochs);

  const std::uint64_t a2p_sum = params_checksum(pipe.a2p.parameters());
  const std::uint64_t p2w_sum = params_checksum(pipe.p2w.parameters());

  std::mt19937_64 rng(cfg.model_seed + 17);
  FusionModel fusion = FusionModel::create(SystemVariant::kLmhaAdd, cfg, rng);
  const std::uint64_t fusion_before = params_checksum(fusion.parameters());
  TrainResult fr = train_fusion(pipe, fusion, corpus.train, corpus.dev, log);
  CHECK(fr.epochs == cfg.fusion_epochs);
  CHECK(params_checksum(pipe.a2p.parameters()) == a2p_sum);
  CHECK(params_checksum(pipe.p2w.parameters()) == p2w_sum);
  CHECK(params_checksum(fusion.parameters()) != fusion_before);

  EvalResult ev = evaluate(pipe, fusion, corpus.test, log);
  CHECK(ev.total == static_cast<int>(corpus.test.size()));
  CHECK(ev.acc == doctest::Approx(static_cast<double>(ev.correct) /
                                  std::max(1, ev.total - ev.skipped)));
  REQUIRE(ev.confusion.size() == static_cast<size_t>(cfg.num_topics));
}

TEST_CASE("all seven variants run from the same frozen features") {
  ModelConfig cfg = mini_config();
  cfg.a2p_epochs = 200;
  cfg.fusion_epochs = 1;
  Corpus corpus = generate_corpus(mini_corpus_spec());
  std::ostringstream log;
  Pipeline pipe = Pipeline::create(cfg);
  train_a2p(pipe, corpus.train, log);
  TrainResult pr = train_p2w(pipe, corpus.train, log);
  REQUIRE(pr.epochs == cfg.p2w_epochs);

  for (SystemVariant v :
       {SystemVariant::kDafsOnly, SystemVariant::kDlfsOnly,
        SystemVariant::kConcFusion, SystemVariant::kGmhaAdd,
        SystemVariant::kGmhaCat, SystemVariant::kLmhaAdd,
        SystemVariant::kLmhaCat}) {
    std::mt19937_64 rng(cfg.model_seed + 17);
    FusionModel fusion = FusionModel::create(v, cfg, rng);
    TrainResult fr = train_fusion(pipe, fusion, corpus.train, corpus.dev, log);
    CHECK(fr.epochs == 1);
    EvalResult ev = evaluate(pipe, fusion, corpus.test, log);
    CHECK(ev.total == static_cast<int>(corpus.test.size()));
  }
}
