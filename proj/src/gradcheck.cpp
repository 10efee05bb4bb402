#include "sdtc/gradcheck.hpp"

#include <cmath>
#include <random>

#include "sdtc/attention.hpp"
#include "sdtc/ctc.hpp"
#include "sdtc/lstm.hpp"
#include "sdtc/ops.hpp"
#include "sdtc/pipeline.hpp"

namespace sdtc {

double finite_diff_check(const std::function<Tensor(Tape*)>& forward,
                         const std::vector<Tensor>& wrt, double step) {
  Tape tape;
  Tensor loss = forward(&tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) analytic.push_back(t.grad());
  double max_rel = 0.0;
  for (size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k];
    for (int i = 0; i < t.size(); ++i) {
      const double saved = t.at(i);
      t.at(i) = saved + step;
      const double up = forward(nullptr).item();
      t.at(i) = saved - step;
      const double down = forward(nullptr).item();
      t.at(i) = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][static_cast<size_t>(i)];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (int i = 0; i < t.size(); ++i) t.at(i) = n(rng);
  return t;
}

std::vector<double> rand_coeffs(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> c(static_cast<size_t>(n));
  for (double& v : c) v = d(rng);
  return c;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& params) {
  std::vector<Tensor> out;
  for (const NamedTensor& p : params) out.push_back(p.tensor);
  return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(seed);

  {
    Tensor a = randn({3, 4}, rng), b = randn({4, 2}, rng);
    const auto c = rand_coeffs(6, rng);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, ops::matmul(t, a, b), c);
    };
    results.push_back({"matmul", finite_diff_check(fwd, {a, b})});
  }
  {
    Tensor x = randn({3, 5}, rng);
    std::vector<std::uint8_t> mask(15, 1);
    mask[1] = mask[7] = mask[13] = mask[14] = 0;
    const auto c = rand_coeffs(15, rng);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, ops::softmax(t, x, &mask), c);
    };
    results.push_back({"softmax", finite_diff_check(fwd, {x})});
  }
  {
    Tensor x = randn({4, 6}, rng);
    Tensor gain = randn({6}, rng, 0.5);
    Tensor bias = randn({6}, rng, 0.5);
    const auto c = rand_coeffs(24, rng);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, ops::layer_norm(t, x, gain, bias), c);
    };
    results.push_back(
        {"layer_norm", finite_diff_check(fwd, {x, gain, bias})});
  }
  {
    // single time step exercises the cell equations in isolation
    std::vector<LstmLayer> layers{LstmLayer::create(3, 3, rng)};
    Tensor x = randn({1, 3}, rng);
    const auto c = rand_coeffs(6, rng);
    auto wrt = tensors_of(layers[0].parameters("l"));
    wrt.push_back(x);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, bilstm_forward(t, x, layers, 0.0, false, 0),
                               c);
    };
    results.push_back({"lstm_cell", finite_diff_check(fwd, wrt)});
  }
  {
    std::vector<LstmLayer> layers{LstmLayer::create(2, 2, rng),
                                  LstmLayer::create(4, 2, rng)};
    Tensor x = randn({3, 2}, rng);
    const auto c = rand_coeffs(12, rng);
    std::vector<Tensor> wrt{x};
    for (auto& l : layers)
      for (auto& p : l.parameters("l")) wrt.push_back(p.tensor);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, bilstm_forward(t, x, layers, 0.0, false, 0),
                               c);
    };
    results.push_back({"bilstm2", finite_diff_check(fwd, wrt)});
  }
  {
    MhaParams mha = MhaParams::create(2, 4, rng);
    Tensor q = randn({5, 4}, rng);
    Tensor kv = randn({5, 4}, rng);
    const BoolMatrix mask = band_mask(5, 5, 2);
    const auto c = rand_coeffs(20, rng);
    auto wrt = tensors_of(mha.parameters("m"));
    wrt.push_back(q);
    wrt.push_back(kv);
    auto fwd = [&](Tape* t) {
      return ops::weighted_sum(t, mha_forward(t, q, kv, mha, &mask), c);
    };
    results.push_back({"mha_banded", finite_diff_check(fwd, wrt)});
  }
  {
    Tensor logits = randn({5, 3}, rng);
    const ctc::LabelSequence labels{1, 2, 1};
    auto fwd = [&](Tape* t) { return ctc::ctc_loss(t, logits, labels); };
    results.push_back({"ctc_loss", finite_diff_check(fwd, {logits})});
  }
  {
    // fusion + topic head micro model, banded attention
    ModelConfig cfg;
    cfg.a2p_hidden = 2;
    cfg.p2w_hidden = 2;
    cfg.head_hidden = 3;
    cfg.num_heads = 2;
    cfg.window = 2;
    cfg.num_topics = 3;
    cfg.max_len = 6;
    cfg.head_dropout = 0.0;
    FusionModel fusion = FusionModel::create(SystemVariant::kLmhaAdd, cfg, rng);
    FeaturePair pair;
    pair.daf = randn({6, 4}, rng);
    pair.dlf = randn({6, 4}, rng);
    pair.pad_mask = {1, 1, 1, 1, 1, 0};
    auto wrt = tensors_of(fusion.parameters());
    wrt.push_back(pair.daf);
    wrt.push_back(pair.dlf);
    auto fwd = [&](Tape* t) {
      return ops::nll(t, fusion.forward(t, pair, false, 0), 1);
    };
    results.push_back({"fusion_head_micro", finite_diff_check(fwd, wrt)});
  }
  return results;
}

}  // namespace sdtc
