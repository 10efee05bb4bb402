#include "sdtc/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace sdtc::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

int required_length(const LabelSequence& labels) {
  int repeats = 0;
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++repeats;
  return static_cast<int>(labels.size()) + repeats;
}

Tensor ctc_loss(Tape* tape, const Tensor& logits,
                const LabelSequence& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("ctc_loss expects T×V logits");
  const int t_len = logits.dim(0);
  const int vocab = logits.dim(1);
  if (vocab < 2) throw std::invalid_argument("ctc_loss needs V >= 2");
  if (labels.empty())
    throw std::invalid_argument("ctc_loss needs a nonempty label sequence");
  for (int id : labels)
    if (id <= kBlank || id >= vocab)
      throw std::invalid_argument("ctc label id " + std::to_string(id) +
                                  " outside [1," + std::to_string(vocab) +
                                  ")");
  const int need = required_length(labels);
  if (t_len < need)
    throw std::runtime_error(
        "ctc_loss: infeasible alignment, T=" + std::to_string(t_len) +
        " < required length " + std::to_string(need));

  // blank-augmented sequence: blank, l1, blank, l2, ..., blank
  const int s_len = 2 * static_cast<int>(labels.size()) + 1;
  std::vector<int> aug(static_cast<size_t>(s_len), kBlank);
  for (size_t i = 0; i < labels.size(); ++i) aug[2 * i + 1] = labels[i];

  // per-frame log posteriors
  std::vector<double> logy(static_cast<size_t>(t_len) * vocab);
  for (int t = 0; t < t_len; ++t) {
    const double* row = logits.data().data() + static_cast<size_t>(t) * vocab;
    double m = row[0];
    for (int k = 1; k < vocab; ++k) m = std::max(m, row[k]);
    double z = 0;
    for (int k = 0; k < vocab; ++k) z += std::exp(row[k] - m);
    const double logz = m + std::log(z);
    for (int k = 0; k < vocab; ++k)
      logy[static_cast<size_t>(t) * vocab + k] = row[k] - logz;
  }
  auto ly = [&](int t, int k) {
    return logy[static_cast<size_t>(t) * vocab + k];
  };
  auto allows_skip = [&](int s) {
    return s >= 2 && aug[static_cast<size_t>(s)] != kBlank &&
           aug[static_cast<size_t>(s)] != aug[static_cast<size_t>(s - 2)];
  };

  std::vector<double> alpha(static_cast<size_t>(t_len) * s_len, kNegInf);
  auto a = [&](int t, int s) -> double& {
    return alpha[static_cast<size_t>(t) * s_len + s];
  };
  a(0, 0) = ly(0, aug[0]);
  if (s_len > 1) a(0, 1) = ly(0, aug[1]);
  for (int t = 1; t < t_len; ++t)
    for (int s = 0; s < s_len; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = log_add(acc, a(t - 1, s - 1));
      if (allows_skip(s)) acc = log_add(acc, a(t - 1, s - 2));
      a(t, s) = (acc == kNegInf) ? kNegInf
                                 : acc + ly(t, aug[static_cast<size_t>(s)]);
    }
  double log_p = a(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = log_add(log_p, a(t_len - 1, s_len - 2));
  if (log_p == kNegInf)
    throw std::runtime_error("ctc_loss: no feasible alignment");

  Tensor loss = Tensor::scalar(-log_p);

  if (tape && logits.requires_grad()) {
    // backward variable, y included at frame t
    std::vector<double> beta(static_cast<size_t>(t_len) * s_len, kNegInf);
    auto b = [&](int t, int s) -> double& {
      return beta[static_cast<size_t>(t) * s_len + s];
    };
    b(t_len - 1, s_len - 1) = ly(t_len - 1, aug[static_cast<size_t>(s_len - 1)]);
    if (s_len > 1)
      b(t_len - 1, s_len - 2) =
          ly(t_len - 1, aug[static_cast<size_t>(s_len - 2)]);
    for (int t = t_len - 2; t >= 0; --t)
      for (int s = s_len - 1; s >= 0; --s) {
        double acc = b(t + 1, s);
        if (s + 1 < s_len) acc = log_add(acc, b(t + 1, s + 1));
        if (s + 2 < s_len && allows_skip(s + 2))
          acc = log_add(acc, b(t + 1, s + 2));
        b(t, s) = (acc == kNegInf)
                      ? kNegInf
                      : acc + ly(t, aug[static_cast<size_t>(s)]);
      }

    // d(-logP)/d logits[t][k] = y_tk - sum_{s: aug[s]=k} alpha*beta/(y*P)
    auto dlogits =
        std::make_shared<std::vector<double>>(logits.data().size(), 0.0);
    for (int t = 0; t < t_len; ++t) {
      std::vector<double> log_post(static_cast<size_t>(vocab), kNegInf);
      for (int s = 0; s < s_len; ++s) {
        const int k = aug[static_cast<size_t>(s)];
        if (a(t, s) == kNegInf || b(t, s) == kNegInf) continue;
        log_post[static_cast<size_t>(k)] =
            log_add(log_post[static_cast<size_t>(k)],
                    a(t, s) + b(t, s) - ly(t, k));
      }
      for (int k = 0; k < vocab; ++k) {
        const double y = std::exp(ly(t, k));
        const double post = (log_post[static_cast<size_t>(k)] == kNegInf)
                                ? 0.0
                                : std::exp(log_post[static_cast<size_t>(k)] -
                                           log_p);
        (*dlogits)[static_cast<size_t>(t) * vocab + k] = y - post;
      }
    }
    loss.set_requires_grad(true);
    Tensor lg = logits;
    tape->record([lg, loss, dlogits]() mutable {
      if (!loss.has_grad()) return;
      lg.ensure_grad();
      const double g = loss.grad()[0];
      for (size_t i = 0; i < dlogits->size(); ++i)
        lg.grad()[i] += g * (*dlogits)[i];
    });
  }
  return loss;
}

std::vector<int> per_frame_argmax(const Tensor& logits) {
  if (logits.rank() != 2)
    throw std::invalid_argument("per_frame_argmax expects T×V logits");
  const int t_len = logits.dim(0), vocab = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    int best = 0;
    for (int k = 1; k < vocab; ++k)
      if (logits.at(t, k) > logits.at(t, best)) best = k;
    out[static_cast<size_t>(t)] = best;
  }
  return out;
}

LabelSequence collapse(const std::vector<int>& frame_ids) {
  LabelSequence out;
  int prev = -1;
  for (int id : frame_ids) {
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

}  // namespace sdtc::ctc
