#include "sdtc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace sdtc::ops {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// Backward closures bail out when the output never received a gradient
// (tensor not on a path to the loss).
bool grad_ready(Tensor out) { return out.has_grad(); }

}  // namespace

Tensor matmul(Tape* tape, Tensor a, Tensor b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul requires rank-2 tensors, got " + a.shape_str() + " and " +
              b.shape_str());
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul dimension mismatch: " + a.shape_str() + " x " +
                       b.shape_str());
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!grad_ready(out)) return;
      const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
      const double* go = out.grad().data();
      if (a.requires_grad()) {
        a.ensure_grad();
        double* ga = a.grad().data();
        const double* pb = b.data().data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double s = 0;
            const double* brow = pb + p * n;
            const double* grow = go + i * n;
            for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + p] += s;
          }
      }
      if (b.requires_grad()) {
        b.ensure_grad();
        double* gb = b.grad().data();
        const double* pa = a.data().data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* grow = go + i * n;
            double* brow = gb + p * n;
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

Tensor matmul_nt(Tape* tape, Tensor a, Tensor b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul_nt requires rank-2 tensors");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(k == b.dim(1), "matmul_nt dimension mismatch: " + a.shape_str() +
                             " x " + b.shape_str() + "^T");
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      const double* arow = pa + i * k;
      const double* brow = pb + j * k;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      po[i * n + j] = s;
    }
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!grad_ready(out)) return;
      const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
      const double* go = out.grad().data();
      if (a.requires_grad()) {
        a.ensure_grad();
        double* ga = a.grad().data();
        const double* pb = b.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = go[i * n + j];
            if (g == 0.0) continue;
            const double* brow = pb + j * k;
            double* grow = ga + i * k;
            for (int p = 0; p < k; ++p) grow[p] += g * brow[p];
          }
      }
      if (b.requires_grad()) {
        b.ensure_grad();
        double* gb = b.grad().data();
        const double* pa = a.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = go[i * n + j];
            if (g == 0.0) continue;
            const double* arow = pa + i * k;
            double* brow = gb + j * k;
            for (int p = 0; p < k; ++p) brow[p] += g * arow[p];
          }
      }
    });
  }
  return out;
}

Tensor add(Tape* tape, Tensor a, Tensor b) {
  require(a.shape() == b.shape(), "add shape mismatch: " + a.shape_str() +
                                      " vs " + b.shape_str());
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!grad_ready(out)) return;
      const auto& go = out.grad();
      if (a.requires_grad()) {
        a.ensure_grad();
        for (size_t i = 0; i < go.size(); ++i) a.grad()[i] += go[i];
      }
      if (b.requires_grad()) {
        b.ensure_grad();
        for (size_t i = 0; i < go.size(); ++i) b.grad()[i] += go[i];
      }
    });
  }
  return out;
}

Tensor add_bias(Tape* tape, Tensor x, Tensor bias) {
  require(x.rank() == 2 && bias.rank() == 1 && x.dim(1) == bias.dim(0),
          "add_bias shape mismatch: " + x.shape_str() + " vs " +
              bias.shape_str());
  const int t = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({t, d});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + bias.at(j);
  if (want_grad(tape, {&x, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, bias, out]() mutable {
      if (!grad_ready(out)) return;
      const int t = x.dim(0), d = x.dim(1);
      const auto& go = out.grad();
      if (x.requires_grad()) {
        x.ensure_grad();
        for (size_t i = 0; i < go.size(); ++i) x.grad()[i] += go[i];
      }
      if (bias.requires_grad()) {
        bias.ensure_grad();
        for (int i = 0; i < t; ++i)
          for (int j = 0; j < d; ++j) bias.grad()[j] += go[i * d + j];
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, Tensor x, double c) {
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.size(); ++i) out.at(i) = c * x.at(i);
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, c]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      const auto& go = out.grad();
      for (size_t i = 0; i < go.size(); ++i) x.grad()[i] += c * go[i];
    });
  }
  return out;
}

Tensor softmax(Tape* tape, Tensor x,
               const std::vector<std::uint8_t>* mask) {
  const int n = x.shape().back();
  const int rows = x.size() / n;
  if (mask)
    require(static_cast<int>(mask->size()) == x.size(),
            "softmax mask size does not match input");
  Tensor out = Tensor::zeros(x.shape());
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + static_cast<size_t>(r) * n;
    double* yr = out.data().data() + static_cast<size_t>(r) * n;
    double m = neg_inf;
    for (int j = 0; j < n; ++j) {
      const double e = (mask && !(*mask)[r * n + j]) ? neg_inf : xr[j];
      m = std::max(m, e);
    }
    if (m == neg_inf)
      throw std::runtime_error("softmax: fully masked row " +
                               std::to_string(r));
    double z = 0;
    for (int j = 0; j < n; ++j) {
      const double e = (mask && !(*mask)[r * n + j]) ? neg_inf : xr[j];
      yr[j] = std::exp(e - m);
      z += yr[j];
    }
    for (int j = 0; j < n; ++j) yr[j] /= z;
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, n, rows]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      const double* y = out.data().data();
      const double* go = out.grad().data();
      double* gx = x.grad().data();
      for (int r = 0; r < rows; ++r) {
        const double* yr = y + static_cast<size_t>(r) * n;
        const double* gr = go + static_cast<size_t>(r) * n;
        double dot = 0;
        for (int j = 0; j < n; ++j) dot += gr[j] * yr[j];
        for (int j = 0; j < n; ++j)
          gx[static_cast<size_t>(r) * n + j] += yr[j] * (gr[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape* tape, Tensor x, Tensor gain,
                  Tensor bias, double epsilon) {
  require(x.rank() == 2, "layer_norm expects a T×d input");
  const int t = x.dim(0), d = x.dim(1);
  require(gain.rank() == 1 && gain.dim(0) == d && bias.rank() == 1 &&
              bias.dim(0) == d,
          "layer_norm gain/bias must have shape [d]");
  require(epsilon > 0, "layer_norm epsilon must be positive");
  Tensor out = Tensor::zeros({t, d});
  // saved for backward
  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto inv_std = std::make_shared<std::vector<double>>(t);
  for (int i = 0; i < t; ++i) {
    const double* xr = x.data().data() + static_cast<size_t>(i) * d;
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[i] = inv;
    for (int j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * inv;
      (*xhat)[static_cast<size_t>(i) * d + j] = xh;
      out.at(i, j) = gain.at(j) * xh + bias.at(j);
    }
  }
  if (want_grad(tape, {&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, gain, bias, out, xhat, inv_std, t, d]() mutable {
      if (!grad_ready(out)) return;
      const double* go = out.grad().data();
      for (int i = 0; i < t; ++i) {
        const double* gr = go + static_cast<size_t>(i) * d;
        const double* xh = xhat->data() + static_cast<size_t>(i) * d;
        if (gain.requires_grad()) {
          gain.ensure_grad();
          for (int j = 0; j < d; ++j) gain.grad()[j] += gr[j] * xh[j];
        }
        if (bias.requires_grad()) {
          bias.ensure_grad();
          for (int j = 0; j < d; ++j) bias.grad()[j] += gr[j];
        }
        if (x.requires_grad()) {
          x.ensure_grad();
          double mean_dxh = 0, mean_dxh_xh = 0;
          for (int j = 0; j < d; ++j) {
            const double dxh = gr[j] * gain.at(j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
          }
          mean_dxh /= d;
          mean_dxh_xh /= d;
          for (int j = 0; j < d; ++j) {
            const double dxh = gr[j] * gain.at(j);
            x.grad()[static_cast<size_t>(i) * d + j] +=
                (*inv_std)[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(Tape* tape, Tensor x, double rate, bool training,
               std::uint64_t rng_seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  auto mult = std::make_shared<std::vector<double>>(x.data().size());
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.size(); ++i) {
    const double m = (u(rng) < rate) ? 0.0 : keep_scale;
    (*mult)[static_cast<size_t>(i)] = m;
    out.at(i) = m * x.at(i);
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, mult]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      const auto& go = out.grad();
      for (size_t i = 0; i < go.size(); ++i)
        x.grad()[i] += (*mult)[i] * go[i];
    });
  }
  return out;
}

Tensor linear(Tape* tape, Tensor x, Tensor w, Tensor b) {
  return add_bias(tape, matmul(tape, x, w), b);
}

Tensor vec_linear(Tape* tape, Tensor x, Tensor w,
                  Tensor b) {
  require(x.rank() == 1 && w.rank() == 2 && x.dim(0) == w.dim(0) &&
              b.rank() == 1 && b.dim(0) == w.dim(1),
          "vec_linear shape mismatch: " + x.shape_str() + ", " +
              w.shape_str() + ", " + b.shape_str());
  const int d = w.dim(0), k = w.dim(1);
  Tensor out = Tensor::zeros({k});
  for (int j = 0; j < k; ++j) {
    double s = b.at(j);
    for (int i = 0; i < d; ++i) s += x.at(i) * w.at(i, j);
    out.at(j) = s;
  }
  if (want_grad(tape, {&x, &w, &b})) {
    out.set_requires_grad(true);
    tape->record([x, w, b, out, d, k]() mutable {
      if (!grad_ready(out)) return;
      const auto& go = out.grad();
      if (b.requires_grad()) {
        b.ensure_grad();
        for (int j = 0; j < k; ++j) b.grad()[static_cast<size_t>(j)] += go[static_cast<size_t>(j)];
      }
      if (w.requires_grad()) {
        w.ensure_grad();
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < k; ++j)
            w.grad()[static_cast<size_t>(i) * k + j] += x.at(i) * go[static_cast<size_t>(j)];
      }
      if (x.requires_grad()) {
        x.ensure_grad();
        for (int i = 0; i < d; ++i) {
          double s = 0;
          for (int j = 0; j < k; ++j) s += w.at(i, j) * go[static_cast<size_t>(j)];
          x.grad()[static_cast<size_t>(i)] += s;
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, std::vector<Tensor> parts) {
  require(!parts.empty(), "concat_cols needs at least one part");
  const int t = parts[0].dim(0);
  int total = 0;
  bool rg = false;
  for (Tensor p : parts) {
    require(p.rank() == 2 && p.dim(0) == t,
            "concat_cols row-count mismatch: " + parts[0].shape_str() +
                " vs " + p.shape_str());
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({t, total});
  int off = 0;
  for (Tensor p : parts) {
    const int d = p.dim(1);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j) out.at(i, off + j) = p.at(i, j);
    off += d;
  }
  if (tape && rg) {
    out.set_requires_grad(true);
    tape->record([parts, out, t, total]() mutable {
      if (!grad_ready(out)) return;
      const auto& go = out.grad();
      int off = 0;
      for (Tensor& p : parts) {
        const int d = p.dim(1);
        if (p.requires_grad()) {
          p.ensure_grad();
          for (int i = 0; i < t; ++i)
            for (int j = 0; j < d; ++j)
              p.grad()[static_cast<size_t>(i) * d + j] +=
                  go[static_cast<size_t>(i) * total + off + j];
        }
        off += d;
      }
    });
  }
  return out;
}

Tensor concat_vec(Tape* tape, std::vector<Tensor> parts) {
  require(!parts.empty(), "concat_vec needs at least one part");
  int total = 0;
  bool rg = false;
  for (Tensor p : parts) {
    require(p.rank() == 1, "concat_vec expects rank-1 parts");
    total += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total});
  int off = 0;
  for (Tensor p : parts) {
    for (int j = 0; j < p.dim(0); ++j) out.at(off + j) = p.at(j);
    off += p.dim(0);
  }
  if (tape && rg) {
    out.set_requires_grad(true);
    tape->record([parts, out]() mutable {
      if (!grad_ready(out)) return;
      const auto& go = out.grad();
      int off = 0;
      for (Tensor& p : parts) {
        if (p.requires_grad()) {
          p.ensure_grad();
          for (int j = 0; j < p.dim(0); ++j) p.grad()[j] += go[off + j];
        }
        off += p.dim(0);
      }
    });
  }
  return out;
}

Tensor maxpool_rows(Tape* tape, Tensor x,
                    const std::vector<std::uint8_t>& keep) {
  require(x.rank() == 2, "maxpool_rows expects a T×d input");
  const int t = x.dim(0), d = x.dim(1);
  require(static_cast<int>(keep.size()) == t,
          "maxpool_rows keep mask length mismatch");
  bool any = false;
  for (auto k : keep) any = any || k;
  if (!any) throw std::runtime_error("maxpool_rows: all rows masked out");
  Tensor out = Tensor::zeros({d});
  auto arg = std::make_shared<std::vector<int>>(d, -1);
  for (int j = 0; j < d; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < t; ++i) {
      if (!keep[static_cast<size_t>(i)]) continue;
      if (x.at(i, j) > best) {
        best = x.at(i, j);
        (*arg)[static_cast<size_t>(j)] = i;
      }
    }
    out.at(j) = best;
  }
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, arg, d]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      for (int j = 0; j < d; ++j)
        x.grad()[static_cast<size_t>((*arg)[static_cast<size_t>(j)]) *
                     static_cast<size_t>(d) +
                 static_cast<size_t>(j)] += out.grad()[static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor log_softmax(Tape* tape, Tensor x) {
  require(x.rank() == 1, "log_softmax expects a rank-1 input");
  const int n = x.dim(0);
  Tensor out = Tensor::zeros({n});
  double m = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) m = std::max(m, x.at(j));
  double z = 0;
  for (int j = 0; j < n; ++j) z += std::exp(x.at(j) - m);
  const double logz = m + std::log(z);
  for (int j = 0; j < n; ++j) out.at(j) = x.at(j) - logz;
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, n]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      const auto& go = out.grad();
      double gsum = 0;
      for (int j = 0; j < n; ++j) gsum += go[static_cast<size_t>(j)];
      for (int j = 0; j < n; ++j)
        x.grad()[static_cast<size_t>(j)] +=
            go[static_cast<size_t>(j)] - std::exp(out.at(j)) * gsum;
    });
  }
  return out;
}

Tensor nll(Tape* tape, Tensor log_probs, int target) {
  require(log_probs.rank() == 1 && target >= 0 && target < log_probs.dim(0),
          "nll target out of range");
  Tensor out = Tensor::scalar(-log_probs.at(target));
  if (want_grad(tape, {&log_probs})) {
    out.set_requires_grad(true);
    tape->record([log_probs, out, target]() mutable {
      if (!grad_ready(out)) return;
      log_probs.ensure_grad();
      log_probs.grad()[static_cast<size_t>(target)] -= out.grad()[0];
    });
  }
  return out;
}

Tensor mean_scalars(Tape* tape, std::vector<Tensor> scalars) {
  require(!scalars.empty(), "mean_scalars needs at least one term");
  double s = 0;
  bool rg = false;
  for (Tensor t : scalars) {
    s += t.item();
    rg = rg || t.requires_grad();
  }
  const double n = static_cast<double>(scalars.size());
  Tensor out = Tensor::scalar(s / n);
  if (tape && rg) {
    out.set_requires_grad(true);
    tape->record([scalars, out, n]() mutable {
      if (!grad_ready(out)) return;
      const double g = out.grad()[0] / n;
      for (Tensor& t : scalars) {
        if (!t.requires_grad()) continue;
        t.ensure_grad();
        t.grad()[0] += g;
      }
    });
  }
  return out;
}

Tensor weighted_sum(Tape* tape, Tensor x,
                    const std::vector<double>& coeffs) {
  require(coeffs.size() == x.data().size(),
          "weighted_sum coefficient count mismatch");
  double s = 0;
  for (int i = 0; i < x.size(); ++i) s += coeffs[static_cast<size_t>(i)] * x.at(i);
  Tensor out = Tensor::scalar(s);
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, coeffs]() mutable {
      if (!grad_ready(out)) return;
      x.ensure_grad();
      const double g = out.grad()[0];
      for (size_t i = 0; i < coeffs.size(); ++i) x.grad()[i] += g * coeffs[i];
    });
  }
  return out;
}

}  // namespace sdtc::ops
