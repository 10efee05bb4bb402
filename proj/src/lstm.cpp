#include "sdtc/lstm.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "sdtc/adam.hpp"
#include "sdtc/ops.hpp"

namespace sdtc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// z = W x + U h_prev + b, then gate activations. gates_out holds the
// post-activation values [i f g o], each block of size H.
void cell_kernel(const double* x, const double* h_prev, const double* c_prev,
                 const LstmDir& p, int d, int h, double* gates_out,
                 double* c_out, double* h_out, double* tanhc_out) {
  const double* w = p.w.data().data();
  const double* u = p.u.data().data();
  const double* b = p.b.data().data();
  for (int r = 0; r < 4 * h; ++r) {
    double z = b[r];
    const double* wrow = w + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) z += wrow[j] * x[j];
    const double* urow = u + static_cast<size_t>(r) * h;
    for (int j = 0; j < h; ++j) z += urow[j] * h_prev[j];
    gates_out[r] = (r < 2 * h || r >= 3 * h) ? sigmoid(z) : std::tanh(z);
  }
  const double* gi = gates_out;
  const double* gf = gates_out + h;
  const double* gg = gates_out + 2 * h;
  const double* go = gates_out + 3 * h;
  for (int j = 0; j < h; ++j) {
    c_out[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
    tanhc_out[j] = std::tanh(c_out[j]);
    h_out[j] = go[j] * tanhc_out[j];
  }
}

struct DirSaved {
  std::vector<double> gates;  // T×4H, absolute time order
  std::vector<double> c;      // T×H
  std::vector<double> tanhc;  // T×H
  std::vector<double> h;      // T×H
};

// One direction forward; for reverse=true time runs T-1..0.
void run_direction(const Tensor& x, const LstmDir& p, bool reverse,
                   DirSaved& sv) {
  const int t_len = x.dim(0), d = x.dim(1), h = p.u.dim(1);
  sv.gates.assign(static_cast<size_t>(t_len) * 4 * h, 0.0);
  sv.c.assign(static_cast<size_t>(t_len) * h, 0.0);
  sv.tanhc.assign(static_cast<size_t>(t_len) * h, 0.0);
  sv.h.assign(static_cast<size_t>(t_len) * h, 0.0);
  std::vector<double> zeros(static_cast<size_t>(h), 0.0);
  const double* h_prev = zeros.data();
  const double* c_prev = zeros.data();
  for (int s = 0; s < t_len; ++s) {
    const int t = reverse ? t_len - 1 - s : s;
    const double* xt = x.data().data() + static_cast<size_t>(t) * d;
    cell_kernel(xt, h_prev, c_prev, p,
                d, h,
                sv.gates.data() + static_cast<size_t>(t) * 4 * h,
                sv.c.data() + static_cast<size_t>(t) * h,
                sv.h.data() + static_cast<size_t>(t) * h,
                sv.tanhc.data() + static_cast<size_t>(t) * h);
    h_prev = sv.h.data() + static_cast<size_t>(t) * h;
    c_prev = sv.c.data() + static_cast<size_t>(t) * h;
  }
}

// BPTT for one direction. grad_h[t] is dL/dh_t from above (T×H slice of the
// layer output gradient). Accumulates into parameter grads and gx.
void backprop_direction(const Tensor& x, LstmDir& p, bool reverse,
                        const DirSaved& sv, const double* grad_h_all,
                        int grad_stride, int grad_offset, double* gx) {
  const int t_len = x.dim(0), d = x.dim(1), h = p.u.dim(1);
  p.w.ensure_grad();
  p.u.ensure_grad();
  p.b.ensure_grad();
  double* gw = p.w.grad().data();
  double* gu = p.u.grad().data();
  double* gb = p.b.grad().data();
  const double* w = p.w.data().data();
  const double* u = p.u.data().data();
  std::vector<double> dh_rec(static_cast<size_t>(h), 0.0);
  std::vector<double> dc_rec(static_cast<size_t>(h), 0.0);
  std::vector<double> dz(static_cast<size_t>(4) * h, 0.0);
  std::vector<double> zeros(static_cast<size_t>(h), 0.0);
  for (int s = t_len - 1; s >= 0; --s) {
    const int t = reverse ? t_len - 1 - s : s;
    const int t_prev_s = s - 1;
    const int t_prev = reverse ? t_len - 1 - t_prev_s : t_prev_s;
    const double* gi = sv.gates.data() + static_cast<size_t>(t) * 4 * h;
    const double* gf = gi + h;
    const double* gg = gi + 2 * h;
    const double* go = gi + 3 * h;
    const double* tc = sv.tanhc.data() + static_cast<size_t>(t) * h;
    const double* c_prev =
        (s == 0) ? zeros.data() : sv.c.data() + static_cast<size_t>(t_prev) * h;
    const double* h_prev =
        (s == 0) ? zeros.data() : sv.h.data() + static_cast<size_t>(t_prev) * h;
    for (int j = 0; j < h; ++j) {
      const double dh =
          grad_h_all[static_cast<size_t>(t) * grad_stride + grad_offset + j] +
          dh_rec[static_cast<size_t>(j)];
      const double dout = dh * tc[j];
      double dc = dh * go[j] * (1.0 - tc[j] * tc[j]) +
                  dc_rec[static_cast<size_t>(j)];
      const double di = dc * gg[j];
      const double dforget = dc * c_prev[j];
      const double dg = dc * gi[j];
      dc_rec[static_cast<size_t>(j)] = dc * gf[j];
      dz[static_cast<size_t>(j)] = di * gi[j] * (1.0 - gi[j]);
      dz[static_cast<size_t>(h + j)] = dforget * gf[j] * (1.0 - gf[j]);
      dz[static_cast<size_t>(2 * h + j)] = dg * (1.0 - gg[j] * gg[j]);
      dz[static_cast<size_t>(3 * h + j)] = dout * go[j] * (1.0 - go[j]);
    }
    const double* xt = x.data().data() + static_cast<size_t>(t) * d;
    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    for (int r = 0; r < 4 * h; ++r) {
      const double dzr = dz[static_cast<size_t>(r)];
      if (dzr == 0.0) continue;
      gb[r] += dzr;
      double* gwrow = gw + static_cast<size_t>(r) * d;
      for (int j = 0; j < d; ++j) gwrow[j] += dzr * xt[j];
      double* gurow = gu + static_cast<size_t>(r) * h;
      for (int j = 0; j < h; ++j) gurow[j] += dzr * h_prev[j];
      if (gx) {
        const double* wrow = w + static_cast<size_t>(r) * d;
        double* gxt = gx + static_cast<size_t>(t) * d;
        for (int j = 0; j < d; ++j) gxt[j] += dzr * wrow[j];
      }
      const double* urow = u + static_cast<size_t>(r) * h;
      for (int j = 0; j < h; ++j) dh_rec[static_cast<size_t>(j)] += dzr * urow[j];
    }
  }
}

// One bidirectional layer as a single taped node.
Tensor bilstm_layer(Tape* tape, const Tensor& x, LstmLayer& layer) {
  if (x.rank() != 2 || x.dim(1) != layer.input_dim)
    throw std::invalid_argument("bilstm layer input " + x.shape_str() +
                                " does not match input_dim " +
                                std::to_string(layer.input_dim));
  const int t_len = x.dim(0), h = layer.hidden_dim;
  auto fw = std::make_shared<DirSaved>();
  auto bw = std::make_shared<DirSaved>();
  run_direction(x, layer.fwd, false, *fw);
  run_direction(x, layer.bwd, true, *bw);
  Tensor out = Tensor::zeros({t_len, 2 * h});
  for (int t = 0; t < t_len; ++t)
    for (int j = 0; j < h; ++j) {
      out.at(t, j) = fw->h[static_cast<size_t>(t) * h + j];
      out.at(t, h + j) = bw->h[static_cast<size_t>(t) * h + j];
    }
  const bool rg = tape && (x.requires_grad() || layer.fwd.w.requires_grad());
  if (rg) {
    out.set_requires_grad(true);
    // layer copied by value; its tensors share storage with the caller's
    LstmLayer lcopy = layer;
    Tensor xin = x;
    tape->record([xin, out, lcopy, fw, bw, h]() mutable {
      if (!out.has_grad()) return;
      double* gx = nullptr;
      if (xin.requires_grad()) {
        xin.ensure_grad();
        gx = xin.grad().data();
      }
      const double* go = out.grad().data();
      backprop_direction(xin, lcopy.fwd, false, *fw, go, 2 * h, 0, gx);
      backprop_direction(xin, lcopy.bwd, true, *bw, go, 2 * h, h, gx);
    });
  }
  return out;
}

}  // namespace

LstmLayer LstmLayer::create(int input_dim, int hidden_dim,
                            std::mt19937_64& rng) {
  LstmLayer l;
  l.input_dim = input_dim;
  l.hidden_dim = hidden_dim;
  for (LstmDir* dir : {&l.fwd, &l.bwd}) {
    dir->w = init_uniform({4 * hidden_dim, input_dim}, input_dim, rng);
    dir->u = init_uniform({4 * hidden_dim, hidden_dim}, hidden_dim, rng);
    dir->b = Tensor::zeros({4 * hidden_dim}, /*requires_grad=*/true);
    for (int j = 0; j < hidden_dim; ++j) dir->b.at(hidden_dim + j) = 1.0;
  }
  return l;
}

std::vector<NamedTensor> LstmLayer::parameters(const std::string& prefix) {
  return {
      {prefix + ".fwd.w", fwd.w}, {prefix + ".fwd.u", fwd.u},
      {prefix + ".fwd.b", fwd.b}, {prefix + ".bwd.w", bwd.w},
      {prefix + ".bwd.u", bwd.u}, {prefix + ".bwd.b", bwd.b},
  };
}

std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x_t,
                                         const Tensor& h_prev,
                                         const Tensor& c_prev,
                                         const LstmDir& p) {
  const int d = p.w.dim(1), h = p.u.dim(1);
  if (x_t.size() != d || h_prev.size() != h || c_prev.size() != h)
    throw std::invalid_argument("lstm_cell_step shape mismatch");
  Tensor h_t = Tensor::zeros({h});
  Tensor c_t = Tensor::zeros({h});
  std::vector<double> gates(static_cast<size_t>(4) * h);
  std::vector<double> tanhc(static_cast<size_t>(h));
  cell_kernel(x_t.data().data(), h_prev.data().data(), c_prev.data().data(),
              p, d, h, gates.data(), c_t.data().data(), h_t.data().data(),
              tanhc.data());
  return {h_t, c_t};
}

Tensor bilstm_forward(Tape* tape, const Tensor& x,
                      std::vector<LstmLayer>& layers, double dropout_rate,
                      bool training, std::uint64_t dropout_seed) {
  if (x.rank() != 2 || x.dim(0) < 1)
    throw std::invalid_argument("bilstm_forward expects a nonempty T×D input");
  if (layers.empty())
    throw std::invalid_argument("bilstm_forward needs at least one layer");
  Tensor cur = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    cur = ops::dropout(tape, cur, dropout_rate, training,
                       dropout_seed + 0x9e3779b97f4a7c15ULL * i);
    cur = bilstm_layer(tape, cur, layers[i]);
  }
  return cur;
}

}  // namespace sdtc
