#include "handfield/nn/mlp.hpp"

#include <cassert>
#include <cmath>

namespace handfield {

Real apply_activation(Activation a, Real z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kSilu: return z / (1 + std::exp(-z));
    case Activation::kSoftplus:
      return z > 30 ? z : (z < -30 ? std::exp(z) : std::log1p(std::exp(z)));
    case Activation::kSigmoid: return 1 / (1 + std::exp(-z));
  }
  return z;
}

Real activation_derivative(Activation a, Real z, Real y) {
  switch (a) {
    case Activation::kIdentity: return 1;
    case Activation::kSilu: {
      const Real s = 1 / (1 + std::exp(-z));
      return s + z * s * (1 - s);
    }
    case Activation::kSoftplus: return 1 / (1 + std::exp(-z));
    case Activation::kSigmoid: return y * (1 - y);
  }
  return 1;
}

void Mlp::register_params(ParameterStore& store, const std::string& prefix, HashRng& rng) {
  const int layers = spec_.num_layers();
  w_offsets_.resize(layers);
  b_offsets_.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const int in = spec_.layer_in_dim(l), out = spec_.layer_out_dim(l);
    w_offsets_[l] = store.add(prefix + ".w" + std::to_string(l),
                              {uint64_t(out), uint64_t(in)});
    b_offsets_[l] = store.add(prefix + ".b" + std::to_string(l), {uint64_t(out)});
    const bool zero = spec_.zero_init_output && l == layers - 1;
    std::span<Real> w = store.values(prefix + ".w" + std::to_string(l));
    const Real bound = std::sqrt(Real(3) / Real(in));
    for (Real& v : w) v = zero ? Real(0) : rng.next_real(-bound, bound);
    // biases stay zero
  }
}

void Mlp::bind(const ParameterStore& store, const std::string& prefix) {
  const int layers = spec_.num_layers();
  w_offsets_.resize(layers);
  b_offsets_.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const auto& we = store.entry(prefix + ".w" + std::to_string(l));
    const auto& be = store.entry(prefix + ".b" + std::to_string(l));
    const size_t expect_w = size_t(spec_.layer_out_dim(l)) * size_t(spec_.layer_in_dim(l));
    if (we.size != expect_w || be.size != size_t(spec_.layer_out_dim(l)))
      throw std::runtime_error("Mlp::bind: shape mismatch for " + we.name);
    w_offsets_[l] = we.offset;
    b_offsets_[l] = be.offset;
  }
}

void Mlp::forward(const ParameterStore& store, std::span<const Real> in, std::span<Real> out,
                  MlpTape* tape) const {
  if (int(in.size()) != spec_.input_dim) throw std::invalid_argument("Mlp: input dim mismatch");
  if (int(out.size()) != spec_.output_dim) throw std::invalid_argument("Mlp: output dim mismatch");

  const int layers = spec_.num_layers();
  const Real* base = store.data();

  thread_local std::vector<Real> buf_a, buf_b;
  std::vector<Real>* cur = &buf_a;
  std::vector<Real>* nxt = &buf_b;
  cur->assign(in.begin(), in.end());

  if (tape) {
    tape->input.assign(in.begin(), in.end());
    tape->pre.resize(layers);
    tape->act.resize(layers);
  }

  for (int l = 0; l < layers; ++l) {
    const int out_dim = spec_.layer_out_dim(l);
    const int in_dim = spec_.layer_in_dim(l);
    const bool skip = l > 0 && spec_.is_skip(l);
    if (skip) cur->insert(cur->end(), in.begin(), in.end());
    assert(int(cur->size()) == in_dim);

    nxt->resize(out_dim);
    const Real* __restrict w = base + w_offsets_[l];
    const Real* __restrict b = base + b_offsets_[l];
    const Real* __restrict x = cur->data();
    Real* __restrict y = nxt->data();
    for (int o = 0; o < out_dim; ++o) {
      Real s = b[o];
      const Real* __restrict wo = w + size_t(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) s += wo[i] * x[i];
      y[o] = s;
    }

    const Activation act = l == layers - 1 ? spec_.output_activation : spec_.hidden_activation;
    if (tape) tape->pre[l].assign(nxt->begin(), nxt->end());
    for (int o = 0; o < out_dim; ++o) y[o] = apply_activation(act, y[o]);
    if (tape) tape->act[l].assign(nxt->begin(), nxt->end());
    std::swap(cur, nxt);
  }
  std::copy(cur->begin(), cur->end(), out.begin());
}

void Mlp::backward(const ParameterStore& store, const MlpTape& tape, std::span<const Real> d_out,
                   Real* param_grad, std::span<Real> d_in_accum) const {
  const int layers = spec_.num_layers();
  if (int(tape.act.size()) != layers || int(tape.input.size()) != spec_.input_dim)
    throw std::invalid_argument("Mlp::backward: tape does not match this network");
  const Real* base = store.data();

  thread_local std::vector<Real> dz, d_prev, d_in_local;
  dz.assign(d_out.begin(), d_out.end());
  d_in_local.assign(spec_.input_dim, Real(0));

  for (int l = layers - 1; l >= 0; --l) {
    const int out_dim = spec_.layer_out_dim(l);
    const int in_dim = spec_.layer_in_dim(l);
    const bool skip = l > 0 && spec_.is_skip(l);
    const int prev_dim = l > 0 ? spec_.hidden[l - 1] : 0;
    const Activation act = l == layers - 1 ? spec_.output_activation : spec_.hidden_activation;

    const std::vector<Real>& pre = tape.pre[l];
    const std::vector<Real>& val = tape.act[l];
    for (int o = 0; o < out_dim; ++o) dz[o] *= activation_derivative(act, pre[o], val[o]);

    const Real* __restrict w = base + w_offsets_[l];
    Real* __restrict gw = param_grad + w_offsets_[l];
    Real* __restrict gb = param_grad + b_offsets_[l];

    // layer input = [act_{l-1} | input] when skip, else act_{l-1} (or input at l=0)
    const Real* part_a = l > 0 ? tape.act[l - 1].data() : tape.input.data();
    const int part_a_dim = l > 0 ? prev_dim : spec_.input_dim;
    const Real* part_b = skip ? tape.input.data() : nullptr;
    const int part_b_dim = skip ? spec_.input_dim : 0;
    assert(part_a_dim + part_b_dim == in_dim);
    (void)in_dim;

    d_prev.assign(part_a_dim, Real(0));
    for (int o = 0; o < out_dim; ++o) {
      const Real g = dz[o];
      gb[o] += g;
      const Real* __restrict wo = w + size_t(o) * in_dim;
      Real* __restrict gwo = gw + size_t(o) * in_dim;
      Real* __restrict dp = d_prev.data();
      for (int i = 0; i < part_a_dim; ++i) {
        gwo[i] += g * part_a[i];
        dp[i] += g * wo[i];
      }
      if (part_b) {
        Real* __restrict di = d_in_local.data();
        for (int i = 0; i < part_b_dim; ++i) {
          gwo[part_a_dim + i] += g * part_b[i];
          di[i] += g * wo[part_a_dim + i];
        }
      }
    }
    if (l == 0) {
      for (int i = 0; i < spec_.input_dim; ++i) d_in_local[i] += d_prev[i];
    } else {
      dz = d_prev;
    }
  }
  if (!d_in_accum.empty()) {
    assert(int(d_in_accum.size()) == spec_.input_dim);
    for (int i = 0; i < spec_.input_dim; ++i) d_in_accum[i] += d_in_local[i];
  }
}

}  // namespace handfield
