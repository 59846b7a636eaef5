#pragma once

#include <span>
#include <string>
#include <vector>

#include "handfield/math/rng.hpp"
#include "handfield/nn/param_store.hpp"

namespace handfield {

enum class Activation { kIdentity, kSilu, kSoftplus, kSigmoid };

Real apply_activation(Activation a, Real z);
// Derivative at pre-activation z, given the forward value y = act(z).
Real activation_derivative(Activation a, Real z, Real y);

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Activation hidden_activation = Activation::kSilu;
  Activation output_activation = Activation::kIdentity;
  // Weight-layer indices whose input is [previous activation, network input].
  std::vector<int> skip_layers;
  bool zero_init_output = false;

  int num_layers() const { return int(hidden.size()) + 1; }
  bool is_skip(int layer) const {
    for (int s : skip_layers)
      if (s == layer) return true;
    return false;
  }
  int layer_out_dim(int l) const { return l < int(hidden.size()) ? hidden[l] : output_dim; }
  int layer_in_dim(int l) const {
    if (l == 0) return input_dim;
    return hidden[l - 1] + (is_skip(l) ? input_dim : 0);
  }
};

// Per-forward record: everything backward needs. Reusable to avoid churn.
struct MlpTape {
  std::vector<Real> input;
  std::vector<std::vector<Real>> pre;   // pre-activations per layer
  std::vector<std::vector<Real>> act;   // activations per layer (last = output)
};

// Fully connected network over a ParameterStore. Weights are row-major
// [out][in] under names "<prefix>.w<l>" / "<prefix>.b<l>".
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {}

  const MlpSpec& spec() const { return spec_; }
  int input_dim() const { return spec_.input_dim; }
  int output_dim() const { return spec_.output_dim; }

  // Creates entries in `store` with fan-in uniform init (zeros for the output
  // layer when spec.zero_init_output).
  void register_params(ParameterStore& store, const std::string& prefix, HashRng& rng);
  // Resolves offsets against an existing store (e.g. after checkpoint load).
  void bind(const ParameterStore& store, const std::string& prefix);

  void forward(const ParameterStore& store, std::span<const Real> in, std::span<Real> out,
               MlpTape* tape = nullptr) const;

  // Accumulates parameter gradients into `param_grad` (a buffer aligned with
  // the store layout) and optionally the input gradient into `d_in_accum`.
  void backward(const ParameterStore& store, const MlpTape& tape, std::span<const Real> d_out,
                Real* param_grad, std::span<Real> d_in_accum = {}) const;

 private:
  MlpSpec spec_;
  std::vector<size_t> w_offsets_;
  std::vector<size_t> b_offsets_;
};

}  // namespace handfield
