#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "recalnet/data.hpp"
#include "recalnet/layers.hpp"
#include "recalnet/trace.hpp"

namespace recalnet {

// Architecture and variant switches. use_conv off and use_raw_recal off
// together reduce the model to a plain GRU on raw records.
struct ModelConfig {
  int n_features = 0;
  int hidden = 64;
  int conv_filters = 64;
  int kernel_len = 2;
  std::vector<int> dilations = {1, 2, 3};
  int compress_ratio = 2;
  Activation raw_activation = Activation::Sigmoid;
  bool use_conv = true;
  bool use_raw_recal = true;
  double dropout = 0.5;
  int max_seq_len = 400;

  void validate() const;
  std::size_t conv_width() const {
    return use_conv ? dilations.size() * static_cast<std::size_t>(conv_filters)
                    : 0;
  }
  std::size_t visit_width() const { return n_features + conv_width(); }
};

// Every learnable weight, addressable by name through for_each. The visitor
// order defines the flat layout used by the optimizer, the serializer, and
// the gradient checker.
struct ParamSet {
  std::vector<ConvBank> banks;  // empty when conv path is off
  SEParams se_conv;             // empty matrices when conv path is off
  SEParams se_raw;              // empty matrices when raw recal is off
  GruParams gru;
  Matrix out_w;  // 1 x hidden
  Vector out_b;  // length 1

  template <typename F>
  void for_each(F&& f) {
    for (auto& bank : banks) {
      f(msg("conv.k", bank.dilation, ".filters"), bank.filters);
      f(msg("conv.k", bank.dilation, ".bias"), bank.bias);
    }
    if (!se_conv.compress.empty()) {
      f(std::string("se_conv.compress"), se_conv.compress);
      f(std::string("se_conv.expand"), se_conv.expand);
    }
    if (!se_raw.compress.empty()) {
      f(std::string("se_raw.compress"), se_raw.compress);
      f(std::string("se_raw.expand"), se_raw.expand);
    }
    f(std::string("gru.w_update"), gru.w_update);
    f(std::string("gru.w_reset"), gru.w_reset);
    f(std::string("gru.w_cand"), gru.w_cand);
    f(std::string("gru.b_update"), gru.b_update);
    f(std::string("gru.b_reset"), gru.b_reset);
    f(std::string("gru.b_cand"), gru.b_cand);
    f(std::string("out.w"), out_w);
    f(std::string("out.b"), out_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ParamSet*>(this)->for_each(
        [&](const std::string& name, auto& t) {
          f(name, static_cast<const std::remove_reference_t<decltype(t)>&>(t));
        });
  }
};

inline std::span<double> tensor_span(Matrix& m) { return {m.data(), m.size()}; }
inline std::span<const double> tensor_span(const Matrix& m) {
  return {m.data(), m.size()};
}
inline std::span<double> tensor_span(Vector& v) { return {v.data(), v.size()}; }
inline std::span<const double> tensor_span(const Vector& v) {
  return {v.data(), v.size()};
}
inline std::vector<std::size_t> tensor_shape(const Matrix& m) {
  return {m.rows(), m.cols()};
}
inline std::vector<std::size_t> tensor_shape(const Vector& v) {
  return {v.size()};
}

struct ParamLayout {
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0, size = 0;
  };
  std::vector<Entry> entries;
  std::size_t total = 0;

  // Tensor name plus flat index, e.g. "gru.w_cand[17]".
  std::string locate(std::size_t flat_index) const;
};

ParamLayout layout_of(const ParamSet& params);
Vector flatten(const ParamSet& params);
void unflatten(ParamSet& params, const Vector& flat);

// Zero-valued ParamSet with the shapes the config dictates.
ParamSet make_zero_params(const ModelConfig& config);

// acc += scale * g, tensor by tensor. Shapes must match.
void axpy(ParamSet& acc, const ParamSet& g, double scale);
void scale_params(ParamSet& params, double scale);

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases,
// deterministic per seed.
ParamSet init_params(const ModelConfig& config, std::uint64_t seed);

struct Mode {
  bool is_train = false;
  std::uint64_t dropout_seed = 0;
  static Mode eval() { return {}; }
  static Mode train(std::uint64_t dropout_seed) { return {true, dropout_seed}; }
};

struct ForwardOutput {
  Vector predictions;          // per visit, in (0,1)
  std::vector<Vector> hidden;  // per visit h_t (before dropout)
  RecalibrationTrace trace;
};

ForwardOutput forward(const PatientSequence& seq, const ParamSet& params,
                      const ModelConfig& config, const Mode& mode);

// Mean over masked-in visits of binary cross-entropy, predictions clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(const Vector& preds, const Vector& labels, const Vector& mask);

struct BackwardResult {
  double loss = 0.0;
  ParamSet grads;
};

// Reverse-mode accumulation through the exact forward graph. Dropout is
// active (train mode) with the given seed; pass a config with dropout 0 for
// deterministic gradient checks.
BackwardResult backward(const PatientSequence& seq, const ParamSet& params,
                        const ModelConfig& config, std::uint64_t dropout_seed);

// Flat little-endian doubles preceded by a JSON header of (name, shape,
// offset); round-trips bit-exactly.
void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path, const ModelConfig& config);

}  // namespace recalnet
