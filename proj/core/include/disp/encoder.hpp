#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "disp/autodiff.hpp"
#include "disp/error.hpp"
#include "disp/random.hpp"
#include "disp/tensor.hpp"

namespace disp {

class SequenceTooLongError : public DataError {
 public:
  using DataError::DataError;
};
class IdOutOfRangeError : public DataError {
 public:
  using DataError::DataError;
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d = 64;
  std::size_t num_heads = 4;
  std::size_t num_layers = 2;
  std::size_t max_seq_len = 64;
  std::size_t ffn_multiplier = 4;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  // Throws DataError when the shape constraints do not hold.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Pre-norm transformer encoder: token + learned position embeddings, then
// num_layers blocks of (LN -> multi-head self-attention -> residual,
// LN -> GELU feed-forward -> residual), then a final LN. Produces one
// d-dimensional row per input position.
template <typename T>
class BasicEncoder {
 public:
  struct Layer {
    Parameter<T> ln1_gain, ln1_bias;
    Parameter<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter<T> ln2_gain, ln2_bias;
    Parameter<T> w1, b1, w2, b2;
  };

  BasicEncoder() = default;
  // normal(0, 0.02) projections and embeddings, unit/zero layer norms.
  explicit BasicEncoder(const EncoderConfig& config);

  const EncoderConfig& config() const noexcept { return config_; }

  // Training pass: parameters receive gradients; dropout applies when
  // dropout_rng is non-null. pad_mask[i] != 0 marks padding (empty = none).
  Var forward(Graph<T>& g, std::span<const int> ids, std::span<const std::uint8_t> pad_mask,
              Rng* dropout_rng);
  // Inference pass on a non-recording graph.
  Var forward(Graph<T>& g, std::span<const int> ids, std::span<const std::uint8_t> pad_mask) const;

  Matrix<T> encode(std::span<const int> ids, std::span<const std::uint8_t> pad_mask = {}) const;

  ParameterRefs<T> parameters();
  ConstParameterRefs<T> parameters() const;

  template <typename U>
  BasicEncoder<U> cast() const;

 private:
  template <typename U>
  friend class BasicEncoder;

  template <typename Self>
  static Var forward_impl(Self& self, Graph<T>& g, std::span<const int> ids,
                          std::span<const std::uint8_t> pad_mask, Rng* dropout_rng);

  void check_input(std::span<const int> ids, std::span<const std::uint8_t> pad_mask) const;

  EncoderConfig config_;
  Parameter<T> token_embedding_;
  Parameter<T> position_embedding_;
  std::vector<Layer> layers_;
  Parameter<T> final_gain_;
  Parameter<T> final_bias_;
};

using Encoder = BasicEncoder<float>;

// Fills every entry with normal(0, stddev) from `rng`.
template <typename T>
void init_normal(Matrix<T>& m, Rng& rng, double stddev);

template <typename T>
template <typename U>
BasicEncoder<U> BasicEncoder<T>::cast() const {
  BasicEncoder<U> out;
  out.config_ = config_;
  auto src = parameters();
  out.layers_.resize(layers_.size());
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->name = src[i]->name;
    dst[i]->value = matrix_cast<U>(src[i]->value);
    dst[i]->grad = Matrix<U>(src[i]->value.rows(), src[i]->value.cols());
  }
  return out;
}

// Copies parameter values between equally-shaped parameter lists.
template <typename T, typename U>
void copy_parameter_values(const ConstParameterRefs<U>& src, const ParameterRefs<T>& dst) {
  if (src.size() != dst.size()) throw DataError("parameter list size mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]->value.same_shape(dst[i]->value)) {
      throw DataError("parameter shape mismatch for " + dst[i]->name);
    }
    dst[i]->value = matrix_cast<T>(src[i]->value);
  }
}

}  // namespace disp
