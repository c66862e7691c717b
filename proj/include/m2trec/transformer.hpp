#pragma once

#include "m2trec/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace m2trec {

enum class Mode { train, infer };

struct TransformerConfig {
  int num_layers = 2;
  int num_heads = 8;
  int model_dim = 64;
  int ffn_hidden = 256;
  int max_seq_len = 50;
  double dropout = 0.1;
  bool positional = true;  // fixed sinusoidal encodings; false for ablation

  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
};

inline constexpr double kLayerNormEps = 1e-8;

// Rows [offset, offset + length) of a packed activation matrix belong to one
// session. Attention never crosses segments.
struct Segment {
  Index offset = 0;
  Index length = 0;
};

// Uniform [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng);

// y = x W + b, W: [in x out], b: [1 x out].
template <class T>
struct LinearParams {
  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
};

template <class T>
Matrix<T> linear_forward(const Matrix<T>& x, const LinearParams<T>& p);

// Accumulates dW, db and returns dx.
template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& dy, const LinearParams<T>& p);

template <class T>
struct LayerNormParams {
  Parameter<T>* gain = nullptr;
  Parameter<T>* bias = nullptr;
};

template <class T>
struct LayerNormCache {
  Matrix<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

// Per-row (x - mean) / sqrt(var + eps), before gain and bias.
template <class T>
Matrix<T> normalize_rows(const Matrix<T>& x, LayerNormCache<T>* cache = nullptr);

template <class T>
Matrix<T> layer_norm_forward(const Matrix<T>& x, const LayerNormParams<T>& p,
                             LayerNormCache<T>* cache = nullptr);

template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormParams<T>& p,
                              const LayerNormCache<T>& cache);

template <class T>
struct AttentionParams {
  LinearParams<T> query, key, value, output;
};

template <class T>
struct AttentionCache {
  Matrix<T> q, k, v, heads;
  std::vector<Matrix<T>> probs;  // [segment * num_heads + head], each [n x n]
};

// Bidirectional multi-head scaled dot-product attention within each segment.
template <class T>
Matrix<T> attention_forward(const Matrix<T>& x, std::span<const Segment> segments,
                            const AttentionParams<T>& p, int num_heads,
                            AttentionCache<T>* cache = nullptr);

template <class T>
Matrix<T> attention_backward(const Matrix<T>& x, const Matrix<T>& dy, std::span<const Segment> segments,
                             const AttentionParams<T>& p, int num_heads, const AttentionCache<T>& cache,
                             bool corrupt = false);

template <class T>
struct EncoderLayerParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> attention;
  LayerNormParams<T> norm2;
  LinearParams<T> ffn_in, ffn_out;
};

template <class T>
struct EncoderLayerCache {
  Matrix<T> input;
  LayerNormCache<T> norm1;
  Matrix<T> normed1;
  AttentionCache<T> attention;
  Matrix<T> drop1;  // empty when dropout is off
  Matrix<T> residual1;
  LayerNormCache<T> norm2;
  Matrix<T> normed2;
  Matrix<T> hidden_pre;  // before ReLU
  Matrix<T> hidden;
  Matrix<T> drop2;
};

struct DropoutContext {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Pre-LN block: x + Drop(Attn(LN1(x))), then + Drop(FFN(LN2(.))) with ReLU.
template <class T>
Matrix<T> encoder_layer_forward(const Matrix<T>& x, std::span<const Segment> segments,
                                const EncoderLayerParams<T>& p, int num_heads, DropoutContext dropout,
                                EncoderLayerCache<T>* cache = nullptr);

template <class T>
Matrix<T> encoder_layer_backward(const Matrix<T>& dy, std::span<const Segment> segments,
                                 const EncoderLayerParams<T>& p, int num_heads,
                                 const EncoderLayerCache<T>& cache, bool corrupt_attention = false);

template <class T>
Matrix<T> sinusoidal_positions(Index length, Index dim);

// Input projection, positional encodings, encoder stack and average pooling.
template <class T>
class SessionTransformer {
 public:
  struct Cache {
    bool valid = false;
    Matrix<T> inputs;
    std::vector<EncoderLayerCache<T>> layers;
  };

  SessionTransformer(const TransformerConfig& config, int input_dim, ParameterRegistry<T>& registry,
                     std::mt19937_64& init_rng);

  const TransformerConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }
  const LinearParams<T>& input_projection() const { return input_; }
  const EncoderLayerParams<T>& layer(std::size_t i) const { return layers_.at(i); }

  RowVector<T> project_input(const RowVector<T>& item_vector) const;

  // inputs: packed compound vectors [total rows x input_dim]. Returns one
  // pooled session encoding per segment. Train mode with dropout > 0 needs rng.
  Matrix<T> forward(const Matrix<T>& inputs, std::span<const Segment> segments, Mode mode,
                    std::mt19937_64* rng, Cache* cache = nullptr) const;

  // Returns d(inputs); accumulates parameter gradients.
  Matrix<T> backward(const Matrix<T>& d_pooled, std::span<const Segment> segments,
                     const Cache& cache) const;

  // Single-session inference.
  RowVector<T> encode_session(const Matrix<T>& prefix_vectors) const;

  void set_corrupt_attention_backward(bool on) { corrupt_attention_ = on; }

 private:
  TransformerConfig config_;
  int input_dim_;
  LinearParams<T> input_;
  std::vector<EncoderLayerParams<T>> layers_;
  Matrix<T> positions_;
  bool corrupt_attention_ = false;
};

// Uniform in [-bound, bound].
template <class T>
void init_uniform(Matrix<T>& m, double bound, std::mt19937_64& rng);

extern template class SessionTransformer<float>;
extern template class SessionTransformer<double>;

}  // namespace m2trec
