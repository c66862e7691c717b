#include "m2trec/transformer.hpp"

#include "m2trec/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace m2trec {

void TransformerConfig::validate() const {
  if (num_layers < 0) throw ValidationError("num_layers must be >= 0");
  if (num_heads < 1 || model_dim < 1 || ffn_hidden < 1 || max_seq_len < 1) {
    throw ValidationError("transformer sizes must be positive");
  }
  if (model_dim % num_heads != 0) {
    throw ValidationError("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
                          std::to_string(num_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"num_layers", num_layers}, {"num_heads", num_heads},   {"model_dim", model_dim},
          {"ffn_hidden", ffn_hidden}, {"max_seq_len", max_seq_len}, {"dropout", dropout},
          {"positional", positional}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.dropout = j.value("dropout", c.dropout);
  c.positional = j.value("positional", c.positional);
  c.validate();
  return c;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class T>
void init_uniform(Matrix<T>& m, double bound, std::mt19937_64& rng) {
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  }
}

template <class T>
Matrix<T> linear_forward(const Matrix<T>& x, const LinearParams<T>& p) {
  Matrix<T> y = x * p.weight->value;
  y.rowwise() += p.bias->value.row(0);
  return y;
}

template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Matrix<T>& dy, const LinearParams<T>& p) {
  p.weight->grad.noalias() += x.transpose() * dy;
  p.bias->grad.row(0) += dy.colwise().sum();
  return dy * p.weight->value.transpose();
}

template <class T>
Matrix<T> normalize_rows(const Matrix<T>& x, LayerNormCache<T>* cache) {
  const Index n = x.rows();
  const Index d = x.cols();
  Matrix<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(n);
  for (Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const auto centered = (x.row(i).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(d);
    rstd(i) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.row(i) = centered * rstd(i);
  }
  if (cache != nullptr) {
    cache->xhat = xhat;
    cache->rstd = rstd;
  }
  return xhat;
}

template <class T>
Matrix<T> layer_norm_forward(const Matrix<T>& x, const LayerNormParams<T>& p, LayerNormCache<T>* cache) {
  Matrix<T> y = normalize_rows(x, cache);
  y.array().rowwise() *= p.gain->value.row(0).array();
  y.rowwise() += p.bias->value.row(0);
  return y;
}

template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormParams<T>& p,
                              const LayerNormCache<T>& cache) {
  const Index d = dy.cols();
  p.gain->grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  p.bias->grad.row(0) += dy.colwise().sum();
  Matrix<T> dxhat = dy;
  dxhat.array().rowwise() *= p.gain->value.row(0).array();
  Matrix<T> dx(dy.rows(), d);
  for (Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).mean();
    const T mean_dx = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<T>(d);
    dx.row(i) = cache.rstd(i) *
                (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx).matrix();
  }
  return dx;
}

namespace {

template <class T>
void softmax_rows_inplace(Matrix<T>& s) {
  for (Index i = 0; i < s.rows(); ++i) {
    const T m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
}

template <class T>
Matrix<T> dropout_mask(Index rows, Index cols, DropoutContext ctx) {
  Matrix<T> mask(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - ctx.rate));
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = uniform01(*ctx.rng) < ctx.rate ? T(0) : keep_scale;
  }
  return mask;
}

}  // namespace

template <class T>
Matrix<T> attention_forward(const Matrix<T>& x, std::span<const Segment> segments,
                            const AttentionParams<T>& p, int num_heads, AttentionCache<T>* cache) {
  const Index d = p.query.weight->value.cols();
  if (d % num_heads != 0) throw std::invalid_argument("model width not divisible by head count");
  const Index dh = d / num_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Matrix<T> q = linear_forward(x, p.query);
  Matrix<T> k = linear_forward(x, p.key);
  Matrix<T> v = linear_forward(x, p.value);
  Matrix<T> heads(x.rows(), d);
  if (cache != nullptr) {
    cache->probs.clear();
    cache->probs.reserve(segments.size() * static_cast<std::size_t>(num_heads));
  }
  for (const auto& seg : segments) {
    for (int h = 0; h < num_heads; ++h) {
      const Index c = h * dh;
      Matrix<T> scores = q.block(seg.offset, c, seg.length, dh) *
                         k.block(seg.offset, c, seg.length, dh).transpose() * scale;
      softmax_rows_inplace(scores);
      heads.block(seg.offset, c, seg.length, dh).noalias() =
          scores * v.block(seg.offset, c, seg.length, dh);
      if (cache != nullptr) cache->probs.push_back(std::move(scores));
    }
  }
  Matrix<T> out = linear_forward(heads, p.output);
  if (cache != nullptr) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->heads = std::move(heads);
  }
  return out;
}

template <class T>
Matrix<T> attention_backward(const Matrix<T>& x, const Matrix<T>& dy, std::span<const Segment> segments,
                             const AttentionParams<T>& p, int num_heads, const AttentionCache<T>& cache,
                             bool corrupt) {
  const Index d = p.query.weight->value.cols();
  const Index dh = d / num_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  const Matrix<T> d_heads = linear_backward(cache.heads, dy, p.output);
  Matrix<T> dq = Matrix<T>::Zero(x.rows(), d);
  Matrix<T> dk = Matrix<T>::Zero(x.rows(), d);
  Matrix<T> dv = Matrix<T>::Zero(x.rows(), d);
  std::size_t pi = 0;
  for (const auto& seg : segments) {
    for (int h = 0; h < num_heads; ++h, ++pi) {
      const Index c = h * dh;
      const Matrix<T>& probs = cache.probs.at(pi);
      const auto d_out = d_heads.block(seg.offset, c, seg.length, dh);
      dv.block(seg.offset, c, seg.length, dh).noalias() = probs.transpose() * d_out;
      const Matrix<T> d_probs = d_out * cache.v.block(seg.offset, c, seg.length, dh).transpose();
      const Eigen::Array<T, Eigen::Dynamic, 1> row_dot = (d_probs.array() * probs.array()).rowwise().sum();
      Matrix<T> d_scores = (probs.array() * (d_probs.array().colwise() - row_dot)).matrix();
      if (corrupt) d_scores = -d_scores;
      dq.block(seg.offset, c, seg.length, dh).noalias() =
          d_scores * cache.k.block(seg.offset, c, seg.length, dh) * scale;
      dk.block(seg.offset, c, seg.length, dh).noalias() =
          d_scores.transpose() * cache.q.block(seg.offset, c, seg.length, dh) * scale;
    }
  }
  Matrix<T> dx = linear_backward(x, dq, p.query);
  dx += linear_backward(x, dk, p.key);
  dx += linear_backward(x, dv, p.value);
  return dx;
}

template <class T>
Matrix<T> encoder_layer_forward(const Matrix<T>& x, std::span<const Segment> segments,
                                const EncoderLayerParams<T>& p, int num_heads, DropoutContext dropout,
                                EncoderLayerCache<T>* cache) {
  const bool drop = dropout.rate > 0.0;
  if (drop && dropout.rng == nullptr) throw std::invalid_argument("dropout requires an rng");

  LayerNormCache<T> ln1;
  Matrix<T> normed1 = layer_norm_forward(x, p.norm1, cache ? &ln1 : nullptr);
  AttentionCache<T> attn;
  Matrix<T> a = attention_forward(normed1, segments, p.attention, num_heads, cache ? &attn : nullptr);
  Matrix<T> mask1;
  if (drop) {
    mask1 = dropout_mask<T>(a.rows(), a.cols(), dropout);
    a.array() *= mask1.array();
  }
  Matrix<T> residual1 = x + a;

  LayerNormCache<T> ln2;
  Matrix<T> normed2 = layer_norm_forward(residual1, p.norm2, cache ? &ln2 : nullptr);
  Matrix<T> hidden_pre = linear_forward(normed2, p.ffn_in);
  Matrix<T> hidden = hidden_pre.cwiseMax(T(0));
  Matrix<T> f = linear_forward(hidden, p.ffn_out);
  Matrix<T> mask2;
  if (drop) {
    mask2 = dropout_mask<T>(f.rows(), f.cols(), dropout);
    f.array() *= mask2.array();
  }
  Matrix<T> y = residual1 + f;

  if (cache != nullptr) {
    cache->input = x;
    cache->norm1 = std::move(ln1);
    cache->normed1 = std::move(normed1);
    cache->attention = std::move(attn);
    cache->drop1 = std::move(mask1);
    cache->residual1 = std::move(residual1);
    cache->norm2 = std::move(ln2);
    cache->normed2 = std::move(normed2);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
    cache->drop2 = std::move(mask2);
  }
  return y;
}

template <class T>
Matrix<T> encoder_layer_backward(const Matrix<T>& dy, std::span<const Segment> segments,
                                 const EncoderLayerParams<T>& p, int num_heads,
                                 const EncoderLayerCache<T>& cache, bool corrupt_attention) {
  Matrix<T> d_f = dy;
  if (cache.drop2.size() > 0) d_f.array() *= cache.drop2.array();
  Matrix<T> d_hidden = linear_backward(cache.hidden, d_f, p.ffn_out);
  d_hidden.array() *= (cache.hidden_pre.array() > T(0)).template cast<T>();
  const Matrix<T> d_normed2 = linear_backward(cache.normed2, d_hidden, p.ffn_in);
  Matrix<T> d_residual1 = dy + layer_norm_backward(d_normed2, p.norm2, cache.norm2);

  Matrix<T> d_a = d_residual1;
  if (cache.drop1.size() > 0) d_a.array() *= cache.drop1.array();
  const Matrix<T> d_normed1 = attention_backward(cache.normed1, d_a, segments, p.attention, num_heads,
                                                 cache.attention, corrupt_attention);
  return d_residual1 + layer_norm_backward(d_normed1, p.norm1, cache.norm1);
}

template <class T>
Matrix<T> sinusoidal_positions(Index length, Index dim) {
  Matrix<T> pe(length, dim);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

namespace {

template <class T>
LinearParams<T> make_linear(ParameterRegistry<T>& reg, const std::string& name, Index in, Index out,
                            std::mt19937_64& rng) {
  LinearParams<T> p;
  p.weight = &reg.add(name + ".weight", in, out);
  p.bias = &reg.add(name + ".bias", 1, out);
  init_uniform(p.weight->value, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  return p;
}

template <class T>
LayerNormParams<T> make_norm(ParameterRegistry<T>& reg, const std::string& name, Index d) {
  LayerNormParams<T> p;
  p.gain = &reg.add(name + ".gain", 1, d);
  p.bias = &reg.add(name + ".bias", 1, d);
  p.gain->value.setOnes();
  return p;
}

}  // namespace

template <class T>
SessionTransformer<T>::SessionTransformer(const TransformerConfig& config, int input_dim,
                                          ParameterRegistry<T>& registry, std::mt19937_64& init_rng)
    : config_(config), input_dim_(input_dim) {
  config_.validate();
  if (input_dim < 1) throw std::invalid_argument("input_dim must be positive");
  const Index d = config_.model_dim;
  input_ = make_linear(registry, "encoder.input", input_dim, d, init_rng);
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string prefix = "encoder.layer" + std::to_string(l);
    EncoderLayerParams<T> layer;
    layer.norm1 = make_norm(registry, prefix + ".norm1", d);
    layer.attention.query = make_linear(registry, prefix + ".attn.query", d, d, init_rng);
    layer.attention.key = make_linear(registry, prefix + ".attn.key", d, d, init_rng);
    layer.attention.value = make_linear(registry, prefix + ".attn.value", d, d, init_rng);
    layer.attention.output = make_linear(registry, prefix + ".attn.output", d, d, init_rng);
    layer.norm2 = make_norm(registry, prefix + ".norm2", d);
    layer.ffn_in = make_linear(registry, prefix + ".ffn.in", d, config_.ffn_hidden, init_rng);
    layer.ffn_out = make_linear(registry, prefix + ".ffn.out", config_.ffn_hidden, d, init_rng);
    layers_.push_back(layer);
  }
  positions_ = sinusoidal_positions<T>(config_.max_seq_len, d);
}

template <class T>
RowVector<T> SessionTransformer<T>::project_input(const RowVector<T>& item_vector) const {
  if (item_vector.size() != input_dim_) {
    throw std::invalid_argument("item vector has width " + std::to_string(item_vector.size()) +
                                ", expected " + std::to_string(input_dim_));
  }
  return item_vector * input_.weight->value + input_.bias->value.row(0);
}

template <class T>
Matrix<T> SessionTransformer<T>::forward(const Matrix<T>& inputs, std::span<const Segment> segments,
                                         Mode mode, std::mt19937_64* rng, Cache* cache) const {
  if (inputs.cols() != input_dim_) throw std::invalid_argument("input width mismatch");
  Matrix<T> x = linear_forward(inputs, input_);
  Index longest = 0;
  for (const auto& seg : segments) {
    if (seg.length < 1) throw std::invalid_argument("empty session segment");
    longest = std::max(longest, seg.length);
  }
  if (config_.positional) {
    const Matrix<T> pe = longest <= positions_.rows() ? positions_
                                                       : sinusoidal_positions<T>(longest, config_.model_dim);
    for (const auto& seg : segments) x.block(seg.offset, 0, seg.length, x.cols()) += pe.topRows(seg.length);
  }

  DropoutContext dropout;
  if (mode == Mode::train && config_.dropout > 0.0) {
    if (rng == nullptr) throw std::invalid_argument("train mode with dropout requires an rng");
    dropout = {config_.dropout, rng};
  }
  if (cache != nullptr) {
    cache->valid = false;
    cache->inputs = inputs;
    cache->layers.assign(layers_.size(), {});
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = encoder_layer_forward(x, segments, layers_[l], config_.num_heads, dropout,
                              cache ? &cache->layers[l] : nullptr);
  }
  Matrix<T> pooled(static_cast<Index>(segments.size()), config_.model_dim);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    pooled.row(static_cast<Index>(s)) =
        x.block(segments[s].offset, 0, segments[s].length, x.cols()).colwise().mean();
  }
  if (cache != nullptr) cache->valid = true;
  return pooled;
}

template <class T>
Matrix<T> SessionTransformer<T>::backward(const Matrix<T>& d_pooled, std::span<const Segment> segments,
                                          const Cache& cache) const {
  if (!cache.valid) throw std::logic_error("backward called without a completed forward pass");
  Matrix<T> dx(cache.inputs.rows(), config_.model_dim);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    const RowVector<T> share = d_pooled.row(static_cast<Index>(s)) / static_cast<T>(seg.length);
    for (Index r = 0; r < seg.length; ++r) dx.row(seg.offset + r) = share;
  }
  for (std::size_t l = layers_.size(); l-- > 0;) {
    dx = encoder_layer_backward(dx, segments, layers_[l], config_.num_heads, cache.layers[l],
                                corrupt_attention_);
  }
  return linear_backward(cache.inputs, dx, input_);
}

template <class T>
RowVector<T> SessionTransformer<T>::encode_session(const Matrix<T>& prefix_vectors) const {
  const Segment seg{0, prefix_vectors.rows()};
  return forward(prefix_vectors, std::span<const Segment>(&seg, 1), Mode::infer, nullptr).row(0);
}

#define M2TREC_INSTANTIATE(T)                                                                        \
  template void init_uniform(Matrix<T>&, double, std::mt19937_64&);                                 \
  template Matrix<T> linear_forward(const Matrix<T>&, const LinearParams<T>&);                      \
  template Matrix<T> linear_backward(const Matrix<T>&, const Matrix<T>&, const LinearParams<T>&);   \
  template Matrix<T> normalize_rows(const Matrix<T>&, LayerNormCache<T>*);                          \
  template Matrix<T> layer_norm_forward(const Matrix<T>&, const LayerNormParams<T>&,                \
                                        LayerNormCache<T>*);                                        \
  template Matrix<T> layer_norm_backward(const Matrix<T>&, const LayerNormParams<T>&,               \
                                         const LayerNormCache<T>&);                                 \
  template Matrix<T> attention_forward(const Matrix<T>&, std::span<const Segment>,                  \
                                       const AttentionParams<T>&, int, AttentionCache<T>*);         \
  template Matrix<T> attention_backward(const Matrix<T>&, const Matrix<T>&, std::span<const Segment>, \
                                        const AttentionParams<T>&, int, const AttentionCache<T>&,   \
                                        bool);                                                      \
  template Matrix<T> encoder_layer_forward(const Matrix<T>&, std::span<const Segment>,              \
                                           const EncoderLayerParams<T>&, int, DropoutContext,       \
                                           EncoderLayerCache<T>*);                                  \
  template Matrix<T> encoder_layer_backward(const Matrix<T>&, std::span<const Segment>,             \
                                            const EncoderLayerParams<T>&, int,                      \
                                            const EncoderLayerCache<T>&, bool);                     \
  template Matrix<T> sinusoidal_positions(Index, Index);                                            \
  template class SessionTransformer<T>;

M2TREC_INSTANTIATE(float)
M2TREC_INSTANTIATE(double)

#undef M2TREC_INSTANTIATE

}  // namespace m2trec
