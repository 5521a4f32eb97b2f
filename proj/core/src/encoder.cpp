#include "dsm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "dsm/error.hpp"

namespace dsm {

namespace {

constexpr char kCheckpointMagic[5] = "DSMW";
constexpr std::uint16_t kCheckpointVersion = 1;
// Inputs are shifted to zero mean range before the first convolution.
constexpr float kInputCenter = 0.5f;

int out_extent(int in, int kernel, int stride) { return (in + 2 * (kernel / 2) - kernel) / stride + 1; }

// Channels-last 3D convolution, "same" padding of kernel/2, zero padded.
void conv_forward(const float* in, const TensorShape& is, const float* weights, const float* bias,
                  const ConvStage& stage, const TensorShape& os, float* out) {
  const int kt = stage.kernel[0], kh = stage.kernel[1], kw = stage.kernel[2];
  const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const int cin = is.c, cout = os.c;
  for (int to = 0; to < os.t; ++to) {
    for (int ho = 0; ho < os.h; ++ho) {
      for (int wo = 0; wo < os.w; ++wo) {
        float* o = out + ((static_cast<std::size_t>(to) * os.h + ho) * os.w + wo) * cout;
        std::copy(bias, bias + cout, o);
        for (int dt = 0; dt < kt; ++dt) {
          const int ti = to * stage.stride[0] - pt + dt;
          if (ti < 0 || ti >= is.t) continue;
          for (int dh = 0; dh < kh; ++dh) {
            const int hi = ho * stage.stride[1] - ph + dh;
            if (hi < 0 || hi >= is.h) continue;
            for (int dw = 0; dw < kw; ++dw) {
              const int wi = wo * stage.stride[2] - pw + dw;
              if (wi < 0 || wi >= is.w) continue;
              const float* x = in + ((static_cast<std::size_t>(ti) * is.h + hi) * is.w + wi) * cin;
              const float* wtap = weights + ((static_cast<std::size_t>(dt) * kh + dh) * kw + dw) * cin * cout;
              for (int ci = 0; ci < cin; ++ci) {
                const float a = x[ci];
                if (a == 0.0f) continue;
                const float* wrow = wtap + static_cast<std::size_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) o[co] += a * wrow[co];
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients and, when grad_in is non-null, the input
// gradient (which must be zeroed by the caller).
void conv_backward(const float* in, const TensorShape& is, const float* weights, const ConvStage& stage,
                   const TensorShape& os, const float* grad_out, float* grad_w, float* grad_b,
                   float* grad_in) {
  const int kt = stage.kernel[0], kh = stage.kernel[1], kw = stage.kernel[2];
  const int pt = kt / 2, ph = kh / 2, pw = kw / 2;
  const int cin = is.c, cout = os.c;
  for (int to = 0; to < os.t; ++to) {
    for (int ho = 0; ho < os.h; ++ho) {
      for (int wo = 0; wo < os.w; ++wo) {
        const float* g = grad_out + ((static_cast<std::size_t>(to) * os.h + ho) * os.w + wo) * cout;
        bool any = false;
        for (int co = 0; co < cout; ++co) {
          grad_b[co] += g[co];
          any = any || g[co] != 0.0f;
        }
        if (!any) continue;
        for (int dt = 0; dt < kt; ++dt) {
          const int ti = to * stage.stride[0] - pt + dt;
          if (ti < 0 || ti >= is.t) continue;
          for (int dh = 0; dh < kh; ++dh) {
            const int hi = ho * stage.stride[1] - ph + dh;
            if (hi < 0 || hi >= is.h) continue;
            for (int dw = 0; dw < kw; ++dw) {
              const int wi = wo * stage.stride[2] - pw + dw;
              if (wi < 0 || wi >= is.w) continue;
              const std::size_t in_off = ((static_cast<std::size_t>(ti) * is.h + hi) * is.w + wi) * cin;
              const std::size_t tap_off = ((static_cast<std::size_t>(dt) * kh + dh) * kw + dw) * cin * cout;
              const float* x = in + in_off;
              float* gw = grad_w + tap_off;
              const float* wt = weights + tap_off;
              for (int ci = 0; ci < cin; ++ci) {
                const float a = x[ci];
                float* gwrow = gw + static_cast<std::size_t>(ci) * cout;
                if (a != 0.0f) {
                  for (int co = 0; co < cout; ++co) gwrow[co] += a * g[co];
                }
                if (grad_in) {
                  const float* wrow = wt + static_cast<std::size_t>(ci) * cout;
                  float acc = 0.0f;
                  for (int co = 0; co < cout; ++co) acc += wrow[co] * g[co];
                  grad_in[in_off + ci] += acc;
                }
              }
            }
          }
        }
      }
    }
  }
}

void check_input(const EncoderConfig& config, const VideoClip& clip) {
  if (clip.frames() != config.frames || clip.height() != config.height ||
      clip.width() != config.width || clip.channels() != config.channels) {
    throw ShapeMismatch("encoder expects " + std::to_string(config.frames) + "x" +
                        std::to_string(config.height) + "x" + std::to_string(config.width) + "x" +
                        std::to_string(config.channels) + " input, got " +
                        std::to_string(clip.frames()) + "x" + std::to_string(clip.height()) + "x" +
                        std::to_string(clip.width()) + "x" + std::to_string(clip.channels()));
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (frames < 1 || height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw InvalidArgument("encoder input shape is invalid");
  }
  if (stages.empty()) throw InvalidArgument("encoder needs at least one conv stage");
  if (embed_dim < 2) throw InvalidArgument("embedding dimension must be at least 2");
  int t = frames, h = height, w = width;
  for (const ConvStage& s : stages) {
    if (s.out_channels < 1) throw InvalidArgument("conv stage needs positive channels");
    for (int k = 0; k < 3; ++k) {
      if (s.kernel[k] < 1 || s.stride[k] < 1) throw InvalidArgument("kernel and stride must be positive");
    }
    if (t % s.stride[0] != 0 || h % s.stride[1] != 0 || w % s.stride[2] != 0) {
      throw InvalidArgument("conv strides must divide the feature extents");
    }
    t = out_extent(t, s.kernel[0], s.stride[0]);
    h = out_extent(h, s.kernel[1], s.stride[1]);
    w = out_extent(w, s.kernel[2], s.stride[2]);
    if (t < 1 || h < 1 || w < 1) throw InvalidArgument("conv stages reduce the input below 1");
  }
}

std::vector<TensorShape> EncoderConfig::shapes() const {
  std::vector<TensorShape> out;
  TensorShape cur{frames, height, width, channels};
  out.push_back(cur);
  for (const ConvStage& s : stages) {
    cur = {out_extent(cur.t, s.kernel[0], s.stride[0]), out_extent(cur.h, s.kernel[1], s.stride[1]),
           out_extent(cur.w, s.kernel[2], s.stride[2]), s.out_channels};
    out.push_back(cur);
  }
  return out;
}

ParameterLayout::ParameterLayout(const EncoderConfig& config) {
  std::size_t offset = 0;
  int cin = config.channels;
  for (const ConvStage& s : config.stages) {
    const std::size_t wsize =
        static_cast<std::size_t>(s.kernel[0]) * s.kernel[1] * s.kernel[2] * cin * s.out_channels;
    stage_weights.push_back({offset, wsize});
    offset += wsize;
    stage_bias.push_back({offset, static_cast<std::size_t>(s.out_channels)});
    offset += s.out_channels;
    cin = s.out_channels;
  }
  projection_weights = {offset, static_cast<std::size_t>(config.embed_dim) * cin};
  offset += projection_weights.size;
  projection_bias = {offset, static_cast<std::size_t>(config.embed_dim)};
  offset += projection_bias.size;
  total = offset;
}

EncoderState init_encoder(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const ParameterLayout layout(config);
  EncoderState state;
  state.config = config;
  state.params.assign(layout.total, 0.0f);
  state.velocity.assign(layout.total, 0.0f);
  auto fill = [&](const ParameterLayout::Block& block, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < block.size; ++i) {
      state.params[block.offset + i] = static_cast<float>(u(rng));
    }
  };
  int cin = config.channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const ConvStage& st = config.stages[s];
    fill(layout.stage_weights[s], static_cast<std::size_t>(st.kernel[0]) * st.kernel[1] * st.kernel[2] * cin);
    cin = st.out_channels;
  }
  fill(layout.projection_weights, static_cast<std::size_t>(cin));
  return state;
}

Embedding normalize_embedding(std::span<const double> v, bool* degenerate) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  Embedding out(v.size(), 0.0);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    std::cerr << "warning: zero-norm representation, using fallback unit vector e1\n";
    if (!out.empty()) out[0] = 1.0;
    if (degenerate) *degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  if (degenerate) *degenerate = false;
  return out;
}

ForwardResult forward(const EncoderState& state, const VideoClip& clip) {
  const EncoderConfig& config = state.config;
  check_input(config, clip);
  const ParameterLayout layout(config);
  const std::vector<TensorShape> shapes = config.shapes();

  ForwardResult result;
  ActivationCache& cache = result.cache;
  cache.step = state.step;
  cache.input.assign(clip.data().begin(), clip.data().end());
  for (float& v : cache.input) v -= kInputCenter;
  cache.activations.resize(config.stages.size());

  const float* input = cache.input.data();
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    std::vector<float>& act = cache.activations[s];
    act.resize(shapes[s + 1].size());
    conv_forward(input, shapes[s], state.params.data() + layout.stage_weights[s].offset,
                 state.params.data() + layout.stage_bias[s].offset, config.stages[s], shapes[s + 1],
                 act.data());
    for (float& a : act) a = a > 0.0f ? a : 0.0f;
    input = act.data();
  }

  const TensorShape& last = shapes.back();
  const std::size_t positions = last.size() / last.c;
  cache.pooled.assign(last.c, 0.0);
  const std::vector<float>& top = cache.activations.back();
  for (std::size_t p = 0; p < positions; ++p) {
    for (int c = 0; c < last.c; ++c) cache.pooled[c] += top[p * last.c + c];
  }
  for (double& v : cache.pooled) v /= static_cast<double>(positions);

  const int dim = config.embed_dim;
  const float* pw = state.params.data() + layout.projection_weights.offset;
  const float* pb = state.params.data() + layout.projection_bias.offset;
  cache.projected.assign(dim, 0.0);
  for (int d = 0; d < dim; ++d) {
    double acc = pb[d];
    for (int c = 0; c < last.c; ++c) acc += static_cast<double>(pw[static_cast<std::size_t>(d) * last.c + c]) * cache.pooled[c];
    cache.projected[d] = acc;
  }
  double sq = 0.0;
  for (double v : cache.projected) sq += v * v;
  cache.norm = std::sqrt(sq);
  result.embedding = normalize_embedding(cache.projected, &cache.degenerate);
  return result;
}

Embedding embed(const EncoderState& state, const VideoClip& clip) {
  return forward(state, clip).embedding;
}

void backward(const EncoderState& state, const ActivationCache& cache,
              std::span<const double> grad_embedding, std::span<float> grads) {
  if (cache.step != state.step) {
    throw StaleCacheError("activation cache from step " + std::to_string(cache.step) +
                          " used at step " + std::to_string(state.step));
  }
  const EncoderConfig& config = state.config;
  const ParameterLayout layout(config);
  if (grads.size() != layout.total) throw ShapeMismatch("gradient buffer has the wrong size");
  if (grad_embedding.size() != static_cast<std::size_t>(config.embed_dim)) {
    throw ShapeMismatch("embedding gradient has the wrong dimension");
  }
  if (cache.degenerate) return;  // the fallback vector is a constant

  const int dim = config.embed_dim;
  const std::vector<TensorShape> shapes = config.shapes();
  const TensorShape& last = shapes.back();

  // d/dv of v / |v|: (g - z (z . g)) / |v|
  std::vector<double> grad_v(dim);
  double zg = 0.0;
  for (int d = 0; d < dim; ++d) zg += cache.projected[d] / cache.norm * grad_embedding[d];
  for (int d = 0; d < dim; ++d) {
    grad_v[d] = (grad_embedding[d] - cache.projected[d] / cache.norm * zg) / cache.norm;
  }

  const float* pw = state.params.data() + layout.projection_weights.offset;
  float* gpw = grads.data() + layout.projection_weights.offset;
  float* gpb = grads.data() + layout.projection_bias.offset;
  std::vector<double> grad_pooled(last.c, 0.0);
  for (int d = 0; d < dim; ++d) {
    gpb[d] += static_cast<float>(grad_v[d]);
    for (int c = 0; c < last.c; ++c) {
      const std::size_t k = static_cast<std::size_t>(d) * last.c + c;
      gpw[k] += static_cast<float>(grad_v[d] * cache.pooled[c]);
      grad_pooled[c] += pw[k] * grad_v[d];
    }
  }

  const std::size_t positions = last.size() / last.c;
  std::vector<float> grad_act(last.size());
  for (std::size_t p = 0; p < positions; ++p) {
    for (int c = 0; c < last.c; ++c) {
      grad_act[p * last.c + c] = static_cast<float>(grad_pooled[c] / static_cast<double>(positions));
    }
  }

  for (std::size_t s = config.stages.size(); s-- > 0;) {
    const std::vector<float>& act = cache.activations[s];
    for (std::size_t i = 0; i < act.size(); ++i) {
      if (act[i] <= 0.0f) grad_act[i] = 0.0f;
    }
    const float* input = s == 0 ? cache.input.data() : cache.activations[s - 1].data();
    std::vector<float> grad_in;
    if (s > 0) grad_in.assign(shapes[s].size(), 0.0f);
    conv_backward(input, shapes[s], state.params.data() + layout.stage_weights[s].offset,
                  config.stages[s], shapes[s + 1], grad_act.data(),
                  grads.data() + layout.stage_weights[s].offset,
                  grads.data() + layout.stage_bias[s].offset, s > 0 ? grad_in.data() : nullptr);
    grad_act = std::move(grad_in);
  }
}

std::vector<float> backward(const EncoderState& state, const ActivationCache& cache,
                            std::span<const double> grad_embedding) {
  std::vector<float> grads(state.params.size(), 0.0f);
  backward(state, cache, grad_embedding, grads);
  return grads;
}

void sgd_update(std::span<float> params, std::span<float> velocity, std::span<const float> grads,
                const SgdOptions& options) {
  if (params.size() != velocity.size() || params.size() != grads.size()) {
    throw ShapeMismatch("sgd_update: parameter, velocity and gradient sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NonFiniteGradientError("non-finite gradient at parameter " + std::to_string(i) +
                                   "; step aborted");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + options.weight_decay * params[i];
    const double v = options.momentum * velocity[i] + g;
    velocity[i] = static_cast<float>(v);
    params[i] = static_cast<float>(params[i] - options.learning_rate * v);
  }
}

void sgd_step(EncoderState& state, std::span<const float> grads, const SgdOptions& options) {
  if (state.velocity.size() != state.params.size()) state.velocity.assign(state.params.size(), 0.0f);
  sgd_update(state.params, state.velocity, grads, options);
  ++state.step;
}

void momentum_update(EncoderState& key, const EncoderState& query, double m) {
  if (!(key.config == query.config) || key.params.size() != query.params.size()) {
    throw InvalidArgument("momentum update between encoders of different configurations");
  }
  for (std::size_t i = 0; i < key.params.size(); ++i) {
    key.params[i] = static_cast<float>(m * key.params[i] + (1.0 - m) * query.params[i]);
  }
}

void save_checkpoint(std::ostream& out, const EncoderState& state) {
  const EncoderConfig& c = state.config;
  if (state.step > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("step " + std::to_string(state.step) + " does not fit the checkpoint's u32 field");
  }
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint16_t>(out, kCheckpointVersion);
  auto u32 = [&](long long v) { detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(v)); };
  u32(c.frames);
  u32(c.height);
  u32(c.width);
  u32(c.channels);
  u32(static_cast<long long>(c.stages.size()));
  for (const ConvStage& s : c.stages) {
    u32(s.out_channels);
    for (int k : s.kernel) u32(k);
    for (int k : s.stride) u32(k);
  }
  u32(c.embed_dim);
  u32(static_cast<long long>(state.step));
  u32(static_cast<long long>(state.params.size()));
  detail::write_f32_array(out, state.params.data(), state.params.size());
}

EncoderState load_checkpoint(std::istream& in, const std::string& origin) {
  detail::expect_magic(in, kCheckpointMagic, origin);
  const auto version = detail::read_le<std::uint16_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("bad_version", "unsupported checkpoint version in " + origin);
  }
  auto u32 = [&](const char* what) { return static_cast<int>(detail::read_le<std::uint32_t>(in, what)); };
  EncoderState state;
  EncoderConfig& c = state.config;
  c.frames = u32("frames");
  c.height = u32("height");
  c.width = u32("width");
  c.channels = u32("channels");
  const int stages = u32("stage count");
  if (stages < 1 || stages > 64) throw DimensionError("implausible stage count in " + origin);
  c.stages.assign(static_cast<std::size_t>(stages), ConvStage{});
  for (ConvStage& s : c.stages) {
    s.out_channels = u32("stage channels");
    for (int& k : s.kernel) k = u32("kernel");
    for (int& k : s.stride) k = u32("stride");
  }
  c.embed_dim = u32("embed dim");
  state.step = static_cast<std::uint32_t>(u32("step"));
  const auto count = static_cast<std::uint32_t>(u32("parameter count"));
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw DimensionError(std::string("invalid encoder config in ") + origin + ": " + e.what());
  }
  const ParameterLayout layout(c);
  if (count != layout.total) {
    throw DimensionError("parameter count does not match the encoder config in " + origin);
  }
  state.params.resize(count);
  detail::read_f32_array(in, state.params.data(), count, origin.c_str());
  state.velocity.assign(count, 0.0f);
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, state);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

EncoderState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return load_checkpoint(in, path.string());
}

}  // namespace dsm
