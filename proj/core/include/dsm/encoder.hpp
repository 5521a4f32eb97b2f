#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dsm/video.hpp"

namespace dsm {

// Unit-norm representation vector.
using Embedding = std::vector<double>;

struct ConvStage {
  int out_channels = 8;
  std::array<int, 3> kernel{3, 3, 3};  // t, h, w
  std::array<int, 3> stride{1, 1, 1};  // t, h, w
  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct TensorShape {
  int t = 0, h = 0, w = 0, c = 0;
  std::size_t size() const { return static_cast<std::size_t>(t) * h * w * c; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Input centred by subtracting 0.5, then 3D conv stages (each followed by
// ReLU, "same" padding of kernel/2), global average pooling, affine
// projection to embed_dim, L2 normalisation.
struct EncoderConfig {
  int frames = 16;
  int height = 32;
  int width = 32;
  int channels = 3;
  std::vector<ConvStage> stages{{8, {3, 3, 3}, {1, 2, 2}},
                                {16, {3, 3, 3}, {2, 2, 2}},
                                {32, {3, 3, 3}, {2, 2, 2}}};
  int embed_dim = 128;

  void validate() const;
  // Input shape followed by the output shape of every stage.
  std::vector<TensorShape> shapes() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Offsets of every parameter block inside the flat parameter vector. Blocks
// are in declaration order: per stage weights [kt][kh][kw][cin][cout] then
// bias [cout]; projection weights [embed_dim][c_last] then bias [embed_dim].
struct ParameterLayout {
  struct Block {
    std::size_t offset = 0;
    std::size_t size = 0;
  };
  std::vector<Block> stage_weights;
  std::vector<Block> stage_bias;
  Block projection_weights;
  Block projection_bias;
  std::size_t total = 0;

  explicit ParameterLayout(const EncoderConfig& config);
};

struct EncoderState {
  EncoderConfig config;
  std::vector<float> params;
  std::vector<float> velocity;  // SGD momentum buffer, not checkpointed
  std::uint64_t step = 0;
};

// Uniform in [-sqrt(6 / fan_in), sqrt(6 / fan_in)], zero biases.
EncoderState init_encoder(const EncoderConfig& config, Rng& rng);

struct ActivationCache {
  std::uint64_t step = 0;
  std::vector<float> input;
  std::vector<std::vector<float>> activations;  // post-ReLU output per stage
  std::vector<double> pooled;
  std::vector<double> projected;  // before normalisation
  double norm = 0.0;
  bool degenerate = false;  // zero vector, normalised to the fallback e1
};

struct ForwardResult {
  Embedding embedding;
  ActivationCache cache;
};

ForwardResult forward(const EncoderState& state, const VideoClip& clip);
// Forward without retaining activations.
Embedding embed(const EncoderState& state, const VideoClip& clip);

// Adds d(loss)/d(params) for one sample into grads (size = params.size()).
// Throws StaleCacheError if the state has stepped since the forward pass.
void backward(const EncoderState& state, const ActivationCache& cache,
              std::span<const double> grad_embedding, std::span<float> grads);
std::vector<float> backward(const EncoderState& state, const ActivationCache& cache,
                            std::span<const double> grad_embedding);

struct SgdOptions {
  double learning_rate = 0.003;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v.
// Throws NonFiniteGradientError (leaving everything untouched) on NaN/Inf.
void sgd_update(std::span<float> params, std::span<float> velocity, std::span<const float> grads,
                const SgdOptions& options);
void sgd_step(EncoderState& state, std::span<const float> grads, const SgdOptions& options);

// key <- m * key + (1 - m) * query, elementwise.
void momentum_update(EncoderState& key, const EncoderState& query, double m);

// Checkpoint: "DSMW", u16 version, u32 config block, u32 step, u32 parameter
// count, then float32 parameters in layout order. Little-endian.
void save_checkpoint(std::ostream& out, const EncoderState& state);
EncoderState load_checkpoint(std::istream& in, const std::string& origin = "<stream>");
void save_checkpoint(const std::filesystem::path& path, const EncoderState& state);
EncoderState load_checkpoint(const std::filesystem::path& path);

// L2 normalisation with the zero-vector fallback e1.
Embedding normalize_embedding(std::span<const double> v, bool* degenerate = nullptr);

}  // namespace dsm
