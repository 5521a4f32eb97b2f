#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dsm/encoder.hpp"
#include "dsm/objectives.hpp"
#include "dsm/optical_flow.hpp"
#include "dsm/synth.hpp"
#include "dsm/temporal.hpp"
#include "dsm/tps.hpp"

namespace {

dsm::VideoClip noise_clip(int t, int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(t) * h * w * c);
  for (float& v : data) v = u(g);
  return dsm::VideoClip(t, h, w, c, std::move(data));
}

dsm::Embedding unit(std::size_t d, std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = n(g);
  return dsm::normalize_embedding(v);
}

void BM_EncoderForward(benchmark::State& state) {
  dsm::Rng rng(1);
  const dsm::EncoderState enc = dsm::init_encoder(dsm::EncoderConfig{}, rng);
  const dsm::VideoClip clip = noise_clip(enc.config.frames, enc.config.height, enc.config.width, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dsm::embed(enc, clip));
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

void BM_EncoderBackward(benchmark::State& state) {
  dsm::Rng rng(1);
  const dsm::EncoderState enc = dsm::init_encoder(dsm::EncoderConfig{}, rng);
  const dsm::VideoClip clip = noise_clip(enc.config.frames, enc.config.height, enc.config.width, 3, 2);
  const dsm::ForwardResult f = dsm::forward(enc, clip);
  const std::vector<double> upstream(f.embedding.size(), 0.1);
  std::vector<float> grads(enc.params.size());
  for (auto _ : state) {
    dsm::backward(enc, f.cache, upstream, grads);
    benchmark::DoNotOptimize(grads.data());
  }
}
BENCHMARK(BM_EncoderBackward)->Unit(benchmark::kMillisecond);

void BM_HornSchunck(benchmark::State& state) {
  dsm::SyntheticSpec spec;
  spec.motion_id = static_cast<int>(dsm::MotionKind::kLinear);
  spec.sprite_radius = 8.0;
  spec.height = spec.width = static_cast<int>(state.range(0));
  const dsm::VideoClip gray = dsm::rgb_to_gray(dsm::generate_video(spec).video);
  for (auto _ : state) benchmark::DoNotOptimize(dsm::estimate_flow_horn_schunck(gray.frame(1), gray.frame(0)));
}
BENCHMARK(BM_HornSchunck)->Arg(32)->Arg(48)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TpsSolve(benchmark::State& state) {
  dsm::Rng rng(3);
  const dsm::ControlPointSet pts = dsm::sample_control_points(static_cast<int>(state.range(0)), 0.1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dsm::solve_tps(pts));
}
BENCHMARK(BM_TpsSolve)->Arg(4)->Arg(8);

void BM_TpsWarpClip(benchmark::State& state) {
  dsm::Rng rng(4);
  const dsm::TpsTransform tf = dsm::solve_tps(dsm::sample_control_points(4, 0.1, rng));
  const dsm::VideoClip clip = noise_clip(16, 32, 32, 3, 5);
  for (auto _ : state) benchmark::DoNotOptimize(dsm::apply_tps(clip, tf));
}
BENCHMARK(BM_TpsWarpClip)->Unit(benchmark::kMillisecond);

void BM_FlowScaleStep(benchmark::State& state) {
  const dsm::VideoClip clip = noise_clip(1, 48, 48, 3, 6);
  dsm::FlowField flow(48, 48);
  for (float& v : flow.vx) v = 0.7f;
  for (auto _ : state) benchmark::DoNotOptimize(dsm::flow_scale_step(clip.frame(0), flow, 2.5));
}
BENCHMARK(BM_FlowScaleStep);

void BM_ContrastiveLoss(benchmark::State& state) {
  std::mt19937_64 g(7);
  const std::size_t k = static_cast<std::size_t>(state.range(0)), d = 128;
  dsm::MemoryQueue queue(k, d);
  std::vector<dsm::Embedding> fill;
  for (std::size_t i = 0; i < k; ++i) fill.push_back(unit(d, g));
  queue.push(fill);
  dsm::TripletBatch batch;
  for (int i = 0; i < 8; ++i) {
    batch.anchors.push_back(unit(d, g));
    batch.positives.push_back(unit(d, g));
    batch.negatives.push_back(unit(d, g));
  }
  for (auto _ : state) benchmark::DoNotOptimize(dsm::dsm_contrastive_loss(batch, queue, 1.0));
}
BENCHMARK(BM_ContrastiveLoss)->Arg(256)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
