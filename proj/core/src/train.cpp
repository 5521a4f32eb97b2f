#include "dsm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dsm/clip_io.hpp"
#include "dsm/error.hpp"
#include "dsm/tps.hpp"

namespace dsm {

std::vector<TrainingVideo> load_training_videos(const DatasetManifest& manifest) {
  std::vector<TrainingVideo> out;
  for (const ManifestEntry& e : manifest.entries) {
    if (!e.train) continue;
    const std::filesystem::path path = manifest.resolve(e);
    TrainingVideo v;
    v.video = read_clip(path);
    const std::filesystem::path side = sidecar_path(path);
    if (std::filesystem::exists(side)) v.spec = read_spec_sidecar(side);
    out.push_back(std::move(v));
  }
  return out;
}

double scheduled_lr(const TrainConfig& config, int epoch) {
  double lr = config.lr;
  for (double f : config.lr_decay_fractions) {
    if (epoch >= static_cast<int>(std::lround(f * config.epochs))) lr *= 0.1;
  }
  return lr;
}

Triplet make_triplet(const TrainingVideo& source, const TrainConfig& config, Rng& rng) {
  const VideoClip& video = source.video;
  const int frames = config.encoder.frames;
  const int span = (frames - 1) * config.stride;
  if (video.frames() <= span) {
    throw InvalidArgument("video of " + std::to_string(video.frames()) + " frames is too short for a " +
                          std::to_string(frames) + "-frame window at stride " + std::to_string(config.stride));
  }
  if (video.channels() != config.encoder.channels) {
    throw ShapeMismatch("video has " + std::to_string(video.channels()) + " channels, encoder expects " +
                        std::to_string(config.encoder.channels));
  }
  Triplet t;
  std::uniform_int_distribution<int> start_dist(0, video.frames() - 1 - span);
  t.start = start_dist(rng);

  const int h = video.height(), w = video.width();
  const int oh = config.encoder.height, ow = config.encoder.width;
  t.crops[0] = sample_crop_window(h, w, rng, config.crop_scale_min, config.crop_scale_max, oh, ow);
  for (int i = 1; i < 3; ++i) {
    t.crops[static_cast<std::size_t>(i)] =
        config.shared_crop ? t.crops[0]
                           : sample_crop_window(h, w, rng, config.crop_scale_min, config.crop_scale_max, oh, ow);
  }

  std::vector<int> window(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) window[static_cast<std::size_t>(i)] = t.start + i * config.stride;
  const VideoClip anchor_frames = gather_frames(video, window);

  t.anchor = basic_augment(apply_crop(anchor_frames, t.crops[0]), rng, config.flip_prob, config.color_jitter);

  VideoClip positive = apply_crop(anchor_frames, t.crops[1]);
  if (config.spatial_warp) {
    PositiveConfig pc;
    pc.grid_n = config.tps_grid;
    pc.max_offset = config.tps_offset;
    pc.border_anchors = config.border_anchors;
    positive = make_positive(positive, pc, rng);
  }
  t.positive = std::move(positive);

  if (!config.uses_intra_negative()) return t;
  if (!config.temporal_shift && !config.flow_scaling) {
    t.negative = apply_crop(anchor_frames, t.crops[2]);
    return t;
  }
  NegativeConfig nc;
  nc.temporal_shift = config.temporal_shift;
  nc.flow_scaling = config.flow_scaling;
  nc.shift = {config.shift_min, config.shift_max};
  nc.max_scale = config.max_scale;
  nc.flow_options = config.flow_options;
  FlowProvider provider;
  if (config.flow_scaling && config.flow_source == FlowSource::kGroundTruth) {
    if (!source.spec) throw ConfigError("flow_source = ground_truth needs a generator spec sidecar for every video");
    provider = ground_truth_provider(*source.spec);
  }
  NegativeSample negative = make_negative(video, {t.start, frames, config.stride}, nc, rng, provider);
  t.tau = negative.tau;
  t.negative = apply_crop(negative.clip, t.crops[2]);
  return t;
}

double batch_objective(const TrainConfig& config, const EncoderState& query, const EncoderState& key,
                       const std::vector<Triplet>& batch, const MemoryQueue& queue,
                       std::vector<float>* grads, std::vector<Embedding>* anchor_keys) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const bool intra = config.uses_intra_negative();
  const std::size_t n = batch.size();
  if (grads && grads->size() != query.params.size()) grads->assign(query.params.size(), 0.0f);

  std::vector<ForwardResult> fa;
  fa.reserve(n);
  TripletBatch tb;
  for (const Triplet& t : batch) {
    fa.push_back(forward(query, t.anchor));
    tb.anchors.push_back(fa.back().embedding);
  }

  if (config.objective == Objective::kContrastive) {
    for (const Triplet& t : batch) {
      tb.positives.push_back(embed(key, t.positive));
      if (intra) {
        if (t.negative.empty()) throw InvalidArgument("triplet is missing its negative clip");
        tb.negatives.push_back(embed(key, t.negative));
      }
    }
    const LossResult r = dsm_contrastive_loss(tb, queue, config.temperature);
    if (grads) {
      for (std::size_t i = 0; i < n; ++i) backward(query, fa[i].cache, r.grad_anchors[i], *grads);
    }
    if (anchor_keys) {
      anchor_keys->clear();
      for (const Triplet& t : batch) anchor_keys->push_back(embed(key, t.anchor));
    }
    return r.loss;
  }

  std::vector<ForwardResult> fp, fn;
  for (const Triplet& t : batch) {
    if (t.negative.empty()) throw InvalidArgument("triplet is missing its negative clip");
    fp.push_back(forward(query, t.positive));
    fn.push_back(forward(query, t.negative));
    tb.positives.push_back(fp.back().embedding);
    tb.negatives.push_back(fn.back().embedding);
  }
  LossResult r = triplet_loss(tb, config.margin);
  const double scale = 1.0 / static_cast<double>(n);
  if (grads) {
    for (std::size_t i = 0; i < n; ++i) {
      for (auto* g : {&r.grad_anchors[i], &r.grad_positives[i], &r.grad_negatives[i]}) {
        for (double& v : *g) v *= scale;
      }
      backward(query, fa[i].cache, r.grad_anchors[i], *grads);
      backward(query, fp[i].cache, r.grad_positives[i], *grads);
      backward(query, fn[i].cache, r.grad_negatives[i], *grads);
    }
  }
  if (anchor_keys) anchor_keys->clear();
  return r.loss * scale;
}

std::string format_metric_row(const MetricRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d\t%llu\t%.9g\t%.9g", row.epoch,
                static_cast<unsigned long long>(row.step), row.loss, row.lr);
  return buf;
}

PretrainResult pretrain(const TrainConfig& config, const std::vector<TrainingVideo>& videos,
                        const PretrainOutputs& outputs) {
  config.validate();
  if (videos.empty()) throw InvalidArgument("no training videos");

  std::ofstream log;
  if (!outputs.metrics_log.empty()) {
    log.open(outputs.metrics_log, std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log " + outputs.metrics_log.string());
  }

  Rng rng(config.seed);
  PretrainResult result;
  result.query = init_encoder(config.encoder, rng);
  EncoderState key = result.query;
  MemoryQueue queue(static_cast<std::size_t>(config.queue_size), static_cast<std::size_t>(config.encoder.embed_dim));
  const bool contrastive = config.objective == Objective::kContrastive;

  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = scheduled_lr(config, epoch);
    // Fisher-Yates with our own draws so the order does not depend on the
    // standard library's shuffle.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    const std::size_t first_row = result.metrics.size();
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      const std::uint64_t step = result.query.step;
      try {
        std::vector<Triplet> batch;
        for (std::size_t i = b; i < std::min(order.size(), b + batch_size); ++i) {
          batch.push_back(make_triplet(videos[order[i]], config, rng));
        }
        std::vector<float> grads(result.query.params.size(), 0.0f);
        std::vector<Embedding> anchor_keys;
        const double loss = batch_objective(config, result.query, key, batch, queue, &grads,
                                            contrastive ? &anchor_keys : nullptr);
        sgd_step(result.query, grads, {lr, config.sgd_momentum, config.weight_decay});
        if (contrastive) {
          momentum_update(key, result.query, config.key_momentum);
          queue.push(anchor_keys);
        }
        result.metrics.push_back({epoch, step, loss, lr});
      } catch (const Error& e) {
        throw Error(e.kind(), "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what());
      }
    }
    if (log.is_open()) {
      for (std::size_t i = first_row; i < result.metrics.size(); ++i) log << format_metric_row(result.metrics[i]) << '\n';
      log.flush();
      if (!log) throw IoError("write failed for " + outputs.metrics_log.string());
    }
  }
  if (!outputs.checkpoint.empty()) save_checkpoint(outputs.checkpoint, result.query);
  return result;
}

PretrainResult pretrain(const TrainConfig& config, const DatasetManifest& manifest,
                        const PretrainOutputs& outputs) {
  return pretrain(config, load_training_videos(manifest), outputs);
}

GradCheckReport gradient_check(const TrainConfig& config, int count, std::uint64_t seed, double h) {
  config.validate();
  if (count < 1) throw InvalidArgument("gradient check needs at least one parameter");
  Rng rng(seed);
  EncoderState query = init_encoder(config.encoder, rng);
  const EncoderState key = init_encoder(config.encoder, rng);

  const EncoderConfig& ec = config.encoder;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_clip = [&] {
    VideoClip clip(ec.frames, ec.height, ec.width, ec.channels);
    for (float& v : clip.mutable_data()) v = static_cast<float>(unit(rng));
    return clip;
  };
  std::vector<Triplet> batch(2);
  for (Triplet& t : batch) {
    t.anchor = random_clip();
    t.positive = random_clip();
    if (config.uses_intra_negative()) t.negative = random_clip();
  }

  MemoryQueue queue(static_cast<std::size_t>(config.queue_size), static_cast<std::size_t>(ec.embed_dim));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int fill = std::min(config.queue_size, 4);
  for (int i = 0; i < fill; ++i) {
    Embedding e(static_cast<std::size_t>(ec.embed_dim));
    for (double& v : e) v = normal(rng);
    const Embedding u = normalize_embedding(e);
    queue.push(std::span<const Embedding>(&u, 1));
  }

  std::vector<float> grads(query.params.size(), 0.0f);
  batch_objective(config, query, key, batch, queue, &grads);

  std::vector<std::size_t> indices(query.params.size());
  std::iota(indices.begin(), indices.end(), 0);
  const std::size_t k = std::min(indices.size(), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
    std::swap(indices[i], indices[pick(rng)]);
  }
  indices.resize(k);
  std::sort(indices.begin(), indices.end());

  // Which ReLUs are open and which hinges are active: the loss is smooth in
  // a parameter only while this does not change.
  auto signature = [&] {
    std::vector<bool> sig;
    const bool triplet = config.objective == Objective::kTriplet;
    auto add = [&](const VideoClip& clip) {
      ForwardResult f = forward(query, clip);
      for (const std::vector<float>& act : f.cache.activations) {
        for (float v : act) sig.push_back(v > 0.0f);
      }
      return std::move(f.embedding);
    };
    for (const Triplet& t : batch) {
      const Embedding a = add(t.anchor);
      if (!triplet) continue;
      const Embedding p = add(t.positive), n = add(t.negative);
      double dap2 = 0.0, dan2 = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        dap2 += (a[k] - p[k]) * (a[k] - p[k]);
        dan2 += (a[k] - n[k]) * (a[k] - n[k]);
      }
      sig.push_back(std::sqrt(dap2) - std::sqrt(dan2) + config.margin > 0.0);
    }
    return sig;
  };
  const std::vector<bool> base_sig = signature();

  GradCheckReport report;
  for (std::size_t idx : indices) {
    const float original = query.params[idx];
    auto at = [&](double offset, std::vector<bool>* sig) {
      query.params[idx] = static_cast<float>(original + offset);
      const double actual = static_cast<double>(query.params[idx]) - original;
      const double loss = batch_objective(config, query, key, batch, queue, nullptr);
      if (sig) *sig = signature();
      query.params[idx] = original;
      return std::pair{loss, actual};
    };
    const double l0 = batch_objective(config, query, key, batch, queue, nullptr);
    GradCheckEntry e{idx, grads[idx], 0.0, 0.0, h, 0};
    for (int attempt = 0;; ++attempt, e.step /= 4.0) {
      std::vector<bool> sp, sm;
      const auto [lp, dp] = at(e.step, &sp);
      const auto [lm, dm] = at(-e.step, &sm);
      const bool smooth_up = sp == base_sig, smooth_down = sm == base_sig;
      if ((smooth_up && smooth_down) || attempt == 3) {
        e.numeric = (lp - lm) / (dp - dm);
        e.side = 0;
        break;
      }
      std::vector<bool> s2;
      if (smooth_up) {
        const auto [l2, d2] = at(2.0 * e.step, &s2);
        if (s2 == base_sig) {
          // Quadratic through (0, l0), (dp, lp), (d2, l2), slope at 0.
          e.numeric = (lp * d2 * d2 - l2 * dp * dp - l0 * (d2 * d2 - dp * dp)) / (dp * d2 * (d2 - dp));
          e.side = 1;
          break;
        }
      }
      if (smooth_down) {
        const auto [l2, d2] = at(-2.0 * e.step, &s2);
        if (s2 == base_sig) {
          e.numeric = (lm * d2 * d2 - l2 * dm * dm - l0 * (d2 * d2 - dm * dm)) / (dm * d2 * (d2 - dm));
          e.side = -1;
          break;
        }
      }
    }
    e.rel_error = std::abs(e.analytic - e.numeric) / std::max(1.0, std::abs(e.numeric));
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace dsm
