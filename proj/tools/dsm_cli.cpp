#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dsm/clip_io.hpp"
#include "dsm/config.hpp"
#include "dsm/error.hpp"
#include "dsm/eval.hpp"
#include "dsm/optical_flow.hpp"
#include "dsm/synth.hpp"
#include "dsm/temporal.hpp"
#include "dsm/tps.hpp"
#include "dsm/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

[[noreturn]] void fail(const std::string& kind, const std::string& message) {
  std::cerr << "error kind=" << kind << " message=\"" << one_line(message) << "\"\n";
  std::exit(1);
}

void mark(std::vector<float>& rgb, int h, int w, double x, double y, const float color[3]) {
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px < 0 || py < 0 || px >= w || py >= h) continue;
      for (int c = 0; c < 3; ++c) rgb[(static_cast<std::size_t>(py) * w + px) * 3 + c] = color[c];
    }
  }
}

// Destinations in green, sources in red, drawn over the first output frame.
void write_overlay(const fs::path& path, const dsm::VideoClip& clip, const dsm::ControlPointSet& points) {
  const int h = clip.height(), w = clip.width();
  const dsm::FrameView f = clip.frame(0);
  std::vector<float> rgb(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = f.at(y, x, f.channels == 3 ? c : 0);
    }
  }
  const float green[3] = {0.0f, 1.0f, 0.0f};
  const float red[3] = {1.0f, 0.0f, 0.0f};
  for (std::size_t i = 0; i < points.size(); ++i) {
    mark(rgb, h, w, points.sources[i].x * (w - 1), points.sources[i].y * (h - 1), red);
    mark(rgb, h, w, points.destinations[i].x * (w - 1), points.destinations[i].y * (h - 1), green);
  }
  dsm::write_ppm(path, dsm::FrameView{rgb, h, w, 3});
}

std::vector<dsm::FlowField> clip_flows(const fs::path& clip_path, const dsm::VideoClip& clip) {
  const fs::path side = dsm::sidecar_path(clip_path);
  if (fs::exists(side)) {
    const dsm::SyntheticSpec spec = dsm::read_spec_sidecar(side);
    std::vector<dsm::FlowField> flows;
    for (int t = 0; t + 1 < clip.frames(); ++t) flows.push_back(dsm::ground_truth_flow(spec, t, t + 1));
    return flows;
  }
  return dsm::estimate_clip_flows(clip, {});
}

dsm::LabelKind parse_label(const std::string& s) {
  return s == "scene" ? dsm::LabelKind::kScene : dsm::LabelKind::kMotion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene/motion decoupling toolkit for self-supervised video representations"};
  app.require_subcommand(1);

  int scenes = 4, motions = 4, per_cell = 10;
  std::string out_dir;
  std::uint64_t synth_seed = 1;
  int synth_length = 80, synth_size = 48;
  auto* synth = app.add_subcommand("synth-gen", "Generate the scene x motion synthetic dataset");
  synth->add_option("--scenes", scenes, "Scene classes (2-4)")->capture_default_str();
  synth->add_option("--motions", motions, "Motion classes (2-4)")->capture_default_str();
  synth->add_option("--per-cell", per_cell, "Videos per (scene, motion) cell")->capture_default_str();
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Base seed")->capture_default_str();
  synth->add_option("--length", synth_length, "Frames per video")->capture_default_str();
  synth->add_option("--size", synth_size, "Frame height and width")->capture_default_str();

  std::string config_path, manifest_path, ckpt_path, metrics_path;
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  pre->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  pre->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", ckpt_path, "Checkpoint to write")->required();
  pre->add_option("--metrics", metrics_path, "Metrics log (default: <out>.metrics.tsv)");

  std::string clip_path, op;
  std::uint64_t preview_seed = 0;
  int preview_frames = 16, preview_stride = 4;
  auto* preview = app.add_subcommand("augment-preview", "Export an augmented clip as PPM frames");
  preview->add_option("--clip", clip_path, "Input clip (DSMC)")->required()->check(CLI::ExistingFile);
  preview->add_option("--op", op, "Augmentation")->required()->check(CLI::IsMember({"tps", "flowscale", "shift"}));
  preview->add_option("--seed", preview_seed, "Seed")->required();
  preview->add_option("--out", out_dir, "Output directory")->required();
  preview->add_option("--frames", preview_frames, "Window length for shift")->capture_default_str();
  preview->add_option("--stride", preview_stride, "Window stride for shift")->capture_default_str();

  std::string label = "motion";
  int eval_stride = 4;
  auto* retrieval = app.add_subcommand("eval-retrieval", "Recall@K of test clips against the train gallery");
  retrieval->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  retrieval->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  retrieval->add_option("--label", label, "Label to score")->check(CLI::IsMember({"motion", "scene"}))->capture_default_str();
  retrieval->add_option("--stride", eval_stride, "Temporal stride of the windows")->capture_default_str();

  auto* probe = app.add_subcommand("probe", "Nearest-centroid probe on frozen embeddings");
  probe->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  probe->add_option("--manifest", manifest_path, "Dataset manifest")->required()->check(CLI::ExistingFile);
  probe->add_option("--stride", eval_stride, "Temporal stride of the windows")->capture_default_str();

  int grad_params = 50;
  std::uint64_t grad_seed = 7;
  double grad_tol = 1e-3;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the configured objective");
  grad->add_option("--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  grad->add_option("--params", grad_params, "Parameters to check")->capture_default_str();
  grad->add_option("--seed", grad_seed, "Seed for parameters and inputs")->capture_default_str();
  grad->add_option("--tolerance", grad_tol, "Relative error bound")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=usage message=\"" << one_line(e.what()) << "\"\n";
    return 2;
  }

  try {
    if (*synth) {
      dsm::FactorialOptions options;
      options.seed = synth_seed;
      options.length = synth_length;
      options.height = options.width = synth_size;
      const dsm::DatasetManifest m = dsm::build_factorial_dataset(scenes, motions, per_cell, out_dir, options);
      std::cout << "videos=" << m.entries.size() << " manifest=" << (fs::path(out_dir) / "manifest.tsv").string() << "\n";
    } else if (*pre) {
      const dsm::TrainConfig config = dsm::load_train_config(config_path);
      const dsm::DatasetManifest manifest = dsm::read_manifest(manifest_path);
      dsm::PretrainOutputs outputs{ckpt_path, metrics_path.empty() ? ckpt_path + ".metrics.tsv" : metrics_path};
      const dsm::PretrainResult r = dsm::pretrain(config, manifest, outputs);
      std::cout << "steps=" << r.query.step << " final_loss=" << (r.metrics.empty() ? 0.0 : r.metrics.back().loss)
                << " checkpoint=" << ckpt_path << " metrics=" << outputs.metrics_log.string() << "\n";
    } else if (*preview) {
      const dsm::VideoClip clip = dsm::read_clip(fs::path(clip_path));
      dsm::Rng rng(preview_seed);
      fs::create_directories(out_dir);
      if (op == "tps") {
        const dsm::ControlPointSet points = dsm::sample_control_points(4, 0.1, rng);
        const dsm::VideoClip warped = dsm::apply_tps(clip, dsm::solve_tps(points));
        dsm::export_ppm_sequence(out_dir, warped);
        write_overlay(fs::path(out_dir) / "control_points.ppm", warped, points);
        std::cout << "op=tps frames=" << warped.frames() << " control_points=" << points.size() << "\n";
      } else if (op == "flowscale") {
        const std::vector<dsm::FlowField> flows = clip_flows(clip_path, clip);
        const dsm::ScaleParams params = dsm::sample_scale_params(clip.frames() - 1, 5.0, rng);
        dsm::export_ppm_sequence(out_dir, dsm::flow_scale_clip(clip, flows, params));
        std::cout << "op=flowscale frames=" << clip.frames() << "\n";
      } else {
        dsm::NegativeConfig nc;
        nc.flow_scaling = false;
        // Short clips cannot hold the default shift range.
        nc.shift.alpha2 = std::min(nc.shift.alpha2, clip.frames() - 1);
        nc.shift.alpha1 = std::min(nc.shift.alpha1, nc.shift.alpha2);
        const dsm::NegativeSample n =
            dsm::make_negative(clip, {0, preview_frames, preview_stride}, nc, rng);
        dsm::export_ppm_sequence(out_dir, n.clip);
        std::cout << "op=shift tau=" << n.tau << " frames=" << n.clip.frames() << "\n";
      }
    } else if (*retrieval || *probe) {
      const dsm::EncoderState state = dsm::load_checkpoint(fs::path(ckpt_path));
      const dsm::DatasetManifest manifest = dsm::read_manifest(manifest_path);
      const std::vector<dsm::EmbeddedClip> clips =
          dsm::embed_dataset(state, manifest, state.config.frames, eval_stride);
      if (*retrieval) {
        const dsm::RetrievalReport r = dsm::retrieval_report(clips, parse_label(label));
        std::cout << "label=" << label << " queries=" << r.query_count << " gallery=" << r.gallery_count << "\n";
        for (std::size_t i = 0; i < r.ks.size(); ++i) {
          std::printf("recall@%d=%.4f\n", r.ks[i], r.recall[i]);
        }
        for (const auto& [cls, values] : r.per_class) {
          std::printf("class=%d recall@%d=%.4f\n", cls, r.ks.front(), values.front());
        }
      } else {
        for (const char* name : {"motion", "scene"}) {
          const dsm::ProbeResult p = dsm::probe_report(clips, parse_label(name));
          std::printf("label=%s accuracy=%.4f correct=%zu total=%zu\n", name, p.accuracy, p.correct, p.total);
        }
      }
    } else if (*grad) {
      const dsm::TrainConfig config = dsm::load_train_config(config_path);
      const dsm::GradCheckReport r = dsm::gradient_check(config, grad_params, grad_seed);
      for (const dsm::GradCheckEntry& e : r.entries) {
        std::printf("param=%zu analytic=%.8g numeric=%.8g rel_error=%.3g step=%.3g side=%d\n", e.index, e.analytic,
                    e.numeric, e.rel_error, e.step, e.side);
      }
      std::printf("checked=%zu max_rel_error=%.3g\n", r.entries.size(), r.max_rel_error);
      if (!r.passed(grad_tol)) fail("gradcheck_failed", "max relative error exceeds tolerance");
    }
  } catch (const dsm::Error& e) {
    fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    fail("internal", e.what());
  }
  return 0;
}
