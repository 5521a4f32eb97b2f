#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "dsm/clip_io.hpp"
#include "dsm/encoder.hpp"
#include "oracles.hpp"

namespace {

struct RunResult {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string("\"") + DSM_CLI_PATH + "\" " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

const char* kTinyConfig =
    "seed = 3\nframes = 4\ninput_size = 16\nstage_channels = 4, 8\nstage_strides = 1x2x2, 2\n"
    "embed_dim = 8\nstride = 4\nbatch_size = 4\nepochs = 1\nqueue_size = 8\nflow_source = ground_truth\n";

}  // namespace

TEST_CASE("end-to-end pipeline through the command line") {
  oracle::TempDir dir("cli_pipeline");
  const std::string d = dir.path().string();

  const RunResult gen = run("synth-gen --scenes 2 --motions 2 --per-cell 5 --length 64 --size 32 --out " + d + "/data");
  INFO(gen.output);
  REQUIRE(gen.status == 0);
  CHECK(contains(gen.output, "videos=20"));

  std::ofstream(dir.path() / "tiny.cfg") << kTinyConfig;
  const RunResult pre = run("pretrain --config " + d + "/tiny.cfg --manifest " + d + "/data/manifest.tsv --out " + d +
                            "/m.ckpt");
  INFO(pre.output);
  REQUIRE(pre.status == 0);
  CHECK(contains(pre.output, "steps=4"));
  CHECK(std::filesystem::exists(dir.path() / "m.ckpt"));
  std::ifstream log(dir.path() / "m.ckpt.metrics.tsv");
  std::string all((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
  CHECK(count_lines(all) == 4);
  CHECK(dsm::load_checkpoint(dir.path() / "m.ckpt").step == 4);

  const RunResult ret = run("eval-retrieval --ckpt " + d + "/m.ckpt --manifest " + d + "/data/manifest.tsv");
  INFO(ret.output);
  REQUIRE(ret.status == 0);
  CHECK(contains(ret.output, "label=motion queries=64 gallery=256"));
  CHECK(contains(ret.output, "recall@1="));
  CHECK(contains(ret.output, "recall@50="));

  const RunResult probe = run("probe --ckpt " + d + "/m.ckpt --manifest " + d + "/data/manifest.tsv");
  INFO(probe.output);
  REQUIRE(probe.status == 0);
  CHECK(contains(probe.output, "label=motion accuracy="));
  CHECK(contains(probe.output, "label=scene accuracy="));
}

TEST_CASE("augment preview writes frames for each op") {
  oracle::TempDir dir("cli_preview");
  const std::string d = dir.path().string();
  std::mt19937_64 rng(1);
  dsm::write_clip(dir.path() / "c.dsmc", oracle::random_clip(20, 12, 14, 3, rng));

  const RunResult tps = run("augment-preview --clip " + d + "/c.dsmc --op tps --seed 1 --out " + d + "/tps");
  INFO(tps.output);
  REQUIRE(tps.status == 0);
  CHECK(contains(tps.output, "control_points=16"));
  CHECK(std::filesystem::exists(dir.path() / "tps" / "control_points.ppm"));
  CHECK(dsm::import_ppm_sequence(dir.path() / "tps").frames() >= 20);

  const RunResult fs = run("augment-preview --clip " + d + "/c.dsmc --op flowscale --seed 2 --out " + d + "/fs");
  INFO(fs.output);
  CHECK(fs.status == 0);
  CHECK(contains(fs.output, "op=flowscale frames=20"));

  const RunResult sh = run("augment-preview --clip " + d + "/c.dsmc --op shift --seed 3 --frames 5 --stride 2 --out " +
                           d + "/sh");
  INFO(sh.output);
  CHECK(sh.status == 0);
  CHECK(contains(sh.output, "frames=5"));
}

TEST_CASE("gradcheck subcommand") {
  oracle::TempDir dir("cli_grad");
  std::ofstream(dir.path() / "g.cfg") << kTinyConfig;
  const RunResult ok = run("gradcheck --config " + dir.path().string() + "/g.cfg --params 20");
  INFO(ok.output);
  CHECK(ok.status == 0);
  CHECK(contains(ok.output, "checked=20"));
  // An impossible tolerance turns into a failure exit.
  const RunResult bad = run("gradcheck --config " + dir.path().string() + "/g.cfg --params 5 --tolerance 0");
  CHECK(bad.status == 1);
  CHECK(contains(bad.output, "error kind=gradcheck_failed"));
}

TEST_CASE("errors are one line with a kind and exit code 1") {
  oracle::TempDir dir("cli_errors");
  const std::string d = dir.path().string();
  std::ofstream(dir.path() / "junk.dsmc") << "NOPE and some more bytes to read";
  const RunResult magic = run("augment-preview --clip " + d + "/junk.dsmc --op tps --seed 1 --out " + d + "/o");
  CHECK(magic.status == 1);
  CHECK(magic.output.rfind("error kind=bad_magic message=\"", 0) == 0);
  CHECK(count_lines(magic.output) == 1);

  std::ofstream(dir.path() / "bad.cfg") << "seed = 1\nwat = 2\n";
  std::ofstream(dir.path() / "m.tsv") << "";
  const RunResult cfg = run("pretrain --config " + d + "/bad.cfg --manifest " + d + "/m.tsv --out " + d + "/x.ckpt");
  CHECK(cfg.status == 1);
  CHECK(cfg.output.rfind("error kind=config ", 0) == 0);
  CHECK(contains(cfg.output, "wat"));
  CHECK(count_lines(cfg.output) == 1);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("").status == 2);
  CHECK(run("frobnicate").status == 2);
  const RunResult missing = run("synth-gen");
  CHECK(missing.status == 2);
  CHECK(missing.output.rfind("error kind=usage", 0) == 0);
  CHECK(run("augment-preview --clip /nonexistent.dsmc --op tps --seed 1 --out /tmp/x").status == 2);
  CHECK(run("--help").status == 0);
}
