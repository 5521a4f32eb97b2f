#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "dsm/encoder.hpp"
#include "dsm/error.hpp"
#include "oracles.hpp"

namespace {

dsm::EncoderConfig tiny_config() {
  dsm::EncoderConfig c;
  c.frames = 4;
  c.height = 8;
  c.width = 8;
  c.channels = 1;
  c.stages = {{4, {3, 3, 3}, {1, 2, 2}}, {6, {3, 3, 3}, {2, 2, 2}}};
  c.embed_dim = 8;
  return c;
}

dsm::EncoderState tiny_state(std::uint64_t seed) {
  dsm::Rng rng(seed);
  return dsm::init_encoder(tiny_config(), rng);
}

double norm(const std::vector<double>& v) { return std::sqrt(oracle::dot(v, v)); }

}  // namespace

TEST_CASE("default configuration shapes") {
  const dsm::EncoderConfig c;
  c.validate();
  const auto s = c.shapes();
  REQUIRE(s.size() == 4);
  CHECK(s[0] == dsm::TensorShape{16, 32, 32, 3});
  CHECK(s[1] == dsm::TensorShape{16, 16, 16, 8});
  CHECK(s[2] == dsm::TensorShape{8, 8, 8, 16});
  CHECK(s[3] == dsm::TensorShape{4, 4, 4, 32});
  const dsm::ParameterLayout layout(c);
  CHECK(layout.total == (27 * 3 * 8 + 8) + (27 * 8 * 16 + 16) + (27 * 16 * 32 + 32) + (128 * 32 + 128));
}

TEST_CASE("configuration validation") {
  dsm::EncoderConfig c = tiny_config();
  c.embed_dim = 1;
  CHECK_THROWS_AS(c.validate(), dsm::InvalidArgument);
  c = tiny_config();
  c.width = 10;  // stride 2 then 2 does not divide 10 -> 5
  CHECK_THROWS_AS(c.validate(), dsm::InvalidArgument);
  c = tiny_config();
  c.stages.clear();
  CHECK_THROWS_AS(c.validate(), dsm::InvalidArgument);
}

TEST_CASE("initialization is bounded by the fan-in rule with zero biases") {
  const dsm::EncoderState s = tiny_state(1);
  const dsm::ParameterLayout layout(s.config);
  const double b0 = std::sqrt(6.0 / 27.0), b1 = std::sqrt(6.0 / (27.0 * 4)), bp = std::sqrt(6.0 / 6.0);
  auto check_block = [&](const dsm::ParameterLayout::Block& blk, double bound) {
    double peak = 0.0;
    for (std::size_t i = 0; i < blk.size; ++i) peak = std::max(peak, double(std::abs(s.params[blk.offset + i])));
    CHECK(peak <= bound);
    CHECK(peak > 0.5 * bound);
  };
  check_block(layout.stage_weights[0], b0);
  check_block(layout.stage_weights[1], b1);
  check_block(layout.projection_weights, bp);
  for (const auto& blk : {layout.stage_bias[0], layout.stage_bias[1], layout.projection_bias}) {
    for (std::size_t i = 0; i < blk.size; ++i) CHECK(s.params[blk.offset + i] == 0.0f);
  }
}

TEST_CASE("forward matches a direct reference implementation") {
  std::mt19937_64 g(2);
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    dsm::EncoderState s = tiny_state(seed);
    // Non-zero biases exercise the bias path too.
    std::uniform_real_distribution<float> u(-0.2f, 0.2f);
    const dsm::ParameterLayout layout(s.config);
    for (const auto& blk : {layout.stage_bias[0], layout.stage_bias[1], layout.projection_bias})
      for (std::size_t i = 0; i < blk.size; ++i) s.params[blk.offset + i] = u(g);
    const dsm::VideoClip clip = oracle::random_clip(4, 8, 8, 1, g);
    const auto z = dsm::embed(s, clip);
    const auto ref = oracle::encoder_forward(s, clip);
    REQUIRE(z.size() == ref.size());
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("embedding has the configured length and unit norm") {
  std::mt19937_64 g(6);
  dsm::Rng rng(7);
  const dsm::EncoderState s = dsm::init_encoder(dsm::EncoderConfig{}, rng);
  for (int i = 0; i < 3; ++i) {
    const auto z = dsm::embed(s, oracle::random_clip(16, 32, 32, 3, g));
    CHECK(z.size() == 128);
    CHECK(std::abs(norm(z) - 1.0) < 1e-5);
  }
}

TEST_CASE("all-zero parameters fall back to e1") {
  dsm::EncoderState s = tiny_state(8);
  std::fill(s.params.begin(), s.params.end(), 0.0f);
  std::mt19937_64 g(9);
  const dsm::ForwardResult r = dsm::forward(s, oracle::random_clip(4, 8, 8, 1, g));
  for (double v : r.cache.pooled) CHECK(v == 0.0);
  CHECK(r.cache.degenerate);
  CHECK(r.embedding[0] == 1.0);
  for (std::size_t i = 1; i < r.embedding.size(); ++i) CHECK(r.embedding[i] == 0.0);
  const std::vector<double> up(8, 1.0);
  for (float v : dsm::backward(s, r.cache, up)) CHECK(v == 0.0f);
}

TEST_CASE("scaling the projection leaves the embedding unchanged") {
  dsm::EncoderState s = tiny_state(10);
  std::mt19937_64 g(11);
  const dsm::VideoClip clip = oracle::random_clip(4, 8, 8, 1, g);
  const auto before = dsm::embed(s, clip);
  const dsm::ParameterLayout layout(s.config);
  for (std::size_t i = 0; i < layout.projection_weights.size; ++i) s.params[layout.projection_weights.offset + i] *= 2.0f;
  const auto after = dsm::embed(s, clip);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-6));
}

TEST_CASE("forward is bitwise deterministic") {
  const dsm::EncoderState s = tiny_state(12);
  std::mt19937_64 g(13);
  const dsm::VideoClip clip = oracle::random_clip(4, 8, 8, 1, g);
  CHECK(dsm::embed(s, clip) == dsm::embed(s, clip));
}

TEST_CASE("forward rejects the wrong input shape") {
  const dsm::EncoderState s = tiny_state(14);
  CHECK_THROWS_AS(dsm::embed(s, dsm::VideoClip(4, 8, 8, 3)), dsm::ShapeMismatch);
  CHECK_THROWS_AS(dsm::embed(s, dsm::VideoClip(5, 8, 8, 1)), dsm::ShapeMismatch);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const dsm::EncoderState s = tiny_state(15);
  std::mt19937_64 g(16);
  const dsm::ForwardResult r = dsm::forward(s, oracle::random_clip(4, 8, 8, 1, g));
  for (float v : dsm::backward(s, r.cache, std::vector<double>(8, 0.0))) CHECK(v == 0.0f);
}

TEST_CASE("backward matches central finite differences for every parameter") {
  // Scalar objective L = c . z for a fixed random c. A central difference is
  // only meaningful when no ReLU changes state inside [x - h, x + h], so h
  // shrinks until the activation masks on both sides match the base point.
  dsm::EncoderState s = tiny_state(17);
  std::mt19937_64 g(18);
  const dsm::VideoClip clip = oracle::random_clip(4, 8, 8, 1, g);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> c(8);
  for (double& v : c) v = n(g);
  const dsm::ForwardResult r = dsm::forward(s, clip);
  const std::vector<float> grads = dsm::backward(s, r.cache, c);
  auto mask = [&](const dsm::ForwardResult& f) {
    std::vector<bool> m;
    for (const auto& act : f.cache.activations)
      for (float v : act) m.push_back(v > 0.0f);
    return m;
  };
  const std::vector<bool> base = mask(r);
  double worst = 0.0;
  int shrunk = 0, skipped = 0;
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    const float keep = s.params[i];
    bool done = false;
    for (double h = 1e-3; h >= 1e-5 && !done; h /= 4.0) {
      s.params[i] = keep + static_cast<float>(h);
      const double hi = s.params[i];
      const dsm::ForwardResult fu = dsm::forward(s, clip);
      s.params[i] = keep - static_cast<float>(h);
      const double lo = s.params[i];
      const dsm::ForwardResult fl = dsm::forward(s, clip);
      s.params[i] = keep;
      if (mask(fu) != base || mask(fl) != base) continue;
      const double fd = (oracle::dot(c, fu.embedding) - oracle::dot(c, fl.embedding)) / (hi - lo);
      worst = std::max(worst, std::abs(grads[i] - fd) / std::max(1.0, std::abs(fd)));
      if (h < 1e-3) ++shrunk;
      done = true;
    }
    if (!done) ++skipped;
  }
  INFO("shrunk " << shrunk << " skipped " << skipped);
  CHECK(worst < 1e-3);
  CHECK(skipped <= 2);
  CHECK(shrunk < static_cast<int>(s.params.size()) / 20);
}

TEST_CASE("gradient through normalization is orthogonal to the embedding") {
  // The projection-bias gradient equals the gradient at the pre-normalized vector.
  const dsm::EncoderState s = tiny_state(19);
  std::mt19937_64 g(20);
  const dsm::ForwardResult r = dsm::forward(s, oracle::random_clip(4, 8, 8, 1, g));
  const std::vector<double> up = oracle::random_unit(8, g);
  const std::vector<float> grads = dsm::backward(s, r.cache, up);
  const dsm::ParameterLayout layout(s.config);
  std::vector<double> gb(8);
  for (int d = 0; d < 8; ++d) gb[d] = grads[layout.projection_bias.offset + d];
  CHECK(std::abs(oracle::dot(gb, r.embedding)) < 1e-6);
  CHECK(norm(gb) > 1e-3);
}

TEST_CASE("backward accumulates into the gradient buffer") {
  const dsm::EncoderState s = tiny_state(21);
  std::mt19937_64 g(22);
  const dsm::ForwardResult r = dsm::forward(s, oracle::random_clip(4, 8, 8, 1, g));
  const std::vector<double> up = oracle::random_unit(8, g);
  const std::vector<float> once = dsm::backward(s, r.cache, up);
  std::vector<float> twice(s.params.size(), 0.0f);
  dsm::backward(s, r.cache, up, twice);
  dsm::backward(s, r.cache, up, twice);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-6));
}

TEST_CASE("backward refuses a cache from an earlier step") {
  dsm::EncoderState s = tiny_state(23);
  std::mt19937_64 g(24);
  const dsm::ForwardResult r = dsm::forward(s, oracle::random_clip(4, 8, 8, 1, g));
  dsm::sgd_step(s, std::vector<float>(s.params.size(), 0.0f), {});
  CHECK_THROWS_AS(dsm::backward(s, r.cache, std::vector<double>(8, 0.1)), dsm::StaleCacheError);
}

TEST_CASE("sgd arithmetic") {
  std::vector<float> w{1.0f}, v{0.0f};
  const std::vector<float> one{1.0f}, zero{0.0f};
  dsm::sgd_update(w, v, one, {0.1, 0.0, 0.0});
  CHECK(w[0] == doctest::Approx(0.9));

  w = {1.0f}, v = {0.0f};
  dsm::sgd_update(w, v, zero, {0.1, 0.0, 0.5});
  CHECK(w[0] == doctest::Approx(0.95));

  // Classical momentum: second step moves by lr * (m * g + g).
  w = {1.0f}, v = {0.0f};
  dsm::sgd_update(w, v, one, {0.1, 0.9, 0.0});
  dsm::sgd_update(w, v, one, {0.1, 0.9, 0.0});
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 - 0.1 * 1.9));
}

TEST_CASE("zero learning rate leaves the state unchanged") {
  dsm::EncoderState s = tiny_state(25);
  const std::vector<float> before = s.params;
  std::vector<float> grads(s.params.size(), 0.3f);
  dsm::sgd_step(s, grads, {0.0, 0.9, 5e-4});
  CHECK(s.params == before);
  CHECK(s.step == 1);
}

TEST_CASE("non-finite gradients abort the step untouched") {
  dsm::EncoderState s = tiny_state(26);
  const dsm::EncoderState before = s;
  std::vector<float> grads(s.params.size(), 0.1f);
  grads[7] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(dsm::sgd_step(s, grads, {}), dsm::NonFiniteGradientError);
  CHECK(s.params == before.params);
  CHECK(s.velocity == before.velocity);
  CHECK(s.step == before.step);
  grads[7] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(dsm::sgd_step(s, grads, {}), dsm::NonFiniteGradientError);
}

TEST_CASE("momentum update arithmetic") {
  dsm::EncoderState key = tiny_state(27), query = tiny_state(28);
  std::fill(key.params.begin(), key.params.end(), 1.0f);
  std::fill(query.params.begin(), query.params.end(), 0.0f);
  dsm::momentum_update(key, query, 0.99);
  for (float v : key.params) CHECK(v == doctest::Approx(0.99));

  dsm::EncoderState a = tiny_state(29);
  const std::vector<float> kept = a.params;
  dsm::momentum_update(a, tiny_state(30), 1.0);
  CHECK(a.params == kept);

  dsm::EncoderState b = tiny_state(31);
  const dsm::EncoderState same = b;
  dsm::momentum_update(b, same, 0.37);
  for (std::size_t i = 0; i < b.params.size(); ++i) CHECK(b.params[i] == doctest::Approx(same.params[i]).epsilon(1e-7));

  dsm::Rng rng(1);
  const dsm::EncoderState other = dsm::init_encoder(dsm::EncoderConfig{}, rng);
  CHECK_THROWS_AS(dsm::momentum_update(b, other, 0.99), dsm::InvalidArgument);
}

TEST_CASE("checkpoint round trip is bitwise exact") {
  dsm::EncoderState s = tiny_state(32);
  s.step = 41;
  std::ostringstream out(std::ios::binary);
  dsm::save_checkpoint(out, s);
  const std::string bytes = out.str();
  CHECK(bytes.substr(0, 4) == "DSMW");
  std::istringstream in(bytes, std::ios::binary);
  const dsm::EncoderState back = dsm::load_checkpoint(in);
  CHECK(back.config == s.config);
  CHECK(back.params == s.params);
  CHECK(back.step == 41);
  std::ostringstream again(std::ios::binary);
  dsm::save_checkpoint(again, back);
  CHECK(again.str() == bytes);
}

TEST_CASE("checkpoint reader errors") {
  const dsm::EncoderState s = tiny_state(33);
  std::ostringstream out(std::ios::binary);
  dsm::save_checkpoint(out, s);
  std::string bytes = out.str();
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad, std::ios::binary);
    CHECK_THROWS_AS(dsm::load_checkpoint(in), dsm::BadMagicError);
  }
  {
    std::istringstream in(bytes.substr(0, bytes.size() - 3), std::ios::binary);
    CHECK_THROWS_AS(dsm::load_checkpoint(in), dsm::TruncatedError);
  }
  CHECK_THROWS_AS(dsm::load_checkpoint(std::filesystem::path("/nonexistent/ckpt")), dsm::IoError);

  dsm::EncoderState big = s;
  big.step = std::uint64_t{1} << 32;
  std::ostringstream sink(std::ios::binary);
  CHECK_THROWS_AS(dsm::save_checkpoint(sink, big), dsm::InvalidArgument);
}

TEST_CASE("normalize embedding") {
  bool degenerate = true;
  const auto z = dsm::normalize_embedding(std::vector<double>{3.0, 4.0}, &degenerate);
  CHECK_FALSE(degenerate);
  CHECK(z[0] == doctest::Approx(0.6));
  CHECK(z[1] == doctest::Approx(0.8));
  const auto e = dsm::normalize_embedding(std::vector<double>{0.0, 0.0, 0.0}, &degenerate);
  CHECK(degenerate);
  CHECK(e == std::vector<double>{1.0, 0.0, 0.0});
}
