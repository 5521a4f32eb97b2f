#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "dsm/error.hpp"
#include "dsm/objectives.hpp"
#include "oracles.hpp"

using dsm::Embedding;
using dsm::MemoryQueue;
using dsm::TripletBatch;

namespace {

Embedding unit2(double angle) { return {std::cos(angle), std::sin(angle)}; }

Embedding renorm(Embedding v) {
  const double n = std::sqrt(oracle::dot(v, v));
  for (double& x : v) x /= n;
  return v;
}

// Random direction orthogonal to e.
Embedding tangent(const Embedding& e, std::mt19937_64& g) {
  Embedding u = oracle::random_unit(e.size(), g);
  const double d = oracle::dot(u, e);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] -= d * e[i];
  return renorm(u);
}

enum class Slot { kAnchor, kPositive, kNegative };

// Compares the analytic gradient along a tangent direction with central
// differences of loss(normalize(e + t u)).
void check_tangent_gradients(const TripletBatch& batch,
                             const std::function<dsm::LossResult(const TripletBatch&)>& loss,
                             std::mt19937_64& g) {
  const dsm::LossResult r = loss(batch);
  const double h = 1e-5;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (Slot slot : {Slot::kAnchor, Slot::kPositive, Slot::kNegative}) {
      if (slot == Slot::kNegative && batch.negatives.empty()) continue;
      auto pick = [&](TripletBatch& b) -> Embedding& {
        return slot == Slot::kAnchor ? b.anchors[i] : slot == Slot::kPositive ? b.positives[i] : b.negatives[i];
      };
      const Embedding& grad = slot == Slot::kAnchor ? r.grad_anchors[i]
                              : slot == Slot::kPositive ? r.grad_positives[i]
                                                        : r.grad_negatives[i];
      TripletBatch copy = batch;
      const Embedding e = pick(copy);
      const Embedding u = tangent(e, g);
      auto at = [&](double t) {
        Embedding v = e;
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += t * u[k];
        pick(copy) = renorm(v);
        return loss(copy).loss;
      };
      const double fd = (at(h) - at(-h)) / (2.0 * h);
      const double analytic = oracle::dot(grad, u);
      CHECK(std::abs(analytic - fd) <= 1e-4 * std::max(std::abs(fd), 1e-2));
    }
  }
}

TripletBatch random_batch(std::size_t n, std::size_t d, std::mt19937_64& g, bool negatives = true) {
  TripletBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.anchors.push_back(oracle::random_unit(d, g));
    b.positives.push_back(oracle::random_unit(d, g));
    if (negatives) b.negatives.push_back(oracle::random_unit(d, g));
  }
  return b;
}

}  // namespace

TEST_CASE("triplet loss is zero when the hinge is inactive") {
  TripletBatch b{{unit2(0.0)}, {unit2(0.0)}, {unit2(2.0)}};
  // |a - n| = 2 sin(1) > 0.5
  CHECK(dsm::triplet_loss(b, 0.5).loss == 0.0);
  const auto r = dsm::triplet_loss(b, 0.5);
  for (double v : r.grad_anchors[0]) CHECK(v == 0.0);
}

TEST_CASE("triplet loss equals the margin when positive and negative coincide") {
  std::mt19937_64 g(1);
  for (int i = 0; i < 20; ++i) {
    const Embedding a = oracle::random_unit(16, g), p = oracle::random_unit(16, g);
    TripletBatch b{{a}, {p}, {p}};
    CHECK(dsm::triplet_loss(b, 0.5).loss == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("triplet loss hand values") {
  TripletBatch b{{{1.0, 0.0}}, {{0.0, 1.0}}, {{-1.0, 0.0}}};
  CHECK(dsm::triplet_loss(b, 0.5).loss == 0.0);
  const double expected = std::sqrt(2.0) - 2.0 + 0.7;
  CHECK(std::abs(dsm::triplet_loss(b, 0.7).loss - expected) < 1e-12);
  CHECK(std::abs(dsm::triplet_loss(b, 0.7).loss - 0.1142) < 1e-4);
}

TEST_CASE("triplet loss sums over the batch") {
  std::mt19937_64 g(2);
  const TripletBatch b = random_batch(5, 8, g);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    TripletBatch one{{b.anchors[i]}, {b.positives[i]}, {b.negatives[i]}};
    sum += dsm::triplet_loss(one, 1.5).loss;
  }
  CHECK(dsm::triplet_loss(b, 1.5).loss == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("triplet loss rejects bad inputs") {
  TripletBatch b{{{1.0, 0.0}}, {{0.0, 1.0}}, {{0.6, 0.6}}};
  CHECK_THROWS_AS(dsm::triplet_loss(b, 0.5), dsm::InvalidArgument);
  TripletBatch e;
  CHECK_THROWS_AS(dsm::triplet_loss(e, 0.5), dsm::InvalidArgument);
  TripletBatch m{{{1.0, 0.0}}, {{0.0, 1.0}}, {}};
  CHECK_THROWS_AS(dsm::triplet_loss(m, 0.5), dsm::ShapeMismatch);
  TripletBatch ok{{{1.0, 0.0}}, {{0.0, 1.0}}, {{0.0, 1.0}}};
  CHECK_THROWS_AS(dsm::triplet_loss(ok, -0.1), dsm::InvalidArgument);
}

TEST_CASE("contrastive loss hand values") {
  const MemoryQueue empty(4, 2);
  TripletBatch b{{{1.0, 0.0}}, {{1.0, 0.0}}, {{-1.0, 0.0}}};
  const double e = std::exp(1.0);
  CHECK(std::abs(dsm::dsm_contrastive_loss(b, empty, 1.0).loss - std::log(1.0 + std::exp(-2.0))) < 1e-12);
  CHECK(std::abs(dsm::dsm_contrastive_loss(b, empty, 1.0).loss - 0.1269) < 1e-4);

  MemoryQueue one(4, 2);
  const std::vector<Embedding> q{{0.0, 1.0}};
  one.push(q);
  const double l = dsm::dsm_contrastive_loss(b, one, 1.0).loss;
  CHECK(std::abs(l + std::log(e / (e + 1.0 / e + 1.0))) < 1e-12);
  CHECK(std::abs(l - 0.4076) < 1e-4);
}

TEST_CASE("contrastive loss is log 2 when positive and negative coincide") {
  std::mt19937_64 g(3);
  const MemoryQueue empty(4, 12);
  for (int i = 0; i < 10; ++i) {
    const Embedding a = oracle::random_unit(12, g), p = oracle::random_unit(12, g);
    TripletBatch b{{a}, {p}, {p}};
    CHECK(dsm::dsm_contrastive_loss(b, empty, 1.0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(dsm::dsm_contrastive_loss(b, empty, 0.07).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss is the mean of per-sample terms") {
  std::mt19937_64 g(4);
  MemoryQueue q(16, 6);
  std::vector<Embedding> fill;
  for (int i = 0; i < 9; ++i) fill.push_back(oracle::random_unit(6, g));
  q.push(fill);
  const TripletBatch b = random_batch(4, 6, g);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Embedding& a = b.anchors[i];
    double denom = std::exp(oracle::dot(a, b.positives[i]) / 0.5) + std::exp(oracle::dot(a, b.negatives[i]) / 0.5);
    for (const Embedding& k : fill) denom += std::exp(oracle::dot(a, k) / 0.5);
    sum += -std::log(std::exp(oracle::dot(a, b.positives[i]) / 0.5) / denom);
  }
  CHECK(dsm::dsm_contrastive_loss(b, q, 0.5).loss == doctest::Approx(sum / 4).epsilon(1e-12));
}

TEST_CASE("contrastive loss without intra negatives drops that term") {
  MemoryQueue q(4, 2);
  const std::vector<Embedding> k{{0.0, 1.0}};
  q.push(k);
  TripletBatch b{{{1.0, 0.0}}, {{1.0, 0.0}}, {}};
  const double e = std::exp(1.0);
  CHECK(dsm::dsm_contrastive_loss(b, q, 1.0).loss == doctest::Approx(-std::log(e / (e + 1.0))).epsilon(1e-12));
  CHECK(dsm::dsm_contrastive_loss(b, q, 1.0).grad_negatives.empty());
}

TEST_CASE("contrastive loss stays finite for extreme temperatures") {
  std::mt19937_64 g(5);
  MemoryQueue q(64, 32);
  std::vector<Embedding> fill;
  for (int i = 0; i < 64; ++i) fill.push_back(oracle::random_unit(32, g));
  q.push(fill);
  const TripletBatch b = random_batch(8, 32, g);
  for (double t : {1e-4, 0.01, 1.0, 100.0}) {
    const auto r = dsm::dsm_contrastive_loss(b, q, t);
    CHECK(std::isfinite(r.loss));
    for (const auto& ga : r.grad_anchors)
      for (double v : ga) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("contrastive loss rejects bad inputs") {
  const MemoryQueue q(4, 2);
  TripletBatch b{{{1.0, 0.0}}, {{1.0, 0.0}}, {{-1.0, 0.0}}};
  CHECK_THROWS_AS(dsm::dsm_contrastive_loss(b, q, 0.0), dsm::InvalidArgument);
  CHECK_THROWS_AS(dsm::dsm_contrastive_loss(TripletBatch{}, q, 1.0), dsm::InvalidArgument);
  MemoryQueue q3(4, 3);
  const std::vector<Embedding> k{{0.0, 0.0, 1.0}};
  q3.push(k);
  CHECK_THROWS_AS(dsm::dsm_contrastive_loss(b, q3, 1.0), dsm::ShapeMismatch);
}

TEST_CASE("triplet gradients match tangent-space finite differences") {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 10; ++trial) {
    const TripletBatch b = random_batch(3, 8, g);
    // Margin 3 keeps every hinge active.
    check_tangent_gradients(b, [](const TripletBatch& x) { return dsm::triplet_loss(x, 3.0); }, g);
  }
}

TEST_CASE("contrastive gradients match tangent-space finite differences") {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 10; ++trial) {
    MemoryQueue q(12, 8);
    std::vector<Embedding> fill;
    for (int i = 0; i < 7; ++i) fill.push_back(oracle::random_unit(8, g));
    q.push(fill);
    const TripletBatch b = random_batch(3, 8, g, trial % 2 == 0);
    const double t = trial < 5 ? 1.0 : 0.2;
    check_tangent_gradients(b, [&](const TripletBatch& x) { return dsm::dsm_contrastive_loss(x, q, t); }, g);
  }
}

TEST_CASE("raising the anchor-negative similarity never lowers either loss") {
  std::mt19937_64 g(8);
  MemoryQueue q(8, 3);
  std::vector<Embedding> fill;
  for (int i = 0; i < 5; ++i) fill.push_back(oracle::random_unit(3, g));
  q.push(fill);
  const Embedding a{1.0, 0.0, 0.0};
  const Embedding p = renorm({0.3, 0.9, 0.2});
  double prev_t = -1.0, prev_c = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double theta = std::numbers::pi * (1.0 - i / 100.0);
    const Embedding n{std::cos(theta), 0.0, std::sin(theta)};
    TripletBatch b{{a}, {p}, {n}};
    const double lt = dsm::triplet_loss(b, 0.5).loss;
    const double lc = dsm::dsm_contrastive_loss(b, q, 1.0).loss;
    CHECK(lt >= prev_t);
    CHECK(lc >= prev_c);
    prev_t = lt, prev_c = lc;
  }
}

TEST_CASE("queue keeps insertion order before wrapping") {
  MemoryQueue q(5, 2);
  const std::vector<Embedding> three{unit2(0.1), unit2(0.2), unit2(0.3)};
  dsm::queue_push(q, three);
  CHECK(q.size() == 3);
  CHECK(q.cursor() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::equal(q.entry(i).begin(), q.entry(i).end(), three[i].begin()));
  }
  CHECK_THROWS_AS(q.entry(3), dsm::InvalidArgument);
}

TEST_CASE("queue evicts the oldest entry first") {
  const std::size_t k = 6;
  MemoryQueue q(k, 2);
  std::vector<Embedding> pushed;
  for (std::size_t i = 0; i <= k; ++i) {
    pushed.push_back(unit2(0.1 * static_cast<double>(i + 1)));
    dsm::queue_push(q, std::vector<Embedding>{pushed.back()});
  }
  CHECK(q.size() == k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto e = q.entry(i);
    REQUIRE(std::equal(e.begin(), e.end(), pushed[i + 1].begin()));
    CHECK_FALSE(std::equal(e.begin(), e.end(), pushed[0].begin()));
  }
}

TEST_CASE("pushing exactly K into an empty queue wraps the cursor to zero") {
  MemoryQueue q(4, 2);
  const std::vector<Embedding> four{unit2(0.0), unit2(1.0), unit2(2.0), unit2(3.0)};
  dsm::queue_push(q, four);
  CHECK(q.size() == 4);
  CHECK(q.cursor() == 0);
}

TEST_CASE("queue rejects wrong dimension or non-unit vectors") {
  MemoryQueue q(4, 2);
  CHECK_THROWS_AS(dsm::queue_push(q, std::vector<Embedding>{{1.0, 0.0, 0.0}}), dsm::ShapeMismatch);
  CHECK_THROWS_AS(dsm::queue_push(q, std::vector<Embedding>{{1.0, 1.0}}), dsm::InvalidArgument);
  CHECK(q.empty());
  CHECK_THROWS_AS(MemoryQueue(0, 2), dsm::InvalidArgument);
}

TEST_CASE("queue matches a FIFO model over random push sequences") {
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 9)(g);
    MemoryQueue q(k, 3);
    std::vector<Embedding> model;
    const int pushes = std::uniform_int_distribution<int>(1, 8)(g);
    for (int p = 0; p < pushes; ++p) {
      std::vector<Embedding> batch(std::uniform_int_distribution<std::size_t>(0, 2 * k)(g));
      for (auto& e : batch) e = oracle::random_unit(3, g);
      dsm::queue_push(q, batch);
      model.insert(model.end(), batch.begin(), batch.end());
      if (model.size() > k) model.erase(model.begin(), model.end() - static_cast<std::ptrdiff_t>(k));
      REQUIRE(q.size() == model.size());
      for (std::size_t i = 0; i < model.size(); ++i) {
        REQUIRE(std::equal(q.entry(i).begin(), q.entry(i).end(), model[i].begin()));
      }
    }
  }
}

TEST_CASE("contrastive loss is invariant to the order of queue entries") {
  std::mt19937_64 g(10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Embedding> entries(std::uniform_int_distribution<std::size_t>(1, 20)(g));
    for (auto& e : entries) e = oracle::random_unit(5, g);
    std::vector<Embedding> shuffled = entries;
    std::shuffle(shuffled.begin(), shuffled.end(), g);
    MemoryQueue a(32, 5), b(32, 5);
    a.push(entries);
    b.push(shuffled);
    const TripletBatch batch = random_batch(3, 5, g);
    CHECK(dsm::dsm_contrastive_loss(batch, a, 0.3).loss ==
          doctest::Approx(dsm::dsm_contrastive_loss(batch, b, 0.3).loss).epsilon(1e-12));
  }
}
