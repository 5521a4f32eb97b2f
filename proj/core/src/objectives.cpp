#include "dsm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsm/error.hpp"

namespace dsm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_unit(std::span<const double> v, std::size_t dim, const char* what) {
  if (v.size() != dim) {
    throw ShapeMismatch(std::string(what) + " embedding has dimension " + std::to_string(v.size()) +
                        ", expected " + std::to_string(dim));
  }
  const double n = std::sqrt(dot(v, v));
  if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
    throw InvalidArgument(std::string(what) + " embedding is not unit norm (|z| = " +
                          std::to_string(n) + ")");
  }
}

std::size_t check_batch(const TripletBatch& batch, bool need_negatives) {
  if (batch.anchors.empty()) throw InvalidArgument("empty batch");
  const std::size_t n = batch.anchors.size();
  if (batch.positives.size() != n) throw ShapeMismatch("positives do not match anchors");
  if ((need_negatives || !batch.negatives.empty()) && batch.negatives.size() != n) {
    throw ShapeMismatch("negatives do not match anchors");
  }
  const std::size_t dim = batch.anchors.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    check_unit(batch.anchors[i], dim, "anchor");
    check_unit(batch.positives[i], dim, "positive");
    if (!batch.negatives.empty()) check_unit(batch.negatives[i], dim, "negative");
  }
  return dim;
}

}  // namespace

MemoryQueue::MemoryQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), data_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) throw InvalidArgument("queue capacity and dimension must be positive");
}

std::span<const double> MemoryQueue::entry(std::size_t i) const {
  if (i >= fill_) throw InvalidArgument("queue index out of range");
  const std::size_t oldest = fill_ < capacity_ ? 0 : cursor_;
  const std::size_t slot = (oldest + i) % capacity_;
  return std::span<const double>(data_).subspan(slot * dim_, dim_);
}

void MemoryQueue::push(std::span<const Embedding> embeddings) {
  for (const Embedding& e : embeddings) check_unit(e, dim_, "queued");
  for (const Embedding& e : embeddings) {
    std::copy(e.begin(), e.end(), data_.begin() + static_cast<std::ptrdiff_t>(cursor_ * dim_));
    cursor_ = (cursor_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }
}

void queue_push(MemoryQueue& queue, std::span<const Embedding> embeddings) { queue.push(embeddings); }

LossResult triplet_loss(const TripletBatch& batch, double margin) {
  if (!(margin >= 0.0)) throw InvalidArgument("margin must be non-negative");
  const std::size_t dim = check_batch(batch, true);
  const std::size_t n = batch.size();
  LossResult r;
  r.grad_anchors.assign(n, Embedding(dim, 0.0));
  r.grad_positives.assign(n, Embedding(dim, 0.0));
  r.grad_negatives.assign(n, Embedding(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const Embedding& a = batch.anchors[i];
    const Embedding& p = batch.positives[i];
    const Embedding& q = batch.negatives[i];
    Embedding ap(dim), an(dim);
    double dap2 = 0.0, dan2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      ap[k] = a[k] - p[k];
      an[k] = a[k] - q[k];
      dap2 += ap[k] * ap[k];
      dan2 += an[k] * an[k];
    }
    const double dap = std::sqrt(dap2);
    const double dan = std::sqrt(dan2);
    const double term = dap - dan + margin;
    if (term <= 0.0) continue;
    r.loss += term;
    // Zero distance contributes the zero subgradient.
    for (std::size_t k = 0; k < dim; ++k) {
      const double up = dap > 0.0 ? ap[k] / dap : 0.0;
      const double un = dan > 0.0 ? an[k] / dan : 0.0;
      r.grad_anchors[i][k] = up - un;
      r.grad_positives[i][k] = -up;
      r.grad_negatives[i][k] = un;
    }
  }
  return r;
}

LossResult dsm_contrastive_loss(const TripletBatch& batch, const MemoryQueue& queue,
                                double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  const std::size_t dim = check_batch(batch, false);
  if (!queue.empty() && queue.dim() != dim) throw ShapeMismatch("queue dimension differs from batch");
  const bool use_negatives = !batch.negatives.empty();
  const std::size_t n = batch.size();
  const std::size_t k = queue.size();

  LossResult r;
  r.grad_anchors.assign(n, Embedding(dim, 0.0));
  r.grad_positives.assign(n, Embedding(dim, 0.0));
  if (use_negatives) r.grad_negatives.assign(n, Embedding(dim, 0.0));

  std::vector<double> queue_logits(k);
  for (std::size_t i = 0; i < n; ++i) {
    const Embedding& a = batch.anchors[i];
    const Embedding& p = batch.positives[i];
    const double lp = dot(a, p) / temperature;
    const double ln = use_negatives ? dot(a, batch.negatives[i]) / temperature : 0.0;
    double top = lp;
    if (use_negatives) top = std::max(top, ln);
    for (std::size_t j = 0; j < k; ++j) {
      queue_logits[j] = dot(a, queue.entry(j)) / temperature;
      top = std::max(top, queue_logits[j]);
    }
    double denom = std::exp(lp - top);
    if (use_negatives) denom += std::exp(ln - top);
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(queue_logits[j] - top);
    const double log_denom = top + std::log(denom);
    r.loss += log_denom - lp;

    // Softmax weights, scaled by 1/(N T) for the mean.
    const double scale = 1.0 / (static_cast<double>(n) * temperature);
    const double sp = std::exp(lp - log_denom);
    const double sn = use_negatives ? std::exp(ln - log_denom) : 0.0;
    Embedding& ga = r.grad_anchors[i];
    for (std::size_t d = 0; d < dim; ++d) {
      ga[d] = (sp - 1.0) * p[d];
      r.grad_positives[i][d] = scale * (sp - 1.0) * a[d];
    }
    if (use_negatives) {
      const Embedding& q = batch.negatives[i];
      for (std::size_t d = 0; d < dim; ++d) {
        ga[d] += sn * q[d];
        r.grad_negatives[i][d] = scale * sn * a[d];
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double sj = std::exp(queue_logits[j] - log_denom);
      const auto e = queue.entry(j);
      for (std::size_t d = 0; d < dim; ++d) ga[d] += sj * e[d];
    }
    for (double& g : ga) g *= scale;
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace dsm
