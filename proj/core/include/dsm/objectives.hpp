#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsm/encoder.hpp"

namespace dsm {

// Fixed-capacity FIFO ring of unit-norm vectors used as inter-video negatives.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return fill_; }
  std::size_t cursor() const { return cursor_; }
  bool empty() const { return fill_ == 0; }

  // i-th entry in insertion order, 0 = oldest.
  std::span<const double> entry(std::size_t i) const;

  // Appends at the cursor, evicting the oldest entries once full.
  void push(std::span<const Embedding> embeddings);

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t cursor_ = 0;
  std::size_t fill_ = 0;
  std::vector<double> data_;
};

void queue_push(MemoryQueue& queue, std::span<const Embedding> embeddings);

// Anchor / positive / negative embeddings, one row per sample. `negatives`
// may be empty for the contrastive loss (inter-video negatives only).
struct TripletBatch {
  std::vector<Embedding> anchors;
  std::vector<Embedding> positives;
  std::vector<Embedding> negatives;

  std::size_t size() const { return anchors.size(); }
};

struct LossResult {
  double loss = 0.0;
  std::vector<Embedding> grad_anchors;
  std::vector<Embedding> grad_positives;
  std::vector<Embedding> grad_negatives;
};

inline constexpr double kUnitNormTolerance = 1e-5;

// sum_i max(|a_i - p_i| - |a_i - n_i| + margin, 0) with exact gradients on
// active terms and zero on inactive ones.
LossResult triplet_loss(const TripletBatch& batch, double margin);

// Mean over samples of
//   -log( e^{a.p/T} / (e^{a.p/T} + e^{a.n/T} + sum_j e^{a.q_j/T}) )
// with q_j the queue entries, evaluated with log-sum-exp. The a.n term is
// omitted when the batch has no negatives.
LossResult dsm_contrastive_loss(const TripletBatch& batch, const MemoryQueue& queue,
                                double temperature);

}  // namespace dsm
