#include "bfa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace bfa {

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t N = logits.dim(0);
  const std::size_t C = logits.dim(1);
  std::vector<int> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = logits.data() + n * C;
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (z[c] > z[best]) best = c;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

double top_k_accuracy(const Tensor& logits, std::span<const int> labels, std::size_t k) {
  const std::size_t N = logits.dim(0);
  const std::size_t C = logits.dim(1);
  if (labels.size() != N) throw ShapeError("label count does not match logits");
  if (N == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double* z = logits.data() + n * C;
    const auto t = static_cast<std::size_t>(labels[n]);
    // Rank of the label: classes strictly ahead of it, ties going to the
    // lower index as in argmax_rows.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < C; ++c) {
      if (z[c] > z[t] || (c < t && z[c] == z[t])) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(N);
}

namespace {

Tensor run_chunked(const ModelGraph& model, std::size_t first, std::size_t last, const Tensor& input,
                   std::size_t chunk) {
  const std::size_t N = input.dim(0);
  Tensor out;
  std::size_t row_out = 0;
  for (std::size_t begin = 0; begin < N; begin += chunk) {
    const std::size_t count = std::min(chunk, N - begin);
    const Tensor part = forward_layers(model, first, last, input.slice_rows(begin, count));
    if (begin == 0) {
      Shape shape = part.shape();
      shape[0] = N;
      out = Tensor(std::move(shape));
      row_out = part.size() / count;
    }
    std::memcpy(out.data() + begin * row_out, part.data(), part.size() * sizeof(double));
  }
  return out;
}

}  // namespace

Evaluator::Evaluator(const Dataset& data, std::size_t chunk)
    : images_(data.images(0, data.size())),
      labels_(data.labels(0, data.size())),
      num_classes_(data.num_classes()),
      chunk_(std::max<std::size_t>(chunk, 1)) {
  if (labels_.empty()) throw std::invalid_argument("evaluator needs a non-empty dataset");
}

void Evaluator::reset(const ModelGraph& model) {
  specs_ = model.specs();
  const std::size_t L = model.num_weighted();
  activations_.assign(L, Tensor());
  revisions_.assign(L, 0);
  if (L == 0) throw ModelError("model has no weighted layers");
  activations_[0] = run_chunked(model, 0, model.graph_index(0), images_, chunk_);
}

ValidationMetrics Evaluator::evaluate(const ModelGraph& model) {
  if (specs_ != model.specs() || activations_.size() != model.num_weighted()) reset(model);
  const std::size_t L = model.num_weighted();
  std::size_t first_stale = L;
  for (std::size_t w = 0; w < L; ++w) {
    if (revisions_[w] != model.revision(w)) {
      first_stale = w;
      break;
    }
  }
  for (std::size_t w = first_stale; w < L; ++w) {
    const std::size_t end = w + 1 < L ? model.graph_index(w + 1) : model.num_layers();
    Tensor out = run_chunked(model, model.graph_index(w), end, activations_[w], chunk_);
    if (w + 1 < L) {
      activations_[w + 1] = std::move(out);
    } else {
      logits_ = std::move(out);
    }
    revisions_[w] = model.revision(w);
  }
  ValidationMetrics m;
  m.top1 = top_k_accuracy(logits_, labels_, 1);
  m.top5 = top_k_accuracy(logits_, labels_, 5);
  m.loss = cross_entropy(logits_, labels_);
  m.finite = std::isfinite(m.loss) && logits_.all_finite();
  return m;
}

ValidationMetrics evaluate(const ModelGraph& model, const Dataset& data) {
  Evaluator evaluator(data);
  return evaluator.evaluate(model);
}

}  // namespace bfa
