#pragma once

#include <span>
#include <vector>

#include "gpvls/core/tensor.hpp"

namespace gpvls::core {

/// Row-wise softmax of v * t^T, without 1/sqrt(d) scaling.
Matrix attention_weights(const Matrix& v, const Matrix& t);

/// softmax(v t^T) t. Each output row is a convex combination of the rows of t.
Matrix attention_fuse(const Matrix& v, const Matrix& t);

/// Cosine similarity; throws ValidationError on a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// -log(exp(s(v, t_k)) / sum_j exp(s(v, t_j))) with s = cosine similarity and k = matched_index.
double contrastive_loss(std::span<const double> v, const std::vector<std::vector<double>>& candidates,
                        std::size_t matched_index);

}  // namespace gpvls::core
