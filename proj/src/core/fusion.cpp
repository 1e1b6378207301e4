#include "gpvls/core/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "gpvls/errors.hpp"

namespace gpvls::core {

Matrix attention_weights(const Matrix& v, const Matrix& t) {
    if (t.rows() == 0) throw ValidationError("attention_fuse: t has no rows");
    if (v.cols() != t.cols()) {
        throw DimensionError(fmt::format("attention_fuse: feature dims differ ({} vs {})", v.cols(),
                                         t.cols()));
    }
    Matrix scores = matmul_bt(v, t);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto row = scores.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& s : row) {
            s = std::exp(s - mx);
            sum += s;
        }
        for (double& s : row) s /= sum;
    }
    return scores;
}

Matrix attention_fuse(const Matrix& v, const Matrix& t) {
    return matmul(attention_weights(v, t), t);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("cosine_similarity: zero-norm vector cannot be normalized");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double contrastive_loss(std::span<const double> v, const std::vector<std::vector<double>>& candidates,
                        std::size_t matched_index) {
    if (candidates.empty()) throw ValidationError("contrastive_loss: no candidates");
    if (matched_index >= candidates.size()) {
        throw ValidationError(fmt::format("contrastive_loss: matched_index {} out of range [0, {})",
                                          matched_index, candidates.size()));
    }
    std::vector<double> sims;
    sims.reserve(candidates.size());
    for (const auto& c : candidates) sims.push_back(cosine_similarity(v, c));
    const double mx = *std::max_element(sims.begin(), sims.end());
    double sum = 0.0;
    for (double s : sims) sum += std::exp(s - mx);
    const double loss = -(sims[matched_index] - mx - std::log(sum));
    // Rounding can leave -0 or a tiny negative when the matched logit dominates.
    return std::max(loss, 0.0);
}

}  // namespace gpvls::core
