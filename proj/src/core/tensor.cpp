#include "gpvls/core/tensor.hpp"

#include <cmath>

#include "gpvls/errors.hpp"

namespace gpvls::core {

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double s = a(i, k);
            auto br = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_bt: inner dimensions differ");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto br = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
            out(i, j) = s;
        }
    }
    return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_at: inner dimensions differ");
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ar = a.row(k);
        auto br = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double s = ar[i];
            auto o = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += s * br[j];
        }
    }
    return out;
}

Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = (2.0 * uniform01(rng) - 1.0) * scale;
    return m;
}

}  // namespace gpvls::core
