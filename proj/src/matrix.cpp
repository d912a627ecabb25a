#include "attnmix/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace attnmix {

void Matrix::fill(real v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Matrix::all_finite() const {
    for (real v : data_)
        if (!is_finite(v)) return false;
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static) if (m > 1)
    for (int i = 0; i < m; ++i) {
        const real* arow = a.row(i);
        real* crow = c.row(i);
        std::vector<double> acc(n, 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const real* brow = b.row(p);
            for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (int j = 0; j < n; ++j) crow[j] = static_cast<real>(acc[j]);
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check(a.rows() == b.rows(), "matmul_tn: outer dimensions differ");
    Matrix c(a.cols(), b.cols());
    const int m = a.cols(), k = a.rows(), n = b.cols();
#pragma omp parallel for schedule(static) if (m > 1)
    for (int i = 0; i < m; ++i) {
        real* crow = c.row(i);
        std::vector<double> acc(n, 0.0);
        for (int p = 0; p < k; ++p) {
            const double av = a.at(p, i);
            const real* brow = b.row(p);
            for (int j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (int j = 0; j < n; ++j) crow[j] = static_cast<real>(acc[j]);
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    const int m = a.rows(), k = a.cols(), n = b.rows();
#pragma omp parallel for schedule(static) if (m > 1)
    for (int i = 0; i < m; ++i) {
        const real* arow = a.row(i);
        real* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const real* brow = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
            crow[j] = static_cast<real>(acc);
        }
    }
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    check(m.all_finite(), "softmax_rows: input must be finite");
    Matrix out(m.rows(), m.cols());
    const int cols = m.cols();
#pragma omp parallel for schedule(static) if (m.rows() > 1)
    for (int i = 0; i < m.rows(); ++i) {
        const real* in = m.row(i);
        real* o = out.row(i);
        real mx = in[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            double e = std::exp(static_cast<double>(in[j]) - static_cast<double>(mx));
            o[j] = static_cast<real>(e);
            denom += e;
        }
        const real inv = static_cast<real>(1.0 / denom);
        for (int j = 0; j < cols; ++j) o[j] *= inv;
    }
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    check(a.same_shape(b), "add_inplace: shape mismatch");
    real* pa = a.data();
    const real* pb = b.data();
    const std::size_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::size_t i = 0; i < n; ++i) pa[i] += pb[i];
}

void axpy_inplace(Matrix& a, real alpha, const Matrix& b) {
    check(a.same_shape(b), "axpy_inplace: shape mismatch");
    real* pa = a.data();
    const real* pb = b.data();
    const std::size_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::size_t i = 0; i < n; ++i) pa[i] += alpha * pb[i];
}

void scale_inplace(Matrix& a, real alpha) {
    real* pa = a.data();
    const std::size_t n = a.size();
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::size_t i = 0; i < n; ++i) pa[i] *= alpha;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) t.at(j, i) = m.at(i, j);
    return t;
}

double sum_all(const Matrix& m) {
    double s = 0.0;
    const real* p = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) s += p[i];
    return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    check(a.same_shape(b), "max_abs_diff: shape mismatch");
    double mx = 0.0;
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i)
        mx = std::max(mx, std::abs(static_cast<double>(pa[i]) - static_cast<double>(pb[i])));
    return mx;
}

}  // namespace attnmix
