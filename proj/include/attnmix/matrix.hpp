#pragma once

#include <cstddef>
#include <vector>

#include "attnmix/common.hpp"

namespace attnmix {

// Dense row-major matrix. Kernels parallelize over output rows with OpenMP;
// every output element is produced by exactly one thread with a fixed
// inner-loop order, so results are bitwise identical for any thread count.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, real value = real(0))
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, value) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    real& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    real at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    real* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    const real* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }

    void fill(real v);
    void zero() { fill(real(0)); }

    bool all_finite() const;

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<real> data_;
};

// c = a * b; a.cols must equal b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

// c = a^T * b (a is rows x k used column-wise).
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// c = a * b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction; rejects non-finite input.
Matrix softmax_rows(const Matrix& m);

void add_inplace(Matrix& a, const Matrix& b);          // a += b
void axpy_inplace(Matrix& a, real alpha, const Matrix& b);  // a += alpha * b
void scale_inplace(Matrix& a, real alpha);

Matrix transpose(const Matrix& m);

double sum_all(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace attnmix
