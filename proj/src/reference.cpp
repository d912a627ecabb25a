#include "attnmix/reference.hpp"

#include <cmath>

namespace attnmix::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.rows(), "ref::matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) {
                acc += static_cast<double>(a.at(i, k)) * b.at(k, j);
            }
            c.at(i, j) = static_cast<real>(acc);
        }
    }
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        double denom = 0.0;
        for (int j = 0; j < m.cols(); ++j) denom += std::exp(static_cast<double>(m.at(i, j)));
        for (int j = 0; j < m.cols(); ++j) {
            out.at(i, j) = static_cast<real>(std::exp(static_cast<double>(m.at(i, j))) / denom);
        }
    }
    return out;
}

std::pair<Matrix, Matrix> attention_head(const Matrix& x,
                                         const std::vector<std::uint8_t>& mask,
                                         const HeadParams& params) {
    const int n = x.rows();
    const int d = x.cols();
    const int hd = params.wq.cols();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    auto project = [&](const Matrix& w, const Matrix& b, int row, int c) {
        double acc = b.at(0, c);
        for (int k = 0; k < d; ++k) acc += static_cast<double>(x.at(row, k)) * w.at(k, c);
        return acc;
    };

    Matrix attn(n, n);
    Matrix out(n, hd);
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        double denom = 0.0;
        std::vector<double> numer(n, 0.0);
        for (int j = 0; j < n; ++j) {
            if (!mask[j]) continue;
            double dot = 0.0;
            for (int c = 0; c < hd; ++c) {
                dot += project(params.wq, params.bq, i, c) * project(params.wk, params.bk, j, c);
            }
            numer[j] = std::exp(dot * inv_sqrt);
            denom += numer[j];
        }
        for (int j = 0; j < n; ++j) {
            if (!mask[j]) continue;
            attn.at(i, j) = static_cast<real>(numer[j] / denom);
        }
        for (int c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                if (!mask[j]) continue;
                acc += (numer[j] / denom) * project(params.wv, params.bv, j, c);
            }
            out.at(i, c) = static_cast<real>(acc);
        }
    }
    return {std::move(out), std::move(attn)};
}

std::vector<double> head_relevance(const Matrix& aw, const std::vector<std::uint8_t>& mask) {
    const int width = aw.cols();
    int n = 0;
    for (auto m : mask) n += m;
    std::vector<double> b(width, 0.0);
    for (int j = 0; j < width; ++j) {
        if (!mask[j]) continue;
        for (int i = 0; i < width; ++i) {
            if (!mask[i]) continue;
            b[j] += aw.at(i, j);
        }
        b[j] /= n;
    }
    return b;
}

std::vector<double> layer_relevance(const std::vector<Matrix>& aws,
                                    const std::vector<std::uint8_t>& mask) {
    const int width = static_cast<int>(mask.size());
    std::vector<double> acc(width, 0.0);
    for (const Matrix& aw : aws) {
        std::vector<double> b = head_relevance(aw, mask);
        for (int j = 0; j < width; ++j) acc[j] += b[j];
    }
    for (int j = 0; j < width; ++j) acc[j] /= static_cast<double>(aws.size());
    return acc;
}

Matrix mix_tokens(const Matrix& emb1, const Matrix& emb2, const std::vector<real>& lambda) {
    Matrix out(emb1.rows(), emb1.cols());
    for (int t = 0; t < emb1.rows(); ++t) {
        for (int c = 0; c < emb1.cols(); ++c) {
            const double lam = lambda[t];
            out.at(t, c) = static_cast<real>(lam * emb1.at(t, c) + (1.0 - lam) * emb2.at(t, c));
        }
    }
    return out;
}

std::vector<double> received_attention(const Matrix& aw,
                                       const std::vector<std::uint8_t>& mask) {
    const int width = aw.cols();
    std::vector<double> r(width, 0.0);
    for (int j = 0; j < width; ++j) {
        if (!mask[j]) continue;
        for (int i = 0; i < width; ++i) {
            if (!mask[i]) continue;
            r[j] += aw.at(i, j);
        }
    }
    return r;
}

}  // namespace attnmix::ref
