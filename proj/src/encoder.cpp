#include "attnmix/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace attnmix {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kPi = 3.14159265358979323846;

void add_bias(Matrix& m, const Matrix& bias) {
    check(bias.rows() == 1 && bias.cols() == m.cols(), "add_bias: shape mismatch");
    const real* b = bias.row(0);
#pragma omp parallel for schedule(static) if (m.rows() > 1)
    for (int r = 0; r < m.rows(); ++r) {
        real* row = m.row(r);
        for (int c = 0; c < m.cols(); ++c) row[c] += b[c];
    }
}

Matrix colsum(const Matrix& m) {
    Matrix s(1, m.cols());
    for (int c = 0; c < m.cols(); ++c) {
        double acc = 0.0;
        for (int r = 0; r < m.rows(); ++r) acc += m.at(r, c);
        s.at(0, c) = static_cast<real>(acc);
    }
    return s;
}

void accumulate_colsum(Var& bias, const Matrix& d) {
    Matrix s = colsum(d);
    add_inplace(bias.g, s);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
    return cdf + x * pdf;
}

Matrix gelu_forward(const Matrix& pre) {
    Matrix out(pre.rows(), pre.cols());
    const real* in = pre.data();
    real* o = out.data();
    const std::size_t n = pre.size();
#pragma omp parallel for schedule(static) if (n > 1024)
    for (std::size_t i = 0; i < n; ++i) o[i] = static_cast<real>(gelu(in[i]));
    return out;
}

// y = gamma .* xhat + beta per row; xhat and rstd cached for backward.
Matrix layer_norm_forward(const Matrix& x, const Var& gamma, const Var& beta,
                          LayerNormCache& cache) {
    const int d = x.cols();
    Matrix y(x.rows(), d);
    cache.xhat = Matrix(x.rows(), d);
    cache.rstd.assign(x.rows(), real(0));
    const real* g = gamma.v.row(0);
    const real* b = beta.v.row(0);
#pragma omp parallel for schedule(static) if (x.rows() > 1)
    for (int r = 0; r < x.rows(); ++r) {
        const real* in = x.row(r);
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += in[c];
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            const double diff = in[c] - mean;
            var += diff * diff;
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd[r] = static_cast<real>(rstd);
        real* xh = cache.xhat.row(r);
        real* out = y.row(r);
        for (int c = 0; c < d; ++c) {
            const double xhat = (in[c] - mean) * rstd;
            xh[c] = static_cast<real>(xhat);
            out[c] = static_cast<real>(g[c] * xhat + b[c]);
        }
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache,
                           Var& gamma, Var& beta) {
    const int d = dy.cols();
    Matrix dx(dy.rows(), d);
    // Parameter grads are accumulated serially for a fixed order.
    for (int r = 0; r < dy.rows(); ++r) {
        const real* dyr = dy.row(r);
        const real* xh = cache.xhat.row(r);
        real* gg = gamma.g.row(0);
        real* bg = beta.g.row(0);
        for (int c = 0; c < d; ++c) {
            gg[c] += dyr[c] * xh[c];
            bg[c] += dyr[c];
        }
    }
#pragma omp parallel for schedule(static) if (dy.rows() > 1)
    for (int r = 0; r < dy.rows(); ++r) {
        const real* dyr = dy.row(r);
        const real* xh = cache.xhat.row(r);
        const real* g = gamma.v.row(0);
        const double rstd = cache.rstd[r];
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < d; ++c) {
            const double dxhat = static_cast<double>(dyr[c]) * g[c];
            m1 += dxhat;
            m2 += dxhat * xh[c];
        }
        m1 /= d;
        m2 /= d;
        real* out = dx.row(r);
        for (int c = 0; c < d; ++c) {
            const double dxhat = static_cast<double>(dyr[c]) * g[c];
            out[c] = static_cast<real>(rstd * (dxhat - m1 - xh[c] * m2));
        }
    }
    return dx;
}

// Inverted dropout; scales drawn sequentially so the stream is reproducible.
void dropout_forward(Matrix& x, real rate, Rng& rng, std::vector<real>& scales) {
    const double keep = 1.0 - static_cast<double>(rate);
    const real inv_keep = static_cast<real>(1.0 / keep);
    scales.resize(x.size());
    real* p = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const real s = rng.uniform01() < static_cast<double>(rate) ? real(0) : inv_keep;
        scales[i] = s;
        p[i] *= s;
    }
}

Matrix apply_scales(const Matrix& d, const std::vector<real>& scales) {
    if (scales.empty()) return d;
    Matrix out = d;
    real* p = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) p[i] *= scales[i];
    return out;
}

// Masked scaled-dot attention for one example block of `width` rows starting
// at `offset`. Attention rows for masked queries are zero; masked key
// columns are exactly zero.
void attention_block(const Matrix& q, const Matrix& k, const Matrix& v,
                     const std::uint8_t* mask, int offset, int width,
                     real inv_sqrt, Matrix& attn, Matrix& out) {
    const int hd = q.cols();
    std::vector<double> logits(width);
    for (int i = 0; i < width; ++i) {
        const int r = offset + i;
        real* arow = attn.row(r);
        real* orow = out.row(r);
        if (!mask[i]) {
            for (int j = 0; j < width; ++j) arow[j] = real(0);
            for (int c = 0; c < hd; ++c) orow[c] = real(0);
            continue;
        }
        const real* qi = q.row(r);
        double mx = -1e300;
        for (int j = 0; j < width; ++j) {
            if (!mask[j]) continue;
            const real* kj = k.row(offset + j);
            double dot = 0.0;
            for (int c = 0; c < hd; ++c) dot += static_cast<double>(qi[c]) * kj[c];
            logits[j] = dot * inv_sqrt;
            mx = std::max(mx, logits[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < width; ++j) {
            if (!mask[j]) continue;
            logits[j] = std::exp(logits[j] - mx);
            denom += logits[j];
        }
        for (int j = 0; j < width; ++j) {
            arow[j] = mask[j] ? static_cast<real>(logits[j] / denom) : real(0);
        }
        for (int c = 0; c < hd; ++c) {
            double acc = 0.0;
            for (int j = 0; j < width; ++j) {
                if (!mask[j]) continue;
                acc += static_cast<double>(arow[j]) * v.at(offset + j, c);
            }
            orow[c] = static_cast<real>(acc);
        }
    }
}

void attention_block_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                              const Matrix& attn, const Matrix& dout,
                              const std::uint8_t* mask, int offset, int width,
                              real inv_sqrt, Matrix& dq, Matrix& dk, Matrix& dv) {
    const int hd = q.cols();
    std::vector<double> da(width), ds(width);
    for (int i = 0; i < width; ++i) {
        if (!mask[i]) continue;
        const int r = offset + i;
        const real* arow = attn.row(r);
        const real* drow = dout.row(r);
        double dot_sum = 0.0;
        for (int j = 0; j < width; ++j) {
            if (!mask[j]) {
                da[j] = 0.0;
                continue;
            }
            const real* vj = v.row(offset + j);
            double acc = 0.0;
            for (int c = 0; c < hd; ++c) acc += static_cast<double>(drow[c]) * vj[c];
            da[j] = acc;
            dot_sum += static_cast<double>(arow[j]) * acc;
        }
        for (int j = 0; j < width; ++j) {
            ds[j] = mask[j] ? static_cast<double>(arow[j]) * (da[j] - dot_sum) : 0.0;
        }
        const real* qi = q.row(r);
        real* dqi = dq.row(r);
        for (int j = 0; j < width; ++j) {
            if (!mask[j]) continue;
            const double s = ds[j] * inv_sqrt;
            const real* kj = k.row(offset + j);
            real* dkj = dk.row(offset + j);
            real* dvj = dv.row(offset + j);
            const double aij = arow[j];
            for (int c = 0; c < hd; ++c) {
                dqi[c] += static_cast<real>(s * kj[c]);
                dkj[c] += static_cast<real>(s * qi[c]);
                dvj[c] += static_cast<real>(aij * drow[c]);
            }
        }
    }
}

Matrix columns_slice(const Matrix& m, int col0, int ncols) {
    Matrix out(m.rows(), ncols);
    for (int r = 0; r < m.rows(); ++r) {
        const real* src = m.row(r) + col0;
        real* dst = out.row(r);
        for (int c = 0; c < ncols; ++c) dst[c] = src[c];
    }
    return out;
}

void columns_store(Matrix& dst, int col0, const Matrix& src) {
    for (int r = 0; r < dst.rows(); ++r) {
        real* d = dst.row(r) + col0;
        const real* s = src.row(r);
        for (int c = 0; c < src.cols(); ++c) d[c] = s[c];
    }
}

}  // namespace

void EncoderConfig::validate() const {
    check(num_layers >= 1 && num_heads >= 1 && embed_dim >= 1 && ff_dim >= 1,
          "EncoderConfig: all dims must be >= 1");
    check(embed_dim % num_heads == 0, "EncoderConfig: embed_dim must be divisible by num_heads");
    check(num_classes >= 2, "EncoderConfig: need at least 2 classes");
    check(max_len >= 2, "EncoderConfig: max_len must be >= 2");
    check(vocab_size > Vocabulary::kBos, "EncoderConfig: vocab_size not set");
    check(dropout >= real(0) && dropout < real(1), "EncoderConfig: dropout must be in [0,1)");
}

std::pair<Matrix, Matrix> attention_head_forward(const Matrix& x,
                                                 const std::vector<std::uint8_t>& mask,
                                                 const HeadParams& params) {
    check(static_cast<int>(mask.size()) == x.rows(), "attention_head_forward: mask length mismatch");
    check(x.all_finite(), "attention_head_forward: input must be finite");
    Matrix q = matmul(x, params.wq);
    add_bias(q, params.bq);
    Matrix k = matmul(x, params.wk);
    add_bias(k, params.bk);
    Matrix v = matmul(x, params.wv);
    add_bias(v, params.bv);
    const int n = x.rows();
    const int hd = q.cols();
    Matrix attn(n, n);
    Matrix out(n, hd);
    const real inv_sqrt = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));
    attention_block(q, k, v, mask.data(), 0, n, inv_sqrt, attn, out);
    return {std::move(out), std::move(attn)};
}

EncoderModel::EncoderModel(const EncoderConfig& cfg) : cfg_(cfg) {}

EncoderModel::EncoderModel(const EncoderConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.embed_dim;
    const int hd = cfg_.head_dim();

    auto weight = [&](int rows, int cols) {
        Var var{Matrix(rows, cols), Matrix(rows, cols)};
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                var.v.at(r, c) = static_cast<real>(init_rng.truncated_normal(0.02));
        return var;
    };
    auto zeros = [&](int rows, int cols) { return Var{Matrix(rows, cols), Matrix(rows, cols)}; };
    auto ones = [&](int rows, int cols) {
        Var var{Matrix(rows, cols, real(1)), Matrix(rows, cols)};
        return var;
    };

    tok_emb_ = weight(cfg_.vocab_size, d);
    pos_emb_ = weight(cfg_.max_len, d);
    layers_.resize(cfg_.num_layers);
    for (auto& layer : layers_) {
        for (int h = 0; h < cfg_.num_heads; ++h) {
            layer.wq.push_back(weight(d, hd));
            layer.bq.push_back(zeros(1, hd));
            layer.wk.push_back(weight(d, hd));
            layer.bk.push_back(zeros(1, hd));
            layer.wv.push_back(weight(d, hd));
            layer.bv.push_back(zeros(1, hd));
        }
        layer.wo = weight(d, d);
        layer.bo = zeros(1, d);
        layer.ln1_gamma = ones(1, d);
        layer.ln1_beta = zeros(1, d);
        layer.w1 = weight(d, cfg_.ff_dim);
        layer.b1 = zeros(1, cfg_.ff_dim);
        layer.w2 = weight(cfg_.ff_dim, d);
        layer.b2 = zeros(1, d);
        layer.ln2_gamma = ones(1, d);
        layer.ln2_beta = zeros(1, d);
    }
    wc_ = weight(d, cfg_.num_classes);
    bc_ = zeros(1, cfg_.num_classes);
}

Matrix EncoderModel::embed(const Batch& batch) const {
    const int d = cfg_.embed_dim;
    for (std::int32_t id : batch.ids) {
        check(id >= 0 && id < cfg_.vocab_size, "embed: token id out of range");
    }
    Matrix out(batch.size * batch.width, d);
#pragma omp parallel for schedule(static) if (batch.size > 1)
    for (int b = 0; b < batch.size; ++b) {
        for (int t = 0; t < batch.width; ++t) {
            const std::int32_t id = batch.id_at(b, t);
            const real* tok = tok_emb_.v.row(id);
            const real* pos = pos_emb_.v.row(t);
            real* dst = out.row(b * batch.width + t);
            for (int c = 0; c < d; ++c) dst[c] = tok[c] + pos[c];
        }
    }
    return out;
}

ForwardTrace EncoderModel::forward(const Batch& batch, bool collect_attention,
                                   bool training, Rng* dropout_rng) {
    ForwardTrace trace;
    trace.batch = batch.size;
    trace.width = batch.width;
    trace.mask = batch.mask;
    trace.ids = batch.ids;
    trace.input = embed(batch);
    return run_layers(std::move(trace), collect_attention, training, dropout_rng);
}

ForwardTrace EncoderModel::forward_from_embeddings(const Matrix& input,
                                                   const std::vector<std::uint8_t>& mask,
                                                   int batch, int width, bool collect_attention,
                                                   bool training, Rng* dropout_rng) {
    check(input.rows() == batch * width && input.cols() == cfg_.embed_dim,
          "forward_from_embeddings: input shape mismatch");
    check(static_cast<int>(mask.size()) == batch * width,
          "forward_from_embeddings: mask length mismatch");
    ForwardTrace trace;
    trace.batch = batch;
    trace.width = width;
    trace.mask = mask;
    trace.input = input;
    return run_layers(std::move(trace), collect_attention, training, dropout_rng);
}

ForwardTrace EncoderModel::run_layers(ForwardTrace trace, bool collect_attention,
                                      bool training, Rng* dropout_rng) {
    const int d = cfg_.embed_dim;
    const int hd = cfg_.head_dim();
    const int rows = trace.batch * trace.width;
    const bool use_dropout = training && cfg_.dropout > real(0);
    if (use_dropout) check(dropout_rng != nullptr, "run_layers: training requires a dropout rng");
    const bool keep_caches = training;
    const bool keep_attn = training || collect_attention;
    trace.training = training;
    trace.collected_attention = collect_attention;
    const real inv_sqrt = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));

    Matrix x = trace.input;
    if (use_dropout) dropout_forward(x, cfg_.dropout, *dropout_rng, trace.input_drop);

    trace.layers.resize(cfg_.num_layers);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        LayerParams& p = layers_[l];
        ForwardTrace::LayerCache& cache = trace.layers[l];
        if (keep_caches) cache.x_in = x;

        Matrix concat(rows, d);
        if (keep_attn) cache.attn.resize(cfg_.num_heads);
        if (keep_caches) {
            cache.q.resize(cfg_.num_heads);
            cache.k.resize(cfg_.num_heads);
            cache.v.resize(cfg_.num_heads);
        }
        for (int h = 0; h < cfg_.num_heads; ++h) {
            Matrix q = matmul(x, p.wq[h].v);
            add_bias(q, p.bq[h].v);
            Matrix k = matmul(x, p.wk[h].v);
            add_bias(k, p.bk[h].v);
            Matrix v = matmul(x, p.wv[h].v);
            add_bias(v, p.bv[h].v);
            Matrix attn(rows, trace.width);
            Matrix out(rows, hd);
#pragma omp parallel for schedule(static) if (trace.batch > 1)
            for (int b = 0; b < trace.batch; ++b) {
                attention_block(q, k, v, trace.mask.data() + b * trace.width,
                                b * trace.width, trace.width, inv_sqrt, attn, out);
            }
            columns_store(concat, h * hd, out);
            if (keep_attn) cache.attn[h] = std::move(attn);
            if (keep_caches) {
                cache.q[h] = std::move(q);
                cache.k[h] = std::move(k);
                cache.v[h] = std::move(v);
            }
        }

        Matrix attn_proj = matmul(concat, p.wo.v);
        add_bias(attn_proj, p.bo.v);
        if (keep_caches) cache.concat = std::move(concat);

        Matrix res1 = attn_proj;
        if (use_dropout) dropout_forward(res1, cfg_.dropout, *dropout_rng, cache.drop1);
        add_inplace(res1, x);
        Matrix y1 = layer_norm_forward(res1, p.ln1_gamma, p.ln1_beta, cache.ln1);

        Matrix ff_pre = matmul(y1, p.w1.v);
        add_bias(ff_pre, p.b1.v);
        Matrix ff_act = gelu_forward(ff_pre);
        Matrix ff_out = matmul(ff_act, p.w2.v);
        add_bias(ff_out, p.b2.v);
        if (use_dropout) dropout_forward(ff_out, cfg_.dropout, *dropout_rng, cache.drop2);
        add_inplace(ff_out, y1);
        Matrix y2 = layer_norm_forward(ff_out, p.ln2_gamma, p.ln2_beta, cache.ln2);

        if (keep_caches) {
            cache.y1 = std::move(y1);
            cache.ff_pre = std::move(ff_pre);
            cache.ff_act = std::move(ff_act);
        }
        x = std::move(y2);
    }

    trace.hidden = x;
    trace.pooled = Matrix(trace.batch, d);
    if (cfg_.pooling == EncoderConfig::Pooling::Bos) {
        for (int b = 0; b < trace.batch; ++b) {
            const real* src = trace.hidden.row(b * trace.width);
            real* dst = trace.pooled.row(b);
            for (int c = 0; c < d; ++c) dst[c] = src[c];
        }
    } else {
        for (int b = 0; b < trace.batch; ++b) {
            real* dst = trace.pooled.row(b);
            int count = 0;
            std::vector<double> acc(d, 0.0);
            for (int t = 0; t < trace.width; ++t) {
                if (!trace.mask[b * trace.width + t]) continue;
                const real* src = trace.hidden.row(b * trace.width + t);
                for (int c = 0; c < d; ++c) acc[c] += src[c];
                ++count;
            }
            check(count > 0, "run_layers: example with no unmasked tokens");
            for (int c = 0; c < d; ++c) dst[c] = static_cast<real>(acc[c] / count);
        }
    }
    trace.logits = classify(trace.pooled);
    return trace;
}

Matrix EncoderModel::classify(const Matrix& pooled) const {
    Matrix logits = matmul(pooled, wc_.v);
    add_bias(logits, bc_.v);
    return logits;
}

double soft_cross_entropy(const Matrix& logits, const Matrix& soft_labels,
                          Matrix* dlogits) {
    check(logits.same_shape(soft_labels), "soft_cross_entropy: shape mismatch");
    const int batch = logits.rows();
    const int classes = logits.cols();
    for (int b = 0; b < batch; ++b) {
        double s = 0.0;
        for (int c = 0; c < classes; ++c) s += soft_labels.at(b, c);
        check(std::abs(s - 1.0) <= 1e-6, "soft_cross_entropy: label row does not sum to 1");
    }
    if (dlogits) *dlogits = Matrix(batch, classes);
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const real* z = logits.row(b);
        const real* y = soft_labels.row(b);
        double mx = z[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(z[c]));
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(z[c]) - mx);
        const double log_denom = std::log(denom);
        for (int c = 0; c < classes; ++c) {
            const double logp = static_cast<double>(z[c]) - mx - log_denom;
            loss -= static_cast<double>(y[c]) * logp;
            if (dlogits) {
                dlogits->at(b, c) = static_cast<real>((std::exp(logp) - y[c]) / batch);
            }
        }
    }
    return loss / batch;
}

double EncoderModel::loss_and_backward(ForwardTrace& trace, const Matrix& soft_labels) {
    check(trace.training, "loss_and_backward: trace was not built in training mode");
    Matrix dlogits;
    const double loss = soft_cross_entropy(trace.logits, soft_labels, &dlogits);
    backward_from_logits(trace, dlogits);
    return loss;
}

void EncoderModel::classifier_backward(const Matrix& pooled, const Matrix& dlogits,
                                       Matrix& dpooled_out) {
    Matrix dwc = matmul_tn(pooled, dlogits);
    add_inplace(wc_.g, dwc);
    accumulate_colsum(bc_, dlogits);
    dpooled_out = matmul_nt(dlogits, wc_.v);
}

void EncoderModel::backward_from_logits(ForwardTrace& trace, const Matrix& dlogits) {
    Matrix dpooled;
    classifier_backward(trace.pooled, dlogits, dpooled);
    backward_from_pooled(trace, dpooled);
}

void EncoderModel::pool_backward(ForwardTrace& trace, const Matrix& dpooled,
                                 Matrix& dhidden) const {
    const int d = cfg_.embed_dim;
    dhidden = Matrix(trace.batch * trace.width, d);
    if (cfg_.pooling == EncoderConfig::Pooling::Bos) {
        for (int b = 0; b < trace.batch; ++b) {
            const real* src = dpooled.row(b);
            real* dst = dhidden.row(b * trace.width);
            for (int c = 0; c < d; ++c) dst[c] = src[c];
        }
    } else {
        for (int b = 0; b < trace.batch; ++b) {
            int count = 0;
            for (int t = 0; t < trace.width; ++t) count += trace.mask[b * trace.width + t];
            const real scale = static_cast<real>(1.0 / count);
            const real* src = dpooled.row(b);
            for (int t = 0; t < trace.width; ++t) {
                if (!trace.mask[b * trace.width + t]) continue;
                real* dst = dhidden.row(b * trace.width + t);
                for (int c = 0; c < d; ++c) dst[c] = src[c] * scale;
            }
        }
    }
}

void EncoderModel::backward_from_pooled(ForwardTrace& trace, const Matrix& dpooled) {
    check(trace.training, "backward_from_pooled: trace was not built in training mode");
    const int d = cfg_.embed_dim;
    const int hd = cfg_.head_dim();
    const real inv_sqrt = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hd)));

    Matrix dx;
    pool_backward(trace, dpooled, dx);

    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
        LayerParams& p = layers_[l];
        ForwardTrace::LayerCache& cache = trace.layers[l];

        // LN2
        Matrix dres2 = layer_norm_backward(dx, cache.ln2, p.ln2_gamma, p.ln2_beta);
        // res2 = y1 + dropout(ff_out)
        Matrix dff_out = apply_scales(dres2, cache.drop2);
        Matrix dy1 = dres2;  // residual branch

        Matrix dw2 = matmul_tn(cache.ff_act, dff_out);
        add_inplace(p.w2.g, dw2);
        accumulate_colsum(p.b2, dff_out);
        Matrix dff_act = matmul_nt(dff_out, p.w2.v);

        Matrix dff_pre(dff_act.rows(), dff_act.cols());
        {
            const real* da = dff_act.data();
            const real* pre = cache.ff_pre.data();
            real* out = dff_pre.data();
            const std::size_t n = dff_pre.size();
#pragma omp parallel for schedule(static) if (n > 1024)
            for (std::size_t i = 0; i < n; ++i) {
                out[i] = static_cast<real>(static_cast<double>(da[i]) * gelu_grad(pre[i]));
            }
        }

        Matrix dw1 = matmul_tn(cache.y1, dff_pre);
        add_inplace(p.w1.g, dw1);
        accumulate_colsum(p.b1, dff_pre);
        Matrix dy1_ff = matmul_nt(dff_pre, p.w1.v);
        add_inplace(dy1, dy1_ff);

        // LN1
        Matrix dres1 = layer_norm_backward(dy1, cache.ln1, p.ln1_gamma, p.ln1_beta);
        Matrix dattn_proj = apply_scales(dres1, cache.drop1);
        Matrix dx_in = dres1;  // residual branch

        Matrix dwo = matmul_tn(cache.concat, dattn_proj);
        add_inplace(p.wo.g, dwo);
        accumulate_colsum(p.bo, dattn_proj);
        Matrix dconcat = matmul_nt(dattn_proj, p.wo.v);

        for (int h = 0; h < cfg_.num_heads; ++h) {
            Matrix dout = columns_slice(dconcat, h * hd, hd);
            Matrix dq(dout.rows(), hd), dk(dout.rows(), hd), dv(dout.rows(), hd);
#pragma omp parallel for schedule(static) if (trace.batch > 1)
            for (int b = 0; b < trace.batch; ++b) {
                attention_block_backward(cache.q[h], cache.k[h], cache.v[h], cache.attn[h],
                                         dout, trace.mask.data() + b * trace.width,
                                         b * trace.width, trace.width, inv_sqrt, dq, dk, dv);
            }
            Matrix dwq = matmul_tn(cache.x_in, dq);
            add_inplace(p.wq[h].g, dwq);
            accumulate_colsum(p.bq[h], dq);
            Matrix dxq = matmul_nt(dq, p.wq[h].v);
            add_inplace(dx_in, dxq);

            Matrix dwk = matmul_tn(cache.x_in, dk);
            add_inplace(p.wk[h].g, dwk);
            accumulate_colsum(p.bk[h], dk);
            Matrix dxk = matmul_nt(dk, p.wk[h].v);
            add_inplace(dx_in, dxk);

            Matrix dwv = matmul_tn(cache.x_in, dv);
            add_inplace(p.wv[h].g, dwv);
            accumulate_colsum(p.bv[h], dv);
            Matrix dxv = matmul_nt(dv, p.wv[h].v);
            add_inplace(dx_in, dxv);
        }
        dx = std::move(dx_in);
    }

    trace.input_grad = apply_scales(dx, trace.input_drop);
    if (!trace.ids.empty()) {
        // Trace came from a Batch: scatter into the embedding tables.
        for (int r = 0; r < trace.batch * trace.width; ++r) {
            const std::int32_t id = trace.ids[r];
            const int t = r % trace.width;
            const real* src = trace.input_grad.row(r);
            real* tok = tok_emb_.g.row(id);
            real* pos = pos_emb_.g.row(t);
            for (int c = 0; c < d; ++c) {
                tok[c] += src[c];
                pos[c] += src[c];
            }
        }
    }
}

void EncoderModel::embed_backward(const Batch& batch, const Matrix& dembed) {
    check(dembed.rows() == batch.size * batch.width && dembed.cols() == cfg_.embed_dim,
          "embed_backward: shape mismatch");
    for (int r = 0; r < dembed.rows(); ++r) {
        const std::int32_t id = batch.ids[r];
        const int t = r % batch.width;
        const real* src = dembed.row(r);
        real* tok = tok_emb_.g.row(id);
        real* pos = pos_emb_.g.row(t);
        for (int c = 0; c < cfg_.embed_dim; ++c) {
            tok[c] += src[c];
            pos[c] += src[c];
        }
    }
}

Matrix ForwardTrace::attention_slice(int layer, int head, int example) const {
    check(collected_attention, "attention_slice: trace was built without collect_attention");
    check(layer >= 0 && layer < static_cast<int>(layers.size()), "attention_slice: layer out of range");
    const auto& heads = layers[layer].attn;
    check(head >= 0 && head < static_cast<int>(heads.size()), "attention_slice: head out of range");
    check(example >= 0 && example < batch, "attention_slice: example out of range");
    Matrix out(width, width);
    const Matrix& full = heads[head];
    for (int i = 0; i < width; ++i) {
        const real* src = full.row(example * width + i);
        real* dst = out.row(i);
        for (int j = 0; j < width; ++j) dst[j] = src[j];
    }
    return out;
}

std::vector<std::pair<std::string, Var*>> EncoderModel::parameters() {
    std::vector<std::pair<std::string, Var*>> params;
    params.emplace_back("tok_emb", &tok_emb_);
    params.emplace_back("pos_emb", &pos_emb_);
    for (int l = 0; l < cfg_.num_layers; ++l) {
        auto& layer = layers_[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (int h = 0; h < cfg_.num_heads; ++h) {
            const std::string hp = prefix + "head" + std::to_string(h) + ".";
            params.emplace_back(hp + "wq", &layer.wq[h]);
            params.emplace_back(hp + "bq", &layer.bq[h]);
            params.emplace_back(hp + "wk", &layer.wk[h]);
            params.emplace_back(hp + "bk", &layer.bk[h]);
            params.emplace_back(hp + "wv", &layer.wv[h]);
            params.emplace_back(hp + "bv", &layer.bv[h]);
        }
        params.emplace_back(prefix + "wo", &layer.wo);
        params.emplace_back(prefix + "bo", &layer.bo);
        params.emplace_back(prefix + "ln1_gamma", &layer.ln1_gamma);
        params.emplace_back(prefix + "ln1_beta", &layer.ln1_beta);
        params.emplace_back(prefix + "w1", &layer.w1);
        params.emplace_back(prefix + "b1", &layer.b1);
        params.emplace_back(prefix + "w2", &layer.w2);
        params.emplace_back(prefix + "b2", &layer.b2);
        params.emplace_back(prefix + "ln2_gamma", &layer.ln2_gamma);
        params.emplace_back(prefix + "ln2_beta", &layer.ln2_beta);
    }
    params.emplace_back("classifier.w", &wc_);
    params.emplace_back("classifier.b", &bc_);
    return params;
}

void EncoderModel::zero_grad() {
    for (auto& [name, var] : parameters()) var->g.zero();
}

long EncoderModel::parameter_count() const {
    long n = 0;
    for (auto& [name, var] : const_cast<EncoderModel*>(this)->parameters()) {
        n += static_cast<long>(var->v.size());
    }
    return n;
}

std::vector<real> EncoderModel::snapshot_params() const {
    std::vector<real> flat;
    for (auto& [name, var] : const_cast<EncoderModel*>(this)->parameters()) {
        const real* p = var->v.data();
        flat.insert(flat.end(), p, p + var->v.size());
    }
    return flat;
}

void EncoderModel::restore_params(const std::vector<real>& flat) {
    std::size_t offset = 0;
    for (auto& [name, var] : parameters()) {
        check(offset + var->v.size() <= flat.size(), "restore_params: size mismatch");
        std::memcpy(var->v.data(), flat.data() + offset, var->v.size() * sizeof(real));
        offset += var->v.size();
    }
    check(offset == flat.size(), "restore_params: size mismatch");
}

namespace {
constexpr char kCheckpointMagic[4] = {'A', 'M', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void EncoderModel::save_checkpoint(const std::string& path) const {
    auto params = const_cast<EncoderModel*>(this)->parameters();
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["dtype"] = sizeof(real) == 4 ? "f32" : "f64";
    header["config"] = {
        {"num_layers", cfg_.num_layers},   {"num_heads", cfg_.num_heads},
        {"embed_dim", cfg_.embed_dim},     {"ff_dim", cfg_.ff_dim},
        {"num_classes", cfg_.num_classes}, {"max_len", cfg_.max_len},
        {"vocab_size", cfg_.vocab_size},   {"dropout", static_cast<double>(cfg_.dropout)},
        {"pooling", cfg_.pooling == EncoderConfig::Pooling::Bos ? "bos" : "mean"}};
    nlohmann::json plist = nlohmann::json::array();
    for (auto& [name, var] : params) {
        plist.push_back({{"name", name}, {"rows", var->v.rows()}, {"cols", var->v.cols()}});
    }
    header["params"] = plist;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (auto& [name, var] : params) {
        out.write(reinterpret_cast<const char*>(var->v.data()),
                  static_cast<std::streamsize>(var->v.size() * sizeof(real)));
    }
    if (!out) throw InputError("checkpoint write failed: " + path);
}

EncoderModel EncoderModel::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw InputError("not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion) {
        throw InputError("unsupported checkpoint version in " + path);
    }
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);
    const std::string dtype = header["dtype"].get<std::string>();
    const std::string expect = sizeof(real) == 4 ? "f32" : "f64";
    if (dtype != expect) {
        throw InputError("checkpoint dtype " + dtype + " does not match this build (" + expect + ")");
    }

    EncoderConfig cfg;
    const auto& jc = header["config"];
    cfg.num_layers = jc["num_layers"].get<int>();
    cfg.num_heads = jc["num_heads"].get<int>();
    cfg.embed_dim = jc["embed_dim"].get<int>();
    cfg.ff_dim = jc["ff_dim"].get<int>();
    cfg.num_classes = jc["num_classes"].get<int>();
    cfg.max_len = jc["max_len"].get<int>();
    cfg.vocab_size = jc["vocab_size"].get<int>();
    cfg.dropout = static_cast<real>(jc["dropout"].get<double>());
    cfg.pooling = jc["pooling"].get<std::string>() == "mean" ? EncoderConfig::Pooling::Mean
                                                             : EncoderConfig::Pooling::Bos;

    Rng dummy(0);
    EncoderModel model(cfg, dummy);
    auto params = model.parameters();
    const auto& plist = header["params"];
    check(plist.size() == params.size(), "checkpoint: parameter list mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& meta = plist[i];
        check(meta["name"].get<std::string>() == params[i].first &&
                  meta["rows"].get<int>() == params[i].second->v.rows() &&
                  meta["cols"].get<int>() == params[i].second->v.cols(),
              "checkpoint: parameter layout mismatch");
        in.read(reinterpret_cast<char*>(params[i].second->v.data()),
                static_cast<std::streamsize>(params[i].second->v.size() * sizeof(real)));
    }
    if (!in) throw InputError("checkpoint truncated: " + path);
    return model;
}

}  // namespace attnmix
