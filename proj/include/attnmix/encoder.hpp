#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "attnmix/gradcheck.hpp"
#include "attnmix/matrix.hpp"
#include "attnmix/rng.hpp"
#include "attnmix/text.hpp"

namespace attnmix {

struct EncoderConfig {
    int num_layers = 4;
    int num_heads = 4;
    int embed_dim = 128;
    int ff_dim = 256;
    int num_classes = 2;
    int max_len = 128;
    int vocab_size = 0;
    real dropout = real(0.1);
    enum class Pooling { Bos, Mean };
    Pooling pooling = Pooling::Bos;

    int head_dim() const { return embed_dim / num_heads; }
    void validate() const;
};

// Single-head attention parameters (projections d -> head_dim).
struct HeadParams {
    Matrix wq, bq, wk, bk, wv, bv;
};

// softmax_j over unmasked keys of (q_i . k_j) / sqrt(head_dim).
// Returns (head output n x head_dim, attention n x n). Rows of masked
// queries are zero in both outputs; masked key columns are exactly zero.
std::pair<Matrix, Matrix> attention_head_forward(const Matrix& x,
                                                 const std::vector<std::uint8_t>& mask,
                                                 const HeadParams& params);

struct LayerNormCache {
    Matrix xhat;              // normalized input
    std::vector<real> rstd;   // per row
};

struct ForwardTrace {
    int batch = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> ids;  // empty when built from external embeddings
    bool training = false;

    Matrix input;                    // (batch*width) x d, pre-dropout
    std::vector<real> input_drop;    // dropout scales, empty when not training

    struct LayerCache {
        Matrix x_in;
        std::vector<Matrix> q, k, v;     // per head
        std::vector<Matrix> attn;        // per head, (batch*width) x width
        Matrix concat;
        Matrix attn_proj;
        std::vector<real> drop1;
        LayerNormCache ln1;
        Matrix y1;
        Matrix ff_pre;                   // pre-activation
        Matrix ff_act;
        std::vector<real> drop2;
        LayerNormCache ln2;
    };
    std::vector<LayerCache> layers;

    Matrix hidden;   // final hidden states
    Matrix pooled;   // batch x d
    Matrix logits;   // batch x num_classes

    bool collected_attention = false;
    Matrix input_grad;  // d(loss)/d(input), filled by backward

    bool has_attention() const { return collected_attention; }
    // W x W attention slice for (layer, head, example).
    Matrix attention_slice(int layer, int head, int example) const;
};

class EncoderModel {
public:
    EncoderModel(const EncoderConfig& cfg, Rng& init_rng);

    const EncoderConfig& config() const { return cfg_; }

    // Token + positional embedding lookup; PAD rows carry the PAD embedding.
    Matrix embed(const Batch& batch) const;

    // Full forward pass. dropout_rng may be null when training=false.
    ForwardTrace forward(const Batch& batch, bool collect_attention,
                         bool training = false, Rng* dropout_rng = nullptr);

    // Identical to forward() from the first attention layer onward; the
    // caller owns the gradient routing into whatever produced `input`.
    ForwardTrace forward_from_embeddings(const Matrix& input,
                                         const std::vector<std::uint8_t>& mask,
                                         int batch, int width, bool collect_attention,
                                         bool training = false, Rng* dropout_rng = nullptr);

    Matrix classify(const Matrix& pooled) const;

    // Soft-label cross entropy; accumulates gradients for all parameters.
    // When the trace was built from a Batch, embedding-table gradients are
    // scattered as well; trace.input_grad is always filled.
    double loss_and_backward(ForwardTrace& trace, const Matrix& soft_labels);

    void backward_from_logits(ForwardTrace& trace, const Matrix& dlogits);
    void backward_from_pooled(ForwardTrace& trace, const Matrix& dpooled);
    // Accumulates classifier grads for logits computed on `pooled` (which
    // need not come from the trace, e.g. mixed encodings).
    void classifier_backward(const Matrix& pooled, const Matrix& dlogits,
                             Matrix& dpooled_out);

    void embed_backward(const Batch& batch, const Matrix& dembed);

    std::vector<std::pair<std::string, Var*>> parameters();
    void zero_grad();
    long parameter_count() const;

    std::vector<real> snapshot_params() const;
    void restore_params(const std::vector<real>& flat);

    void save_checkpoint(const std::string& path) const;
    static EncoderModel load_checkpoint(const std::string& path);

private:
    struct LayerParams {
        std::vector<Var> wq, bq, wk, bk, wv, bv;  // per head
        Var wo, bo;
        Var ln1_gamma, ln1_beta;
        Var w1, b1, w2, b2;
        Var ln2_gamma, ln2_beta;
    };

    EncoderConfig cfg_;
    Var tok_emb_;   // vocab x d
    Var pos_emb_;   // max_len x d
    std::vector<LayerParams> layers_;
    Var wc_, bc_;   // classifier

    explicit EncoderModel(const EncoderConfig& cfg);  // uninitialized weights

    ForwardTrace run_layers(ForwardTrace trace, bool collect_attention,
                            bool training, Rng* dropout_rng);
    void pool_backward(ForwardTrace& trace, const Matrix& dpooled, Matrix& dhidden) const;
};

// Soft-label cross entropy: mean over rows of -sum_c y_c log softmax(z)_c.
// Rejects label rows that do not sum to 1 within 1e-6. dlogits, when given,
// receives (softmax(z) - y) / batch.
double soft_cross_entropy(const Matrix& logits, const Matrix& soft_labels,
                          Matrix* dlogits = nullptr);

}  // namespace attnmix
