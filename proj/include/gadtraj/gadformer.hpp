#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gadtraj/data.hpp"
#include "gadtraj/nn.hpp"
#include "gadtraj/ops.hpp"
#include "gadtraj/random.hpp"

namespace gadtraj {

struct ModelConfig {
    std::size_t seq_len = 72;     // dim_pe
    std::size_t input_dim = 2;    // V
    std::size_t dim_em = 8;
    std::size_t dim_ffn = 2048;
    std::size_t heads = 8;
    std::size_t blocks = 4;
    std::size_t head_hidden = 0;  // 0: same as dim_em
    double dropout = 0.0;
    double ln_eps = 1e-5;

    std::size_t head_width() const { return dim_em / heads; }
    std::size_t output_hidden() const { return head_hidden ? head_hidden : dim_em; }

    void validate() const {
        if (seq_len == 0 || input_dim == 0 || dim_em == 0 || dim_ffn == 0 || heads == 0 || blocks == 0)
            throw ContractError("ModelConfig: all sizes must be positive");
        if (dim_em % heads != 0)
            throw ContractError("ModelConfig: dim_em (" + std::to_string(dim_em) + ") must be divisible by heads (" +
                                std::to_string(heads) + ")");
        if (dropout < 0.0 || dropout >= 1.0) throw ContractError("ModelConfig: dropout must lie in [0, 1)");
    }

    bool operator==(const ModelConfig&) const = default;
};

/// Attention matrices of one group, indexed [block][head], each seq_len x seq_len.
/// Rows of padding queries are zero.
using GroupAttention = std::vector<std::vector<Tensor>>;

struct ModelOutput {
    Tensor z;
    Tensor p_hat;
    GroupAttention attention;

    double probability() const { return p_hat.item(); }
};

struct EmbeddingParams {
    Tensor w, b; // [V x dim_em], [dim_em]
};

struct EncoderBlockParams {
    std::vector<Tensor> w_q, w_k, w_v; // per head, [dim_em x head_width]
    Tensor w_o, b_o;
    Tensor w_ff1, b_ff1, w_ff2, b_ff2;
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;

    static EncoderBlockParams init(const ModelConfig& c, std::mt19937_64& rng) {
        EncoderBlockParams p;
        const std::size_t hw = c.head_width();
        for (std::size_t h = 0; h < c.heads; ++h) {
            p.w_q.push_back(xavier_uniform(c.dim_em, hw, rng));
            p.w_k.push_back(xavier_uniform(c.dim_em, hw, rng));
            p.w_v.push_back(xavier_uniform(c.dim_em, hw, rng));
        }
        p.w_o = xavier_uniform(c.dim_em, c.dim_em, rng);
        p.b_o = zero_param({c.dim_em});
        p.w_ff1 = xavier_uniform(c.dim_em, c.dim_ffn, rng);
        p.b_ff1 = zero_param({c.dim_ffn});
        p.w_ff2 = xavier_uniform(c.dim_ffn, c.dim_em, rng);
        p.b_ff2 = zero_param({c.dim_em});
        p.ln1_gain = ones_param({c.dim_em});
        p.ln1_bias = zero_param({c.dim_em});
        p.ln2_gain = ones_param({c.dim_em});
        p.ln2_bias = zero_param({c.dim_em});
        return p;
    }

    void append_to(std::vector<NamedTensor>& out, const std::string& prefix) const {
        for (std::size_t h = 0; h < w_q.size(); ++h) {
            const auto hp = prefix + "head" + std::to_string(h) + ".";
            out.emplace_back(hp + "w_q", w_q[h]);
            out.emplace_back(hp + "w_k", w_k[h]);
            out.emplace_back(hp + "w_v", w_v[h]);
        }
        out.emplace_back(prefix + "w_o", w_o);
        out.emplace_back(prefix + "b_o", b_o);
        out.emplace_back(prefix + "w_ff1", w_ff1);
        out.emplace_back(prefix + "b_ff1", b_ff1);
        out.emplace_back(prefix + "w_ff2", w_ff2);
        out.emplace_back(prefix + "b_ff2", b_ff2);
        out.emplace_back(prefix + "ln1_gain", ln1_gain);
        out.emplace_back(prefix + "ln1_bias", ln1_bias);
        out.emplace_back(prefix + "ln2_gain", ln2_gain);
        out.emplace_back(prefix + "ln2_bias", ln2_bias);
    }
};

/// Sinusoidal table: sin on even channels, cos on odd, wavelengths 2*pi .. 10000*2*pi.
inline Tensor positional_encoding(std::size_t seq_len, std::size_t dim) {
    std::vector<double> pe(seq_len * dim);
    for (std::size_t pos = 0; pos < seq_len; ++pos)
        for (std::size_t i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) * freq;
            pe[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return Tensor({seq_len, dim}, std::move(pe));
}

/// Linear point embedding plus positional encoding; padding rows become zero.
inline Tensor embed_and_encode_position(const Tensor& group, const EmbeddingParams& emb, const Tensor& pe,
                                        const std::vector<bool>& mask) {
    if (group.cols() != emb.w.rows())
        throw DimensionError("embedding expects " + std::to_string(emb.w.rows()) + " features per point, got " +
                             std::to_string(group.cols()));
    if (group.rows() != pe.rows()) throw DimensionError("group length does not match positional encoding length");
    Tensor x = add(add_bias(matmul(group, emb.w), emb.b), pe);
    return mask_rows(x, mask);
}

struct AttentionResult {
    Tensor output;                  // O, [seq_len x dim_em]
    std::vector<Tensor> attention;  // per head
};

/**
 * Scaled dot-product self-attention per head; padded keys get zero weight.
 * Head outputs are concatenated and projected by W_o.
 */
inline AttentionResult multi_head_self_attention(const Tensor& tokens, const EncoderBlockParams& p,
                                                 const std::vector<bool>& mask) {
    const std::size_t heads = p.w_q.size();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.w_q.front().cols()));
    AttentionResult r;
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = matmul(tokens, p.w_q[h]);
        Tensor k = matmul(tokens, p.w_k[h]);
        Tensor v = matmul(tokens, p.w_v[h]);
        Tensor a = softmax_rows(scale(matmul_transposed(q, k), inv_sqrt), mask);
        head_out.push_back(matmul(a, v));
        r.attention.push_back(a);
    }
    Tensor cat = heads == 1 ? head_out.front() : concat_cols(head_out);
    r.output = add_bias(matmul(cat, p.w_o), p.b_o);
    return r;
}

/// Post-norm block: x = LN(x + drop(MHSA(x))); x = LN(x + drop(FFN(x))).
inline Tensor encoder_block_forward(const Tensor& tokens, const EncoderBlockParams& p, const std::vector<bool>& mask,
                                    double dropout_rate, double ln_eps, const ForwardContext& ctx,
                                    std::vector<Tensor>* attention = nullptr) {
    static thread_local std::mt19937_64 fallback_rng(0);
    auto& rng = ctx.rng ? *ctx.rng : fallback_rng;
    auto att = multi_head_self_attention(tokens, p, mask);
    if (attention) *attention = std::move(att.attention);
    Tensor x = layer_norm(add(tokens, dropout(att.output, dropout_rate, ctx.training, rng)), p.ln1_gain, p.ln1_bias,
                          ln_eps);
    Tensor ff = add_bias(matmul(gelu(add_bias(matmul(x, p.w_ff1), p.b_ff1)), p.w_ff2), p.b_ff2);
    return layer_norm(add(x, dropout(ff, dropout_rate, ctx.training, rng)), p.ln2_gain, p.ln2_bias, ln_eps);
}

/// Transformer-encoder group anomaly detector.
class GadFormer {
public:
    static constexpr std::string_view kind = "gadformer";

    GadFormer() = default;

    GadFormer(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        auto rng = make_rng(seed, 0x9adf);
        embedding_ = {xavier_uniform(cfg_.input_dim, cfg_.dim_em, rng), zero_param({cfg_.dim_em})};
        for (std::size_t b = 0; b < cfg_.blocks; ++b) blocks_.push_back(EncoderBlockParams::init(cfg_, rng));
        head_ = OutputHeadParams::init(cfg_.dim_em, cfg_.output_hidden(), rng);
        pe_ = positional_encoding(cfg_.seq_len, cfg_.dim_em);
    }

    const ModelConfig& config() const { return cfg_; }
    EmbeddingParams& embedding() { return embedding_; }
    std::vector<EncoderBlockParams>& blocks() { return blocks_; }
    OutputHeadParams& head() { return head_; }
    const Tensor& positional_table() const { return pe_; }

    ModelOutput forward(const PaddedGroup& g, const ForwardContext& ctx = {}, bool record_attention = false) const {
        if (g.seq_len != cfg_.seq_len)
            throw DimensionError("group padded to " + std::to_string(g.seq_len) + " positions, model expects " +
                                 std::to_string(cfg_.seq_len));
        ModelOutput out;
        Tensor x = embed_and_encode_position(g.as_tensor(), embedding_, pe_, g.valid);
        for (const auto& block : blocks_) {
            std::vector<Tensor> att;
            x = encoder_block_forward(x, block, g.valid, cfg_.dropout, cfg_.ln_eps, ctx,
                                      record_attention ? &att : nullptr);
            if (record_attention) {
                for (auto& a : att) {
                    auto copy = a.detach_copy();
                    auto data = copy.mutable_data();
                    for (std::size_t r = 0; r < g.seq_len; ++r)
                        if (!g.valid[r]) std::fill_n(data.begin() + static_cast<std::ptrdiff_t>(r * g.seq_len), g.seq_len, 0.0);
                    a = copy;
                }
                out.attention.push_back(std::move(att));
            }
        }
        auto h = output_head(x, head_, g.valid);
        out.z = h.z;
        out.p_hat = h.p_hat;
        return out;
    }

    std::vector<NamedTensor> named_parameters() const {
        std::vector<NamedTensor> out;
        out.emplace_back("embedding.w", embedding_.w);
        out.emplace_back("embedding.b", embedding_.b);
        for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].append_to(out, "block" + std::to_string(b) + ".");
        head_.append_to(out, "head.");
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

private:
    ModelConfig cfg_;
    EmbeddingParams embedding_;
    std::vector<EncoderBlockParams> blocks_;
    OutputHeadParams head_;
    Tensor pe_;
};

/// The group anomaly score is the abnormality probability itself.
inline double anomaly_score(const ModelOutput& out) { return out.probability(); }

} // namespace gadtraj
