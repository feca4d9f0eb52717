#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gadtraj/gadformer.hpp"
#include "gadtraj/nn.hpp"

namespace gadtraj {

struct GruParams {
    Tensor w_in, b_in;      // V -> hidden
    Tensor w_z, w_r, w_h;   // input weights [hidden x hidden]
    Tensor u_z, u_r, u_h;   // recurrent weights
    Tensor b_z, b_r, b_h;
};

/// z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h), h' = (1 − z) ⊙ h + z ⊙ h̃.
/// x and h are [1 x hidden] rows; weights act from the right.
inline Tensor gru_cell_step(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
    Tensor z = sigmoid(add_bias(add(matmul(x, p.w_z), matmul(h_prev, p.u_z)), p.b_z));
    Tensor r = sigmoid(add_bias(add(matmul(x, p.w_r), matmul(h_prev, p.u_r)), p.b_r));
    Tensor cand = tanh(add_bias(add(matmul(x, p.w_h), matmul(mul(r, h_prev), p.u_h)), p.b_h));
    return add(mul(affine(z, -1.0, 1.0), h_prev), mul(z, cand));
}

/// Single-layer unidirectional GRU whose last valid hidden state feeds the
/// shared output head. Hidden size equals dim_em.
class GruBaseline {
public:
    static constexpr std::string_view kind = "gru";

    GruBaseline() = default;

    GruBaseline(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        auto rng = make_rng(seed, 0x64u);
        const std::size_t n = cfg_.dim_em;
        p_.w_in = xavier_uniform(cfg_.input_dim, n, rng);
        p_.b_in = zero_param({n});
        p_.w_z = xavier_uniform(n, n, rng);
        p_.w_r = xavier_uniform(n, n, rng);
        p_.w_h = xavier_uniform(n, n, rng);
        p_.u_z = xavier_uniform(n, n, rng);
        p_.u_r = xavier_uniform(n, n, rng);
        p_.u_h = xavier_uniform(n, n, rng);
        p_.b_z = zero_param({n});
        p_.b_r = zero_param({n});
        p_.b_h = zero_param({n});
        head_ = OutputHeadParams::init(n, cfg_.output_hidden(), rng);
    }

    const ModelConfig& config() const { return cfg_; }
    GruParams& params() { return p_; }
    OutputHeadParams& head() { return head_; }

    ModelOutput forward(const PaddedGroup& g, const ForwardContext& = {}, bool = false) const {
        if (g.seq_len != cfg_.seq_len)
            throw DimensionError("group padded to " + std::to_string(g.seq_len) + " positions, model expects " +
                                 std::to_string(cfg_.seq_len));
        if (g.dim != cfg_.input_dim)
            throw DimensionError("GRU expects " + std::to_string(cfg_.input_dim) + " features per point, got " +
                                 std::to_string(g.dim));
        Tensor tokens = add_bias(matmul(g.as_tensor(), p_.w_in), p_.b_in);
        Tensor h = Tensor::zeros({1, cfg_.dim_em});
        bool any = false;
        for (std::size_t t = 0; t < g.seq_len; ++t) {
            if (!g.valid[t]) continue;
            h = gru_cell_step(slice_rows(tokens, t, t + 1), h, p_);
            any = true;
        }
        if (!any) throw ContractError("GRU forward on a group with no valid positions");
        auto out = output_head(h, head_, {true});
        return {out.z, out.p_hat, {}};
    }

    std::vector<NamedTensor> named_parameters() const {
        std::vector<NamedTensor> out{{"gru.w_in", p_.w_in}, {"gru.b_in", p_.b_in}, {"gru.w_z", p_.w_z},
                                     {"gru.w_r", p_.w_r},   {"gru.w_h", p_.w_h},   {"gru.u_z", p_.u_z},
                                     {"gru.u_r", p_.u_r},   {"gru.u_h", p_.u_h},   {"gru.b_z", p_.b_z},
                                     {"gru.b_r", p_.b_r},   {"gru.b_h", p_.b_h}};
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
    GruParams p_;
    OutputHeadParams head_;
};

} // namespace gadtraj
