#pragma once

// Compact spatio-temporal graph transformer.
//
// Each block runs temporal self-attention over the T axis (per node), then a
// GCN branch and a geographic attention branch that are fused by a sigmoid
// gate, then semantic attention over the fused features. Residual sums tie
// the block together; a per-node linear head maps the T x d features to the
// T x C forecast.
//
// A spatial mask M_S enters in two places: as M_S * A_GCN inside the
// normalized Laplacian (degrees from the unmasked A_GCN), and as an
// elementwise factor on the attention logits of neighbour pairs. A temporal
// mask M_F of length T scales whole input time slices.

#include "cgt/graph.hpp"
#include "cgt/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cgt {

struct ModelConfig {
    std::size_t window = 12;   // T
    std::size_t nodes = 0;     // N; 0 builds a node-agnostic model without node embeddings
    std::size_t channels = 1;  // C
    std::size_t hidden = 16;   // d
    std::size_t blocks = 2;
    std::size_t heads = 1;
    std::uint64_t seed = 0;
};

struct AttentionParams {
    Tensor w_q, w_k, w_v;
};

struct GateParams {
    Tensor f_s, f_g, bias;
};

struct BlockParams {
    AttentionParams temporal;
    AttentionParams geo;
    AttentionParams sem;
    Tensor w_gcn;
    GateParams gate;
};

struct ModelParams {
    Tensor w_in, b_in, pos;
    Tensor node;  // [N, d] learnable node embedding, undefined when nodes == 0
    std::vector<BlockParams> blocks;
    Tensor w_out, b_out;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }

    // Stable name -> tensor handles; handles alias the model's storage.
    std::vector<NamedTensor> parameters() const;

    Model clone() const;
    // Deep copy whose parameters do not require gradients.
    Model frozen() const;
    void set_trainable(bool on);

    std::string config_hash() const;

private:
    ModelConfig config_;
    ModelParams params_;
};

enum MaskTarget : unsigned {
    mask_gcn = 1u,
    mask_geo = 2u,
    mask_sem = 4u,
    mask_all = 7u,
};

// Post-softmax spatial attention maps, one [T * heads, N, N] tensor per
// attention layer in forward order (geo, sem for each block).
struct AttentionTrace {
    std::vector<Tensor> maps;
};

struct ForwardOptions {
    Tensor mask_s;  // N x N, optional
    Tensor mask_f;  // length T (any shape with T elements), optional
    unsigned targets = mask_all;
    AttentionTrace* trace = nullptr;
};

// x: [T, N, C] -> prediction [T, N, C].
Tensor forward(const Model& model, const GraphSpec& graph, const Tensor& x, const ForwardOptions& options = {});

// L = I - D^{-1/2} (M_S * A) D^{-1/2}; D from the unmasked A, zero degrees
// replaced by 1.
Tensor laplacian(const Tensor& a_gcn, const Tensor& mask_s);

// x: [T, N, d] -> L x W_GCN
Tensor gcn_branch(const Tensor& x, const Tensor& a_gcn, const Tensor& mask_s, const Tensor& w_gcn);

// Attention over nodes per time step, restricted to a_adj neighbours; the
// mask multiplies the scaled logits of every pair before the softmax.
Tensor spatial_attention(const Tensor& x, const Tensor& a_adj, const Tensor& mask_s, const AttentionParams& p,
                         std::size_t heads = 1, Tensor* weights_out = nullptr);

// Attention over the T axis, independently for each node.
Tensor temporal_attention(const Tensor& x, const AttentionParams& p, std::size_t heads = 1);

// g = sigmoid(T1 F_S + T2 F_G + b); g T1 + (1 - g) T2
Tensor gate_fuse(const Tensor& t1, const Tensor& t2, const GateParams& p);

}  // namespace cgt
