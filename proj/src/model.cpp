#include "cgt/model.hpp"

#include "cgt/error.hpp"
#include "cgt/hash.hpp"
#include "cgt/rng.hpp"

#include <cmath>
#include <sstream>

namespace cgt {

namespace {

Tensor xavier(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (double& v : t.data_mut()) v = rng.uniform(-bound, bound);
    return t;
}

AttentionParams make_attention(Rng& rng, std::size_t d) {
    return {xavier(rng, d, d), xavier(rng, d, d), xavier(rng, d, d)};
}

void check_finite(const Tensor& t, const char* layer) {
    if (!all_finite(t)) throw NumericalError(std::string("forward: non-finite values after ") + layer);
}

template <class F>
void for_each_param(const ModelParams& p, F&& f) {
    f("w_in", p.w_in);
    f("b_in", p.b_in);
    f("pos", p.pos);
    if (p.node.defined()) f("node", p.node);
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        const auto& blk = p.blocks[b];
        const std::string pre = "block" + std::to_string(b) + ".";
        f(pre + "temporal.w_q", blk.temporal.w_q);
        f(pre + "temporal.w_k", blk.temporal.w_k);
        f(pre + "temporal.w_v", blk.temporal.w_v);
        f(pre + "geo.w_q", blk.geo.w_q);
        f(pre + "geo.w_k", blk.geo.w_k);
        f(pre + "geo.w_v", blk.geo.w_v);
        f(pre + "sem.w_q", blk.sem.w_q);
        f(pre + "sem.w_k", blk.sem.w_k);
        f(pre + "sem.w_v", blk.sem.w_v);
        f(pre + "w_gcn", blk.w_gcn);
        f(pre + "gate.f_s", blk.gate.f_s);
        f(pre + "gate.f_g", blk.gate.f_g);
        f(pre + "gate.bias", blk.gate.bias);
    }
    f("w_out", p.w_out);
    f("b_out", p.b_out);
}

ModelParams map_params(const ModelParams& p, const std::function<Tensor(const Tensor&)>& fn) {
    ModelParams out;
    out.w_in = fn(p.w_in);
    out.b_in = fn(p.b_in);
    out.pos = fn(p.pos);
    if (p.node.defined()) out.node = fn(p.node);
    for (const auto& blk : p.blocks) {
        BlockParams b;
        b.temporal = {fn(blk.temporal.w_q), fn(blk.temporal.w_k), fn(blk.temporal.w_v)};
        b.geo = {fn(blk.geo.w_q), fn(blk.geo.w_k), fn(blk.geo.w_v)};
        b.sem = {fn(blk.sem.w_q), fn(blk.sem.w_k), fn(blk.sem.w_v)};
        b.w_gcn = fn(blk.w_gcn);
        b.gate = {fn(blk.gate.f_s), fn(blk.gate.f_g), fn(blk.gate.bias)};
        out.blocks.push_back(std::move(b));
    }
    out.w_out = fn(p.w_out);
    out.b_out = fn(p.b_out);
    return out;
}

// z: [B, L, d]. Returns [B, L, d]. With `weights` set the softmax is
// restricted to weights > 0 (shared over B); `mask` multiplies logits.
Tensor self_attention(const Tensor& z, const AttentionParams& p, std::size_t heads, const Tensor& weights,
                      const Tensor& mask, Tensor* weights_out) {
    const std::size_t batch = z.dim(0);
    const std::size_t len = z.dim(1);
    const std::size_t d = z.dim(2);
    if (heads == 0 || d % heads != 0) throw ConfigError("attention: hidden width not divisible by heads");
    const std::size_t dh = d / heads;
    Tensor q = matmul(z, p.w_q);
    Tensor k = matmul(z, p.w_k);
    Tensor v = matmul(z, p.w_v);
    auto split = [&](const Tensor& t) {
        if (heads == 1) return t;
        return reshape(permute(reshape(t, {batch, len, heads, dh}), {0, 2, 1, 3}), {batch * heads, len, dh});
    };
    q = split(q);
    k = split(k);
    v = split(v);
    Tensor logits = scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask.defined()) logits = mul(logits, mask);
    Tensor att = weights.defined() ? masked_softmax(logits, weights) : softmax_rows(logits);
    if (weights_out) *weights_out = att.detach();
    Tensor out = matmul(att, v);
    if (heads == 1) return out;
    return reshape(permute(reshape(out, {batch, heads, len, dh}), {0, 2, 1, 3}), {batch, len, d});
}

}  // namespace

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(config) {
    if (config_.window == 0 || config_.channels == 0 || config_.hidden == 0 || config_.heads == 0) {
        throw ConfigError("model: window, channels, hidden and heads must be positive");
    }
    if (config_.hidden % config_.heads != 0) throw ConfigError("model: hidden must be divisible by heads");
    Rng rng(config_.seed);
    const std::size_t d = config_.hidden;
    const std::size_t t = config_.window;
    const std::size_t c = config_.channels;
    params_.w_in = xavier(rng, c, d);
    params_.b_in = Tensor::zeros({d});
    params_.pos = Tensor({t, 1, d});
    for (double& v : params_.pos.data_mut()) v = 0.1 * rng.normal();
    if (config_.nodes > 0) {
        params_.node = Tensor({config_.nodes, d});
        for (double& v : params_.node.data_mut()) v = 0.1 * rng.normal();
    }
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        BlockParams blk;
        blk.temporal = make_attention(rng, d);
        blk.geo = make_attention(rng, d);
        blk.sem = make_attention(rng, d);
        blk.w_gcn = xavier(rng, d, d);
        blk.gate = {xavier(rng, d, d), xavier(rng, d, d), Tensor::zeros({d})};
        params_.blocks.push_back(std::move(blk));
    }
    params_.w_out = xavier(rng, t * d, t * c);
    params_.b_out = Tensor::zeros({t * c});
    set_trainable(true);
}

std::vector<NamedTensor> Model::parameters() const {
    std::vector<NamedTensor> out;
    for_each_param(params_, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
    return out;
}

Model Model::clone() const {
    Model m = *this;
    m.params_ = map_params(params_, [](const Tensor& t) {
        Tensor c = t.detach();
        if (t.requires_grad()) c.set_requires_grad(true);
        return c;
    });
    return m;
}

Model Model::frozen() const {
    Model m = *this;
    m.params_ = map_params(params_, [](const Tensor& t) { return t.detach(); });
    return m;
}

void Model::set_trainable(bool on) {
    for (auto& p : parameters()) {
        Tensor t = p.tensor;
        t.set_requires_grad(on);
    }
}

std::string Model::config_hash() const {
    std::ostringstream os;
    os << "window=" << config_.window << ";nodes=" << config_.nodes << ";channels=" << config_.channels
       << ";hidden=" << config_.hidden << ";blocks=" << config_.blocks << ";heads=" << config_.heads << ";seed=" << config_.seed;
    return sha1_hex(os.str());
}

// ---------------------------------------------------------------------------

Tensor laplacian(const Tensor& a_gcn, const Tensor& mask_s) {
    if (a_gcn.rank() != 2 || a_gcn.dim(0) != a_gcn.dim(1)) {
        throw DimensionError("laplacian: A_GCN must be square, got " + shape_str(a_gcn.shape()));
    }
    const std::size_t n = a_gcn.dim(0);
    const auto a = a_gcn.data();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
        inv_sqrt[i] = 1.0 / std::sqrt(deg == 0.0 ? 1.0 : deg);
    }
    Tensor scaled({n, n});
    auto s = scaled.data_mut();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) s[i * n + j] = inv_sqrt[i] * a[i * n + j] * inv_sqrt[j];
    }
    Tensor identity = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) identity.data_mut()[i * n + i] = 1.0;
    if (mask_s.defined()) {
        if (mask_s.shape() != a_gcn.shape()) {
            throw DimensionError("laplacian: mask " + shape_str(mask_s.shape()) + " vs A_GCN " +
                                 shape_str(a_gcn.shape()));
        }
        return sub(identity, mul(mask_s, scaled));
    }
    return sub(identity, scaled);
}

Tensor gcn_branch(const Tensor& x, const Tensor& a_gcn, const Tensor& mask_s, const Tensor& w_gcn) {
    if (x.rank() != 3 || x.dim(1) != a_gcn.dim(0)) {
        throw DimensionError("gcn_branch: input " + shape_str(x.shape()) + " vs A_GCN " + shape_str(a_gcn.shape()));
    }
    return matmul(matmul(laplacian(a_gcn, mask_s), x), w_gcn);
}

Tensor spatial_attention(const Tensor& x, const Tensor& a_adj, const Tensor& mask_s, const AttentionParams& p,
                         std::size_t heads, Tensor* weights_out) {
    if (x.rank() != 3 || a_adj.shape() != Shape{x.dim(1), x.dim(1)}) {
        throw DimensionError("spatial_attention: input " + shape_str(x.shape()) + " vs adjacency " +
                             shape_str(a_adj.shape()));
    }
    if (mask_s.defined() && mask_s.shape() != a_adj.shape()) {
        throw DimensionError("spatial_attention: mask " + shape_str(mask_s.shape()) + " vs adjacency " +
                             shape_str(a_adj.shape()));
    }
    return self_attention(x, p, heads, a_adj, mask_s, weights_out);
}

Tensor temporal_attention(const Tensor& x, const AttentionParams& p, std::size_t heads) {
    if (x.rank() != 3) throw DimensionError("temporal_attention: expected [T, N, d], got " + shape_str(x.shape()));
    Tensor per_node = permute(x, {1, 0, 2});
    Tensor out = self_attention(per_node, p, heads, Tensor{}, Tensor{}, nullptr);
    return permute(out, {1, 0, 2});
}

Tensor gate_fuse(const Tensor& t1, const Tensor& t2, const GateParams& p) {
    if (t1.shape() != t2.shape()) {
        throw DimensionError("gate_fuse: " + shape_str(t1.shape()) + " vs " + shape_str(t2.shape()));
    }
    Tensor g = sigmoid(add(add(matmul(t1, p.f_s), matmul(t2, p.f_g)), p.bias));
    return add(t2, mul(g, sub(t1, t2)));
}

Tensor forward(const Model& model, const GraphSpec& graph, const Tensor& x, const ForwardOptions& options) {
    const auto& cfg = model.config();
    const auto& p = model.params();
    if (x.rank() != 3 || x.dim(0) != cfg.window || x.dim(2) != cfg.channels || x.dim(1) != graph.n_nodes ||
        (cfg.nodes != 0 && cfg.nodes != graph.n_nodes)) {
        throw DimensionError("forward: input " + shape_str(x.shape()) + " does not match T=" +
                             std::to_string(cfg.window) + ", N=" + std::to_string(graph.n_nodes) +
                             ", C=" + std::to_string(cfg.channels));
    }
    const std::size_t t = cfg.window;
    const std::size_t n = graph.n_nodes;
    const std::size_t d = cfg.hidden;

    Tensor input = x;
    if (options.mask_f.defined()) {
        if (options.mask_f.size() != t) {
            throw DimensionError("forward: temporal mask " + shape_str(options.mask_f.shape()) + " needs " +
                                 std::to_string(t) + " entries");
        }
        input = mul(x, reshape(options.mask_f, {t, 1, 1}));
    }
    const Tensor none;
    const Tensor& m_gcn = (options.targets & mask_gcn) ? options.mask_s : none;
    const Tensor& m_geo = (options.targets & mask_geo) ? options.mask_s : none;
    const Tensor& m_sem = (options.targets & mask_sem) ? options.mask_s : none;

    Tensor h = add(add(matmul(input, p.w_in), p.b_in), p.pos);
    if (p.node.defined()) h = add(h, p.node);
    check_finite(h, "input embedding");
    for (const auto& blk : p.blocks) {
        h = add(h, temporal_attention(h, blk.temporal, cfg.heads));
        check_finite(h, "temporal attention");
        Tensor t2 = gcn_branch(h, graph.a_gcn, m_gcn, blk.w_gcn);
        check_finite(t2, "gcn branch");
        Tensor geo_w;
        Tensor t1 = spatial_attention(h, graph.a_geo, m_geo, blk.geo, cfg.heads,
                                      options.trace ? &geo_w : nullptr);
        check_finite(t1, "geographic attention");
        Tensor fused = gate_fuse(t1, t2, blk.gate);
        check_finite(fused, "gate");
        Tensor sem_w;
        Tensor s = spatial_attention(fused, graph.a_sem, m_sem, blk.sem, cfg.heads,
                                     options.trace ? &sem_w : nullptr);
        check_finite(s, "semantic attention");
        if (options.trace) {
            options.trace->maps.push_back(geo_w);
            options.trace->maps.push_back(sem_w);
        }
        h = add(h, add(fused, s));
    }
    Tensor per_node = reshape(permute(h, {1, 0, 2}), {n, t * d});
    Tensor out = add(matmul(per_node, p.w_out), p.b_out);
    out = permute(reshape(out, {n, t, cfg.channels}), {1, 0, 2});
    check_finite(out, "output head");
    return out;
}

}  // namespace cgt
