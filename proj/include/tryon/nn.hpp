#ifndef TRYON_NN_HPP
#define TRYON_NN_HPP

#include <cmath>
#include <string>
#include <vector>

#include "tryon/rng.hpp"
#include "tryon/tensor.hpp"

namespace tryon::nn {

// ---------------------------------------------------------------------------
// parameter registry: fixed-order named views over a model's tensors, shared
// by the optimizer, the checkpoint format and the gradient checks

template <typename T>
struct ParamRegistry {
    std::vector<std::pair<std::string, Tensor<T>*>> entries;

    void add(const std::string& name, Tensor<T>& t) { entries.emplace_back(name, &t); }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, t] : entries) n += t->numel();
        return n;
    }

    Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : entries)
            if (n == name) return t;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// elementwise and linear primitives; backward functions accumulate (+=) into
// gradient buffers so callers can sum over batches

template <typename T>
void linear_fwd(const T* x, int64_t l, const Tensor<T>& w, const Tensor<T>& b, T* y) {
    int64_t out = w.dim(0), in = w.dim(1);
    matmul_nt(x, w.ptr(), y, l, out, in);
    for (int64_t i = 0; i < l; i++)
        for (int64_t o = 0; o < out; o++) y[i * out + o] += b.data[size_t(o)];
}

template <typename T>
void linear_bwd(const T* x, const T* dy, int64_t l, const Tensor<T>& w, Tensor<T>& gw,
                Tensor<T>& gb, T* dx) {
    int64_t out = w.dim(0), in = w.dim(1);
    gemm(true, false, out, in, l, T(1), dy, out, x, in, T(1), gw.ptr(), in);
    for (int64_t i = 0; i < l; i++)
        for (int64_t o = 0; o < out; o++) gb.data[size_t(o)] += dy[i * out + o];
    if (dx) gemm(false, false, l, in, out, T(1), dy, out, w.ptr(), in, T(1), dx, in);
}

template <typename T>
void layernorm_fwd(const T* x, int64_t l, int64_t d, const T* gamma, const T* beta,
                   T* y, T* mean, T* rstd) {
    for (int64_t i = 0; i < l; i++) {
        const T* xi = x + i * d;
        T* yi = y + i * d;
        T m = 0;
        for (int64_t c = 0; c < d; c++) m += xi[c];
        m /= T(d);
        T v = 0;
        for (int64_t c = 0; c < d; c++) {
            T s = xi[c] - m;
            v += s * s;
        }
        v /= T(d);
        T r = T(1) / std::sqrt(v + T(1e-5));
        mean[i] = m;
        rstd[i] = r;
        for (int64_t c = 0; c < d; c++) {
            T h = (xi[c] - m) * r;
            if (gamma) h = h * gamma[c];
            if (beta) h = h + beta[c];
            yi[c] = h;
        }
    }
}

template <typename T>
void layernorm_bwd(const T* x, const T* dy, const T* mean, const T* rstd, int64_t l,
                   int64_t d, const T* gamma, T* dx, T* dgamma, T* dbeta) {
    for (int64_t i = 0; i < l; i++) {
        const T* xi = x + i * d;
        const T* dyi = dy + i * d;
        T* dxi = dx + i * d;
        T m = mean[i], r = rstd[i];
        T sum_dn = 0, sum_dn_h = 0;
        for (int64_t c = 0; c < d; c++) {
            T h = (xi[c] - m) * r;
            T dn = gamma ? dyi[c] * gamma[c] : dyi[c];
            sum_dn += dn;
            sum_dn_h += dn * h;
            if (dgamma) dgamma[c] += dyi[c] * h;
            if (dbeta) dbeta[c] += dyi[c];
        }
        sum_dn /= T(d);
        sum_dn_h /= T(d);
        for (int64_t c = 0; c < d; c++) {
            T h = (xi[c] - m) * r;
            T dn = gamma ? dyi[c] * gamma[c] : dyi[c];
            dxi[c] += r * (dn - sum_dn - h * sum_dn_h);
        }
    }
}

template <typename T>
inline T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752)));
}

template <typename T>
inline T gelu_grad(T x) {
    T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752)));
    T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143268);
    return cdf + x * pdf;
}

template <typename T>
inline T silu(T x) {
    T s = T(1) / (T(1) + std::exp(-x));
    return x * s;
}

template <typename T>
inline T silu_grad(T x) {
    T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

// ---------------------------------------------------------------------------
// multi-head self attention over one sequence; probs are recomputed in the
// backward pass instead of cached (memory stays O(L*D) per block)

template <typename T>
void attention_probs(const T* qkv, int64_t l, int64_t d, int heads, int h, T* probs) {
    int64_t dh = d / heads;
    T scale = T(1) / std::sqrt(T(dh));
    const T* q = qkv + h * dh;
    const T* k = qkv + d + h * dh;
    int64_t stride = 3 * d;
    // probs[i,j] = q_i . k_j * scale
    gemm(false, true, l, l, dh, scale, q, stride, k, stride, T(0), probs, l);
    for (int64_t i = 0; i < l; i++) {
        T* row = probs + i * l;
        T mx = row[0];
        for (int64_t j = 1; j < l; j++) mx = std::max(mx, row[j]);
        T sum = 0;
        for (int64_t j = 0; j < l; j++) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        T inv = T(1) / sum;
        for (int64_t j = 0; j < l; j++) row[j] *= inv;
    }
}

template <typename T>
void attention_run(const T* qkv, int64_t l, int64_t d, int heads, T* out /*l x d*/) {
    int64_t dh = d / heads;
    std::vector<T> probs(size_t(l * l)), head_out(size_t(l * dh));
    for (int h = 0; h < heads; h++) {
        attention_probs(qkv, l, d, heads, h, probs.data());
        const T* v = qkv + 2 * d + h * dh;
        gemm(false, false, l, dh, l, T(1), probs.data(), l, v, 3 * d, T(0), head_out.data(), dh);
        for (int64_t i = 0; i < l; i++)
            for (int64_t c = 0; c < dh; c++) out[i * d + h * dh + c] = head_out[i * dh + c];
    }
}

template <typename T>
void attention_bwd(const T* qkv, const T* dout, int64_t l, int64_t d, int heads,
                   T* dqkv /*accumulate, l x 3d*/) {
    int64_t dh = d / heads;
    int64_t stride = 3 * d;
    T scale = T(1) / std::sqrt(T(dh));
    std::vector<T> probs(size_t(l * l)), dprobs(size_t(l * l));
    std::vector<T> dhead(size_t(l * dh)), scratch(size_t(l * dh));
    for (int h = 0; h < heads; h++) {
        attention_probs(qkv, l, d, heads, h, probs.data());
        const T* q = qkv + h * dh;
        const T* k = qkv + d + h * dh;
        const T* v = qkv + 2 * d + h * dh;
        T* dq = dqkv + h * dh;
        T* dk = dqkv + d + h * dh;
        T* dv = dqkv + 2 * d + h * dh;
        for (int64_t i = 0; i < l; i++)
            for (int64_t c = 0; c < dh; c++) dhead[size_t(i * dh + c)] = dout[i * d + h * dh + c];
        // dV += P^T dOut
        gemm(true, false, l, dh, l, T(1), probs.data(), l, dhead.data(), dh, T(0), scratch.data(), dh);
        for (int64_t i = 0; i < l; i++)
            for (int64_t c = 0; c < dh; c++) dv[i * stride + c] += scratch[size_t(i * dh + c)];
        // dP = dOut V^T
        gemm(false, true, l, l, dh, T(1), dhead.data(), dh, v, stride, T(0), dprobs.data(), l);
        // softmax backward: dS = P * (dP - rowsum(dP * P))
        for (int64_t i = 0; i < l; i++) {
            T* dp = dprobs.data() + i * l;
            const T* p = probs.data() + i * l;
            T dot = 0;
            for (int64_t j = 0; j < l; j++) dot += dp[j] * p[j];
            for (int64_t j = 0; j < l; j++) dp[j] = p[j] * (dp[j] - dot);
        }
        // dQ += scale * dS K ; dK += scale * dS^T Q
        gemm(false, false, l, dh, l, scale, dprobs.data(), l, k, stride, T(0), scratch.data(), dh);
        for (int64_t i = 0; i < l; i++)
            for (int64_t c = 0; c < dh; c++) dq[i * stride + c] += scratch[size_t(i * dh + c)];
        gemm(true, false, l, dh, l, scale, dprobs.data(), l, q, stride, T(0), scratch.data(), dh);
        for (int64_t i = 0; i < l; i++)
            for (int64_t c = 0; c < dh; c++) dk[i * stride + c] += scratch[size_t(i * dh + c)];
    }
}

// ---------------------------------------------------------------------------
// plain pre-LN transformer block (CondNet adapters)

template <typename T>
struct AdapterParams {
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor<T> w_qkv, b_qkv, w_o, b_o, w_fc1, b_fc1, w_fc2, b_fc2;

    void init(int64_t d, Rng& rng) {
        ln1_g = Tensor<T>({d}); ln1_g.fill(T(1));
        ln1_b = Tensor<T>({d});
        ln2_g = Tensor<T>({d}); ln2_g.fill(T(1));
        ln2_b = Tensor<T>({d});
        w_qkv = Tensor<T>({3 * d, d});
        b_qkv = Tensor<T>({3 * d});
        w_o = Tensor<T>({d, d});
        b_o = Tensor<T>({d});
        w_fc1 = Tensor<T>({4 * d, d});
        b_fc1 = Tensor<T>({4 * d});
        w_fc2 = Tensor<T>({d, 4 * d});
        b_fc2 = Tensor<T>({d});
        for (Tensor<T>* w : {&w_qkv, &w_o, &w_fc1, &w_fc2})
            rng.fill_normal(w->ptr(), size_t(w->numel()), 0.0,
                            1.0 / std::sqrt(double(w->dim(1))));
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".ln1.g", ln1_g);
        reg.add(prefix + ".ln1.b", ln1_b);
        reg.add(prefix + ".ln2.g", ln2_g);
        reg.add(prefix + ".ln2.b", ln2_b);
        reg.add(prefix + ".qkv.w", w_qkv);
        reg.add(prefix + ".qkv.b", b_qkv);
        reg.add(prefix + ".o.w", w_o);
        reg.add(prefix + ".o.b", b_o);
        reg.add(prefix + ".fc1.w", w_fc1);
        reg.add(prefix + ".fc1.b", b_fc1);
        reg.add(prefix + ".fc2.w", w_fc2);
        reg.add(prefix + ".fc2.b", b_fc2);
    }
};

template <typename T>
struct AdapterCache {
    Tensor<T> x_in, h1, qkv, att, att_o, x_mid, h2, fc1, act;
    Tensor<T> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
};

template <typename T>
void adapter_forward(const AdapterParams<T>& p, Tensor<T>& x, int heads,
                     AdapterCache<T>* cache) {
    int64_t l = x.dim(0), d = x.dim(1);
    if (l == 0) return;
    Tensor<T> h1({l, d}), qkv({l, 3 * d}), att({l, d}), att_o({l, d});
    Tensor<T> mean1({l}), rstd1({l});
    if (cache) cache->x_in = x;
    layernorm_fwd(x.ptr(), l, d, p.ln1_g.ptr(), p.ln1_b.ptr(), h1.ptr(), mean1.ptr(), rstd1.ptr());
    linear_fwd(h1.ptr(), l, p.w_qkv, p.b_qkv, qkv.ptr());
    attention_run(qkv.ptr(), l, d, heads, att.ptr());
    linear_fwd(att.ptr(), l, p.w_o, p.b_o, att_o.ptr());
    for (int64_t i = 0; i < l * d; i++) x.data[size_t(i)] += att_o.data[size_t(i)];
    Tensor<T> h2({l, d}), fc1({l, 4 * d}), act({l, 4 * d}), fc2({l, d});
    Tensor<T> mean2({l}), rstd2({l});
    if (cache) cache->x_mid = x;
    layernorm_fwd(x.ptr(), l, d, p.ln2_g.ptr(), p.ln2_b.ptr(), h2.ptr(), mean2.ptr(), rstd2.ptr());
    linear_fwd(h2.ptr(), l, p.w_fc1, p.b_fc1, fc1.ptr());
    for (int64_t i = 0; i < l * 4 * d; i++) act.data[size_t(i)] = gelu(fc1.data[size_t(i)]);
    linear_fwd(act.ptr(), l, p.w_fc2, p.b_fc2, fc2.ptr());
    for (int64_t i = 0; i < l * d; i++) x.data[size_t(i)] += fc2.data[size_t(i)];
    if (cache) {
        cache->h1 = std::move(h1);
        cache->qkv = std::move(qkv);
        cache->att = std::move(att);
        cache->att_o = std::move(att_o);
        cache->h2 = std::move(h2);
        cache->fc1 = std::move(fc1);
        cache->act = std::move(act);
        cache->ln1_mean = std::move(mean1);
        cache->ln1_rstd = std::move(rstd1);
        cache->ln2_mean = std::move(mean2);
        cache->ln2_rstd = std::move(rstd2);
    }
}

// dx is d(loss)/d(x_out) on entry and d(loss)/d(x_in) on exit
template <typename T>
void adapter_backward(const AdapterParams<T>& p, AdapterParams<T>& g,
                      const AdapterCache<T>& c, Tensor<T>& dx, int heads) {
    int64_t l = dx.dim(0), d = dx.dim(1);
    if (l == 0) return;
    // mlp half
    Tensor<T> dact({l, 4 * d}), dfc1({l, 4 * d}), dh2({l, d});
    linear_bwd(c.act.ptr(), dx.ptr(), l, p.w_fc2, g.w_fc2, g.b_fc2, dact.ptr());
    for (int64_t i = 0; i < l * 4 * d; i++)
        dfc1.data[size_t(i)] = dact.data[size_t(i)] * gelu_grad(c.fc1.data[size_t(i)]);
    linear_bwd(c.h2.ptr(), dfc1.ptr(), l, p.w_fc1, g.w_fc1, g.b_fc1, dh2.ptr());
    layernorm_bwd(c.x_mid.ptr(), dh2.ptr(), c.ln2_mean.ptr(), c.ln2_rstd.ptr(), l, d,
                  p.ln2_g.ptr(), dx.ptr(), g.ln2_g.ptr(), g.ln2_b.ptr());
    // attention half
    Tensor<T> datt({l, d}), dqkv({l, 3 * d}), dh1({l, d});
    linear_bwd(c.att.ptr(), dx.ptr(), l, p.w_o, g.w_o, g.b_o, datt.ptr());
    attention_bwd(c.qkv.ptr(), datt.ptr(), l, d, heads, dqkv.ptr());
    linear_bwd(c.h1.ptr(), dqkv.ptr(), l, p.w_qkv, g.w_qkv, g.b_qkv, dh1.ptr());
    layernorm_bwd(c.x_in.ptr(), dh1.ptr(), c.ln1_mean.ptr(), c.ln1_rstd.ptr(), l, d,
                  p.ln1_g.ptr(), dx.ptr(), g.ln1_g.ptr(), g.ln1_b.ptr());
}

// ---------------------------------------------------------------------------
// backbone block: LN (no affine) + timestep modulation (shift/scale/gate)
// around attention and mlp, DiT style; modulation vector is 6*d per sample

template <typename T>
struct BlockParams {
    Tensor<T> w_qkv, b_qkv, w_o, b_o, w_fc1, b_fc1, w_fc2, b_fc2;
    Tensor<T> w_mod, b_mod;  // (6d, d), zero-init so blocks start as identity

    void init(int64_t d, Rng& rng) {
        w_qkv = Tensor<T>({3 * d, d});
        b_qkv = Tensor<T>({3 * d});
        w_o = Tensor<T>({d, d});
        b_o = Tensor<T>({d});
        w_fc1 = Tensor<T>({4 * d, d});
        b_fc1 = Tensor<T>({4 * d});
        w_fc2 = Tensor<T>({d, 4 * d});
        b_fc2 = Tensor<T>({d});
        w_mod = Tensor<T>({6 * d, d});
        b_mod = Tensor<T>({6 * d});
        for (Tensor<T>* w : {&w_qkv, &w_o, &w_fc1, &w_fc2})
            rng.fill_normal(w->ptr(), size_t(w->numel()), 0.0,
                            1.0 / std::sqrt(double(w->dim(1))));
    }

    void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
        reg.add(prefix + ".qkv.w", w_qkv);
        reg.add(prefix + ".qkv.b", b_qkv);
        reg.add(prefix + ".o.w", w_o);
        reg.add(prefix + ".o.b", b_o);
        reg.add(prefix + ".fc1.w", w_fc1);
        reg.add(prefix + ".fc1.b", b_fc1);
        reg.add(prefix + ".fc2.w", w_fc2);
        reg.add(prefix + ".fc2.b", b_fc2);
        reg.add(prefix + ".mod.w", w_mod);
        reg.add(prefix + ".mod.b", b_mod);
    }
};

template <typename T>
struct BlockCache {
    Tensor<T> x_in, h1, h1m, qkv, att, att_o, x_mid, h2, h2m, fc1, act, fc2;
    Tensor<T> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
};

// mod layout: [shift1 | scale1 | gate1 | shift2 | scale2 | gate2], each d
template <typename T>
void block_forward(const BlockParams<T>& p, Tensor<T>& x, const T* mod, int heads,
                   BlockCache<T>* cache) {
    int64_t l = x.dim(0), d = x.dim(1);
    const T* shift1 = mod;
    const T* scale1 = mod + d;
    const T* gate1 = mod + 2 * d;
    const T* shift2 = mod + 3 * d;
    const T* scale2 = mod + 4 * d;
    const T* gate2 = mod + 5 * d;

    Tensor<T> h1({l, d}), h1m({l, d}), qkv({l, 3 * d}), att({l, d}), att_o({l, d});
    Tensor<T> mean1({l}), rstd1({l});
    if (cache) cache->x_in = x;
    layernorm_fwd(x.ptr(), l, d, (const T*)nullptr, (const T*)nullptr, h1.ptr(), mean1.ptr(), rstd1.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++)
            h1m.data[size_t(i * d + c)] = h1.data[size_t(i * d + c)] * (T(1) + scale1[c]) + shift1[c];
    linear_fwd(h1m.ptr(), l, p.w_qkv, p.b_qkv, qkv.ptr());
    attention_run(qkv.ptr(), l, d, heads, att.ptr());
    linear_fwd(att.ptr(), l, p.w_o, p.b_o, att_o.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++) x.data[size_t(i * d + c)] += gate1[c] * att_o.data[size_t(i * d + c)];

    Tensor<T> h2({l, d}), h2m({l, d}), fc1({l, 4 * d}), act({l, 4 * d}), fc2({l, d});
    Tensor<T> mean2({l}), rstd2({l});
    if (cache) cache->x_mid = x;
    layernorm_fwd(x.ptr(), l, d, (const T*)nullptr, (const T*)nullptr, h2.ptr(), mean2.ptr(), rstd2.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++)
            h2m.data[size_t(i * d + c)] = h2.data[size_t(i * d + c)] * (T(1) + scale2[c]) + shift2[c];
    linear_fwd(h2m.ptr(), l, p.w_fc1, p.b_fc1, fc1.ptr());
    for (int64_t i = 0; i < l * 4 * d; i++) act.data[size_t(i)] = gelu(fc1.data[size_t(i)]);
    linear_fwd(act.ptr(), l, p.w_fc2, p.b_fc2, fc2.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t c = 0; c < d; c++) x.data[size_t(i * d + c)] += gate2[c] * fc2.data[size_t(i * d + c)];

    if (cache) {
        cache->h1 = std::move(h1);
        cache->h1m = std::move(h1m);
        cache->qkv = std::move(qkv);
        cache->att = std::move(att);
        cache->att_o = std::move(att_o);
        cache->h2 = std::move(h2);
        cache->h2m = std::move(h2m);
        cache->fc1 = std::move(fc1);
        cache->act = std::move(act);
        cache->fc2 = std::move(fc2);
        cache->ln1_mean = std::move(mean1);
        cache->ln1_rstd = std::move(rstd1);
        cache->ln2_mean = std::move(mean2);
        cache->ln2_rstd = std::move(rstd2);
    }
}

template <typename T>
void block_backward(const BlockParams<T>& p, BlockParams<T>& g, const BlockCache<T>& c,
                    const T* mod, Tensor<T>& dx, T* dmod, int heads) {
    int64_t l = dx.dim(0), d = dx.dim(1);
    const T* scale1 = mod + d;
    const T* gate1 = mod + 2 * d;
    const T* scale2 = mod + 4 * d;
    const T* gate2 = mod + 5 * d;
    T* dshift1 = dmod;
    T* dscale1 = dmod + d;
    T* dgate1 = dmod + 2 * d;
    T* dshift2 = dmod + 3 * d;
    T* dscale2 = dmod + 4 * d;
    T* dgate2 = dmod + 5 * d;

    // mlp half: x_out = x_mid + gate2 * fc2
    Tensor<T> dfc2({l, d}), dact({l, 4 * d}), dfc1({l, 4 * d}), dh2m({l, d}), dh2({l, d});
    for (int64_t i = 0; i < l; i++)
        for (int64_t ch = 0; ch < d; ch++) {
            T up = dx.data[size_t(i * d + ch)];
            dgate2[ch] += up * c.fc2.data[size_t(i * d + ch)];
            dfc2.data[size_t(i * d + ch)] = up * gate2[ch];
        }
    linear_bwd(c.act.ptr(), dfc2.ptr(), l, p.w_fc2, g.w_fc2, g.b_fc2, dact.ptr());
    for (int64_t i = 0; i < l * 4 * d; i++)
        dfc1.data[size_t(i)] = dact.data[size_t(i)] * gelu_grad(c.fc1.data[size_t(i)]);
    linear_bwd(c.h2m.ptr(), dfc1.ptr(), l, p.w_fc1, g.w_fc1, g.b_fc1, dh2m.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t ch = 0; ch < d; ch++) {
            T up = dh2m.data[size_t(i * d + ch)];
            dscale2[ch] += up * c.h2.data[size_t(i * d + ch)];
            dshift2[ch] += up;
            dh2.data[size_t(i * d + ch)] = up * (T(1) + scale2[ch]);
        }
    layernorm_bwd(c.x_mid.ptr(), dh2.ptr(), c.ln2_mean.ptr(), c.ln2_rstd.ptr(), l, d,
                  (const T*)nullptr, dx.ptr(), (T*)nullptr, (T*)nullptr);

    // attention half: x_mid = x_in + gate1 * att_o
    Tensor<T> datt_o({l, d}), datt({l, d}), dqkv({l, 3 * d}), dh1m({l, d}), dh1({l, d});
    for (int64_t i = 0; i < l; i++)
        for (int64_t ch = 0; ch < d; ch++) {
            T up = dx.data[size_t(i * d + ch)];
            dgate1[ch] += up * c.att_o.data[size_t(i * d + ch)];
            datt_o.data[size_t(i * d + ch)] = up * gate1[ch];
        }
    linear_bwd(c.att.ptr(), datt_o.ptr(), l, p.w_o, g.w_o, g.b_o, datt.ptr());
    attention_bwd(c.qkv.ptr(), datt.ptr(), l, d, heads, dqkv.ptr());
    linear_bwd(c.h1m.ptr(), dqkv.ptr(), l, p.w_qkv, g.w_qkv, g.b_qkv, dh1m.ptr());
    for (int64_t i = 0; i < l; i++)
        for (int64_t ch = 0; ch < d; ch++) {
            T up = dh1m.data[size_t(i * d + ch)];
            dscale1[ch] += up * c.h1.data[size_t(i * d + ch)];
            dshift1[ch] += up;
            dh1.data[size_t(i * d + ch)] = up * (T(1) + scale1[ch]);
        }
    layernorm_bwd(c.x_in.ptr(), dh1.ptr(), c.ln1_mean.ptr(), c.ln1_rstd.ptr(), l, d,
                  (const T*)nullptr, dx.ptr(), (T*)nullptr, (T*)nullptr);
}

}  // namespace tryon::nn

#endif
