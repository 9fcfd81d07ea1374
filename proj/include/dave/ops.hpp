#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dave/common.hpp"
#include "dave/tensor.hpp"

namespace dave {

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Unpacks one sample's [Cin,H,W] plane into a [Cin*kh*kw, Ho*Wo] patch matrix.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, T* col) {
    const std::int64_t s = static_cast<std::int64_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        const T* plane = x + static_cast<std::int64_t>(c) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                T* dst = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * s;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    T* drow = dst + static_cast<std::int64_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(drow, drow + wo, T(0));
                        continue;
                    }
                    const T* srow = plane + static_cast<std::int64_t>(iy) * w;
                    if (stride == 1) {
                        const int ix0 = -pad + kj;
                        int ox = 0;
                        for (; ox < wo && ix0 + ox < 0; ++ox) drow[ox] = T(0);
                        const int run_end = std::min(wo, w - ix0);
                        for (; ox < run_end; ++ox) drow[ox] = srow[ix0 + ox];
                        for (; ox < wo; ++ox) drow[ox] = T(0);
                    } else {
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride - pad + kj;
                            drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back onto one sample's input gradient.
template <typename T>
void col2im(const T* col, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int ho, int wo, T* dx) {
    const std::int64_t s = static_cast<std::int64_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        T* plane = dx + static_cast<std::int64_t>(c) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const T* src = col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) * s;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    const T* srow = src + static_cast<std::int64_t>(oy) * wo;
                    T* drow = plane + static_cast<std::int64_t>(iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace detail

/// 2-D convolution, NCHW layout. Output spatial extents follow
/// floor((H + 2*pad - kh)/stride) + 1. Backward produces gradients for
/// input, weight and bias.
template <typename T>
TensorPtr<T> conv2d(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                    int stride = 1, int pad = 0) {
    check_arg(x && w && b, "conv2d: null tensor");
    check_arg(x->rank() == 4, "conv2d: input must be [B,Cin,H,W], got " + detail::shape_str(x->shape));
    check_arg(w->rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + detail::shape_str(w->shape));
    const int bsz = x->extent(0), cin = x->extent(1), h = x->extent(2), wdt = x->extent(3);
    const int cout = w->extent(0), kh = w->extent(2), kw = w->extent(3);
    check_arg(w->extent(1) == cin, "conv2d: weight Cin " + std::to_string(w->extent(1)) +
                                       " does not match input Cin " + std::to_string(cin));
    check_arg(b->rank() == 1 && b->extent(0) == cout, "conv2d: bias must be [Cout]");
    check_arg(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1, pad >= 0");
    check_arg(h + 2 * pad >= kh && wdt + 2 * pad >= kw,
              "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                  " larger than padded input " + detail::shape_str(x->shape));

    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wdt + 2 * pad - kw) / stride + 1;
    const std::int64_t K = static_cast<std::int64_t>(cin) * kh * kw;
    const std::int64_t S = static_cast<std::int64_t>(ho) * wo;

    auto out = detail::op_output<T>({bsz, cout, ho, wo}, {x, w, b});

    // per-sample patch matrices, kept for the backward pass
    auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(bsz) * K * S);

    const T* xp = x->data.data();
    const T* wp = w->data.data();
    const T* bp = b->data.data();
    T* op = out->data.data();
    parallel_chunks(bsz, [&](std::int64_t lo, std::int64_t hi, int) {
        for (std::int64_t i = lo; i < hi; ++i) {
            T* col_i = col->data() + i * K * S;
            detail::im2col(xp + i * cin * h * wdt, cin, h, wdt, kh, kw, stride, pad, ho, wo, col_i);
            detail::MatMap<T> y(op + i * cout * S, cout, S);
            y.noalias() = detail::ConstMatMap<T>(wp, cout, K) * detail::ConstMatMap<T>(col_i, K, S);
            for (int c = 0; c < cout; ++c) y.row(c).array() += bp[c];
        }
    });

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x, ws = w, bs = b;
        out->backward_fn = [o, xs, ws, bs, col, bsz, cin, h, wdt, cout, kh, kw, stride, pad, ho,
                            wo, K, S]() {
            const T* dy = o->grad.data();
            const bool need_dx = xs->tracked();
            if (ws->tracked() || bs->tracked()) {
                ws->ensure_grad();
                bs->ensure_grad();
                const int chunks = std::max(1, std::min(runtime::num_threads(), bsz));
                std::vector<std::vector<T>> dw_acc(chunks), db_acc(chunks);
                parallel_chunks(bsz, [&](std::int64_t lo, std::int64_t hi, int c) {
                    auto& dw = dw_acc[c];
                    auto& db = db_acc[c];
                    dw.assign(static_cast<std::size_t>(cout) * K, T(0));
                    db.assign(static_cast<std::size_t>(cout), T(0));
                    detail::MatMap<T> dwm(dw.data(), cout, K);
                    for (std::int64_t i = lo; i < hi; ++i) {
                        detail::ConstMatMap<T> dyi(dy + i * cout * S, cout, S);
                        detail::ConstMatMap<T> coli(col->data() + i * K * S, K, S);
                        dwm.noalias() += dyi * coli.transpose();
                        for (int r = 0; r < cout; ++r) db[r] += dyi.row(r).sum();
                    }
                });
                for (auto& dw : dw_acc)
                    if (!dw.empty())
                        detail::MatMap<T>(ws->grad.data(), cout, K) +=
                            detail::ConstMatMap<T>(dw.data(), cout, K);
                for (auto& db : db_acc)
                    for (std::size_t r = 0; r < db.size(); ++r) bs->grad[r] += db[r];
            }
            if (need_dx) {
                xs->ensure_grad();
                T* dxp = xs->grad.data();
                const T* wp2 = ws->data.data();
                parallel_chunks(bsz, [&](std::int64_t lo, std::int64_t hi, int) {
                    std::vector<T> dcol(static_cast<std::size_t>(K) * S);
                    for (std::int64_t i = lo; i < hi; ++i) {
                        detail::MatMap<T>(dcol.data(), K, S).noalias() =
                            detail::ConstMatMap<T>(wp2, cout, K).transpose() *
                            detail::ConstMatMap<T>(dy + i * cout * S, cout, S);
                        detail::col2im(dcol.data(), cin, h, wdt, kh, kw, stride, pad, ho, wo,
                                       dxp + i * cin * h * wdt);
                    }
                });
            }
        };
    }
    return out;
}

/// Max pooling with k x k windows. Gradient routes to the first maximal
/// element of each window in row-major scan order.
template <typename T>
TensorPtr<T> maxpool2d(const TensorPtr<T>& x, int k, int stride) {
    check_arg(x && x->rank() == 4, "maxpool2d: input must be [B,C,H,W]");
    check_arg(k >= 1 && stride >= 1, "maxpool2d: k and stride must be >= 1");
    const int bsz = x->extent(0), ch = x->extent(1), h = x->extent(2), w = x->extent(3);
    check_arg(h >= k && w >= k, "maxpool2d: window " + std::to_string(k) + " larger than input " +
                                    detail::shape_str(x->shape));
    const int ho = (h - k) / stride + 1;
    const int wo = (w - k) / stride + 1;

    auto out = detail::op_output<T>({bsz, ch, ho, wo}, {x});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out->data.size());

    const T* xp = x->data.data();
    T* op = out->data.data();
    const std::int64_t planes = static_cast<std::int64_t>(bsz) * ch;
    parallel_chunks(planes, [&](std::int64_t lo, std::int64_t hi, int) {
        for (std::int64_t p = lo; p < hi; ++p) {
            const T* plane = xp + p * h * w;
            T* oplane = op + p * ho * wo;
            std::int64_t* aplane = argmax->data() + p * ho * wo;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const int y0 = oy * stride, x0 = ox * stride;
                    T best = plane[static_cast<std::int64_t>(y0) * w + x0];
                    std::int64_t besti = static_cast<std::int64_t>(y0) * w + x0;
                    for (int ki = 0; ki < k; ++ki) {
                        const T* row = plane + static_cast<std::int64_t>(y0 + ki) * w + x0;
                        for (int kj = 0; kj < k; ++kj) {
                            if (row[kj] > best) {
                                best = row[kj];
                                besti = static_cast<std::int64_t>(y0 + ki) * w + x0 + kj;
                            }
                        }
                    }
                    oplane[oy * wo + ox] = best;
                    aplane[oy * wo + ox] = p * h * w + besti;
                }
            }
        }
    });

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs, argmax]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            const T* dy = o->grad.data();
            T* dx = xs->grad.data();
            for (std::size_t i = 0; i < o->grad.size(); ++i) dx[(*argmax)[i]] += dy[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& x) {
    check_arg(static_cast<bool>(x), "relu: null tensor");
    auto out = detail::op_output<T>(x->shape, {x});
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            for (std::size_t i = 0; i < xs->data.size(); ++i)
                if (xs->data[i] > T(0)) xs->grad[i] += o->grad[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
    check_arg(static_cast<bool>(x), "sigmoid: null tensor");
    auto out = detail::op_output<T>(x->shape, {x});
    for (std::size_t i = 0; i < x->data.size(); ++i) {
        const T v = x->data[i];
        if (v >= T(0)) {
            out->data[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out->data[i] = e / (T(1) + e);
        }
    }
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            for (std::size_t i = 0; i < xs->data.size(); ++i) {
                const T y = o->data[i];
                xs->grad[i] += o->grad[i] * y * (T(1) - y);
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    check_arg(a && b, "add: null tensor");
    check_arg(a->shape == b->shape, "add: shape mismatch " + detail::shape_str(a->shape) + " vs " +
                                        detail::shape_str(b->shape));
    auto out = detail::op_output<T>(a->shape, {a, b});
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto as = a, bs = b;
        out->backward_fn = [o, as, bs]() {
            if (as->tracked()) {
                as->ensure_grad();
                for (std::size_t i = 0; i < as->data.size(); ++i) as->grad[i] += o->grad[i];
            }
            if (bs->tracked()) {
                bs->ensure_grad();
                for (std::size_t i = 0; i < bs->data.size(); ++i) bs->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, T c) {
    check_arg(static_cast<bool>(x), "scale: null tensor");
    auto out = detail::op_output<T>(x->shape, {x});
    for (std::size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] * c;
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs, c]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            for (std::size_t i = 0; i < xs->data.size(); ++i) xs->grad[i] += c * o->grad[i];
        };
    }
    return out;
}

template <typename T>
TensorPtr<T> reshape(const TensorPtr<T>& x, std::vector<int> shape) {
    check_arg(static_cast<bool>(x), "reshape: null tensor");
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    check_arg(n == x->numel(), "reshape: element count mismatch");
    auto out = detail::op_output<T>(std::move(shape), {x});
    out->data = x->data;
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            for (std::size_t i = 0; i < xs->data.size(); ++i) xs->grad[i] += o->grad[i];
        };
    }
    return out;
}

/// Affine map y = x * w^T + b with x [B,Cin], w [Cout,Cin], b [Cout].
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
    check_arg(x && w && b, "linear: null tensor");
    check_arg(x->rank() == 2 && w->rank() == 2, "linear: expects [B,Cin] x [Cout,Cin]");
    const int bsz = x->extent(0), cin = x->extent(1), cout = w->extent(0);
    check_arg(w->extent(1) == cin, "linear: Cin mismatch");
    check_arg(b->rank() == 1 && b->extent(0) == cout, "linear: bias must be [Cout]");

    auto out = detail::op_output<T>({bsz, cout}, {x, w, b});
    detail::MatMap<T> y(out->data.data(), bsz, cout);
    y.noalias() = detail::ConstMatMap<T>(x->data.data(), bsz, cin) *
                  detail::ConstMatMap<T>(w->data.data(), cout, cin).transpose();
    for (int r = 0; r < bsz; ++r)
        for (int c = 0; c < cout; ++c) out->data[static_cast<std::size_t>(r) * cout + c] += b->data[c];

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x, ws = w, bs = b;
        out->backward_fn = [o, xs, ws, bs, bsz, cin, cout]() {
            detail::ConstMatMap<T> dy(o->grad.data(), bsz, cout);
            if (xs->tracked()) {
                xs->ensure_grad();
                detail::MatMap<T>(xs->grad.data(), bsz, cin).noalias() +=
                    dy * detail::ConstMatMap<T>(ws->data.data(), cout, cin);
            }
            if (ws->tracked()) {
                ws->ensure_grad();
                detail::MatMap<T>(ws->grad.data(), cout, cin).noalias() +=
                    dy.transpose() * detail::ConstMatMap<T>(xs->data.data(), bsz, cin);
            }
            if (bs->tracked()) {
                bs->ensure_grad();
                for (int r = 0; r < bsz; ++r)
                    for (int c = 0; c < cout; ++c) bs->grad[c] += o->grad[static_cast<std::size_t>(r) * cout + c];
            }
        };
    }
    return out;
}

/// Mean over the spatial extents: [B,C,H,W] -> [B,C].
template <typename T>
TensorPtr<T> global_avg_pool(const TensorPtr<T>& x) {
    check_arg(x && x->rank() == 4, "global_avg_pool: input must be [B,C,H,W]");
    const int bsz = x->extent(0), ch = x->extent(1);
    const std::int64_t s = static_cast<std::int64_t>(x->extent(2)) * x->extent(3);
    auto out = detail::op_output<T>({bsz, ch}, {x});
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(bsz) * ch; ++p) {
        const T* plane = x->data.data() + p * s;
        T acc = T(0);
        for (std::int64_t i = 0; i < s; ++i) acc += plane[i];
        out->data[p] = acc / static_cast<T>(s);
    }
    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto xs = x;
        out->backward_fn = [o, xs, s]() {
            if (!xs->tracked()) return;
            xs->ensure_grad();
            for (std::size_t p = 0; p < o->data.size(); ++p) {
                const T g = o->grad[p] / static_cast<T>(s);
                T* dplane = xs->grad.data() + p * s;
                for (std::int64_t i = 0; i < s; ++i) dplane[i] += g;
            }
        };
    }
    return out;
}

/// Weighted softmax negative log-likelihood over rows of [B,K] logits.
/// Rows with weight 0 contribute zero loss and exactly-zero gradient.
template <typename T>
TensorPtr<T> softmax_nll(const TensorPtr<T>& logits, const std::vector<int>& labels,
                         const std::vector<T>& weights) {
    check_arg(logits && logits->rank() == 2, "softmax_nll: logits must be [B,K]");
    const int bsz = logits->extent(0), k = logits->extent(1);
    check_arg(static_cast<int>(labels.size()) == bsz && static_cast<int>(weights.size()) == bsz,
              "softmax_nll: labels/weights must have one entry per row");

    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(bsz) * k, T(0));
    T loss = T(0);
    for (int r = 0; r < bsz; ++r) {
        const T wr = weights[r];
        check_arg(wr >= T(0), "softmax_nll: negative row weight");
        if (wr == T(0)) continue;
        check_arg(labels[r] >= 0 && labels[r] < k,
                  "softmax_nll: label " + std::to_string(labels[r]) + " out of range for K=" +
                      std::to_string(k) + " with positive weight");
        const T* row = logits->data.data() + static_cast<std::size_t>(r) * k;
        T m = row[0];
        for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
        T sum = T(0);
        for (int j = 0; j < k; ++j) sum += std::exp(row[j] - m);
        const T lse = m + std::log(sum);
        for (int j = 0; j < k; ++j) (*probs)[static_cast<std::size_t>(r) * k + j] = std::exp(row[j] - m) / sum;
        loss += wr * (lse - row[labels[r]]);
    }
    auto out = detail::op_output<T>({1}, {logits});
    out->data[0] = loss / static_cast<T>(bsz);

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto ls = logits;
        out->backward_fn = [o, ls, probs, labels, weights, bsz, k]() {
            if (!ls->tracked()) return;
            ls->ensure_grad();
            const T g = o->grad[0] / static_cast<T>(bsz);
            for (int r = 0; r < bsz; ++r) {
                if (weights[r] == T(0)) continue;
                const T gw = g * weights[r];
                T* drow = ls->grad.data() + static_cast<std::size_t>(r) * k;
                const T* prow = probs->data() + static_cast<std::size_t>(r) * k;
                for (int j = 0; j < k; ++j) drow[j] += gw * (prow[j] - (j == labels[r] ? T(1) : T(0)));
            }
        };
    }
    return out;
}

/// Huber-style regression loss: per element 0.5*x^2 if |x| < 1 else |x| - 0.5,
/// summed over coordinates, weighted per row, averaged over rows.
template <typename T>
TensorPtr<T> smooth_l1(const TensorPtr<T>& pred, const TensorPtr<T>& target,
                       const std::vector<T>& weights) {
    check_arg(pred && target, "smooth_l1: null tensor");
    check_arg(pred->rank() == 2 && pred->shape == target->shape,
              "smooth_l1: pred/target must be matching [B,C]");
    const int bsz = pred->extent(0), cols = pred->extent(1);
    check_arg(static_cast<int>(weights.size()) == bsz, "smooth_l1: one weight per row");

    T loss = T(0);
    for (int r = 0; r < bsz; ++r) {
        const T wr = weights[r];
        check_arg(wr >= T(0), "smooth_l1: negative row weight");
        if (wr == T(0)) continue;
        const T* prow = pred->data.data() + static_cast<std::size_t>(r) * cols;
        const T* trow = target->data.data() + static_cast<std::size_t>(r) * cols;
        T row = T(0);
        for (int c = 0; c < cols; ++c) {
            const T x = prow[c] - trow[c];
            const T ax = std::abs(x);
            row += ax < T(1) ? T(0.5) * x * x : ax - T(0.5);
        }
        loss += wr * row;
    }
    auto out = detail::op_output<T>({1}, {pred, target});
    out->data[0] = loss / static_cast<T>(bsz);

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto ps = pred, ts = target;
        out->backward_fn = [o, ps, ts, weights, bsz, cols]() {
            const T g = o->grad[0] / static_cast<T>(bsz);
            for (int r = 0; r < bsz; ++r) {
                if (weights[r] == T(0)) continue;
                const T gw = g * weights[r];
                const T* prow = ps->data.data() + static_cast<std::size_t>(r) * cols;
                const T* trow = ts->data.data() + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) {
                    const T x = prow[c] - trow[c];
                    const T d = std::abs(x) < T(1) ? x : (x > T(0) ? T(1) : T(-1));
                    if (ps->tracked()) {
                        ps->ensure_grad();
                        ps->grad[static_cast<std::size_t>(r) * cols + c] += gw * d;
                    }
                    if (ts->tracked()) {
                        ts->ensure_grad();
                        ts->grad[static_cast<std::size_t>(r) * cols + c] -= gw * d;
                    }
                }
            }
        };
    }
    return out;
}

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy between a [B,N] prediction in (0,1) and targets
/// in [0,1]. Predictions are clamped to [1e-7, 1-1e-7] before the logs.
template <typename T>
TensorPtr<T> binary_cross_entropy_vec(const TensorPtr<T>& pred, const TensorPtr<T>& target) {
    check_arg(pred && target, "binary_cross_entropy_vec: null tensor");
    check_arg(pred->rank() == 2 && pred->shape == target->shape,
              "binary_cross_entropy_vec: pred/target must be matching [B,N]");
    const std::int64_t n = pred->numel();
    const T eps = static_cast<T>(kBceClamp);
    T loss = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const T t = target->data[i];
        check_arg(t >= T(0) && t <= T(1), "binary_cross_entropy_vec: target outside [0,1]");
        const T p = std::clamp(pred->data[i], eps, T(1) - eps);
        loss -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
    }
    auto out = detail::op_output<T>({1}, {pred, target});
    out->data[0] = loss / static_cast<T>(n);

    if (out->tracked()) {
        Tensor<T>* o = out.get();
        auto ps = pred, ts = target;
        out->backward_fn = [o, ps, ts, n, eps]() {
            const T g = o->grad[0] / static_cast<T>(n);
            if (ps->tracked()) {
                ps->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    const T t = ts->data[i];
                    const T p = std::clamp(ps->data[i], eps, T(1) - eps);
                    ps->grad[i] += g * (p - t) / (p * (T(1) - p));
                }
            }
            if (ts->tracked()) {
                ts->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) {
                    const T p = std::clamp(ps->data[i], eps, T(1) - eps);
                    ts->grad[i] -= g * (std::log(p) - std::log(T(1) - p));
                }
            }
        };
    }
    return out;
}

/// Plain softmax over a contiguous run of K logits; no tape involvement.
template <typename T>
std::vector<T> softmax_values(const T* logits, int k) {
    T m = logits[0];
    for (int j = 1; j < k; ++j) m = std::max(m, logits[j]);
    std::vector<T> p(static_cast<std::size_t>(k));
    T sum = T(0);
    for (int j = 0; j < k; ++j) {
        p[j] = std::exp(logits[j] - m);
        sum += p[j];
    }
    for (int j = 0; j < k; ++j) p[j] /= sum;
    return p;
}

template <typename T>
int argmax_index(const T* v, int k) {
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (v[j] > v[best]) best = j;
    return best;
}

}  // namespace dave
