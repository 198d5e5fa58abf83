#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "calm/common.h"
#include "calm/kernels.h"
#include "calm/mat.h"
#include "calm/rng.h"

namespace calm {

// Handle into a Tape.
struct VRef {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Per-row attention bitmap shared by all layers/heads of one encode.
struct RowMask {
    int n = 0;
    std::vector<uint8_t> allow;  // n x n
    uint8_t at(int u, int v) const { return allow[static_cast<size_t>(u) * n + v]; }
};

// Reverse-mode autograd over matrices. Build a graph with the ops below, then
// call backward() on a 1x1 loss node. Leaf nodes copy parameter values in and
// accumulate gradients out into caller-owned buffers, so one tape per example
// composes naturally with gradient accumulation.
//
// alloc() may grow the node vector; ops must not hold references across it.
template <typename T>
class Tape {
public:
    struct Node {
        int rows = 0, cols = 0;
        std::vector<T> val;
        std::vector<T> grad;
    };

    int size() const { return static_cast<int>(nodes_.size()); }
    int rows(VRef r) const { return nodes_[r.i].rows; }
    int cols(VRef r) const { return nodes_[r.i].cols; }
    const std::vector<T>& val(VRef r) const { return nodes_[r.i].val; }
    const std::vector<T>& grad(VRef r) const { return nodes_[r.i].grad; }
    T scalar(VRef r) const { return nodes_[r.i].val[0]; }

    Mat<T> to_mat(VRef r) const {
        Mat<T> m(nodes_[r.i].rows, nodes_[r.i].cols);
        m.a = nodes_[r.i].val;
        return m;
    }

    // ---- leaves ----

    VRef input(const Mat<T>& m) { return alloc(m.rows, m.cols, m.a); }

    VRef input_row(const std::vector<T>& v) {
        return alloc(1, static_cast<int>(v.size()), v);
    }

    // Parameter leaf: copies the value in; backward adds into *grad_out if set.
    VRef param(const Mat<T>& value, Mat<T>* grad_out) {
        VRef out = alloc(value.rows, value.cols, value.a);
        if (grad_out) {
            back_.push_back([out, grad_out](Tape& t) {
                const auto& g = t.nodes_[out.i].grad;
                for (size_t i = 0; i < g.size(); ++i) grad_out->a[i] += g[i];
            });
        }
        return out;
    }

    // Embedding-style gather: selects rows of an external table without
    // copying the whole table onto the tape.
    VRef gather_rows(const Mat<T>& table, Mat<T>* grad_out, std::vector<int> ids) {
        int n = static_cast<int>(ids.size());
        int c = table.cols;
        VRef out = alloc(n, c);
        {
            auto& node = nodes_[out.i];
            for (int i = 0; i < n; ++i) {
                const T* src = table.row_ptr(ids[i]);
                std::copy(src, src + c, node.val.begin() + static_cast<size_t>(i) * c);
            }
        }
        if (grad_out) {
            back_.push_back([out, grad_out, ids = std::move(ids), c](Tape& t) {
                const auto& g = t.nodes_[out.i].grad;
                for (size_t i = 0; i < ids.size(); ++i) {
                    T* dst = grad_out->row_ptr(ids[i]);
                    const T* src = g.data() + i * c;
                    for (int j = 0; j < c; ++j) dst[j] += src[j];
                }
            });
        }
        return out;
    }

    // ---- elementwise ----

    VRef add(VRef a, VRef b) { return add_scaled(a, b, T(1), T(1)); }

    VRef add_scaled(VRef a, VRef b, T ca, T cb) {
        VRef out = alloc(nodes_[a.i].rows, nodes_[a.i].cols);
        {
            auto& no = nodes_[out.i];
            const auto& va = nodes_[a.i].val;
            const auto& vb = nodes_[b.i].val;
            for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = ca * va[i] + cb * vb[i];
        }
        back_.push_back([out, a, b, ca, cb](Tape& t) {
            const auto& g = t.nodes_[out.i].grad;
            auto& ga = t.nodes_[a.i].grad;
            auto& gb = t.nodes_[b.i].grad;
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += ca * g[i];
                gb[i] += cb * g[i];
            }
        });
        return out;
    }

    VRef scale(VRef a, T c) {
        VRef out = alloc(nodes_[a.i].rows, nodes_[a.i].cols);
        {
            auto& no = nodes_[out.i];
            const auto& va = nodes_[a.i].val;
            for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = c * va[i];
        }
        back_.push_back([out, a, c](Tape& t) {
            const auto& g = t.nodes_[out.i].grad;
            auto& ga = t.nodes_[a.i].grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        });
        return out;
    }

    VRef mul(VRef a, VRef b) {  // Hadamard
        VRef out = alloc(nodes_[a.i].rows, nodes_[a.i].cols);
        {
            auto& no = nodes_[out.i];
            const auto& va = nodes_[a.i].val;
            const auto& vb = nodes_[b.i].val;
            for (size_t i = 0; i < no.val.size(); ++i) no.val[i] = va[i] * vb[i];
        }
        back_.push_back([out, a, b](Tape& t) {
            const auto& g = t.nodes_[out.i].grad;
            const auto& va = t.nodes_[a.i].val;
            const auto& vb = t.nodes_[b.i].val;
            auto& ga = t.nodes_[a.i].grad;
            auto& gb = t.nodes_[b.i].grad;
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
        });
        return out;
    }

    // ---- linear algebra ----

    VRef matmul(VRef a, VRef b) {
        int m = nodes_[a.i].rows, k = nodes_[a.i].cols, n = nodes_[b.i].cols;
        VRef out = alloc(m, n);
        kern::matmul(nodes_[a.i].val.data(), nodes_[b.i].val.data(), nodes_[out.i].val.data(),
                     m, k, n);
        back_.push_back([out, a, b, m, k, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            // dA += dC * B^T ; dB += A^T * dC
            std::vector<T> tmp(static_cast<size_t>(m) * k);
            kern::matmul_nt(go.data(), t.nodes_[b.i].val.data(), tmp.data(), m, n, k);
            auto& ga = t.nodes_[a.i].grad;
            for (size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
            std::vector<T> tmpb(static_cast<size_t>(k) * n);
            kern::matmul_tn(t.nodes_[a.i].val.data(), go.data(), tmpb.data(), m, k, n);
            auto& gb = t.nodes_[b.i].grad;
            for (size_t i = 0; i < tmpb.size(); ++i) gb[i] += tmpb[i];
        });
        return out;
    }

    // out = a * b^T with a: m x k, b: n x k
    VRef matmul_nt(VRef a, VRef b) {
        int m = nodes_[a.i].rows, k = nodes_[a.i].cols, n = nodes_[b.i].rows;
        VRef out = alloc(m, n);
        kern::matmul_nt(nodes_[a.i].val.data(), nodes_[b.i].val.data(),
                        nodes_[out.i].val.data(), m, k, n);
        back_.push_back([out, a, b, m, k, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            // dA += dC * B ; dB += dC^T * A
            std::vector<T> tmp(static_cast<size_t>(m) * k);
            kern::matmul(go.data(), t.nodes_[b.i].val.data(), tmp.data(), m, n, k);
            auto& ga = t.nodes_[a.i].grad;
            for (size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
            std::vector<T> tmpb(static_cast<size_t>(n) * k);
            kern::matmul_tn(go.data(), t.nodes_[a.i].val.data(), tmpb.data(), m, n, k);
            auto& gb = t.nodes_[b.i].grad;
            for (size_t i = 0; i < tmpb.size(); ++i) gb[i] += tmpb[i];
        });
        return out;
    }

    // Broadcast-add a 1 x n row vector to every row.
    VRef add_rowvec(VRef a, VRef v) {
        int m = nodes_[a.i].rows, n = nodes_[a.i].cols;
        VRef out = alloc(m, n);
        {
            auto& no = nodes_[out.i];
            const auto& va = nodes_[a.i].val;
            const auto& vv = nodes_[v.i].val;
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c)
                    no.val[static_cast<size_t>(r) * n + c] =
                        va[static_cast<size_t>(r) * n + c] + vv[c];
        }
        back_.push_back([out, a, v, m, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            auto& ga = t.nodes_[a.i].grad;
            auto& gv = t.nodes_[v.i].grad;
            for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c) gv[c] += go[static_cast<size_t>(r) * n + c];
        });
        return out;
    }

    // ---- shape ops ----

    VRef cols_slice(VRef a, int c0, int w) {
        int m = nodes_[a.i].rows, n = nodes_[a.i].cols;
        VRef out = alloc(m, w);
        {
            auto& no = nodes_[out.i];
            const auto& va = nodes_[a.i].val;
            for (int r = 0; r < m; ++r)
                std::copy(va.begin() + static_cast<size_t>(r) * n + c0,
                          va.begin() + static_cast<size_t>(r) * n + c0 + w,
                          no.val.begin() + static_cast<size_t>(r) * w);
        }
        back_.push_back([out, a, c0, w, m, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            auto& ga = t.nodes_[a.i].grad;
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < w; ++c)
                    ga[static_cast<size_t>(r) * n + c0 + c] += go[static_cast<size_t>(r) * w + c];
        });
        return out;
    }

    VRef cols_concat(const std::vector<VRef>& parts) {
        int m = nodes_[parts[0].i].rows;
        int total = 0;
        for (VRef p : parts) total += nodes_[p.i].cols;
        VRef out = alloc(m, total);
        {
            auto& no = nodes_[out.i];
            int off = 0;
            for (VRef p : parts) {
                const auto& np = nodes_[p.i];
                for (int i = 0; i < m; ++i)
                    std::copy(np.val.begin() + static_cast<size_t>(i) * np.cols,
                              np.val.begin() + static_cast<size_t>(i) * np.cols + np.cols,
                              no.val.begin() + static_cast<size_t>(i) * total + off);
                off += np.cols;
            }
        }
        back_.push_back([out, parts, total](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            int off = 0;
            for (VRef p : parts) {
                auto& np = t.nodes_[p.i];
                for (int i = 0; i < np.rows; ++i)
                    for (int c = 0; c < np.cols; ++c)
                        np.grad[static_cast<size_t>(i) * np.cols + c] +=
                            go[static_cast<size_t>(i) * total + off + c];
                off += np.cols;
            }
        });
        return out;
    }

    VRef row(VRef a, int r) {
        int n = nodes_[a.i].cols;
        VRef out = alloc(1, n);
        {
            const auto& va = nodes_[a.i].val;
            std::copy(va.begin() + static_cast<size_t>(r) * n,
                      va.begin() + static_cast<size_t>(r) * n + n, nodes_[out.i].val.begin());
        }
        back_.push_back([out, a, r, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            auto& ga = t.nodes_[a.i].grad;
            for (int c = 0; c < n; ++c) ga[static_cast<size_t>(r) * n + c] += go[c];
        });
        return out;
    }

    // ---- nonlinearities ----

    VRef layer_norm(VRef x, VRef gamma, VRef beta, T eps) {
        int m = nodes_[x.i].rows, n = nodes_[x.i].cols;
        VRef out = alloc(m, n);
        std::vector<T> xhat(static_cast<size_t>(m) * n);
        std::vector<T> rstd(m);
        kern::layernorm_rows(nodes_[x.i].val.data(), nodes_[gamma.i].val.data(),
                             nodes_[beta.i].val.data(), nodes_[out.i].val.data(),
                             xhat.data(), rstd.data(), m, n, eps);
        back_.push_back([out, x, gamma, beta, xhat = std::move(xhat),
                         rstd = std::move(rstd), m, n](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            auto& gx = t.nodes_[x.i].grad;
            auto& gg = t.nodes_[gamma.i].grad;
            auto& gb = t.nodes_[beta.i].grad;
            const auto& gv = t.nodes_[gamma.i].val;
            T inv_n = T(1) / static_cast<T>(n);
            for (int r = 0; r < m; ++r) {
                const T* dy = go.data() + static_cast<size_t>(r) * n;
                const T* xh = xhat.data() + static_cast<size_t>(r) * n;
                T* dx = gx.data() + static_cast<size_t>(r) * n;
                T s1 = T(0), s2 = T(0);
                for (int j = 0; j < n; ++j) {
                    T gdy = gv[j] * dy[j];
                    s1 += gdy;
                    s2 += gdy * xh[j];
                    gg[j] += dy[j] * xh[j];
                    gb[j] += dy[j];
                }
                for (int j = 0; j < n; ++j) {
                    T gdy = gv[j] * dy[j];
                    dx[j] += rstd[r] * (gdy - inv_n * s1 - xh[j] * inv_n * s2);
                }
            }
        });
        return out;
    }

    VRef gelu(VRef x) {
        int m = nodes_[x.i].rows, n = nodes_[x.i].cols;
        VRef out = alloc(m, n);
        kern::gelu_rows(nodes_[x.i].val.data(), nodes_[out.i].val.data(), m, n);
        back_.push_back([out, x](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            const auto& vx = t.nodes_[x.i].val;
            auto& gx = t.nodes_[x.i].grad;
            const T c0 = static_cast<T>(0.7978845608028654);
            const T c1 = static_cast<T>(0.044715);
            for (size_t i = 0; i < vx.size(); ++i) {
                T v = vx[i];
                T u = c0 * (v + c1 * v * v * v);
                T th = std::tanh(u);
                T sech2 = T(1) - th * th;
                T dudv = c0 * (T(1) + T(3) * c1 * v * v);
                T d = static_cast<T>(0.5) * (T(1) + th) +
                      static_cast<T>(0.5) * v * sech2 * dudv;
                gx[i] += go[i] * d;
            }
        });
        return out;
    }

    // Masked softmax over rows of an n x n score matrix; disallowed entries are
    // exactly zero in the output.
    VRef softmax_masked(VRef scores, const RowMask& mask) {
        int m = nodes_[scores.i].rows, n = nodes_[scores.i].cols;
        VRef out = alloc(m, n);
        kern::softmax_masked_rows(nodes_[scores.i].val.data(), mask.allow.data(),
                                  nodes_[out.i].val.data(), m, n);
        back_.push_back([out, scores, m, n](Tape& t) {
            const auto& no = t.nodes_[out.i];
            auto& gs = t.nodes_[scores.i].grad;
            for (int r = 0; r < m; ++r) {
                const T* p = no.val.data() + static_cast<size_t>(r) * n;
                const T* dp = no.grad.data() + static_cast<size_t>(r) * n;
                T dot = T(0);
                for (int j = 0; j < n; ++j) dot += dp[j] * p[j];
                T* ds = gs.data() + static_cast<size_t>(r) * n;
                for (int j = 0; j < n; ++j) ds[j] += p[j] * (dp[j] - dot);
            }
        });
        return out;
    }

    // Inverted-scale dropout. Draws one uniform per element from rng.
    VRef dropout(VRef x, T rate, Rng& rng) {
        int m = nodes_[x.i].rows, n = nodes_[x.i].cols;
        VRef out = alloc(m, n);
        T keep = T(1) - rate;
        T inv = T(1) / keep;
        std::vector<uint8_t> mask(static_cast<size_t>(m) * n);
        {
            auto& no = nodes_[out.i];
            const auto& vx = nodes_[x.i].val;
            for (size_t i = 0; i < vx.size(); ++i) {
                mask[i] = rng.uniform() < static_cast<double>(keep) ? 1 : 0;
                no.val[i] = mask[i] ? vx[i] * inv : T(0);
            }
        }
        back_.push_back([out, x, inv, mask = std::move(mask)](Tape& t) {
            const auto& go = t.nodes_[out.i].grad;
            auto& gx = t.nodes_[x.i].grad;
            for (size_t i = 0; i < mask.size(); ++i)
                if (mask[i]) gx[i] += go[i] * inv;
        });
        return out;
    }

    // ---- reductions / losses ----

    VRef sum_all(VRef x) {
        VRef out = alloc(1, 1);
        {
            T s = T(0);
            for (T v : nodes_[x.i].val) s += v;
            nodes_[out.i].val[0] = s;
        }
        back_.push_back([out, x](Tape& t) {
            T g = t.nodes_[out.i].grad[0];
            auto& gx = t.nodes_[x.i].grad;
            for (auto& v : gx) v += g;
        });
        return out;
    }

    // -log softmax(z)[label], with the probability clamped at 1e-12.
    VRef cross_entropy_logits(VRef z, int label) {
        int n = nodes_[z.i].cols;
        std::vector<T> p(n);
        softmax_row(nodes_[z.i].val.data(), p.data(), n);
        VRef out = alloc(1, 1);
        double py = std::max(static_cast<double>(p[label]), 1e-12);
        nodes_[out.i].val[0] = static_cast<T>(-std::log(py));
        back_.push_back([out, z, label, p = std::move(p)](Tape& t) {
            T g = t.nodes_[out.i].grad[0];
            auto& gz = t.nodes_[z.i].grad;
            for (size_t j = 0; j < p.size(); ++j)
                gz[j] += g * (p[j] - (static_cast<int>(j) == label ? T(1) : T(0)));
        });
        return out;
    }

    // T^2-scaled KL(q_teacher || q_student) with temperature-softened logits.
    VRef kd_logits(VRef z_student, const std::vector<T>& z_teacher, T temp) {
        int n = nodes_[z_student.i].cols;
        std::vector<T> zs(n), zt(n), qs(n), qt(n);
        for (int j = 0; j < n; ++j) {
            zs[j] = nodes_[z_student.i].val[j] / temp;
            zt[j] = z_teacher[j] / temp;
        }
        softmax_row(zs.data(), qs.data(), n);
        softmax_row(zt.data(), qt.data(), n);
        double kl = 0.0;
        for (int j = 0; j < n; ++j) {
            double a = std::max(static_cast<double>(qt[j]), 1e-12);
            double b = std::max(static_cast<double>(qs[j]), 1e-12);
            kl += a * (std::log(a) - std::log(b));
        }
        VRef out = alloc(1, 1);
        nodes_[out.i].val[0] = static_cast<T>(static_cast<double>(temp) * temp * kl);
        back_.push_back([out, z_student, temp, qs = std::move(qs), qt = std::move(qt)](Tape& t) {
            T g = t.nodes_[out.i].grad[0];
            auto& gz = t.nodes_[z_student.i].grad;
            // d/dz_s of T^2 * KL = T * (q_s - q_t)
            for (size_t j = 0; j < qs.size(); ++j)
                gz[j] += g * temp * (qs[j] - qt[j]);
        });
        return out;
    }

    void backward(VRef loss) {
        nodes_[loss.i].grad[0] = T(1);
        for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)(*this);
    }

    static void softmax_row(const T* z, T* p, int n) {
        T best = z[0];
        for (int j = 1; j < n; ++j) best = std::max(best, z[j]);
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
            p[j] = std::exp(z[j] - best);
            sum += p[j];
        }
        for (int j = 0; j < n; ++j) p[j] /= sum;
    }

private:
    VRef alloc(int r, int c) {
        nodes_.push_back(Node{r, c, std::vector<T>(static_cast<size_t>(r) * c, T(0)),
                              std::vector<T>(static_cast<size_t>(r) * c, T(0))});
        return VRef{static_cast<int>(nodes_.size()) - 1};
    }
    VRef alloc(int r, int c, const std::vector<T>& v) {
        nodes_.push_back(Node{r, c, v, std::vector<T>(static_cast<size_t>(r) * c, T(0))});
        return VRef{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    std::vector<std::function<void(Tape&)>> back_;
};

}  // namespace calm
