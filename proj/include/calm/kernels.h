#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Hot inner loops for the model, in two flavors: a plain serial reference and
// an OpenMP version. Parallelism is always across independent output rows and
// each row is computed with the same serial inner-loop order, so both flavors
// produce bitwise-identical results and runs are reproducible regardless of
// thread count.

namespace calm::kern {

enum class Exec { serial, parallel };

inline Exec& exec_mode() {
    static Exec mode = Exec::parallel;
    return mode;
}

// Row count below which spawning a parallel region is not worth it.
inline constexpr int kParGrain = 16;

namespace detail {

template <typename T>
inline void matmul_row(const T* A, const T* B, T* C, int i, int k, int n) {
    T* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) c[j] = T(0);
    const T* arow = A + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
        T aik = arow[kk];
        const T* brow = B + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) c[j] += aik * brow[j];
    }
}

template <typename T>
inline void matmul_nt_row(const T* A, const T* B, T* C, int i, int k, int n) {
    const T* arow = A + static_cast<size_t>(i) * k;
    T* c = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const T* brow = B + static_cast<size_t>(j) * k;
        T acc = T(0);
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        c[j] = acc;
    }
}

template <typename T>
inline void layernorm_row(const T* x, const T* g, const T* b, T* y, T* xhat, T* rstd,
                          int n, T eps) {
    T mean = T(0);
    for (int j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (int j = 0; j < n; ++j) {
        T d = x[j] - mean;
        var += d * d;
    }
    var /= static_cast<T>(n);
    T rs = T(1) / std::sqrt(var + eps);
    *rstd = rs;
    for (int j = 0; j < n; ++j) {
        T xh = (x[j] - mean) * rs;
        xhat[j] = xh;
        y[j] = g[j] * xh + b[j];
    }
}

template <typename T>
inline void softmax_masked_row(const T* s, const uint8_t* allow, T* p, int n) {
    T best = T(0);
    bool any = false;
    for (int j = 0; j < n; ++j) {
        if (!allow[j]) continue;
        if (!any || s[j] > best) best = s[j];
        any = true;
    }
    if (!any) {
        // Row with no allowed keys is defined to output zeros.
        for (int j = 0; j < n; ++j) p[j] = T(0);
        return;
    }
    T sum = T(0);
    for (int j = 0; j < n; ++j) {
        if (allow[j]) {
            T e = std::exp(s[j] - best);
            p[j] = e;
            sum += e;
        } else {
            p[j] = T(0);
        }
    }
    T inv = T(1) / sum;
    for (int j = 0; j < n; ++j) p[j] *= inv;
}

template <typename T>
inline void gelu_row(const T* x, T* y, int n) {
    const T c0 = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T c1 = static_cast<T>(0.044715);
    for (int j = 0; j < n; ++j) {
        T v = x[j];
        T u = c0 * (v + c1 * v * v * v);
        y[j] = static_cast<T>(0.5) * v * (T(1) + std::tanh(u));
    }
}

}  // namespace detail

// C(m x n) = A(m x k) * B(k x n)
template <typename T>
void matmul(const T* A, const T* B, T* C, int m, int k, int n) {
    if (exec_mode() == Exec::parallel && m >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) detail::matmul_row(A, B, C, i, k, n);
    } else {
        for (int i = 0; i < m; ++i) detail::matmul_row(A, B, C, i, k, n);
    }
}

// C(m x n) = A(m x k) * B(n x k)^T
template <typename T>
void matmul_nt(const T* A, const T* B, T* C, int m, int k, int n) {
    if (exec_mode() == Exec::parallel && m >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) detail::matmul_nt_row(A, B, C, i, k, n);
    } else {
        for (int i = 0; i < m; ++i) detail::matmul_nt_row(A, B, C, i, k, n);
    }
}

// C(k x n) = A(m x k)^T * B(m x n)
template <typename T>
void matmul_tn(const T* A, const T* B, T* C, int m, int k, int n) {
    auto row = [&](int r) {
        T* c = C + static_cast<size_t>(r) * n;
        for (int j = 0; j < n; ++j) c[j] = T(0);
        for (int i = 0; i < m; ++i) {
            T air = A[static_cast<size_t>(i) * k + r];
            const T* brow = B + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) c[j] += air * brow[j];
        }
    };
    if (exec_mode() == Exec::parallel && k >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < k; ++r) row(r);
    } else {
        for (int r = 0; r < k; ++r) row(r);
    }
}

template <typename T>
void layernorm_rows(const T* x, const T* g, const T* b, T* y, T* xhat, T* rstd,
                    int rows, int n, T eps) {
    if (exec_mode() == Exec::parallel && rows >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < rows; ++i)
            detail::layernorm_row(x + static_cast<size_t>(i) * n, g, b,
                                  y + static_cast<size_t>(i) * n,
                                  xhat + static_cast<size_t>(i) * n, rstd + i, n, eps);
    } else {
        for (int i = 0; i < rows; ++i)
            detail::layernorm_row(x + static_cast<size_t>(i) * n, g, b,
                                  y + static_cast<size_t>(i) * n,
                                  xhat + static_cast<size_t>(i) * n, rstd + i, n, eps);
    }
}

// allow is a rows x n bitmap; masked entries come out exactly zero.
template <typename T>
void softmax_masked_rows(const T* s, const uint8_t* allow, T* p, int rows, int n) {
    if (exec_mode() == Exec::parallel && rows >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < rows; ++i)
            detail::softmax_masked_row(s + static_cast<size_t>(i) * n,
                                       allow + static_cast<size_t>(i) * n,
                                       p + static_cast<size_t>(i) * n, n);
    } else {
        for (int i = 0; i < rows; ++i)
            detail::softmax_masked_row(s + static_cast<size_t>(i) * n,
                                       allow + static_cast<size_t>(i) * n,
                                       p + static_cast<size_t>(i) * n, n);
    }
}

template <typename T>
void gelu_rows(const T* x, T* y, int rows, int n) {
    if (exec_mode() == Exec::parallel && rows >= kParGrain) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < rows; ++i)
            detail::gelu_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n);
    } else {
        for (int i = 0; i < rows; ++i)
            detail::gelu_row(x + static_cast<size_t>(i) * n, y + static_cast<size_t>(i) * n, n);
    }
}

}  // namespace calm::kern
