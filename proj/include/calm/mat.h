#pragma once

#include <cassert>
#include <cmath>
#include <initializer_list>
#include <vector>

namespace calm {

// Dense row-major matrix. Vectors are 1 x n.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, T(0)) {}
    Mat(int r, int c, std::initializer_list<T> init) : rows(r), cols(c), a(init) {
        assert(static_cast<int>(a.size()) == r * c);
    }

    T& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
    T* row_ptr(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const T* row_ptr(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return a.size(); }
    void zero() { std::fill(a.begin(), a.end(), T(0)); }

    bool finite() const {
        for (T x : a)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

template <typename T>
double max_rel_dev(const Mat<T>& x, const Mat<T>& y, double floor = 1e-8) {
    assert(x.rows == y.rows && x.cols == y.cols);
    double worst = 0.0;
    for (size_t i = 0; i < x.a.size(); ++i) {
        double ax = std::fabs(static_cast<double>(x.a[i]));
        double ay = std::fabs(static_cast<double>(y.a[i]));
        double d = std::fabs(static_cast<double>(x.a[i]) - static_cast<double>(y.a[i]));
        double rel = d / std::max({ax, ay, floor});
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace calm
