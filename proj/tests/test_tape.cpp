// Finite-difference checks for every autograd op, in double precision.

#include <cmath>
#include <functional>
#include <vector>

#include "calm/tape.h"
#include "doctest.h"

using namespace calm;

namespace {

Mat<double> random_mat(int r, int c, uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    Mat<double> m(r, c);
    for (auto& x : m.a) x = rng.gauss() * scale;
    return m;
}

// Checks d(scalar_fn)/d(inputs) against central differences for every entry
// of every input matrix.
void gradcheck(std::vector<Mat<double>*> inputs,
               const std::function<double(Tape<double>&, std::vector<VRef>&)>& scalar_fn,
               double tol = 1e-6) {
    std::vector<Mat<double>> grad_store;
    std::vector<Mat<double>*> grads;
    for (auto* in : inputs) grad_store.emplace_back(in->rows, in->cols);
    for (auto& g : grad_store) grads.push_back(&g);

    {
        Tape<double> tape;
        std::vector<VRef> refs;
        for (size_t i = 0; i < inputs.size(); ++i) refs.push_back(tape.param(*inputs[i], grads[i]));
        scalar_fn(tape, refs);
        // scalar_fn is expected to call backward itself; see harness below
    }

    const double h = 1e-6;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (size_t e = 0; e < inputs[i]->a.size(); ++e) {
            double orig = inputs[i]->a[e];
            auto value_at = [&](double x) {
                inputs[i]->a[e] = x;
                Tape<double> tape;
                std::vector<VRef> refs;
                for (auto* in : inputs) refs.push_back(tape.param(*in, nullptr));
                double v = scalar_fn(tape, refs);
                inputs[i]->a[e] = orig;
                return v;
            };
            double fd = (value_at(orig + h) - value_at(orig - h)) / (2 * h);
            double an = grads[i]->a[e];
            double scale = std::max({std::fabs(fd), std::fabs(an), 1.0});
            CHECK(std::fabs(fd - an) / scale < tol);
        }
    }
}

// Wraps an op into a scalar: weighted sum of the output, then backward.
std::function<double(Tape<double>&, std::vector<VRef>&)> weighted(
    const std::function<VRef(Tape<double>&, std::vector<VRef>&)>& op, uint64_t wseed) {
    return [op, wseed](Tape<double>& tape, std::vector<VRef>& refs) {
        VRef out = op(tape, refs);
        Mat<double> w = random_mat(tape.rows(out), tape.cols(out), wseed, 1.0);
        VRef loss = tape.sum_all(tape.mul(out, tape.input(w)));
        tape.backward(loss);
        return tape.scalar(loss);
    };
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("elementwise ops") {
    Mat<double> a = random_mat(3, 4, 1), b = random_mat(3, 4, 2);
    gradcheck({&a, &b}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.add_scaled(r[0], r[1], 0.7, -1.3);
              }, 11));
    gradcheck({&a, &b}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.mul(r[0], r[1]);
              }, 12));
    gradcheck({&a}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.scale(r[0], -2.5);
              }, 13));
}

TEST_CASE("matmul family") {
    Mat<double> a = random_mat(3, 4, 3), b = random_mat(4, 5, 4), c = random_mat(5, 4, 5);
    gradcheck({&a, &b}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.matmul(r[0], r[1]);
              }, 14));
    gradcheck({&a, &c}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.matmul_nt(r[0], r[1]);
              }, 15));
}

TEST_CASE("broadcast, slicing, concatenation, rows") {
    Mat<double> a = random_mat(3, 6, 6), v = random_mat(1, 6, 7);
    gradcheck({&a, &v}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.add_rowvec(r[0], r[1]);
              }, 16));
    gradcheck({&a}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.cols_slice(r[0], 2, 3);
              }, 17));
    Mat<double> b = random_mat(3, 2, 8);
    gradcheck({&a, &b}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.cols_concat({r[0], r[1]});
              }, 18));
    gradcheck({&a}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.row(r[0], 1);
              }, 19));
}

TEST_CASE("layer norm and gelu") {
    Mat<double> x = random_mat(4, 6, 9), g = random_mat(1, 6, 10), be = random_mat(1, 6, 11);
    gradcheck({&x, &g, &be}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.layer_norm(r[0], r[1], r[2], 1e-5);
              }, 20), 1e-5);
    gradcheck({&x}, weighted([](Tape<double>& t, std::vector<VRef>& r) {
                  return t.gelu(r[0]);
              }, 21));
}

TEST_CASE("masked softmax") {
    int n = 5;
    Mat<double> s = random_mat(n, n, 12);
    RowMask mask;
    mask.n = n;
    mask.allow.assign(n * n, 0);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if ((u < 3) == (v < 3)) mask.allow[u * n + v] = 1;
    gradcheck({&s}, weighted([mask](Tape<double>& t, std::vector<VRef>& r) {
                  return t.softmax_masked(r[0], mask);
              }, 22));
}

TEST_CASE("losses") {
    Mat<double> z = random_mat(1, 2, 13);
    gradcheck({&z}, [](Tape<double>& t, std::vector<VRef>& r) {
        VRef loss = t.cross_entropy_logits(r[0], 1);
        t.backward(loss);
        return t.scalar(loss);
    });
    std::vector<double> zt{0.8, -0.4};
    gradcheck({&z}, [zt](Tape<double>& t, std::vector<VRef>& r) {
        VRef loss = t.kd_logits(r[0], zt, 2.0);
        t.backward(loss);
        return t.scalar(loss);
    });
}

TEST_CASE("gather accumulates into repeated rows") {
    Mat<double> table = random_mat(4, 3, 14);
    Mat<double> grad(4, 3);
    Tape<double> tape;
    VRef g = tape.gather_rows(table, &grad, {2, 2, 0});
    VRef loss = tape.sum_all(g);
    tape.backward(loss);
    CHECK(grad.at(2, 0) == 2.0);
    CHECK(grad.at(0, 0) == 1.0);
    CHECK(grad.at(1, 0) == 0.0);
    CHECK(grad.at(3, 2) == 0.0);
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
    Mat<double> x(1, 1000);
    for (auto& v : x.a) v = 1.0;
    Rng rng(77);
    Tape<double> tape;
    VRef in = tape.param(x, nullptr);
    VRef out = tape.dropout(in, 0.25, rng);
    int kept = 0;
    for (double v : tape.val(out)) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        kept += v != 0.0;
    }
    CHECK(kept > 650);
    CHECK(kept < 850);
}

}  // TEST_SUITE
