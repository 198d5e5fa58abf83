// Benchmarks the OpenMP kernels against the serial reference, plus a full
// model forward/backward pass in both modes.

#include <chrono>
#include <cstdio>
#include <vector>

#include "calm/kernels.h"
#include "calm/model.h"
#include "calm/rng.h"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace calm;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_loop(F&& fn, int iters) {
    fn();  // warm up
    auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    return seconds_since(t0) / iters;
}

void bench_matmul(int n, int iters) {
    std::vector<float> a(static_cast<size_t>(n) * n), b(a.size()), c(a.size());
    Rng rng(1);
    for (auto& x : a) x = static_cast<float>(rng.gauss());
    for (auto& x : b) x = static_cast<float>(rng.gauss());

    kern::exec_mode() = kern::Exec::serial;
    double ts = time_loop([&] { kern::matmul(a.data(), b.data(), c.data(), n, n, n); }, iters);
    float checksum_serial = c[0] + c[a.size() - 1];
    kern::exec_mode() = kern::Exec::parallel;
    double tp = time_loop([&] { kern::matmul(a.data(), b.data(), c.data(), n, n, n); }, iters);
    float checksum_par = c[0] + c[a.size() - 1];

    double gflop = 2.0 * n * n * n * 1e-9;
    std::printf("matmul %4dx%-4d  serial %8.3f ms (%5.2f GF/s)  omp %8.3f ms (%5.2f GF/s)  speedup %.2fx  %s\n",
                n, n, ts * 1e3, gflop / ts, tp * 1e3, gflop / tp, ts / tp,
                checksum_serial == checksum_par ? "bitwise-equal" : "MISMATCH");
}

void bench_forward(int iters) {
    std::vector<std::string> schema;
    for (int i = 0; i < 6; ++i) schema.push_back("c" + std::to_string(i));
    Vocabulary vocab;
    for (int i = 0; i < 64; ++i) vocab.add("w" + std::to_string(i));
    BackboneConfig cfg;
    cfg.max_position = 128;
    ModelParams<float> model;
    model.init(Variant::calm, schema, vocab, cfg, 7);

    Rng rng(5);
    EncodedDocument doc;
    doc.id = "bench";
    for (int i = 0; i < 6; ++i) {
        std::vector<int> toks{kStartId};
        for (int t = 0; t < 10; ++t)
            toks.push_back(kNumReserved + static_cast<int>(rng.uniform_int(64)));
        toks.push_back(kEosId);
        doc.components.push_back(toks);
    }

    auto run = [&] {
        Tape<float> tape;
        EncodeOptions<float> opts;
        VRef loss = doc_loss_refs(tape, model, doc, opts);
        tape.backward(loss);
    };
    kern::exec_mode() = kern::Exec::serial;
    double ts = time_loop(run, iters);
    kern::exec_mode() = kern::Exec::parallel;
    double tp = time_loop(run, iters);
    std::printf("packed fwd+bwd (M=6, L=72, d=%d)  serial %8.3f ms  omp %8.3f ms  speedup %.2fx\n",
                cfg.d_model, ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run the serial path\n");
#endif
    bench_matmul(128, 50);
    bench_matmul(256, 20);
    bench_matmul(512, 5);
    bench_forward(50);
    return 0;
}
