#include <benchmark/benchmark.h>

#include <vector>

#include "bikeflow/crash.hpp"
#include "bikeflow/mdn.hpp"
#include "bikeflow/model.hpp"
#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

using namespace bikeflow;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = rng.normal();
    return m;
}

void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    RngStream rng(1);
    Matrix a = random_matrix(128, 32, rng), b = random_matrix(32, n, rng), c(128, n);
    for (auto _ : state) {
        gemm_acc(a, false, b, c);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.counters["GMAC/s"] =
        benchmark::Counter(static_cast<double>(128 * 32 * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(256)->Arg(512);

// One training step of the replication model (k=32, A=6, D=18) on a batch.
void BM_LstmMdnBatch(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    ModelConfig cfg;
    cfg.hidden = 32;
    cfg.components = 6;
    RngStream rng(2);
    ModelWeights w = ModelWeights::zeros(cfg);
    for (auto& t : w.tensors(cfg))
        for (double& v : t.values) v = 0.1 * rng.normal();
    std::vector<Matrix> seqs;
    Vector ys;
    std::vector<DropoutMasks> masks;
    for (std::size_t b = 0; b < batch; ++b) {
        seqs.push_back(random_matrix(6, 18, rng));
        ys.push_back(rng.normal());
        masks.push_back(draw_masks(cfg, rng));
    }
    std::vector<const Matrix*> ptrs;
    for (auto& s : seqs) ptrs.push_back(&s);
    BatchEvaluator ev;
    ModelWeights grads = ModelWeights::zeros(cfg);
    for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(cfg, w, ptrs, ys, masks, &grads));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_LstmMdnBatch)->Arg(64)->Arg(256)->Arg(512);

void BM_MixtureNll(benchmark::State& state) {
    RngStream rng(3);
    MixtureParams p{stable_softmax(Vector{0.1, -0.3, 0.5, 0.2, -1.0, 0.0}), Vector{-1, -0.5, 0, 0.5, 1, 2},
                    Vector{0.2, 0.5, 1, 0.1, 0.3, 2}};
    double y = 0;
    for (auto _ : state) {
        y += 1e-6;
        benchmark::DoNotOptimize(mixture_log_density(y, p));
    }
}
BENCHMARK(BM_MixtureNll);

void BM_PoissonFit(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    RngStream rng(4);
    Matrix x(n, 6);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        double eta = -2.0;
        for (std::size_t j = 1; j < 6; ++j) {
            x(i, j) = j < 3 ? rng.normal() : (rng.uniform() < 0.2 ? 1.0 : 0.0);
            eta += 0.2 * x(i, j);
        }
        y[i] = static_cast<double>(rng.poisson(std::exp(eta)));
    }
    for (auto _ : state) benchmark::DoNotOptimize(poisson_fit(x, y).beta);
}
BENCHMARK(BM_PoissonFit)->Arg(8760)->Arg(26280);

}  // namespace
