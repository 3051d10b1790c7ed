#include <benchmark/benchmark.h>

#include "uapforge/attack/uap.hpp"
#include "uapforge/loss/losses.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/similarity/similarity.hpp"
#include "uapforge/tensor/ops.hpp"
#include "uapforge/zoo/model.hpp"

namespace {

using namespace uapforge;

Tensor uniform(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (real& v : t.data()) v = real(rng.uniform(-1, 1));
    return t;
}

// Args: batch, channels, spatial side.
void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto n = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
    const Tensor x = uniform({n, c, s, s}, 1), w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
    for (auto _ : state) {
        Graph<real> g;
        auto y = ops::conv2d(g.param(x), g.param(w), g.param(b), {.stride = 1, .padding = 1});
        g.backward(ops::sum(y));
        benchmark::DoNotOptimize(g.grad(0).data().data());
    }
    state.SetItemsProcessed(std::int64_t(state.iterations() * n));
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({32, 8, 28})->Args({32, 32, 14})->Args({8, 32, 32});

void BM_Ssim(benchmark::State& state) {
    const auto s = std::size_t(state.range(0));
    similarity::Map a({s, s}), b({s, s});
    Rng rng(4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.uniform();
        b.data()[i] = 0.5 * a.data()[i] + 0.5 * rng.uniform();
    }
    for (auto _ : state) benchmark::DoNotOptimize(similarity::ssim(a, b).value);
}
BENCHMARK(BM_Ssim)->Arg(7)->Arg(14)->Arg(28)->Arg(112);

// Arg: architecture index into the catalog.
void BM_ClassifierInference(benchmark::State& state) {
    static const char* const kArchs[] = {"cnn-a", "cnn-b", "res-a", "res-b"};
    const char* arch = kArchs[state.range(0)];
    zoo::Model m = zoo::build_classifier(arch, {1, 28, 28}, 10, 5);
    m.freeze();
    const Tensor batch = uniform({64, 1, 28, 28}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(m.predict_logits(batch).data().data());
    state.SetLabel(arch);
    state.SetItemsProcessed(std::int64_t(state.iterations() * 64));
}
BENCHMARK(BM_ClassifierInference)->DenseRange(0, 3);

// One generator update against a frozen source: forward, projection, source
// forward with tap, backward.
void BM_GeneratorStep(benchmark::State& state) {
    zoo::Model source = zoo::build_classifier("cnn-a", {1, 28, 28}, 10, 7);
    source.freeze();
    zoo::Model gen = zoo::build_generator({1, 28, 28}, 16, 8);
    const Tensor z = attack::sample_z(9, {1, 28, 28}).z;
    const Tensor batch = uniform({64, 1, 28, 28}, 10);
    for (auto _ : state) {
        Graph<real> g;
        auto r = gen.forward(g, g.constant(z.reshaped({1, 1, 28, 28}))).output;
        r = attack::project_norm(r, NormType::Linf, real(10.0 / 255));
        auto x = attack::apply_perturbation(g.constant(batch), r);
        auto fwd = source.forward(g, x, {1});
        g.backward(ops::sum(fwd.output));
        benchmark::DoNotOptimize(r.grad().data().data());
    }
    state.SetItemsProcessed(std::int64_t(state.iterations() * 64));
}
BENCHMARK(BM_GeneratorStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
