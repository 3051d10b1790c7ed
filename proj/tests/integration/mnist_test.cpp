#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <optional>

#include "uapforge/attack/uap.hpp"
#include "uapforge/eval/harness.hpp"
#include "uapforge/loss/fgsm.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/zoo/train.hpp"

// End-to-end checks on real MNIST. Skipped when the IDX files are not under
// $UAPFORGE_DATA_DIR/mnist.
namespace uapforge {
namespace {

namespace fs = std::filesystem;

struct Fixture {
    data::Dataset train, test;
    data::AttackSplits splits;
    zoo::Model classifier;
};

const Fixture* shared() {
    static std::optional<Fixture> f = []() -> std::optional<Fixture> {
        const fs::path root = data::default_data_root() / "mnist";
        if (!fs::exists(root / "train-images-idx3-ubyte")) return std::nullopt;
        Fixture out;
        const auto full = data::load_dataset(root, data::DatasetFormat::MnistIdx, data::Split::Train);
        out.train = full.subset(data::balanced_indices(full, 500, 7), data::Split::Train);
        const auto test = data::load_dataset(root, data::DatasetFormat::MnistIdx, data::Split::Test);
        std::vector<std::size_t> head(1000);
        std::iota(head.begin(), head.end(), 0);
        out.test = test.subset(head, data::Split::Test);
        out.splits = data::make_attack_splits(full, 100, 50, 7);
        out.classifier = zoo::build_classifier("cnn-a", {1, 28, 28}, 10, 1);
        zoo::train_classifier(out.classifier, out.train, nullptr, {.epochs = 3, .batch_size = 64, .lr = 3e-3, .seed = 1});
        out.classifier.freeze();
        return out;
    }();
    return f ? &*f : nullptr;
}

#define REQUIRE_MNIST()                                                   \
    const Fixture* fx = shared();                                         \
    if (!fx) GTEST_SKIP() << "MNIST not found under UAPFORGE_DATA_DIR"

TEST(Mnist, ClassifierLearns) {
    REQUIRE_MNIST();
    EXPECT_GT(zoo::accuracy(fx->classifier, fx->test), 90.0);
}

TEST(Mnist, FgsmBeatsRandomSignNoiseOfEqualMagnitude) {
    REQUIRE_MNIST();
    zoo::Model m = fx->classifier;
    const real beta = real(0.1);
    const std::size_t n = 500;
    const Tensor x = fx->test.batch(0, n);
    const std::vector<int> labels(fx->test.labels().begin(), fx->test.labels().begin() + std::ptrdiff_t(n));

    const Tensor adv = loss::fgsm(m, x, labels, beta);
    Rng rng(3);
    Tensor noisy = x;
    for (real& v : noisy.data()) v = std::clamp(v + (rng.uniform() < 0.5 ? -beta : beta), real(0), real(1));

    auto acc = [&](const Tensor& batch) {
        const auto pred = zoo::argmax_rows(m.predict_logits(batch));
        std::size_t hit = 0;
        for (std::size_t i = 0; i < n; ++i) hit += pred[i] == labels[i];
        return 100.0 * double(hit) / double(n);
    };
    const double clean = acc(x), fgsm = acc(adv), noise = acc(noisy);
    EXPECT_LT(fgsm, noise - 20.0) << "clean " << clean << " fgsm " << fgsm << " noise " << noise;
    EXPECT_GT(noise, clean - 10.0);
}

TEST(Mnist, TrainedGeneratorFoolsMoreThanUntrainedAndRandom) {
    REQUIRE_MNIST();
    AttackConfig cfg;
    cfg.alpha = 0.7;
    cfg.epsilon = 160;
    cfg.epochs = 10;
    cfg.adam.lr = 2e-3;
    const zoo::Model gen0 = zoo::build_generator({1, 28, 28}, 16, 0);
    zoo::Model source = fx->classifier;

    AttackConfig before = cfg;
    before.epochs = 0;
    zoo::Model g0 = gen0;
    const auto untrained = attack::train_uap(g0, source, fx->splits.train, before);
    zoo::Model g1 = gen0;
    const auto trained = attack::train_uap(g1, source, fx->splits.train, cfg);

    const double eps = internal_epsilon(cfg, 784);
    const auto noise = eval::random_noise_baseline(NormType::Linf, real(eps), 0, {1, 28, 28});
    const double fr0 = eval::fooling_rate(source, fx->test, untrained.perturbation.r);
    const double fr1 = eval::fooling_rate(source, fx->test, trained.perturbation.r);
    const double frn = eval::fooling_rate(source, fx->test, noise.r);
    EXPECT_GE(fr1, fr0 + 20.0) << fr0 << " -> " << fr1;
    EXPECT_GE(fr1, frn + 20.0) << "noise " << frn << " trained " << fr1;
    EXPECT_LE(attack::norm_of(trained.perturbation.r, NormType::Linf), eps * (1 + 1e-6));
}

}  // namespace
}  // namespace uapforge
