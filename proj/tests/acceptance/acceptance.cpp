// Acceptance run: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Needs MNIST under $UAPFORGE_DATA_DIR/mnist.
//
// Usage: uapforge_acceptance [work-dir] [--only N,M,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "uapforge/attack/uap.hpp"
#include "uapforge/cli/cli.hpp"
#include "uapforge/data/artifact.hpp"
#include "uapforge/eval/harness.hpp"
#include "uapforge/eval/report.hpp"
#include "uapforge/loss/losses.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/similarity/similarity.hpp"
#include "uapforge/tensor/gradcheck.hpp"
#include "uapforge/zoo/train.hpp"

namespace {

using namespace uapforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kGradStep = 1e-4;
constexpr double kGradTolerance = 1e-6;
constexpr std::size_t kGradPoints = 5;
constexpr double kGradBudgetSeconds = 120;
constexpr std::size_t kLossTriples = 1000;
constexpr std::size_t kProjectionTrials = 10000;
constexpr double kProjectionSlack = 1e-6;
constexpr double kWhiteBoxMarginPoints = 20.0;
constexpr double kWhiteBoxBudgetSeconds = 45 * 60;
constexpr double kSelfSsimTolerance = 1e-9;
constexpr double kTargetedChanceMultiple = 5.0;
constexpr std::size_t kOracleSubsets = 5;
constexpr std::size_t kOracleSubsetSize = 100;

// Desk-scale setup shared by the data-driven criteria.
constexpr std::size_t kClassifierPerClass = 800;
constexpr std::size_t kClassifierEpochs = 3;
constexpr double kClassifierLr = 1e-3;  // config default
constexpr std::size_t kTransferTestImages = 1000;
constexpr double kCalibratedEpsilon = 128;   // α-sweep and transfer runs
constexpr double kTargetedEpsilon = 160;
constexpr double kCalibratedLr = 2e-3;
constexpr int kTargetClass = 3;
const std::vector<std::string> kArchs{"cnn-a", "cnn-b", "res-a", "res-b"};
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

class Lab {
public:
    explicit Lab(fs::path work) : work_(std::move(work)) { fs::create_directories(work_); }

    const fs::path& work() const { return work_; }

    bool has_data() const { return fs::exists(root() / "train-images-idx3-ubyte"); }
    fs::path root() const { return data::default_data_root() / "mnist"; }

    const data::Dataset& full_train() {
        if (train_.empty()) train_ = data::load_dataset(root(), data::DatasetFormat::MnistIdx, data::Split::Train);
        return train_;
    }
    const data::Dataset& test() {
        if (test_.empty()) test_ = data::load_dataset(root(), data::DatasetFormat::MnistIdx, data::Split::Test);
        return test_;
    }
    const data::Dataset& test_head() {
        if (head_.empty()) {
            std::vector<std::size_t> idx(std::min(kTransferTestImages, test().size()));
            std::iota(idx.begin(), idx.end(), 0);
            head_ = test().subset(idx, data::Split::Test);
        }
        return head_;
    }
    const data::AttackSplits& splits() {
        if (!splits_) splits_ = data::make_attack_splits(full_train(), 100, 50, 7);
        return *splits_;
    }

    // Trained once per (arch, seed) and kept for the rest of the run.
    const zoo::Model& classifier(const std::string& arch, std::uint64_t seed) {
        auto key = std::make_pair(arch, seed);
        if (auto it = models_.find(key); it != models_.end()) return it->second;
        const auto& full = full_train();
        const auto sub =
            full.subset(data::balanced_indices(full, kClassifierPerClass, 7 + seed), data::Split::Train);
        zoo::Model m = zoo::build_classifier(arch, full.image_shape().as_shape(), full.num_classes(), seed);
        zoo::train_classifier(m, sub, nullptr,
                              {.epochs = kClassifierEpochs, .batch_size = 64, .lr = kClassifierLr, .seed = seed});
        m.freeze();
        std::printf("  trained %s seed %llu: test accuracy %.2f%%\n", arch.c_str(), (unsigned long long)seed,
                    zoo::accuracy(m, test_head()));
        std::fflush(stdout);
        return models_.emplace(key, std::move(m)).first->second;
    }

    attack::UapResult attack(const zoo::Model& source, const AttackConfig& cfg) {
        zoo::Model gen = zoo::build_generator(source.input_shape(), 16, cfg.seed);
        zoo::Model src = source;
        return attack::train_uap(gen, src, splits().train, cfg);
    }

    // Kept for the metric-oracle criterion.
    std::vector<std::pair<std::string, attack::Perturbation>> perturbations;

private:
    fs::path work_;
    data::Dataset train_, test_, head_;
    std::optional<data::AttackSplits> splits_;
    std::map<std::pair<std::string, std::uint64_t>, zoo::Model> models_;
};

AttackConfig calibrated(double epsilon, std::uint64_t seed) {
    AttackConfig c;
    c.alpha = 0.7;
    c.epsilon = epsilon;
    c.epochs = 10;
    c.adam.lr = kCalibratedLr;
    c.seed = seed;
    return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite(Lab&) {
    const auto start = Clock::now();
    const auto reports =
        run_gradcheck_suite(20240501, {.step = kGradStep, .tolerance = kGradTolerance, .points = kGradPoints});
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::size_t bad = 0;
    double worst = 0;
    std::string names;
    for (const auto& r : reports) {
        worst = std::max(worst, r.max_rel_error);
        if (!r.supported || !r.passed || r.points < kGradPoints) {
            ++bad;
            names += " " + r.op;
        }
    }
    const bool covered = reports.size() == differentiable_ops().size();
    return {bad == 0 && covered && secs < kGradBudgetSeconds,
            fmt("%zu ops, %zu failing%s, worst rel err %.2e, %.1fs", reports.size(), bad, names.c_str(), worst, secs)};
}

Outcome loss_algebra(Lab&) {
    Rng rng(77);
    std::size_t mismatches = 0;
    auto same = [](real a, real b) { return std::memcmp(&a, &b, sizeof a) == 0; };
    for (std::size_t i = 0; i < kLossTriples; ++i) {
        const real ce = real(rng.uniform(0, 12)), fff = real(rng.uniform(-6, 6)), a = real(rng.uniform());
        const auto nt = loss::nontargeted_loss(ce, fff, a);
        const auto tg = loss::targeted_loss(ce, fff, a, int(i % 10), 10);
        mismatches += !same(nt.combined, a * (-ce) + (real(1) - a) * fff);
        mismatches += !same(tg.combined, a * ce + (real(1) - a) * fff);

        Graph<real> g;
        auto vce = g.constant(Tensor({1}, {ce})), vf = g.constant(Tensor({1}, {fff}));
        mismatches += !same(loss::combined_loss(vce, vf, a, AttackMode::NonTargeted).value()[0], nt.combined);
        mismatches += !same(loss::combined_loss(vce, vf, a, AttackMode::Targeted).value()[0], tg.combined);

        mismatches += !same(loss::nontargeted_loss(ce, fff, real(1)).combined, -ce);
        mismatches += !same(loss::targeted_loss(ce, fff, real(1), 0, 10).combined, ce);
        mismatches += !same(loss::nontargeted_loss(ce, fff, real(0)).combined, fff);
        mismatches += !same(loss::targeted_loss(ce, fff, real(0), 0, 10).combined, fff);
    }
    return {mismatches == 0, fmt("%zu triples, %zu bit mismatches", kLossTriples, mismatches)};
}

Outcome norm_projection(Lab&) {
    Rng rng(2024);
    std::size_t over = 0, moved = 0, inside = 0;
    double worst = 0;
    for (std::size_t i = 0; i < kProjectionTrials; ++i) {
        const NormType p = i % 2 ? NormType::L2 : NormType::Linf;
        const Shape shape{1 + rng.below(3), 1 + rng.below(12), 1 + rng.below(12)};
        const double spread = std::pow(10.0, rng.uniform(-3, 3));
        Tensor raw(shape);
        for (real& v : raw.data()) v = real(rng.normal() * spread);
        const real eps = real(std::pow(10.0, rng.uniform(-3, 1)));

        const Tensor out = attack::project_norm(raw, p, eps);
        const double n = attack::norm_of(out, p);
        worst = std::max(worst, n / double(eps));
        over += n > double(eps) * (1 + kProjectionSlack);
        if (attack::norm_of(raw, p) <= double(eps)) {
            ++inside;
            Graph<real> g;
            auto v = g.constant(raw);
            const bool same_node = attack::project_norm(v, p, eps).id() == v.id();
            moved += !same_node || std::memcmp(out.data().data(), raw.data().data(), raw.size() * sizeof(real)) != 0;
        }
    }
    return {over == 0 && moved == 0 && inside > 0,
            fmt("%zu trials, %zu over bound (max ratio %.9f), %zu inside-ball inputs, %zu altered", kProjectionTrials,
                over, worst, inside, moved)};
}

Outcome white_box(Lab& lab) {
    const auto start = Clock::now();
    const zoo::Model& m = lab.classifier("cnn-a", 1);
    AttackConfig cfg;  // ε_∞ = 10/255, α = 0.7, 10 epochs, defaults otherwise
    cfg.seed = 1;
    AttackConfig untrained_cfg = cfg;
    untrained_cfg.epochs = 0;
    const auto trained = lab.attack(m, cfg);
    const auto untrained = lab.attack(m, untrained_cfg);
    const auto noise = eval::random_noise_baseline(cfg.norm, trained.perturbation.epsilon, 1,
                                                  m.input_shape());
    const double fr = eval::fooling_rate(m, lab.test(), trained.perturbation.r);
    const double fr0 = eval::fooling_rate(m, lab.test(), untrained.perturbation.r);
    const double frn = eval::fooling_rate(m, lab.test(), noise.r);
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    lab.perturbations.emplace_back("white-box", trained.perturbation);
    attack::save_perturbation(trained.perturbation, lab.work() / "c4-uap-cnn-a.uapt");
    return {fr >= fr0 + kWhiteBoxMarginPoints && fr >= frn + kWhiteBoxMarginPoints && secs < kWhiteBoxBudgetSeconds,
            fmt("mnist cnn-a eps 10/255: trained %.2f%% vs untrained %.2f%% and random %.2f%% (need +%.0f), %.0fs", fr,
                fr0, frn, kWhiteBoxMarginPoints, secs)};
}

Outcome alpha_trend(Lab& lab) {
    const zoo::Model& m = lab.classifier("cnn-a", 1);
    const std::vector<double> alphas{0.0, 0.6, 0.7, 0.8, 1.0};
    const zoo::Model gen = zoo::build_generator(m.input_shape(), 16, 1);
    const auto table = eval::alpha_sweep(gen, m, lab.splits().train, lab.splits().tune, alphas,
                                         calibrated(kCalibratedEpsilon, 1), {});
    eval::emit_report(eval::to_csv(table), lab.work() / "c5-alpha-sweep.csv");
    double pure = 0, best_mixed = -1;
    std::string rows;
    for (const auto& r : table.rows) {
        if (r.alpha == 0.0) pure = r.fooling_rate;
        else best_mixed = std::max(best_mixed, r.fooling_rate);
        rows += fmt(" %.1f:%.2f", r.alpha, r.fooling_rate);
    }
    return {pure < best_mixed, fmt("tune fooling rate by alpha%s; pure fff %.2f%% vs best mixed %.2f%%", rows.c_str(),
                                   pure, best_mixed)};
}

Outcome transfer_trend(Lab& lab) {
    std::size_t deep_wins = 0, diag_failures = 0;
    std::string detail;
    for (std::uint64_t seed : kSeeds) {
        std::vector<const zoo::Model*> models;
        std::vector<attack::Perturbation> perts;
        for (const auto& a : kArchs) {
            models.push_back(&lab.classifier(a, seed));
            perts.push_back(lab.attack(*models.back(), calibrated(kCalibratedEpsilon, seed)).perturbation);
        }
        std::vector<const attack::Perturbation*> pp;
        for (const auto& p : perts) pp.push_back(&p);
        const auto tm = eval::transferability_matrix(models, pp, lab.test_head(), {});
        eval::emit_report(eval::to_csv(tm), lab.work() / fmt("c6-transfer-s%llu.csv", (unsigned long long)seed));
        std::size_t argmax = 0;
        for (std::size_t s = 0; s < tm.archs.size(); ++s) {
            if (tm.rates[s][s] < tm.avg_plus[s]) {
                ++diag_failures;
                detail += fmt(" [s%llu %s diag %.2f < avg+ %.2f]", (unsigned long long)seed, tm.archs[s].c_str(),
                              tm.rates[s][s], tm.avg_plus[s]);
            }
            if (tm.avg_plus[s] > tm.avg_plus[argmax]) argmax = s;
        }
        deep_wins += tm.archs[argmax] == "res-b";
        detail += fmt(" s%llu avg+ top %s (res-b %.2f vs %.2f)", (unsigned long long)seed, tm.archs[argmax].c_str(),
                      tm.avg_plus[3], tm.avg_plus[argmax]);
    }
    return {diag_failures == 0 && deep_wins >= 2,
            fmt("%zu diagonal violations, res-b top on %zu/3 seeds;", diag_failures, deep_wins) + detail};
}

Outcome ssim_trend(Lab& lab) {
    std::vector<const zoo::Model*> models;
    std::size_t depth = 6;
    for (const auto& a : kArchs) {
        models.push_back(&lab.classifier(a, 1));
        depth = std::min(depth, models.back()->num_taps());
    }
    std::vector<std::size_t> layers(depth);
    std::iota(layers.begin(), layers.end(), 1);
    std::size_t trend_failures = 0, self_failures = 0;
    std::string detail, csv;
    for (std::size_t i = 0; i < models.size(); ++i) {
        std::vector<const zoo::Model*> cmp{models[i]};
        for (std::size_t j = i + 1; j < models.size(); ++j) cmp.push_back(models[j]);
        const auto rep = similarity::layer_similarity_table(*models[i], cmp, lab.test_head(), layers,
                                                            {.max_images = 200, .jobs = 1, .batch_size = 32, .ssim = {}});
        csv += similarity::similarity_csv(rep);
        for (std::size_t l : layers) {
            const double self = rep.rows[l - 1].ssim;
            self_failures += std::abs(self - 1.0) > kSelfSsimTolerance;
        }
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            const double first = rep.rows[(j - i) * depth].ssim, last = rep.rows[(j - i) * depth + depth - 1].ssim;
            trend_failures += !(first > last);
            detail += fmt(" %s/%s %.3f>%.3f", kArchs[i].c_str(), kArchs[j].c_str(), first, last);
        }
    }
    eval::emit_report(csv, lab.work() / "c7-ssim.csv");
    return {trend_failures == 0 && self_failures == 0,
            fmt("layers 1..%zu, %zu pair violations, %zu self rows off;", depth, trend_failures, self_failures) +
                detail};
}

Outcome targeted(Lab& lab) {
    const zoo::Model& m = lab.classifier("cnn-a", 1);
    AttackConfig cfg = calibrated(kTargetedEpsilon, 1);
    cfg.mode = AttackMode::Targeted;
    cfg.target_class = kTargetClass;
    const auto res = lab.attack(m, cfg);
    lab.perturbations.emplace_back("targeted", res.perturbation);
    const double acc = eval::top1_target_accuracy(m, lab.test(), res.perturbation.r, kTargetClass);
    const double need = kTargetedChanceMultiple * 100.0 / double(m.num_classes());
    return {acc >= need, fmt("class %d at eps %.0f/255: top-1 target accuracy %.2f%% (need %.2f%%)", kTargetClass,
                             kTargetedEpsilon, acc, need)};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return files;
}

Outcome determinism(Lab& lab) {
    const fs::path base = lab.work() / "c9";
    fs::remove_all(base);
    fs::create_directories(base);
    const std::string ckpt = (base / "a/cls/cnn-a-s5.ckpt").string();
    const std::string pert = (base / "a/uap/uap-cnn-a-s5.uapt").string();
    nlohmann::json cfg = {{"dataset",
                           {{"format", "mnist-idx"},
                            {"root", lab.root().string()},
                            {"classifier_per_class", 50},
                            {"uap_train_per_class", 20},
                            {"tune_per_class", 10},
                            {"test_limit", 300}}},
                          {"classifier", {{"arch", "cnn-a"}, {"epochs", 1}, {"seed", 5}, {"checkpoint", ckpt}}},
                          {"attack", {{"epochs", 2}, {"seed", 5}, {"epsilon", 64}}},
                          {"eval", {{"perturbation", pert}, {"baseline", "random"}}}};
    std::ofstream(base / "run.json") << cfg.dump(2);

    std::size_t failures = 0, files = 0;
    std::string detail;
    for (const char* step : {"cls", "uap", "eval"}) {
        const std::string cmd = step == std::string("cls") ? "train-classifier" : step == std::string("uap") ? "train-uap" : "eval";
        std::ostringstream out, err;
        const fs::path a = base / "a" / step, b = base / "b" / step;
        int rc = cli::run({cmd, "--config", (base / "run.json").string(), "--out", a.string()}, out, err);
        // Re-run from the echoed config.
        fs::copy_file(a / "config.json", base / (std::string(step) + ".echo.json"), fs::copy_options::overwrite_existing);
        rc |= cli::run({cmd, "--config", (base / (std::string(step) + ".echo.json")).string(), "--out", b.string()},
                       out, err);
        const auto ta = read_tree(a), tb = read_tree(b);
        files += ta.size();
        if (rc != 0 || ta != tb) {
            ++failures;
            detail += fmt(" %s differs (rc %d) %s", step, rc, err.str().c_str());
        }
    }

    // Artifact round trip over random containers, including arbitrary float bit patterns.
    Rng rng(99);
    std::size_t rt_fail = 0;
    for (int trial = 0; trial < 200; ++trial) {
        data::Artifact art;
        const std::size_t count = rng.below(5);
        for (std::size_t t = 0; t < count; ++t) {
            Shape s;
            for (std::size_t r = 0, rank = 1 + rng.below(4); r < rank; ++r) s.push_back(1 + rng.below(6));
            BasicTensor<float> v(s);
            for (float& x : v.data()) {
                const auto bits = std::uint32_t(rng.next_u64());
                std::memcpy(&x, &bits, sizeof x);
            }
            art.add("t" + std::to_string(t) + "_" + std::to_string(rng.below(1000)), std::move(v));
        }
        art.metadata = {{"trial", trial}, {"note", std::string(rng.below(20), 'x')}, {"u", rng.uniform()}};
        const auto bytes = data::encode_artifact(art);
        const fs::path p = base / "rt.uapt";
        data::save_artifact(art, p);
        const auto back = data::load_artifact(p);
        bool ok = data::encode_artifact(back) == bytes && back.metadata == art.metadata &&
                  back.tensors.size() == art.tensors.size();
        for (std::size_t t = 0; ok && t < art.tensors.size(); ++t) {
            const auto &x = art.tensors[t], &y = back.tensors[t];
            ok = x.first == y.first && x.second.shape() == y.second.shape() &&
                 std::memcmp(x.second.data().data(), y.second.data().data(), x.second.size() * sizeof(float)) == 0;
        }
        rt_fail += !ok;
    }
    return {failures == 0 && rt_fail == 0 && files > 0,
            fmt("3 workflow steps (%zu files) re-run from echoed config, %zu differ; 200 artifact round trips, %zu "
                "inexact",
                files, failures, rt_fail) +
                detail};
}

// Independent recount, one image at a time with a hand-rolled clip.
Outcome metric_oracles(Lab& lab) {
    if (lab.perturbations.empty()) {
        // Run standalone: use a quick perturbation so the recount still has something to check.
        const auto& m = lab.classifier("cnn-a", 1);
        AttackConfig c = calibrated(kCalibratedEpsilon, 1);
        c.epochs = 2;
        c.mode = AttackMode::Targeted;
        c.target_class = kTargetClass;
        lab.perturbations.emplace_back("quick", lab.attack(m, c).perturbation);
    }
    const zoo::Model& m = lab.classifier("cnn-a", 1);
    Rng rng(314);
    std::size_t checks = 0, mismatches = 0;
    for (const auto& [name, pert] : lab.perturbations) {
        for (std::size_t s = 0; s < kOracleSubsets; ++s) {
            std::vector<std::size_t> idx(lab.test().size());
            std::iota(idx.begin(), idx.end(), 0);
            rng.shuffle(std::span(idx));
            idx.resize(kOracleSubsetSize);
            std::sort(idx.begin(), idx.end());
            const auto sub = lab.test().subset(idx, data::Split::Test);

            std::size_t changed = 0, on_target = 0;
            for (std::size_t i = 0; i < sub.size(); ++i) {
                const Tensor x = sub.batch(i, i + 1);
                Tensor adv = x;
                for (std::size_t k = 0; k < adv.size(); ++k) {
                    adv.data()[k] = std::min(real(1), std::max(real(0), x.data()[k] + pert.r.data()[k]));
                }
                const auto lc = m.predict_logits(x), la = m.predict_logits(adv);
                auto top = [](const Tensor& l) {
                    return int(std::max_element(l.data().begin(), l.data().end()) - l.data().begin());
                };
                changed += top(lc) != top(la);
                on_target += top(la) == kTargetClass;
            }
            const double want_fr = 100.0 * double(changed) / double(sub.size());
            const double want_ta = 100.0 * double(on_target) / double(sub.size());
            mismatches += eval::fooling_rate(m, sub, pert.r) != want_fr;
            mismatches += eval::top1_target_accuracy(m, sub, pert.r, kTargetClass) != want_ta;
            checks += 2;
        }
    }
    return {mismatches == 0, fmt("%zu metric values on %zu-image subsets, %zu mismatches", checks, kOracleSubsetSize,
                                 mismatches)};
}

struct Criterion {
    int id;
    const char* name;
    bool needs_data;
    std::function<Outcome(Lab&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    fs::path work = "acceptance_work";
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else {
            work = a;
        }
    }

    const std::vector<Criterion> criteria{
        {1, "gradient suite", false, gradient_suite},
        {2, "loss algebra", false, loss_algebra},
        {3, "norm projection", false, norm_projection},
        {4, "white-box efficacy", true, white_box},
        {5, "alpha-sweep trend", true, alpha_trend},
        {6, "transferability trend", true, transfer_trend},
        {7, "ssim trend", true, ssim_trend},
        {8, "targeted attack", true, targeted},
        {9, "determinism and persistence", true, determinism},
        {10, "metric oracles", true, metric_oracles},
    };

    Lab lab(work);
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = Clock::now();
        Outcome o;
        if (c.needs_data && !lab.has_data()) {
            o = {false, "MNIST not found under " + lab.root().string()};
        } else {
            try {
                o = c.run(lab);
            } catch (const std::exception& e) {
                o = {false, std::string("exception: ") + e.what()};
            }
        }
        const double secs = std::chrono::duration<double>(Clock::now() - start).count();
        failed += !o.pass;
        std::printf("criterion %2d %s  %s: %s (%.1fs)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
