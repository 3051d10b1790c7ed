#include "uapforge/eval/harness.hpp"

#include "uapforge/rng.hpp"
#include "uapforge/zoo/train.hpp"

namespace uapforge::eval {
namespace {

void require_frozen(const zoo::Model& model, const char* op) {
    if (!model.frozen()) throw ContractViolation(std::string(op) + ": model " + model.arch_id() + " must be frozen");
}

void require_shape(const Tensor& r, const data::Dataset& dataset, const char* op) {
    if (r.shape() != dataset.image_shape().as_shape()) {
        throw ContractViolation(std::string(op) + ": perturbation " + shape_str(r.shape()) + " does not fit images " +
                                shape_str(dataset.image_shape().as_shape()));
    }
}

std::vector<int> perturbed(const zoo::Model& target, const data::Dataset& dataset, const Tensor& r,
                           const EvalOptions& o) {
    return attack::predict_perturbed(target, dataset, r, o.jobs, o.batch_size);
}

}  // namespace

double fooling_rate(const zoo::Model& target, const data::Dataset& dataset, const Tensor& r,
                    const EvalOptions& options) {
    require_frozen(target, "fooling_rate");
    require_shape(r, dataset, "fooling_rate");
    const auto clean = zoo::predict(target, dataset, options.batch_size, options.jobs);
    return fooling_rate(clean, perturbed(target, dataset, r, options));
}

double top1_target_accuracy(const zoo::Model& target, const data::Dataset& dataset, const Tensor& r, int target_class,
                            const EvalOptions& options) {
    require_frozen(target, "top1_target_accuracy");
    require_shape(r, dataset, "top1_target_accuracy");
    if (target_class < 0 || std::size_t(target_class) >= target.num_classes()) {
        throw ContractViolation("top1_target_accuracy: target class " + std::to_string(target_class) +
                                " out of range");
    }
    return top1_target_accuracy(perturbed(target, dataset, r, options), target_class, target.num_classes());
}

FoolingReport evaluate(const zoo::Model& target, const data::Dataset& dataset, const attack::Perturbation& perturbation,
                       const attack::Perturbation* baseline, const EvalOptions& options) {
    require_frozen(target, "evaluate");
    if (dataset.empty()) throw ContractViolation("evaluate: empty dataset");
    perturbation.validate();
    require_shape(perturbation.r, dataset, "evaluate");

    FoolingReport rep;
    rep.target_arch = target.arch_id();
    rep.perturbation = perturbation.metadata;
    rep.n_images = dataset.size();
    const auto clean = zoo::predict(target, dataset, options.batch_size, options.jobs);
    const auto adv = perturbed(target, dataset, perturbation.r, options);
    const auto labels = dataset.labels();
    rep.fooling_rate = fooling_rate(clean, adv);
    rep.clean_accuracy = accuracy(clean, labels);
    rep.adversarial_accuracy = accuracy(adv, labels);
    for (std::size_t i = 0; i < adv.size(); ++i) {
        if (adv[i] == labels[i]) {
            ++rep.adv_correct;
        } else if (adv[i] != clean[i]) {
            ++rep.changed_to_wrong;
        } else {
            ++rep.stayed_wrong;
        }
    }
    if (rep.adv_correct + rep.changed_to_wrong + rep.stayed_wrong != rep.n_images) {
        throw ContractViolation("evaluate: outcome counts do not cover the dataset");
    }
    if (baseline) {
        baseline->validate();
        require_shape(baseline->r, dataset, "evaluate");
        rep.baseline_fooling_rate = fooling_rate(clean, perturbed(target, dataset, baseline->r, options));
    }
    if (perturbation.metadata.value("mode", "") == "targeted" && perturbation.metadata.contains("target_class")) {
        const int m = perturbation.metadata.at("target_class").get<int>();
        if (m < 0 || std::size_t(m) >= target.num_classes()) {
            throw ContractViolation("evaluate: target class " + std::to_string(m) + " out of range");
        }
        rep.target_class = m;
        rep.target_accuracy = top1_target_accuracy(adv, m, target.num_classes());
    }
    return rep;
}

attack::Perturbation random_noise_baseline(NormType p, real epsilon, std::uint64_t seed, const Shape& chw) {
    if (!(epsilon > 0)) throw ContractViolation("random_noise_baseline: ε must be positive");
    Rng rng(seed);
    Tensor noise(chw);
    for (real& v : noise.data()) v = real(rng.uniform(-1, 1));
    auto out = attack::Perturbation::zeros(chw, p, epsilon);
    out.r = attack::project_norm(noise, p, epsilon);
    out.metadata = {{"kind", "random-baseline"}, {"seed", seed}, {"norm", std::string(to_string(p))}};
    return out;
}

double off_diagonal_mean(std::span<const double> row, std::size_t diagonal) {
    if (row.size() < 2 || diagonal >= row.size()) {
        throw ContractViolation("off_diagonal_mean: need at least two entries and a valid diagonal");
    }
    double total = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i != diagonal) total += row[i];
    }
    return total / double(row.size() - 1);
}

TransferabilityMatrix transferability_matrix(const std::vector<const zoo::Model*>& models,
                                             const std::vector<const attack::Perturbation*>& perturbations,
                                             const data::Dataset& dataset, const EvalOptions& options) {
    if (models.size() < 2) throw ContractViolation("transferability_matrix: need at least two models");
    std::string missing;
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (i >= perturbations.size() || perturbations[i] == nullptr) {
            missing += (missing.empty() ? "" : ", ") + models[i]->arch_id();
        }
    }
    if (!missing.empty()) throw ContractViolation("transferability_matrix: missing perturbation for " + missing);
    if (perturbations.size() != models.size()) {
        throw ContractViolation("transferability_matrix: more perturbations than models");
    }
    for (const auto* p : perturbations) {
        p->validate();
        require_shape(p->r, dataset, "transferability_matrix");
        if (p->p != perturbations[0]->p || p->epsilon != perturbations[0]->epsilon) {
            throw ContractViolation("transferability_matrix: perturbations differ in norm or ε");
        }
    }
    for (const auto* m : models) require_frozen(*m, "transferability_matrix");

    TransferabilityMatrix out;
    const std::size_t n = models.size();
    out.rates.assign(n, std::vector<double>(n));
    std::vector<std::vector<int>> clean;
    for (const auto* m : models) {
        out.archs.push_back(m->arch_id());
        clean.push_back(zoo::predict(*m, dataset, options.batch_size, options.jobs));
    }
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = 0; t < n; ++t) {
            out.rates[s][t] = fooling_rate(clean[t], perturbed(*models[t], dataset, perturbations[s]->r, options));
        }
        out.avg_plus.push_back(off_diagonal_mean(out.rates[s], s));
    }
    return out;
}

AlphaSweepTable alpha_sweep(const zoo::Model& generator, const zoo::Model& source, const data::Dataset& train,
                            const data::Dataset& tune, std::span<const double> alphas, const AttackConfig& config,
                            const EvalOptions& options) {
    if (alphas.empty()) throw ContractViolation("alpha_sweep: no α values");
    if (tune.empty()) throw ContractViolation("alpha_sweep: empty tuning split");
    if (!data::disjoint(train, tune)) throw ContractViolation("alpha_sweep: training and tuning splits overlap");
    require_frozen(source, "alpha_sweep");

    AlphaSweepTable table;
    table.source_arch = source.arch_id();
    for (double a : alphas) {
        AttackConfig cfg = config;
        cfg.alpha = a;
        cfg.validate(source.num_classes());
        zoo::Model g = generator;
        zoo::Model s = source;
        const auto res = attack::train_uap(g, s, train, cfg, {.jobs = options.jobs, .fault_step = std::nullopt});
        AlphaSweepRow row{.alpha = a,
                          .fooling_rate = fooling_rate(source, tune, res.perturbation.r, options),
                          .train_fooling_rate = res.history.epochs.back().fooling_rate,
                          .final_loss = res.history.epochs.back().loss,
                          .aborted = res.history.aborted};
        table.rows.push_back(row);
        if (row.fooling_rate > table.rows[table.best].fooling_rate) table.best = table.rows.size() - 1;
    }
    return table;
}

}  // namespace uapforge::eval
