#include "uapforge/attack/uap.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "uapforge/eval/metrics.hpp"
#include "uapforge/rng.hpp"
#include "uapforge/zoo/train.hpp"

namespace uapforge::attack {
namespace {

using nlohmann::json;

Shape with_batch(const Shape& chw) {
    Shape s{1};
    s.insert(s.end(), chw.begin(), chw.end());
    return s;
}

void require_frozen(const zoo::Model& model, const char* op) {
    if (!model.frozen()) throw ContractViolation(std::string(op) + ": model " + model.arch_id() + " must be frozen");
}

}  // namespace

GeneratorInput sample_z(std::uint64_t seed, const Shape& chw) {
    if (chw.size() != 3) throw ContractViolation("sample_z: expected C x H x W, got " + shape_str(chw));
    Rng rng(seed);
    Tensor z(chw);
    for (auto& v : z.data()) v = real(rng.uniform());
    return {std::move(z), seed};
}

double norm_of(const Tensor& t, NormType p) {
    double acc = 0;
    if (p == NormType::L2) {
        for (real v : t.data()) acc += double(v) * double(v);
        return std::sqrt(acc);
    }
    for (real v : t.data()) acc = std::max(acc, std::abs(double(v)));
    return acc;
}

Var<real> project_norm(Var<real> raw, NormType p, real eps) {
    if (!(eps > 0)) throw ContractViolation("project_norm: ε must be positive");
    const double bound = double(eps);
    if (!(norm_of(raw.value(), p) > bound)) return raw;

    auto norm = p == NormType::L2 ? ops::l2_norm(raw) : ops::max_abs(raw);
    auto s = ops::scale(ops::reciprocal(norm), eps);
    auto out = ops::scale_by(raw, s);
    // Rounding in the scale can overshoot by an ulp or two; shrink until the
    // bound holds exactly.
    for (int i = 0; i < 16 && norm_of(out.value(), p) > bound; ++i) {
        s = ops::scale(s, real(1) - 4 * std::numeric_limits<real>::epsilon());
        out = ops::scale_by(raw, s);
    }
    return out;
}

Tensor project_norm(const Tensor& raw, NormType p, real eps) {
    Graph<real> g;
    return project_norm(g.constant(raw), p, eps).value();
}

Var<real> apply_perturbation(Var<real> x, Var<real> r) {
    return ops::clamp(ops::add(x, r), real(0), real(1));
}

Tensor apply_perturbation(const Tensor& x, const Tensor& r) {
    if (x.rank() != 4 || r.size() * x.dim(0) != x.size()) {
        throw ContractViolation("apply_perturbation: perturbation " + shape_str(r.shape()) + " does not match batch " +
                                shape_str(x.shape()));
    }
    if (r.rank() == 3 && (r.dim(0) != x.dim(1) || r.dim(1) != x.dim(2) || r.dim(2) != x.dim(3))) {
        throw ContractViolation("apply_perturbation: perturbation " + shape_str(r.shape()) + " does not match batch " +
                                shape_str(x.shape()));
    }
    Tensor out = x;
    const std::size_t per = r.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i] + r[i % per], real(0), real(1));
    return out;
}

void Perturbation::validate() const {
    if (r.empty()) throw ContractViolation("perturbation: empty tensor");
    if (!r.all_finite()) throw ContractViolation("perturbation: non-finite values");
    if (!(epsilon > 0)) throw ContractViolation("perturbation: ε must be positive");
    const double n = norm_of(r, p);
    if (n > double(epsilon) * (1 + 1e-6)) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "perturbation: ‖r‖_%s = %.9g exceeds ε = %.9g", p == NormType::L2 ? "2" : "∞",
                      n, double(epsilon));
        throw ContractViolation(msg);
    }
}

Perturbation Perturbation::zeros(const Shape& chw, NormType p, real epsilon) {
    Perturbation out;
    out.r = Tensor(chw);
    out.p = p;
    out.epsilon = epsilon;
    return out;
}

void save_perturbation(const Perturbation& perturbation, const std::filesystem::path& path) {
    perturbation.validate();
    data::Artifact a;
    a.add("r", data::to_storage(perturbation.r));
    if (!perturbation.z.empty()) a.add("z", data::to_storage(perturbation.z));
    a.metadata = {{"kind", "perturbation"},
                  {"norm", std::string(to_string(perturbation.p))},
                  {"epsilon", double(perturbation.epsilon)},
                  {"info", perturbation.metadata}};
    data::save_artifact(a, path);
}

Perturbation load_perturbation(const std::filesystem::path& path) {
    const auto a = data::load_artifact(path);
    const std::string where = "perturbation " + path.string();
    Perturbation out;
    try {
        if (a.metadata.value("kind", "") != "perturbation") throw DataError(where + ": not a perturbation artifact");
        if (!a.has("r")) throw DataError(where + ": missing tensor r");
        out.r = data::from_storage(a.tensor("r"));
        if (a.has("z")) out.z = data::from_storage(a.tensor("z"));
        out.p = parse_norm(a.metadata.at("norm").get<std::string>());
        out.epsilon = real(a.metadata.at("epsilon").get<double>());
        out.metadata = a.metadata.value("info", json::object());
    } catch (const json::exception& e) {
        throw DataError(where + ": bad metadata: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(where + ": " + e.what());
    }
    try {
        out.validate();
    } catch (const ContractViolation& e) {
        throw DataError(where + ": " + e.what());
    }
    return out;
}

Tensor generate_perturbation(const zoo::Model& generator, const Tensor& z, NormType p, real eps) {
    zoo::Model scratch = generator;  // keeps the caller's BN running statistics untouched
    Graph<real> g;
    auto raw = scratch.forward(g, g.constant(z.reshaped(with_batch(z.shape())))).output;
    return project_norm(raw, p, eps).value().reshaped(z.shape());
}

std::vector<int> predict_perturbed(const zoo::Model& model, const data::Dataset& dataset, const Tensor& r,
                                   std::size_t jobs, std::size_t batch_size) {
    require_frozen(model, "predict_perturbed");
    return zoo::predict(
        model, dataset, [&r](const Tensor& x) { return apply_perturbation(x, r); }, batch_size, jobs);
}

std::vector<int> load_uap_and_attack(const Perturbation& perturbation, const zoo::Model& target, const Tensor& batch) {
    require_frozen(target, "load_uap_and_attack");
    return zoo::argmax_rows(target.predict_logits(apply_perturbation(batch, perturbation.r)));
}

UapResult train_uap(zoo::Model& generator, zoo::Model& source, const data::Dataset& train, const AttackConfig& config,
                    const UapOptions& options) {
    require_frozen(source, "train_uap");
    if (!generator.is_generator()) throw ContractViolation("train_uap: " + generator.arch_id() + " is not a generator");
    if (train.empty()) throw ContractViolation("train_uap: empty training set");
    const Shape chw = train.image_shape().as_shape();
    if (generator.input_shape() != chw || source.input_shape() != chw) {
        throw ContractViolation("train_uap: dataset images " + shape_str(chw) + ", generator " +
                                shape_str(generator.input_shape()) + ", source " + shape_str(source.input_shape()));
    }
    const std::size_t classes = source.num_classes();
    config.validate(classes);

    const real eps = real(internal_epsilon(config, train.image_shape().pixels()));
    const real alpha = real(config.alpha);
    const auto input = sample_z(config.seed, chw);
    const Tensor z4 = input.z.reshaped(with_batch(chw));
    generator.set_mode(zoo::Mode::Training);

    std::vector<Tensor> values;
    for (const auto& p : generator.params()) values.push_back(p.value);
    AdamState<real> adam(config.adam, values);
    values.clear();

    Rng rng(config.seed ^ 0x5eed5eed5eedULL);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto clean = zoo::predict(source, train, 256, options.jobs);
    auto training_fooling_rate = [&] {
        const Tensor r = generate_perturbation(generator, input.z, config.norm, eps);
        return eval::fooling_rate(clean, predict_perturbed(source, train, r, options.jobs));
    };

    // One pass of the objective on a mini-batch; with `update` the generator
    // takes an Adam step.
    auto step = [&](std::span<const std::size_t> idx, bool update, bool inject_fault) {
        std::vector<int> labels;
        labels.reserve(idx.size());
        for (std::size_t i : idx) {
            labels.push_back(config.mode == AttackMode::Targeted ? *config.target_class : train.label(i));
        }
        Graph<real> g;
        const auto gparams = generator.bind(g);
        auto raw = generator.forward(g, gparams, g.constant(z4)).output;
        auto r = project_norm(raw, config.norm, eps);
        auto x_adv = apply_perturbation(g.constant(train.batch(idx)), r);

        const bool from_adv = config.fff_input == FffInput::Adversarial;
        auto fwd = source.forward(g, x_adv, from_adv ? std::set<std::size_t>{1} : std::set<std::size_t>{});
        auto ce = loss::cross_entropy_logits(fwd.output, loss::one_hot<real>(labels, classes));
        auto tap = from_adv ? fwd.taps.at(1) : source.forward(g, r, {1}).taps.at(1);
        auto fff = loss::fff_layer_loss(ops::channel_mean(tap));
        auto combined = loss::combined_loss(ce, fff, alpha, config.mode);

        const real ce_v = ce.value().item(), fff_v = fff.value().item();
        auto breakdown = config.mode == AttackMode::NonTargeted
                             ? loss::nontargeted_loss(ce_v, fff_v, alpha)
                             : loss::targeted_loss(ce_v, fff_v, alpha, *config.target_class, classes);
        const real value = inject_fault ? std::numeric_limits<real>::quiet_NaN() : combined.value().item();
        if (!std::isfinite(value)) throw NumericFailure("train_uap: non-finite loss");
        if (!bit_identical(Tensor::scalar(value), Tensor::scalar(breakdown.combined))) {
            throw NumericFailure("train_uap: recorded loss disagrees with its components");
        }
        if (alpha == real(1)) {
            const real pure = config.mode == AttackMode::NonTargeted ? -ce_v : ce_v;
            if (value != pure) throw NumericFailure("train_uap: α = 1 loss differs from the cross-entropy term");
        }
        if (update) {
            g.backward(combined);
            std::vector<Tensor> grads;
            grads.reserve(gparams.size());
            for (const auto& p : gparams) grads.push_back(p.grad());
            generator.apply_adam(grads, adam);
        }
        return breakdown;
    };

    UapResult result;
    auto& history = result.history;
    auto batches_of = [&](auto&& fn) {
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            fn(std::span<const std::size_t>(order.data() + begin, end - begin));
        }
    };
    auto record = [&](std::size_t epoch, double loss_sum, double ce_sum, double fff_sum, std::size_t n) {
        history.epochs.push_back({.epoch = epoch,
                                  .loss = loss_sum / double(n),
                                  .ce = ce_sum / double(n),
                                  .fff_1 = fff_sum / double(n),
                                  .fooling_rate = training_fooling_rate()});
    };

    {
        double l = 0, c = 0, f = 0;
        std::size_t n = 0;
        zoo::Model before = generator;  // evaluation still moves the BN running statistics
        batches_of([&](std::span<const std::size_t> idx) {
            const auto b = step(idx, false, false);
            l += b.combined, c += b.ce, f += b.fff_1, ++n;
        });
        generator = std::move(before);
        record(0, l, c, f, n);
    }

    std::size_t step_no = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs && !history.aborted; ++epoch) {
        rng.shuffle(std::span(order));
        double l = 0, c = 0, f = 0;
        std::size_t n = 0;
        batches_of([&](std::span<const std::size_t> idx) {
            if (history.aborted) return;
            ++step_no;
            zoo::Model good = generator;
            const AdamState<real> good_adam = adam;
            try {
                const auto b = step(idx, true, options.fault_step && *options.fault_step == step_no);
                history.steps.push_back(b);
                l += b.combined, c += b.ce, f += b.fff_1, ++n;
            } catch (const NumericFailure& e) {
                generator = std::move(good);
                adam = good_adam;
                history.aborted = true;
                history.abort_reason = "step " + std::to_string(step_no) + ": " + e.what();
            }
        });
        if (n > 0) record(epoch, l, c, f, n);
    }

    auto& out = result.perturbation;
    out.r = generate_perturbation(generator, input.z, config.norm, eps);
    out.p = config.norm;
    out.epsilon = eps;
    out.z = input.z;
    out.metadata = {{"kind", "uap"},
                    {"source_arch", source.arch_id()},
                    {"alpha", config.alpha},
                    {"epsilon_255", config.epsilon},
                    {"norm", std::string(to_string(config.norm))},
                    {"mode", std::string(to_string(config.mode))},
                    {"seed", config.seed},
                    {"epochs", config.epochs},
                    {"fff_input", std::string(to_string(config.fff_input))},
                    {"dataset_fingerprint", train.fingerprint_hex()},
                    {"train_images", train.size()},
                    {"aborted", history.aborted}};
    if (config.mode == AttackMode::Targeted) out.metadata["target_class"] = *config.target_class;
    if (config.alpha == 0) out.metadata["variant"] = "pure-fff";
    out.validate();
    return result;
}

std::string history_csv(const UapHistory& history) {
    std::string out = "epoch,loss,ce,fff_1,fooling_rate\n";
    char line[160];
    for (const auto& e : history.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.2f\n", e.epoch, e.loss, e.ce, e.fff_1, e.fooling_rate);
        out += line;
    }
    if (history.aborted) out += "# aborted: " + history.abort_reason + "\n";
    return out;
}

}  // namespace uapforge::attack
