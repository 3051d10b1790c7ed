#include "uapforge/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "uapforge/attack/uap.hpp"
#include "uapforge/data/run_config.hpp"
#include "uapforge/hash.hpp"
#include "uapforge/eval/report.hpp"
#include "uapforge/similarity/similarity.hpp"
#include "uapforge/tensor/gradcheck.hpp"
#include "uapforge/zoo/train.hpp"

namespace uapforge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Invocation {
    std::string command;
    std::string config_path;
    fs::path out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<int> targeted;
    std::optional<double> alpha;
    std::optional<std::size_t> epochs;
    std::string baseline;
    std::string alpha_sweep;
    std::vector<std::string> extras;
    // Hidden test hooks.
    bool inject_fault = false;
    std::optional<std::size_t> fault_step;
};

struct Context {
    Invocation inv;
    data::RunConfig cfg;
    std::string hash;
    std::ostream& out;
    std::ostream& err;

    fs::path file(std::string_view stem, eval::ReportFormat f) const {
        return inv.out / eval::report_file_name(stem, run_seed(), hash, f);
    }
    std::uint64_t run_seed() const { return inv.command == "train-classifier" ? cfg.classifier.seed : cfg.attack.seed; }
    eval::EvalOptions eval_options() const { return {.jobs = cfg.eval.jobs, .batch_size = 256}; }
};

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// "--a.b value" and "--a.b=value" pairs left over after the named flags.
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + tok + "'");
        std::string key = tok.substr(2), value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key.resize(eq);
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("--" + key + ": missing value");
            value = extras[++i];
        }
        if (key.find('.') == std::string::npos) throw ConfigError("unknown option --" + key);
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

data::RunConfig effective_config(const Invocation& inv) {
    std::ifstream in(inv.config_path);
    if (!in) throw ConfigError("cannot open config " + inv.config_path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(inv.config_path + ": invalid JSON");

    if (inv.seed) {
        data::apply_override(doc, "classifier.seed", std::to_string(*inv.seed));
        data::apply_override(doc, "attack.seed", std::to_string(*inv.seed));
    }
    if (inv.jobs) data::apply_override(doc, "eval.jobs", std::to_string(*inv.jobs));
    if (inv.alpha) doc["attack"]["alpha"] = *inv.alpha;
    if (inv.targeted) {
        doc["attack"]["mode"] = "targeted";
        doc["attack"]["target_class"] = *inv.targeted;
    }
    if (inv.epochs) doc[inv.command == "train-classifier" ? "classifier" : "attack"]["epochs"] = *inv.epochs;
    if (!inv.baseline.empty()) doc["eval"]["baseline"] = inv.baseline;
    // Dotted overrides come last so they win over everything else.
    for (const auto& [k, v] : dotted_overrides(inv.extras)) data::apply_override(doc, k, v);
    return data::parse_config_json(doc);
}

data::Dataset load_split(const data::RunConfig& cfg, data::Split split) {
    return data::load_dataset(cfg.dataset.resolved_root(), cfg.dataset.format, split);
}

data::Dataset test_split(const data::RunConfig& cfg) {
    auto test = load_split(cfg, data::Split::Test);
    const std::size_t limit = cfg.dataset.test_limit;
    if (limit == 0 || limit >= test.size()) return test;
    std::vector<std::size_t> idx(limit);
    for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
    return test.subset(idx, data::Split::Test);
}

zoo::Model load_frozen(const std::string& path, const char* field) {
    if (path.empty()) throw ConfigError(std::string(field) + ": checkpoint path required");
    if (!fs::exists(path)) throw DataError(std::string(field) + ": no such checkpoint " + path);
    zoo::Model m = zoo::load_model(path);
    m.freeze();
    return m;
}

void write_reports(const Context& c, std::string_view stem, const std::string& csv, const json& doc) {
    eval::emit_report(csv, c.file(stem, eval::ReportFormat::Csv));
    eval::emit_report(eval::render_json(doc), c.file(stem, eval::ReportFormat::Json));
}

int cmd_train_classifier(Context& c) {
    const auto& cc = c.cfg.classifier;
    const auto full = load_split(c.cfg, data::Split::Train);
    data::Dataset train = full;
    if (c.cfg.dataset.classifier_per_class > 0) {
        train = full.subset(data::balanced_indices(full, c.cfg.dataset.classifier_per_class, c.cfg.dataset.split_seed),
                            data::Split::Train);
    }
    const auto heldout = test_split(c.cfg);
    zoo::Model model = zoo::build_classifier(cc.arch, train.image_shape().as_shape(), train.num_classes(), cc.seed);
    const auto report = zoo::train_classifier(
        model, train, &heldout, {.epochs = cc.epochs, .batch_size = cc.batch_size, .lr = cc.lr, .seed = cc.seed});
    model.freeze();

    const fs::path ckpt = c.inv.out / (cc.arch + "-s" + std::to_string(cc.seed) + ".ckpt");
    zoo::save_model(model, ckpt,
                    {{"seed", cc.seed},
                     {"config_hash", c.hash},
                     {"dataset_fingerprint", train.fingerprint_hex()},
                     {"epochs", cc.epochs}});
    json doc = {{"arch", cc.arch}, {"checkpoint", ckpt.filename().string()}, {"checksum", to_hex(report.checksum)}};
    json epochs = json::array();
    for (const auto& e : report.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", eval::round_loss(e.train_loss)},
                          {"train_accuracy", eval::round_percent(e.train_accuracy)},
                          {"heldout_accuracy", eval::round_percent(e.heldout_accuracy)}});
    }
    doc["epochs"] = epochs;
    write_reports(c, "train-classifier", zoo::train_report_csv(report), doc);
    const double acc = report.epochs.empty() ? zoo::accuracy(model, heldout, c.cfg.eval.jobs)
                                             : report.epochs.back().heldout_accuracy;
    c.out << "checkpoint=" << ckpt.string() << " heldout_accuracy=" << pct(acc) << "% n=" << heldout.size() << "\n";
    return kOk;
}

int cmd_train_uap(Context& c) {
    zoo::Model source = load_frozen(c.cfg.classifier.checkpoint, "classifier.checkpoint");
    const auto full = load_split(c.cfg, data::Split::Train);
    const auto splits = data::make_attack_splits(full, c.cfg.dataset.uap_train_per_class, c.cfg.dataset.tune_per_class,
                                                 c.cfg.dataset.split_seed);
    zoo::Model gen = zoo::build_generator(full.image_shape().as_shape(), c.cfg.generator.width, c.cfg.attack.seed);
    const auto res = attack::train_uap(gen, source, splits.train, c.cfg.attack,
                                       {.jobs = c.cfg.eval.jobs, .fault_step = c.inv.fault_step});
    write_reports(c, "history", attack::history_csv(res.history), [&] {
        json rows = json::array();
        for (const auto& e : res.history.epochs) {
            rows.push_back({{"epoch", e.epoch},
                            {"loss", eval::round_loss(e.loss)},
                            {"ce", eval::round_loss(e.ce)},
                            {"fff_1", eval::round_loss(e.fff_1)},
                            {"fooling_rate", eval::round_percent(e.fooling_rate)}});
        }
        return json{{"epochs", rows}, {"aborted", res.history.aborted}, {"abort_reason", res.history.abort_reason}};
    }());
    auto p = res.perturbation;
    p.metadata["config_hash"] = c.hash;
    const fs::path file = c.inv.out / ("uap-" + source.arch_id() + "-s" + std::to_string(c.cfg.attack.seed) + ".uapt");
    attack::save_perturbation(p, file);
    if (res.history.aborted) {
        c.err << "train-uap: aborted at " << res.history.abort_reason << "; last good perturbation saved to "
              << file.string() << "\n";
        return kNumericFailure;
    }
    c.out << "perturbation=" << file.string() << " fooling_rate=" << pct(res.history.epochs.back().fooling_rate)
          << "% n=" << splits.train.size() << "\n";
    return kOk;
}

int cmd_eval(Context& c) {
    const zoo::Model target = load_frozen(c.cfg.classifier.checkpoint, "classifier.checkpoint");
    if (c.cfg.eval.perturbation.empty()) throw ConfigError("eval.perturbation: path required");
    const auto p = attack::load_perturbation(c.cfg.eval.perturbation);
    const auto test = test_split(c.cfg);
    std::optional<attack::Perturbation> base;
    if (c.cfg.eval.baseline == data::Baseline::Random) {
        base = eval::random_noise_baseline(p.p, p.epsilon, c.cfg.eval.baseline_seed, p.r.shape());
    }
    const auto rep = eval::evaluate(target, test, p, base ? &*base : nullptr, c.eval_options());
    write_reports(c, "eval", eval::to_csv(rep), eval::to_json(rep));
    c.out << "fooling_rate=" << pct(rep.fooling_rate) << "% n=" << rep.n_images;
    if (rep.baseline_fooling_rate) c.out << " baseline_fooling_rate=" << pct(*rep.baseline_fooling_rate) << "%";
    if (rep.target_accuracy) c.out << " target_accuracy=" << pct(*rep.target_accuracy) << "%";
    c.out << "\n";
    return kOk;
}

void require_models(const data::RunConfig& cfg, bool need_perturbations, std::size_t at_least) {
    const auto& models = cfg.eval.models;
    if (models.size() < at_least) {
        throw ConfigError("eval.models: need at least " + std::to_string(at_least) + " entries");
    }
    std::string missing;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto& m = models[i];
        auto check = [&](const std::string& path, const char* what) {
            if (path.empty() || !fs::exists(path)) {
                missing += "\n  eval.models[" + std::to_string(i) + "]." + what + ": " + (path.empty() ? "(unset)" : path);
            }
        };
        check(m.checkpoint, "checkpoint");
        if (need_perturbations) check(m.perturbation, "perturbation");
    }
    if (!missing.empty()) throw DataError("missing artifacts:" + missing);
}

std::vector<zoo::Model> load_models(const data::RunConfig& cfg) {
    std::vector<zoo::Model> out;
    for (const auto& m : cfg.eval.models) {
        out.push_back(load_frozen(m.checkpoint, "eval.models.checkpoint"));
        if (!m.arch.empty() && out.back().arch_id() != m.arch) {
            throw ConfigError("eval.models: checkpoint " + m.checkpoint + " holds " + out.back().arch_id() + ", not " +
                              m.arch);
        }
    }
    return out;
}

int cmd_transfer_matrix(Context& c) {
    require_models(c.cfg, true, 2);
    const auto models = load_models(c.cfg);
    std::vector<attack::Perturbation> perts;
    for (const auto& m : c.cfg.eval.models) perts.push_back(attack::load_perturbation(m.perturbation));
    std::vector<const zoo::Model*> mp;
    std::vector<const attack::Perturbation*> pp;
    for (std::size_t i = 0; i < models.size(); ++i) mp.push_back(&models[i]), pp.push_back(&perts[i]);
    const auto test = test_split(c.cfg);
    const auto m = eval::transferability_matrix(mp, pp, test, c.eval_options());
    write_reports(c, "transfer-matrix", eval::to_csv(m), eval::to_json(m));
    c.out << eval::to_csv(m);
    return kOk;
}

int cmd_ssim_analysis(Context& c) {
    require_models(c.cfg, false, 2);
    const auto models = load_models(c.cfg);
    std::vector<const zoo::Model*> comparisons;
    for (std::size_t i = 1; i < models.size(); ++i) comparisons.push_back(&models[i]);
    std::vector<std::size_t> layers;
    for (std::size_t l = 1; l <= c.cfg.eval.layers; ++l) layers.push_back(l);
    const auto test = test_split(c.cfg);
    const auto report = similarity::layer_similarity_table(
        models[0], comparisons, test, layers,
        {.max_images = c.cfg.eval.ssim_images, .jobs = c.cfg.eval.jobs, .batch_size = 32, .ssim = {}});
    write_reports(c, "ssim", similarity::similarity_csv(report), similarity::similarity_json(report));

    const std::size_t dumps = std::min(c.cfg.eval.dump_maps, test.size());
    if (dumps > 0) {
        const fs::path dir = c.inv.out / "maps";
        fs::create_directories(dir);
        const std::set<std::size_t> taps(layers.begin(), layers.end());
        for (std::size_t mi = 0; mi < models.size(); ++mi) {
            const auto& m = models[mi];
            const auto acts = m.inference_taps(test.batch(0, dumps), taps);
            for (std::size_t i = 0; i < dumps; ++i) {
                for (std::size_t l : layers) {
                    const Tensor& a = acts.at(l);
                    const std::size_t per = a.size() / a.dim(0);
                    Tensor one(Shape(a.shape().begin() + 1, a.shape().end()),
                               std::vector<real>(a.data().begin() + std::ptrdiff_t(i * per),
                                                 a.data().begin() + std::ptrdiff_t((i + 1) * per)));
                    similarity::write_pgm(similarity::mean_feature_map(one),
                                          dir / ("m" + std::to_string(mi) + "-" + m.arch_id() + "-img" + std::to_string(i) + "-l" + std::to_string(l) +
                                                 ".pgm"));
                }
            }
        }
    }
    c.out << similarity::similarity_csv(report);
    return kOk;
}

int cmd_alpha_sweep(Context& c) {
    const zoo::Model source = load_frozen(c.cfg.classifier.checkpoint, "classifier.checkpoint");
    const auto full = load_split(c.cfg, data::Split::Train);
    const auto splits = data::make_attack_splits(full, c.cfg.dataset.uap_train_per_class, c.cfg.dataset.tune_per_class,
                                                 c.cfg.dataset.split_seed);
    const zoo::Model gen = zoo::build_generator(full.image_shape().as_shape(), c.cfg.generator.width, c.cfg.attack.seed);
    const auto table =
        eval::alpha_sweep(gen, source, splits.train, splits.tune, c.cfg.eval.alphas, c.cfg.attack, c.eval_options());
    write_reports(c, "alpha-sweep", eval::to_csv(table), eval::to_json(table));
    c.out << eval::to_csv(table);
    return kOk;
}

int cmd_gradcheck(Context& c) {
    const auto reports = run_gradcheck_suite(c.inv.seed.value_or(0), {}, c.inv.inject_fault);
    bool ok = true;
    for (const auto& r : reports) {
        char line[256];
        std::snprintf(line, sizeof line, "%-20s %s max_rel_error=%.3e points=%zu%s%s\n", r.op.c_str(),
                      r.passed ? "PASS" : "FAIL", r.max_rel_error, r.points, r.note.empty() ? "" : " ", r.note.c_str());
        c.out << line;
        ok = ok && r.passed;
    }
    c.out << (ok ? "gradcheck: all " : "gradcheck: failures among ") << reports.size() << " ops\n";
    return ok ? kOk : kCheckFailed;
}

const std::map<std::string, int (*)(Context&)>& commands() {
    static const std::map<std::string, int (*)(Context&)> table{
        {"train-classifier", cmd_train_classifier}, {"train-uap", cmd_train_uap},
        {"eval", cmd_eval},                         {"transfer-matrix", cmd_transfer_matrix},
        {"ssim-analysis", cmd_ssim_analysis},       {"alpha-sweep", cmd_alpha_sweep},
        {"gradcheck", cmd_gradcheck},
    };
    return table;
}

const std::map<std::string, std::string>& summaries() {
    static const std::map<std::string, std::string> table{
        {"train-classifier", "Train a classifier from scratch and save a checkpoint"},
        {"train-uap", "Train a perturbation generator against a frozen source classifier"},
        {"eval", "Fooling rate of a saved perturbation on a target classifier"},
        {"transfer-matrix", "Cross-model fooling rates for every source/target pair"},
        {"ssim-analysis", "Per-layer SSIM of mean feature maps between architectures"},
        {"alpha-sweep", "Train one generator per alpha and score each on the tuning split"},
        {"gradcheck", "Finite-difference check of every differentiable op"},
    };
    return table;
}

int dispatch(Invocation inv, std::ostream& out, std::ostream& err) {
    if (!inv.alpha_sweep.empty() && inv.alpha_sweep != "off") {
        throw ConfigError("--alpha-sweep: only 'off' is accepted here; use the alpha-sweep subcommand");
    }
    Context c{std::move(inv), {}, {}, out, err};
    if (c.inv.command != "gradcheck") {
        if (c.inv.config_path.empty()) throw ConfigError("--config is required for " + c.inv.command);
        c.cfg = effective_config(c.inv);
        c.hash = c.cfg.hash();
        fs::create_directories(c.inv.out);
        eval::emit_report(eval::render_json(c.cfg.to_json()), c.inv.out / "config.json");
    }
    return commands().at(c.inv.command)(c);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Generator-based universal adversarial perturbations", "uapforge"};
    app.require_subcommand(1);
    Invocation inv;
    std::string seed_text, jobs_text;

    for (const auto& [name, _] : commands()) {
        CLI::App* sub = app.add_subcommand(name, summaries().at(name));
        sub->allow_extras();
        sub->add_option("--config", inv.config_path, "Run configuration (JSON)");
        sub->add_option("--out", inv.out, "Output directory");
        sub->add_option("--seed", inv.seed, "Seed for the classifier and attack");
        sub->add_option("--jobs", inv.jobs, "Threads for evaluation batches");
        if (name == "train-classifier" || name == "train-uap") {
            sub->add_option("--epochs", inv.epochs, "Training epochs");
        }
        if (name == "train-uap" || name == "alpha-sweep") {
            sub->add_option("--alpha", inv.alpha, "Cross-entropy weight α");
            sub->add_option("--targeted", inv.targeted, "Target class for a targeted attack");
        }
        if (name == "train-uap") {
            sub->add_option("--alpha-sweep", inv.alpha_sweep, "off")->check(CLI::IsMember({"off", "on"}));
            sub->add_option("--fault-step", inv.fault_step)->group("");
        }
        if (name == "eval") sub->add_option("--baseline", inv.baseline, "none | random");
        if (name == "gradcheck") sub->add_flag("--inject-fault", inv.inject_fault)->group("");
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "uapforge: " << e.what() << "\n";
        return kConfigError;
    }
    for (const auto* sub : app.get_subcommands()) {
        inv.command = sub->get_name();
        inv.extras = sub->remaining();
    }

    try {
        return dispatch(std::move(inv), out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ContractViolation& e) {
        err << "invalid input: " << e.what() << "\n";
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const NumericFailure& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumericFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
}

}  // namespace uapforge::cli
