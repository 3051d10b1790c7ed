#include "uapforge/data/run_config.hpp"

#include <fstream>
#include <set>

#include "uapforge/hash.hpp"

namespace uapforge::data {
namespace {

using nlohmann::json;

std::string_view type_name(const json& v) {
    switch (v.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        default: return "number";
    }
}

/// Reads fields of one JSON object, tracking which keys were consumed so
/// leftovers can be reported as unknown.
class Section {
public:
    Section(const json* obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (obj_ && !obj_->is_object()) throw ConfigError(path_ + ": expected object, got " + std::string(type_name(*obj_)));
    }

    bool present() const { return obj_ != nullptr; }

    const json* field(const std::string& key) {
        seen_.insert(key);
        if (!obj_) return nullptr;
        auto it = obj_->find(key);
        return it == obj_->end() ? nullptr : &*it;
    }

    std::string name(const std::string& key) const { return path_ + "." + key; }

    void string(const std::string& key, std::string& out, bool required = false) {
        const json* v = field(key);
        if (!v) {
            if (required) throw ConfigError(name(key) + ": missing required field");
            return;
        }
        if (!v->is_string()) throw mismatch(key, "string", *v);
        out = v->get<std::string>();
    }

    void number(const std::string& key, double& out) {
        const json* v = field(key);
        if (!v) return;
        if (!v->is_number()) throw mismatch(key, "number", *v);
        out = v->get<double>();
    }

    template <class U>
    void count(const std::string& key, U& out) {
        const json* v = field(key);
        if (!v) return;
        if (!v->is_number_integer() || v->get<std::int64_t>() < 0) throw mismatch(key, "non-negative integer", *v);
        out = static_cast<U>(v->get<std::uint64_t>());
    }

    void finish() const {
        if (!obj_) return;
        for (const auto& [key, _] : obj_->items()) {
            if (!seen_.contains(key)) throw ConfigError(name(key) + ": unknown key");
        }
    }

    ConfigError mismatch(const std::string& key, std::string_view want, const json& got) const {
        return ConfigError(name(key) + ": expected " + std::string(want) + ", got " + std::string(type_name(got)));
    }

private:
    const json* obj_;
    std::string path_;
    std::set<std::string> seen_;
};

const json* child(const json& doc, const char* key) {
    auto it = doc.find(key);
    return it == doc.end() ? nullptr : &*it;
}

template <class Parse>
auto parse_enum(Section& s, const std::string& key, Parse parse, decltype(parse("")) fallback) {
    std::string text;
    s.string(key, text);
    return text.empty() ? fallback : parse(text);
}

std::string_view baseline_name(Baseline b) { return b == Baseline::Random ? "random" : "none"; }

}  // namespace

std::filesystem::path DatasetConfig::resolved_root() const {
    if (!root.empty()) return root;
    return default_data_root() / (format == DatasetFormat::MnistIdx ? "mnist" : "cifar10");
}

nlohmann::json RunConfig::to_json() const {
    json models = json::array();
    for (const auto& m : eval.models) {
        models.push_back({{"arch", m.arch}, {"checkpoint", m.checkpoint}, {"perturbation", m.perturbation}});
    }
    return {
        {"dataset",
         {{"format", to_string(dataset.format)},
          {"root", dataset.root},
          {"classifier_per_class", dataset.classifier_per_class},
          {"uap_train_per_class", dataset.uap_train_per_class},
          {"tune_per_class", dataset.tune_per_class},
          {"test_limit", dataset.test_limit},
          {"split_seed", dataset.split_seed}}},
        {"classifier",
         {{"arch", classifier.arch},
          {"epochs", classifier.epochs},
          {"batch_size", classifier.batch_size},
          {"lr", classifier.lr},
          {"seed", classifier.seed},
          {"checkpoint", classifier.checkpoint}}},
        {"generator", {{"arch", generator.arch}, {"width", generator.width}}},
        {"attack",
         {{"alpha", attack.alpha},
          {"epsilon", attack.epsilon},
          {"norm", to_string(attack.norm)},
          {"mode", to_string(attack.mode)},
          {"target_class", attack.target_class ? json(*attack.target_class) : json(nullptr)},
          {"epochs", attack.epochs},
          {"batch_size", attack.batch_size},
          {"lr", attack.adam.lr},
          {"beta1", attack.adam.beta1},
          {"beta2", attack.adam.beta2},
          {"adam_eps", attack.adam.eps},
          {"seed", attack.seed},
          {"fff_input", to_string(attack.fff_input)}}},
        {"eval",
         {{"perturbation", eval.perturbation},
          {"baseline", baseline_name(eval.baseline)},
          {"baseline_seed", eval.baseline_seed},
          {"models", models},
          {"alphas", eval.alphas},
          {"layers", eval.layers},
          {"ssim_images", eval.ssim_images},
          {"dump_maps", eval.dump_maps},
          {"jobs", eval.jobs}}},
    };
}

std::string RunConfig::hash() const {
    Fnv1a h;
    h.update(to_json().dump());
    return to_hex(h.digest()).substr(0, 8);
}

RunConfig parse_config_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object at the top level");
    for (const auto& [key, _] : doc.items()) {
        static const std::set<std::string> known{"dataset", "classifier", "generator", "attack", "eval"};
        if (!known.contains(key)) throw ConfigError(key + ": unknown key");
    }
    RunConfig cfg;

    const json* ds_node = child(doc, "dataset");
    if (!ds_node) throw ConfigError("dataset: missing required section");
    Section ds(ds_node, "dataset");
    std::string format;
    ds.string("format", format, true);
    try {
        cfg.dataset.format = parse_format(format);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("dataset.format: ") + e.what());
    }
    ds.string("root", cfg.dataset.root);
    ds.count("classifier_per_class", cfg.dataset.classifier_per_class);
    ds.count("uap_train_per_class", cfg.dataset.uap_train_per_class);
    ds.count("tune_per_class", cfg.dataset.tune_per_class);
    ds.count("test_limit", cfg.dataset.test_limit);
    ds.count("split_seed", cfg.dataset.split_seed);
    ds.finish();
    if (cfg.dataset.uap_train_per_class == 0) throw ConfigError("dataset.uap_train_per_class: must be positive");

    const json* cl_node = child(doc, "classifier");
    if (!cl_node) throw ConfigError("classifier: missing required section");
    Section cl(cl_node, "classifier");
    cl.string("arch", cfg.classifier.arch, true);
    cl.count("epochs", cfg.classifier.epochs);
    cl.count("batch_size", cfg.classifier.batch_size);
    cl.number("lr", cfg.classifier.lr);
    cl.count("seed", cfg.classifier.seed);
    cl.string("checkpoint", cfg.classifier.checkpoint);
    cl.finish();
    if (cfg.classifier.batch_size == 0) throw ConfigError("classifier.batch_size: must be positive");
    if (!(cfg.classifier.lr >= 0.0)) throw ConfigError("classifier.lr: must be non-negative");

    Section gen(child(doc, "generator"), "generator");
    gen.string("arch", cfg.generator.arch);
    gen.count("width", cfg.generator.width);
    gen.finish();
    if (cfg.generator.width == 0) throw ConfigError("generator.width: must be positive");

    Section at(child(doc, "attack"), "attack");
    at.number("alpha", cfg.attack.alpha);
    at.number("epsilon", cfg.attack.epsilon);
    if (const json* p = at.field("norm"); p && p->is_number_integer()) {
        cfg.attack.norm = parse_norm(std::to_string(p->get<std::int64_t>()));
    } else if (p) {
        if (!p->is_string()) throw at.mismatch("norm", "\"inf\" or 2", *p);
        cfg.attack.norm = parse_norm(p->get<std::string>());
    }
    cfg.attack.mode = parse_enum(at, "mode", parse_mode, AttackMode::NonTargeted);
    if (const json* t = at.field("target_class"); t && !t->is_null()) {
        if (!t->is_number_integer()) throw at.mismatch("target_class", "integer", *t);
        cfg.attack.target_class = t->get<int>();
    }
    at.count("epochs", cfg.attack.epochs);
    at.count("batch_size", cfg.attack.batch_size);
    at.number("lr", cfg.attack.adam.lr);
    at.number("beta1", cfg.attack.adam.beta1);
    at.number("beta2", cfg.attack.adam.beta2);
    at.number("adam_eps", cfg.attack.adam.eps);
    at.count("seed", cfg.attack.seed);
    cfg.attack.fff_input = parse_enum(at, "fff_input", parse_fff_input, FffInput::Adversarial);
    at.finish();
    cfg.attack.validate(10);

    Section ev(child(doc, "eval"), "eval");
    ev.string("perturbation", cfg.eval.perturbation);
    std::string baseline = "none";
    ev.string("baseline", baseline);
    if (baseline == "random") {
        cfg.eval.baseline = Baseline::Random;
    } else if (baseline != "none") {
        throw ConfigError("eval.baseline: expected \"none\" or \"random\", got \"" + baseline + "\"");
    }
    ev.count("baseline_seed", cfg.eval.baseline_seed);
    if (const json* models = ev.field("models")) {
        if (!models->is_array()) throw ev.mismatch("models", "array", *models);
        for (std::size_t i = 0; i < models->size(); ++i) {
            Section m(&(*models)[i], "eval.models[" + std::to_string(i) + "]");
            ModelEntry entry;
            m.string("arch", entry.arch, true);
            m.string("checkpoint", entry.checkpoint);
            m.string("perturbation", entry.perturbation);
            m.finish();
            cfg.eval.models.push_back(std::move(entry));
        }
    }
    if (const json* alphas = ev.field("alphas")) {
        if (!alphas->is_array()) throw ev.mismatch("alphas", "array", *alphas);
        cfg.eval.alphas.clear();
        for (const auto& a : *alphas) {
            if (!a.is_number()) throw ev.mismatch("alphas", "array of numbers", *alphas);
            const double v = a.get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("eval.alphas: α must lie in [0,1]");
            cfg.eval.alphas.push_back(v);
        }
    }
    ev.count("layers", cfg.eval.layers);
    ev.count("ssim_images", cfg.eval.ssim_images);
    ev.count("dump_maps", cfg.eval.dump_maps);
    ev.count("jobs", cfg.eval.jobs);
    ev.finish();
    if (cfg.eval.layers == 0) throw ConfigError("eval.layers: must be positive");
    if (cfg.eval.jobs == 0) throw ConfigError("eval.jobs: must be positive");
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
    return parse_config_json(doc);
}

void apply_override(nlohmann::json& doc, std::string_view dotted_key, std::string_view value) {
    if (dotted_key.empty()) throw ConfigError("override: empty key");
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = std::string(value);
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted_key.find('.', start);
        const std::string part(dotted_key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        if (part.empty()) throw ConfigError("override: malformed key '" + std::string(dotted_key) + "'");
        if (!node->is_object()) throw ConfigError(std::string(dotted_key) + ": cannot override inside a non-object");
        if (dot == std::string_view::npos) {
            (*node)[part] = std::move(parsed);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

}  // namespace uapforge::data
