#include "uapforge/zoo/model.hpp"

#include <cmath>

#include "uapforge/hash.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::zoo {
namespace {

using nlohmann::json;

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
               bool bias) {
    return {.kind = LayerKind::Conv, .name = std::move(name), .in = in, .out = out, .kernel = k, .stride = stride,
            .padding = pad, .bias = bias};
}

LayerSpec conv_t(std::string name, std::size_t in, std::size_t out, bool bias) {
    return {.kind = LayerKind::ConvTranspose, .name = std::move(name), .in = in, .out = out, .kernel = 4,
            .stride = 2, .padding = 1, .bias = bias};
}

LayerSpec bn(std::string name, std::size_t channels) {
    return {.kind = LayerKind::BatchNorm, .name = std::move(name), .in = channels, .out = channels};
}

LayerSpec relu(std::string name) { return {.kind = LayerKind::Relu, .name = std::move(name)}; }

LayerSpec pool(std::string name) {
    return {.kind = LayerKind::MaxPool, .name = std::move(name), .kernel = 2, .stride = 2};
}

LayerSpec linear(std::string name, std::size_t in, std::size_t out) {
    return {.kind = LayerKind::Linear, .name = std::move(name), .in = in, .out = out, .bias = true};
}

LayerSpec residual(std::string name, std::size_t in, std::size_t out, std::size_t stride, bool post_relu) {
    return {.kind = LayerKind::Residual, .name = std::move(name), .in = in, .out = out, .kernel = 3,
            .stride = stride, .padding = 1, .post_relu = post_relu};
}

bool has_shortcut(const LayerSpec& s) { return s.in != s.out || s.stride != 1; }

std::size_t conv_out(std::size_t size, std::size_t k, std::size_t stride, std::size_t pad) {
    return (size + 2 * pad - k) / stride + 1;
}

// Plain VGG-style stack: `blocks` of two 3x3 convs, pooling after the listed blocks.
std::vector<LayerSpec> vgg_recipe(const Shape& in, std::size_t num_classes, const std::vector<std::size_t>& widths,
                                  const std::set<std::size_t>& pool_after) {
    std::vector<LayerSpec> layers;
    std::size_t c = in[0], h = in[1], w = in[2];
    for (std::size_t b = 0; b < widths.size(); ++b) {
        for (std::size_t k = 1; k <= 2; ++k) {
            const std::string tag = std::to_string(b + 1) + "_" + std::to_string(k);
            layers.push_back(conv("conv" + tag, c, widths[b], 3, 1, 1, true));
            layers.push_back(relu("relu" + tag));
            c = widths[b];
        }
        if (pool_after.contains(b + 1)) {
            if (h < 2 || w < 2) throw ContractViolation("build_classifier: input too small for the pooling schedule");
            layers.push_back(pool("pool" + std::to_string(b + 1)));
            h /= 2;
            w /= 2;
        }
    }
    layers.push_back({.kind = LayerKind::Flatten, .name = "flatten"});
    layers.push_back(linear("fc1", c * h * w, 64));
    layers.push_back(relu("relu_fc1"));
    layers.push_back(linear("fc2", 64, num_classes));
    return layers;
}

std::vector<LayerSpec> resnet_recipe(const Shape& in, std::size_t num_classes,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& blocks) {
    std::vector<LayerSpec> layers;
    layers.push_back(conv("stem", in[0], 8, 3, 1, 1, false));
    layers.push_back(bn("stem_bn", 8));
    layers.push_back(relu("stem_relu"));
    std::size_t c = 8, h = in[1], w = in[2];
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto [width, stride] = blocks[i];
        layers.push_back(residual("block" + std::to_string(i + 1), c, width, stride, true));
        c = width;
        h = conv_out(h, 3, stride, 1);
        w = conv_out(w, 3, stride, 1);
    }
    layers.push_back({.kind = LayerKind::GlobalAvgPool, .name = "gap"});
    layers.push_back(linear("fc", c, num_classes));
    return layers;
}

}  // namespace

const std::vector<ArchEntry>& catalog() {
    static const std::vector<ArchEntry> entries{
        {"cnn-a", Family::VggLike, DepthClass::Shallow,
         "4 blocks of 2 conv3x3+relu, widths 8/16/32/32, maxpool after each block; fc 64, fc M"},
        {"cnn-b", Family::VggLike, DepthClass::Deep,
         "6 blocks of 2 conv3x3+relu, widths 8/8/16/16/32/32, maxpool after blocks 2, 4, 5, 6; fc 64, fc M"},
        {"res-a", Family::ResnetLike, DepthClass::Shallow,
         "stem conv3x3 8 + bn + relu; 4 basic blocks 8, 16/s2, 32/s2, 32/s2; global average pool; fc M"},
        {"res-b", Family::ResnetLike, DepthClass::Deep,
         "stem conv3x3 8 + bn + relu; 10 basic blocks 3x8, 3x16 (first s2), 4x32 (first s2); global average pool; "
         "fc M"},
        {"gen-r4", Family::Generator, DepthClass::Shallow,
         "conv3x3/s2 w + bn + relu, conv3x3/s2 2w + bn + relu, 4 residual blocks 2w, convT4x4/s2 w + bn + relu, "
         "convT4x4/s2 C with bias, linear output"},
    };
    return entries;
}

const ArchEntry& find_arch(std::string_view id) {
    for (const auto& e : catalog()) {
        if (e.id == id) return e;
    }
    throw ConfigError("unknown arch_id '" + std::string(id) + "' (expected cnn-a, cnn-b, res-a, res-b or gen-r4)");
}

std::vector<std::string> classifier_ids() { return {"cnn-a", "cnn-b", "res-a", "res-b"}; }

std::vector<LayerSpec> classifier_recipe(std::string_view arch_id, const Shape& input_shape, std::size_t num_classes) {
    const ArchEntry& arch = find_arch(arch_id);
    if (arch.family == Family::Generator) throw ConfigError("'" + arch.id + "' is not a classifier");
    if (input_shape.size() != 3) throw ContractViolation("build_classifier: input shape must be C x H x W");
    if (num_classes < 2) throw ContractViolation("build_classifier: need at least 2 classes");
    if (arch.id == "cnn-a") return vgg_recipe(input_shape, num_classes, {8, 16, 32, 32}, {1, 2, 3, 4});
    if (arch.id == "cnn-b") return vgg_recipe(input_shape, num_classes, {8, 8, 16, 16, 32, 32}, {2, 4, 5, 6});
    if (arch.id == "res-a") return resnet_recipe(input_shape, num_classes, {{8, 1}, {16, 2}, {32, 2}, {32, 2}});
    return resnet_recipe(input_shape, num_classes,
                         {{8, 1}, {8, 1}, {8, 1}, {16, 2}, {16, 1}, {16, 1}, {32, 2}, {32, 1}, {32, 1}, {32, 1}});
}

Model build_classifier(std::string_view arch_id, const Shape& input_shape, std::size_t num_classes,
                       std::uint64_t seed) {
    Model m(std::string(arch_id), input_shape, num_classes, classifier_recipe(arch_id, input_shape, num_classes));
    m.initialize(seed);
    return m;
}

Model build_generator(const Shape& input_shape, std::size_t width, std::uint64_t seed) {
    if (input_shape.size() != 3) throw ContractViolation("build_generator: input shape must be C x H x W");
    if (input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0) {
        throw ContractViolation("build_generator: H and W must be divisible by 4, got " + shape_str(input_shape));
    }
    if (width == 0) throw ContractViolation("build_generator: width must be positive");
    const std::size_t c = input_shape[0], w = width;
    std::vector<LayerSpec> layers{
        conv("down1", c, w, 3, 2, 1, false), bn("down1_bn", w), relu("down1_relu"),
        conv("down2", w, 2 * w, 3, 2, 1, false), bn("down2_bn", 2 * w), relu("down2_relu"),
    };
    for (int i = 1; i <= 4; ++i) layers.push_back(residual("res" + std::to_string(i), 2 * w, 2 * w, 1, false));
    layers.push_back(conv_t("up1", 2 * w, w, false));
    layers.push_back(bn("up1_bn", w));
    layers.push_back(relu("up1_relu"));
    layers.push_back(conv_t("up2", w, c, true));
    Model m("gen-r4", input_shape, 0, std::move(layers));
    m.initialize(seed);
    return m;
}

Model::Model(std::string arch_id, Shape input_shape, std::size_t num_classes, std::vector<LayerSpec> layers)
    : arch_id_(std::move(arch_id)),
      input_shape_(std::move(input_shape)),
      num_classes_(num_classes),
      layers_(std::move(layers)) {
    auto add_param = [&](const std::string& name, Shape shape) { params_.push_back({name, Tensor(std::move(shape))}); };
    auto add_bn = [&](const std::string& name, std::size_t channels) {
        add_param(name + ".gamma", {channels});
        add_param(name + ".beta", {channels});
        bn_stats_.push_back({Tensor({channels}, real(0)), Tensor({channels}, real(1))});
        bn_names_.push_back(name);
    };
    for (const auto& s : layers_) {
        first_param_.push_back(params_.size());
        first_bn_.push_back(bn_stats_.size());
        switch (s.kind) {
            case LayerKind::Conv:
                add_param(s.name + ".weight", {s.out, s.in, s.kernel, s.kernel});
                if (s.bias) add_param(s.name + ".bias", {s.out});
                break;
            case LayerKind::ConvTranspose:
                add_param(s.name + ".weight", {s.in, s.out, s.kernel, s.kernel});
                if (s.bias) add_param(s.name + ".bias", {s.out});
                break;
            case LayerKind::BatchNorm: add_bn(s.name, s.out); break;
            case LayerKind::Linear:
                add_param(s.name + ".weight", {s.out, s.in});
                if (s.bias) add_param(s.name + ".bias", {s.out});
                break;
            case LayerKind::Residual:
                add_param(s.name + ".conv1.weight", {s.out, s.in, 3, 3});
                add_bn(s.name + ".bn1", s.out);
                add_param(s.name + ".conv2.weight", {s.out, s.out, 3, 3});
                add_bn(s.name + ".bn2", s.out);
                if (has_shortcut(s)) {
                    add_param(s.name + ".shortcut.weight", {s.out, s.in, 1, 1});
                    add_bn(s.name + ".shortcut_bn", s.out);
                }
                num_taps_ += s.post_relu ? 2 : 1;
                break;
            case LayerKind::Relu: ++num_taps_; break;
            case LayerKind::MaxPool:
            case LayerKind::GlobalAvgPool:
            case LayerKind::Flatten: break;
        }
    }
}

std::vector<std::string> Model::tap_points() const {
    std::vector<std::string> names;
    for (const auto& s : layers_) {
        if (s.kind == LayerKind::Relu) names.push_back(s.name);
        if (s.kind == LayerKind::Residual) {
            names.push_back(s.name + ".relu1");
            if (s.post_relu) names.push_back(s.name + ".relu_out");
        }
    }
    return names;
}

Tensor& Model::param(std::string_view name) {
    for (auto& p : params_) {
        if (p.name == name) return p.value;
    }
    throw ContractViolation("model " + arch_id_ + ": no parameter named '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::uint64_t Model::checksum() const {
    Fnv1a h;
    auto feed = [&](const Tensor& t) {
        h.update(std::span(reinterpret_cast<const std::uint8_t*>(t.raw()), t.size() * sizeof(real)));
    };
    for (const auto& p : params_) feed(p.value);
    for (const auto& s : bn_stats_) {
        feed(s.mean);
        feed(s.var);
    }
    return h.digest();
}

void Model::set_mode(Mode mode) {
    if (frozen_ && mode == Mode::Training) throw ContractViolation("model " + arch_id_ + " is frozen");
    mode_ = mode;
}

void Model::freeze() {
    mode_ = Mode::Inference;
    frozen_ = true;
}

void Model::initialize(std::uint64_t seed) {
    if (frozen_) throw ContractViolation("model " + arch_id_ + " is frozen");
    Rng rng(seed);
    for (auto& p : params_) {
        const auto& n = p.name;
        const bool is_weight = n.ends_with(".weight");
        if (!is_weight) {
            p.value.fill(n.ends_with(".gamma") ? real(1) : real(0));
            continue;
        }
        // Fan-in is dim 1 times the kernel area for conv (O x C x k x k),
        // transposed conv (C x O x k x k, following the usual convention) and
        // linear (O x K) weights alike.
        const Shape& s = p.value.shape();
        std::size_t fan_in = s[1];
        for (std::size_t d = 2; d < s.size(); ++d) fan_in *= s[d];
        const double bound = std::sqrt(6.0 / double(fan_in));
        for (real& v : p.value.data()) v = real(rng.uniform(-bound, bound));
    }
    for (auto& s : bn_stats_) {
        s.mean.fill(real(0));
        s.var.fill(real(1));
    }
}

std::vector<Var<real>> Model::bind(Graph<real>& g) const {
    std::vector<Var<real>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(frozen_ ? g.constant(p.value) : g.param(p.value));
    return vars;
}

Var<real> Model::run_layer(const std::vector<Var<real>>& params, std::size_t layer, Var<real> x,
                           const std::set<std::size_t>& taps, std::size_t& tap_counter,
                           std::map<std::size_t, Var<real>>& out_taps, bool training) {
    const LayerSpec& s = layers_[layer];
    std::size_t p = first_param_[layer];
    std::size_t b = first_bn_[layer];
    const ops::BatchNormOptions bn_opt{.training = training};
    auto next = [&] { return params[p++]; };
    auto norm = [&](Var<real> v) {
        auto gamma = next();
        auto beta = next();
        return ops::batch_norm(v, gamma, beta, &bn_stats_[b++], bn_opt);
    };
    auto tap = [&](Var<real> v) {
        ++tap_counter;
        if (taps.contains(tap_counter)) out_taps[tap_counter] = v;
        return v;
    };
    switch (s.kind) {
        case LayerKind::Conv: {
            auto w = next();
            auto bias = s.bias ? next() : Var<real>{};
            return ops::conv2d(x, w, bias, {.stride = s.stride, .padding = s.padding});
        }
        case LayerKind::ConvTranspose: {
            auto w = next();
            auto bias = s.bias ? next() : Var<real>{};
            return ops::conv_transpose2d(x, w, bias, {.stride = s.stride, .padding = s.padding});
        }
        case LayerKind::BatchNorm: return norm(x);
        case LayerKind::Relu: return tap(ops::relu(x));
        case LayerKind::MaxPool: return ops::max_pool2d(x, s.kernel, s.stride);
        case LayerKind::GlobalAvgPool: return ops::global_avg_pool(x);
        case LayerKind::Flatten: return ops::reshape(x, {x.shape()[0], x.value().size() / x.shape()[0]});
        case LayerKind::Linear: {
            auto w = next();
            auto bias = s.bias ? next() : Var<real>{};
            return ops::linear(x, w, bias);
        }
        case LayerKind::Residual: {
            auto h = ops::conv2d(x, next(), Var<real>{}, {.stride = s.stride, .padding = 1});
            h = tap(ops::relu(norm(h)));
            h = ops::conv2d(h, next(), Var<real>{}, {.stride = 1, .padding = 1});
            h = norm(h);
            Var<real> skip = x;
            if (has_shortcut(s)) skip = norm(ops::conv2d(x, next(), Var<real>{}, {.stride = s.stride, .padding = 0}));
            auto sum = ops::add(h, skip);
            return s.post_relu ? tap(ops::relu(sum)) : sum;
        }
    }
    throw ContractViolation("unknown layer kind");
}

ForwardResult Model::forward(Graph<real>& /*g*/, const std::vector<Var<real>>& params, Var<real> x,
                             const std::set<std::size_t>& taps) {
    if (params.size() != params_.size()) throw ContractViolation("model " + arch_id_ + ": parameter binding mismatch");
    const Shape& s = x.shape();
    if (s.size() != 4 || Shape(s.begin() + 1, s.end()) != input_shape_) {
        throw ContractViolation("model " + arch_id_ + ": expected N x " + shape_str(input_shape_) + " input, got " +
                                shape_str(s));
    }
    for (std::size_t t : taps) {
        if (t < 1 || t > num_taps_) {
            throw ContractViolation("model " + arch_id_ + ": unknown tap " + std::to_string(t) + " (taps 1.." +
                                    std::to_string(num_taps_) + ")");
        }
    }
    ForwardResult result;
    std::size_t tap_counter = 0;
    const bool training = mode_ == Mode::Training;
    Var<real> h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        h = run_layer(params, l, h, taps, tap_counter, result.taps, training);
    }
    result.output = h;
    return result;
}

ForwardResult Model::forward(Graph<real>& g, Var<real> x, const std::set<std::size_t>& taps) {
    return forward(g, bind(g), x, taps);
}

Tensor Model::predict_logits(const Tensor& batch) const {
    if (mode_ != Mode::Inference) throw ContractViolation("predict_logits: model " + arch_id_ + " is in training mode");
    Graph<real> g;
    // Inference mode only reads the running statistics, so no state changes.
    auto& self = const_cast<Model&>(*this);
    std::vector<Var<real>> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back(g.constant(p.value));
    return self.forward(g, params, g.constant(batch)).output.value();
}

std::map<std::size_t, Tensor> Model::inference_taps(const Tensor& batch, const std::set<std::size_t>& taps) const {
    if (mode_ != Mode::Inference) throw ContractViolation("inference_taps: model " + arch_id_ + " is in training mode");
    Graph<real> g;
    auto& self = const_cast<Model&>(*this);
    std::vector<Var<real>> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back(g.constant(p.value));
    const auto fwd = self.forward(g, params, g.constant(batch), taps);
    std::map<std::size_t, Tensor> out;
    for (const auto& [k, v] : fwd.taps) out.emplace(k, v.value());
    return out;
}

void Model::apply_adam(std::span<const Tensor> grads, AdamState<real>& state) {
    if (frozen_) throw ContractViolation("optimizer step rejected: model " + arch_id_ + " is frozen");
    std::vector<Tensor> values;
    values.reserve(params_.size());
    for (auto& p : params_) values.push_back(std::move(p.value));
    try {
        adam_step<real>(values, grads, state);
    } catch (...) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = std::move(values[i]);
        throw;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = std::move(values[i]);
}

data::Artifact Model::to_artifact(const json& extra_metadata) const {
    data::Artifact a;
    for (const auto& p : params_) a.add(p.name, data::to_storage(p.value));
    for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
        a.add(bn_names_[i] + ".running_mean", data::to_storage(bn_stats_[i].mean));
        a.add(bn_names_[i] + ".running_var", data::to_storage(bn_stats_[i].var));
    }
    json layers = json::array();
    for (const auto& s : layers_) {
        layers.push_back({{"kind", int(s.kind)},
                          {"name", s.name},
                          {"in", s.in},
                          {"out", s.out},
                          {"kernel", s.kernel},
                          {"stride", s.stride},
                          {"padding", s.padding},
                          {"bias", s.bias},
                          {"post_relu", s.post_relu}});
    }
    a.metadata = extra_metadata;
    a.metadata["arch_id"] = arch_id_;
    a.metadata["input_shape"] = input_shape_;
    a.metadata["num_classes"] = num_classes_;
    a.metadata["layers"] = layers;
    return a;
}

Model Model::from_artifact(const data::Artifact& a) {
    try {
        const auto& meta = a.metadata;
        std::vector<LayerSpec> layers;
        for (const auto& l : meta.at("layers")) {
            const int kind = l.at("kind").get<int>();
            if (kind < 0 || kind > int(LayerKind::Residual)) throw DataError("model artifact: bad layer kind");
            layers.push_back({.kind = LayerKind(kind),
                              .name = l.at("name").get<std::string>(),
                              .in = l.at("in").get<std::size_t>(),
                              .out = l.at("out").get<std::size_t>(),
                              .kernel = l.at("kernel").get<std::size_t>(),
                              .stride = l.at("stride").get<std::size_t>(),
                              .padding = l.at("padding").get<std::size_t>(),
                              .bias = l.at("bias").get<bool>(),
                              .post_relu = l.at("post_relu").get<bool>()});
        }
        Model m(meta.at("arch_id").get<std::string>(), meta.at("input_shape").get<Shape>(),
                meta.at("num_classes").get<std::size_t>(), std::move(layers));
        auto restore = [&](const std::string& name, Tensor& dst) {
            Tensor value = data::from_storage(a.tensor(name));
            if (value.shape() != dst.shape()) {
                throw DataError("model artifact: tensor '" + name + "' has shape " + shape_str(value.shape()) +
                                ", expected " + shape_str(dst.shape()));
            }
            dst = std::move(value);
        };
        for (auto& p : m.params_) restore(p.name, p.value);
        for (std::size_t i = 0; i < m.bn_stats_.size(); ++i) {
            restore(m.bn_names_[i] + ".running_mean", m.bn_stats_[i].mean);
            restore(m.bn_names_[i] + ".running_var", m.bn_stats_[i].var);
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("model artifact: malformed metadata: ") + e.what());
    }
}

ForwardResult forward_with_taps(Model& model, Graph<real>& g, Var<real> x, const std::set<std::size_t>& taps) {
    return model.forward(g, x, taps);
}

void save_model(const Model& model, const std::filesystem::path& path, const json& extra_metadata) {
    data::save_artifact(model.to_artifact(extra_metadata), path);
}

Model load_model(const std::filesystem::path& path) { return Model::from_artifact(data::load_artifact(path)); }

}  // namespace uapforge::zoo
