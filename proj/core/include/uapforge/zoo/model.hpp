#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "uapforge/data/artifact.hpp"
#include "uapforge/tensor/adam.hpp"
#include "uapforge/tensor/ops.hpp"

namespace uapforge::zoo {

enum class LayerKind { Conv, ConvTranspose, BatchNorm, Relu, MaxPool, GlobalAvgPool, Flatten, Linear, Residual };

/// One entry of a model's layer recipe. Residual is a basic block:
/// conv3x3(stride) bn relu conv3x3 bn, plus a 1x1 conv + bn shortcut when the
/// shape changes, then an optional relu after the sum.
struct LayerSpec {
    LayerKind kind;
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool bias = false;
    bool post_relu = true;
};

enum class Family { VggLike, ResnetLike, Generator };
enum class DepthClass { Shallow, Deep };
enum class Mode { Training, Inference };

struct ArchEntry {
    std::string id;
    Family family;
    DepthClass depth;
    std::string recipe;
};

/// cnn-a, cnn-b, res-a, res-b, gen-r4.
const std::vector<ArchEntry>& catalog();
const ArchEntry& find_arch(std::string_view id);
std::vector<std::string> classifier_ids();

struct NamedParam {
    std::string name;
    Tensor value;
};

struct ForwardResult {
    Var<real> output;
    /// Requested taps keyed by 1-based layer index.
    std::map<std::size_t, Var<real>> taps;
};

/// A classifier or generator: an ordered layer recipe, its parameters and
/// batch-norm running statistics. Tap points are the relu outputs in
/// execution order, numbered from 1.
class Model {
public:
    Model() = default;
    Model(std::string arch_id, Shape input_shape, std::size_t num_classes, std::vector<LayerSpec> layers);

    const std::string& arch_id() const { return arch_id_; }
    const Shape& input_shape() const { return input_shape_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    bool is_generator() const { return num_classes_ == 0; }

    std::vector<std::string> tap_points() const;
    std::size_t num_taps() const { return num_taps_; }

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    Tensor& param(std::string_view name);
    std::size_t parameter_count() const;
    std::uint64_t checksum() const;

    Mode mode() const { return mode_; }
    void set_mode(Mode mode);
    /// Inference mode with immutable parameters.
    void freeze();
    bool frozen() const { return frozen_; }

    /// Kaiming-uniform fan-in weights (bound sqrt(6 / fan_in)), zero biases,
    /// unit BN scales, reset running statistics.
    void initialize(std::uint64_t seed);

    /// Puts the parameters on `g`: trainable nodes unless frozen, constants otherwise.
    std::vector<Var<real>> bind(Graph<real>& g) const;

    /// Runs the recipe. Batch norm uses batch statistics (and updates the
    /// running ones) in training mode, running statistics in inference mode.
    ForwardResult forward(Graph<real>& g, const std::vector<Var<real>>& params, Var<real> x,
                          const std::set<std::size_t>& taps = {});

    /// Binds the parameters and runs forward in one call.
    ForwardResult forward(Graph<real>& g, Var<real> x, const std::set<std::size_t>& taps = {});

    /// Logits of a batch without recording gradients; safe to call
    /// concurrently on a frozen model.
    Tensor predict_logits(const Tensor& batch) const;

    /// Activations at the requested taps for a batch, under the same
    /// conditions as predict_logits.
    std::map<std::size_t, Tensor> inference_taps(const Tensor& batch, const std::set<std::size_t>& taps) const;

    /// Adam update from gradients aligned with params(). Rejected on a frozen model.
    void apply_adam(std::span<const Tensor> grads, AdamState<real>& state);

    data::Artifact to_artifact(const nlohmann::json& extra_metadata = nlohmann::json::object()) const;
    static Model from_artifact(const data::Artifact& artifact);

private:
    Var<real> run_layer(const std::vector<Var<real>>& params, std::size_t layer, Var<real> x,
                        const std::set<std::size_t>& taps, std::size_t& tap_counter,
                        std::map<std::size_t, Var<real>>& out_taps, bool training);

    std::string arch_id_;
    Shape input_shape_;
    std::size_t num_classes_ = 0;
    std::vector<LayerSpec> layers_;
    std::vector<NamedParam> params_;
    std::vector<ops::BatchNormStats<real>> bn_stats_;
    std::vector<std::string> bn_names_;
    std::vector<std::size_t> first_param_;
    std::vector<std::size_t> first_bn_;
    std::size_t num_taps_ = 0;
    Mode mode_ = Mode::Training;
    bool frozen_ = false;
};

/// Layer recipe of a catalog classifier for the given input.
std::vector<LayerSpec> classifier_recipe(std::string_view arch_id, const Shape& input_shape, std::size_t num_classes);

/// Throws ConfigError for an unknown id and ContractViolation when the input
/// is too small for the recipe or M < 2.
Model build_classifier(std::string_view arch_id, const Shape& input_shape, std::size_t num_classes,
                       std::uint64_t seed = 0);

/// gen-r4: two stride-2 convs, four residual blocks, two stride-2 transposed
/// convs and a linear output. H and W must be divisible by 4.
Model build_generator(const Shape& input_shape, std::size_t width = 16, std::uint64_t seed = 0);

/// forward with no gradient bookkeeping beyond what `x` requires; throws
/// ContractViolation for a tap index outside 1..num_taps.
ForwardResult forward_with_taps(Model& model, Graph<real>& g, Var<real> x, const std::set<std::size_t>& taps);

void save_model(const Model& model, const std::filesystem::path& path,
                const nlohmann::json& extra_metadata = nlohmann::json::object());
Model load_model(const std::filesystem::path& path);

}  // namespace uapforge::zoo
