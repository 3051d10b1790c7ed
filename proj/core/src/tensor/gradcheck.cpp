#include "uapforge/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "uapforge/rng.hpp"
#include "uapforge/tensor/ops.hpp"

namespace uapforge {
namespace {

using D = double;
using TensorD = BasicTensor<D>;
using VarD = Var<D>;

struct Case {
    std::function<std::vector<TensorD>(Rng&)> inputs;
    std::function<VarD(Graph<D>&, const std::vector<VarD>&)> forward;
};

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    for (D& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero (kinks of relu / sign of max_abs).
TensorD away_from_zero(Rng& rng, Shape shape, double margin) {
    TensorD t(std::move(shape));
    for (D& v : t.data()) {
        const double mag = rng.uniform(margin, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

// Distinct values with gaps far larger than the difference step.
TensorD distinct_values(Rng& rng, Shape shape) {
    TensorD t(std::move(shape));
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span(order));
    for (std::size_t i = 0; i < order.size(); ++i) {
        t[order[i]] = -1.0 + 0.1 * double(i) + rng.uniform(0.0, 0.01);
    }
    return t;
}

VarD corrupted_relu(VarD x) {
    TensorD out = x.value();
    for (D& v : out.data()) v = std::max(v, 0.0);
    return x.graph().record("corrupted_relu", std::move(out), {x}, [x](Graph<D>& g, const TensorD& grad) {
        TensorD* gx = g.grad_sink(x);
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (x.value()[i] > 0) (*gx)[i] += 2.0 * grad[i];
    });
}

const std::map<std::string, Case, std::less<>>& catalog() {
    static const std::map<std::string, Case, std::less<>> cases = [] {
        std::map<std::string, Case, std::less<>> c;
        c["conv2d"] = {[](Rng& r) {
                           return std::vector{random_tensor(r, {1, 2, 5, 5}), random_tensor(r, {3, 2, 3, 3}),
                                              random_tensor(r, {3})};
                       },
                       [](Graph<D>&, const std::vector<VarD>& in) {
                           return ops::conv2d(in[0], in[1], in[2], {.stride = 2, .padding = 1});
                       }};
        c["conv_transpose2d"] = {[](Rng& r) {
                                     return std::vector{random_tensor(r, {1, 3, 3, 3}), random_tensor(r, {3, 2, 4, 4}),
                                                        random_tensor(r, {2})};
                                 },
                                 [](Graph<D>&, const std::vector<VarD>& in) {
                                     return ops::conv_transpose2d(in[0], in[1], in[2], {.stride = 2, .padding = 1});
                                 }};
        c["relu"] = {[](Rng& r) { return std::vector{away_from_zero(r, {4, 5}, 0.05)}; },
                     [](Graph<D>&, const std::vector<VarD>& in) { return ops::relu(in[0]); }};
        c["linear"] = {[](Rng& r) {
                           return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {5, 4}), random_tensor(r, {5})};
                       },
                       [](Graph<D>&, const std::vector<VarD>& in) { return ops::linear(in[0], in[1], in[2]); }};
        c["max_pool2d"] = {[](Rng& r) { return std::vector{distinct_values(r, {1, 2, 4, 4})}; },
                           [](Graph<D>&, const std::vector<VarD>& in) { return ops::max_pool2d(in[0], 2, 2); }};
        c["global_avg_pool"] = {[](Rng& r) { return std::vector{random_tensor(r, {2, 3, 3, 3})}; },
                                [](Graph<D>&, const std::vector<VarD>& in) { return ops::global_avg_pool(in[0]); }};
        c["batch_norm"] = {[](Rng& r) {
                               return std::vector{random_tensor(r, {3, 2, 2, 2}), random_tensor(r, {2}, 0.5, 1.5),
                                                  random_tensor(r, {2})};
                           },
                           [](Graph<D>&, const std::vector<VarD>& in) {
                               return ops::batch_norm<D>(in[0], in[1], in[2], nullptr, {.training = true});
                           }};
        c["batch_norm_inference"] = {
            [](Rng& r) {
                return std::vector{random_tensor(r, {3, 2, 2, 2}), random_tensor(r, {2}, 0.5, 1.5),
                                   random_tensor(r, {2})};
            },
            [](Graph<D>&, const std::vector<VarD>& in) {
                static ops::BatchNormStats<D> stats{TensorD({2}, std::vector<D>{0.1, -0.2}),
                                                    TensorD({2}, std::vector<D>{0.8, 1.3})};
                return ops::batch_norm<D>(in[0], in[1], in[2], &stats, {.training = false});
            }};
        c["add"] = {[](Rng& r) {
                        return std::vector{random_tensor(r, {3, 2, 2}), random_tensor(r, {3, 2, 2}),
                                           random_tensor(r, {1, 2, 2})};
                    },
                    [](Graph<D>&, const std::vector<VarD>& in) { return ops::add(ops::add(in[0], in[1]), in[2]); }};
        c["mul"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {3, 4})}; },
                    [](Graph<D>&, const std::vector<VarD>& in) { return ops::mul(in[0], in[1]); }};
        c["scale"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
                      [](Graph<D>&, const std::vector<VarD>& in) { return ops::scale(in[0], 1.7); }};
        c["scale_by"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}), random_tensor(r, {1})}; },
                         [](Graph<D>&, const std::vector<VarD>& in) { return ops::scale_by(in[0], in[1]); }};
        c["clamp"] = {[](Rng& r) {
                          // Keep every element at least 0.05 from the interval ends.
                          TensorD t({4, 5});
                          for (D& v : t.data()) {
                              v = r.uniform(-0.45, 0.45);
                              if (r.uniform() < 0.25) v = v < 0 ? v - 0.6 : v + 0.6;
                          }
                          return std::vector{t};
                      },
                      [](Graph<D>&, const std::vector<VarD>& in) { return ops::clamp(in[0], -0.5, 0.5); }};
        c["softmax"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}, -2.0, 2.0)}; },
                        [](Graph<D>&, const std::vector<VarD>& in) { return ops::softmax(in[0]); }};
        c["log_softmax"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}, -2.0, 2.0)}; },
                            [](Graph<D>&, const std::vector<VarD>& in) { return ops::log_softmax(in[0]); }};
        c["clamp_min"] = {[](Rng& r) {
                              TensorD t({4, 5});
                              for (D& v : t.data()) {
                                  v = r.uniform(0.05, 1.0);
                                  if (r.uniform() < 0.3) v = -v;
                              }
                              return std::vector{t};
                          },
                          [](Graph<D>&, const std::vector<VarD>& in) { return ops::clamp_min(in[0], 0.0); }};
        c["log"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}, 0.5, 2.0)}; },
                    [](Graph<D>&, const std::vector<VarD>& in) { return ops::log(in[0]); }};
        c["reciprocal"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4}, 0.5, 2.0)}; },
                           [](Graph<D>&, const std::vector<VarD>& in) { return ops::reciprocal(in[0]); }};
        c["mean"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
                     [](Graph<D>&, const std::vector<VarD>& in) { return ops::mean(in[0]); }};
        c["sum"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
                    [](Graph<D>&, const std::vector<VarD>& in) { return ops::sum(in[0]); }};
        c["l2_norm"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 4})}; },
                        [](Graph<D>&, const std::vector<VarD>& in) { return ops::l2_norm(in[0]); }};
        c["l2_norm_rows"] = {[](Rng& r) { return std::vector{random_tensor(r, {3, 2, 2})}; },
                             [](Graph<D>&, const std::vector<VarD>& in) { return ops::l2_norm_rows(in[0]); }};
        c["max_abs"] = {[](Rng& r) { return std::vector{distinct_values(r, {3, 4})}; },
                        [](Graph<D>&, const std::vector<VarD>& in) { return ops::max_abs(in[0]); }};
        c["channel_mean"] = {[](Rng& r) { return std::vector{random_tensor(r, {2, 3, 2, 2})}; },
                             [](Graph<D>&, const std::vector<VarD>& in) { return ops::channel_mean(in[0]); }};
        c["reshape"] = {[](Rng& r) { return std::vector{random_tensor(r, {2, 6})}; },
                        [](Graph<D>&, const std::vector<VarD>& in) { return ops::reshape(in[0], {3, 4}); }};
        return c;
    }();
    return cases;
}

const Case& fault_fixture() {
    static const Case c{[](Rng& r) { return std::vector{away_from_zero(r, {4, 5}, 0.05)}; },
                        [](Graph<D>&, const std::vector<VarD>& in) { return corrupted_relu(in[0]); }};
    return c;
}

// Scalar probe: sum(op(inputs) * weights) with fixed random weights.
double probe(const Case& c, const std::vector<TensorD>& inputs, const TensorD& weights) {
    Graph<D> g;
    std::vector<VarD> vars;
    for (const auto& t : inputs) vars.push_back(g.constant(t));
    VarD out = c.forward(g, vars);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.value().size(); ++i) acc += out.value()[i] * weights[i];
    return acc;
}

GradCheckReport check_case(std::string_view name, const Case& c, std::uint64_t seed, const GradCheckOptions& opt) {
    GradCheckReport report;
    report.op = std::string(name);
    Rng rng(seed);
    try {
        for (std::size_t point = 0; point < opt.points; ++point) {
            std::vector<TensorD> inputs = c.inputs(rng);
            Graph<D> g;
            std::vector<VarD> vars;
            for (const auto& t : inputs) vars.push_back(g.param(t));
            VarD out = c.forward(g, vars);
            TensorD weights = random_tensor(rng, out.shape());
            VarD loss = ops::sum(ops::mul(out, g.constant(weights)));
            g.backward(loss);

            for (std::size_t k = 0; k < inputs.size(); ++k) {
                const TensorD& analytic = vars[k].grad();
                for (std::size_t i = 0; i < inputs[k].size(); ++i) {
                    std::vector<TensorD> shifted = inputs;
                    shifted[k][i] = inputs[k][i] + opt.step;
                    const double up = probe(c, shifted, weights);
                    shifted[k][i] = inputs[k][i] - opt.step;
                    const double down = probe(c, shifted, weights);
                    const double numeric = (up - down) / (2.0 * opt.step);
                    const double a = analytic[i];
                    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
                    report.max_rel_error = std::max(report.max_rel_error, err);
                }
            }
            ++report.points;
        }
        report.passed = report.max_rel_error < opt.tolerance;
    } catch (const std::exception& e) {
        report.passed = false;
        report.note = e.what();
    }
    return report;
}

}  // namespace

std::vector<std::string> differentiable_ops() {
    std::vector<std::string> names;
    for (const auto& [name, _] : catalog()) names.push_back(name);
    return names;
}

GradCheckReport finite_difference_check(std::string_view op, std::uint64_t seed, GradCheckOptions options) {
    if (op == "sign") {
        return {.op = "sign", .supported = false, .note = "forward-only op has no adjoint"};
    }
    const auto& cases = catalog();
    const auto it = cases.find(op);
    if (it == cases.end()) {
        return {.op = std::string(op), .supported = false, .note = "not in the op catalog"};
    }
    return check_case(op, it->second, seed, options);
}

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, GradCheckOptions options, bool inject_fault) {
    std::vector<GradCheckReport> reports;
    std::uint64_t salt = 0;
    for (const auto& name : differentiable_ops()) {
        reports.push_back(finite_difference_check(name, seed + salt++, options));
    }
    if (inject_fault) reports.push_back(check_case("corrupted_relu", fault_fixture(), seed, options));
    return reports;
}

}  // namespace uapforge
