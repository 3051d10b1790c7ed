#include "uapforge/zoo/train.hpp"

#include <cmath>
#include <cstdio>
#include <thread>

#include "uapforge/hash.hpp"
#include "uapforge/loss/losses.hpp"
#include "uapforge/rng.hpp"

namespace uapforge::zoo {

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ContractViolation("argmax_rows: expected N x M, got " + shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), m = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m; ++j) {
            if (logits[i * m + j] > logits[i * m + best]) best = j;
        }
        out[i] = int(best);
    }
    return out;
}

std::vector<int> predict(const Model& model, const data::Dataset& dataset, std::size_t batch_size, std::size_t jobs) {
    return predict(model, dataset, BatchTransform{}, batch_size, jobs);
}

std::vector<int> predict(const Model& model, const data::Dataset& dataset, const BatchTransform& transform,
                         std::size_t batch_size, std::size_t jobs) {
    if (dataset.empty()) throw ContractViolation("predict: empty dataset");
    if (batch_size == 0) throw ContractViolation("predict: batch size must be positive");
    const std::size_t n = dataset.size();
    const std::size_t batches = (n + batch_size - 1) / batch_size;
    std::vector<int> out(n);
    auto work = [&](std::size_t worker, std::size_t stride) {
        for (std::size_t b = worker; b < batches; b += stride) {
            const std::size_t begin = b * batch_size, end = std::min(n, begin + batch_size);
            Tensor batch = dataset.batch(begin, end);
            if (transform) batch = transform(batch);
            const auto preds = argmax_rows(model.predict_logits(batch));
            std::copy(preds.begin(), preds.end(), out.begin() + std::ptrdiff_t(begin));
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, batches));
    if (jobs == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work, j, jobs);
    }
    return out;
}

double accuracy(const Model& model, const data::Dataset& dataset, std::size_t jobs) {
    const auto preds = predict(model, dataset, 256, jobs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == dataset.label(i);
    return 100.0 * double(hits) / double(preds.size());
}

TrainReport train_classifier(Model& model, const data::Dataset& train, const data::Dataset* heldout,
                             const TrainOptions& options) {
    if (model.is_generator()) throw ContractViolation("train_classifier: " + model.arch_id() + " is a generator");
    if (model.frozen()) throw ContractViolation("optimizer step rejected: model " + model.arch_id() + " is frozen");
    if (train.num_classes() != model.num_classes()) {
        throw ContractViolation("train_classifier: dataset has " + std::to_string(train.num_classes()) +
                                " classes, model expects " + std::to_string(model.num_classes()));
    }
    if (options.batch_size == 0) throw ContractViolation("train_classifier: batch size must be positive");
    for (int l : train.labels()) {
        if (l < 0 || std::size_t(l) >= model.num_classes()) {
            throw DataError("train_classifier: label " + std::to_string(l) + " out of range");
        }
    }

    TrainReport report;
    std::vector<Tensor> values;
    for (const auto& p : model.params()) values.push_back(p.value);
    AdamState<real> adam({.lr = options.lr}, values);
    values.clear();
    Rng rng(options.seed);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        model.set_mode(Mode::Training);
        rng.shuffle(std::span(order));
        double loss_sum = 0;
        std::size_t hits = 0, batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
            const std::size_t end = std::min(order.size(), begin + options.batch_size);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            std::vector<int> labels;
            for (std::size_t i : idx) labels.push_back(train.label(i));

            Graph<real> g;
            const auto params = model.bind(g);
            auto logits = model.forward(g, params, g.constant(train.batch(idx))).output;
            auto loss = loss::cross_entropy_logits(logits, loss::one_hot<real>(labels, model.num_classes()));
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw NumericFailure("train_classifier: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(batches + 1));
            }
            g.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (const auto& p : params) grads.push_back(p.grad());
            model.apply_adam(grads, adam);

            const auto preds = argmax_rows(logits.value());
            for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
            report.batch_losses.push_back(value);
            loss_sum += value;
            ++batches;
        }
        EpochMetrics m{.epoch = epoch,
                       .train_loss = batches ? loss_sum / double(batches) : 0.0,
                       .train_accuracy = train.empty() ? 0.0 : 100.0 * double(hits) / double(train.size())};
        if (heldout && !heldout->empty()) {
            model.set_mode(Mode::Inference);
            m.heldout_accuracy = accuracy(model, *heldout);
            model.set_mode(Mode::Training);
        }
        report.epochs.push_back(m);
    }
    report.checksum = model.checksum();
    return report;
}

std::string train_report_csv(const TrainReport& report) {
    std::string out = "epoch,train_loss,train_accuracy,heldout_accuracy\n";
    char line[128];
    for (const auto& e : report.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.2f,%.2f\n", e.epoch, e.train_loss, e.train_accuracy,
                      e.heldout_accuracy);
        out += line;
    }
    out += "# checksum " + to_hex(report.checksum) + "\n";
    return out;
}

}  // namespace uapforge::zoo
