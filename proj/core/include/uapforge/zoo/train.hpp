#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uapforge/data/dataset.hpp"
#include "uapforge/zoo/model.hpp"

namespace uapforge::zoo {

struct TrainOptions {
    std::size_t epochs = 3;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    double heldout_accuracy = 0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    /// Loss of every mini-batch in order.
    std::vector<double> batch_losses;
    std::uint64_t checksum = 0;

    friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// Mini-batch Adam on cross-entropy with a seeded shuffle per epoch. The model
/// is left in training mode. `heldout` may be null.
TrainReport train_classifier(Model& model, const data::Dataset& train, const data::Dataset* heldout,
                             const TrainOptions& options);

/// Index of the largest entry per row, ties broken toward the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

/// Predicted classes for a whole dataset (model must be in inference mode).
/// Batches are split across `jobs` threads; the result does not depend on it.
std::vector<int> predict(const Model& model, const data::Dataset& dataset, std::size_t batch_size = 256,
                         std::size_t jobs = 1);

/// Applied to each image batch before the forward pass.
using BatchTransform = std::function<Tensor(const Tensor&)>;

std::vector<int> predict(const Model& model, const data::Dataset& dataset, const BatchTransform& transform,
                         std::size_t batch_size = 256, std::size_t jobs = 1);

/// Percentage of images whose prediction equals the label.
double accuracy(const Model& model, const data::Dataset& dataset, std::size_t jobs = 1);

/// epoch,train_loss,train_accuracy,heldout_accuracy rows plus a checksum line.
std::string train_report_csv(const TrainReport& report);

}  // namespace uapforge::zoo
