// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Activity classifier over sets of projections: random convolutional kernels
// summarise each projection channel, an element-wise max pools the channel
// set, and a small dense network maps the pooled vector to class probabilities.

#ifndef DORF_CLASSIFIER_HPP
#define DORF_CLASSIFIER_HPP

#include "dorf/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dorf {

struct Kernel {
    std::vector<double> weights; // length 7, 9 or 11, zero mean
    double bias = 0.0;
    std::uint32_t dilation = 1;  // power of two
    bool padding = false;

    std::size_t receptive_field() const { return (weights.size() - 1) * dilation + 1; }
    std::size_t pad() const { return padding ? (weights.size() - 1) * dilation / 2 : 0; }
};

struct KernelBank {
    std::uint64_t seed = 0;
    std::size_t input_length = 0; // series length the dilations were drawn for
    std::vector<Kernel> kernels;

    std::size_t size() const { return kernels.size(); }
    std::size_t feature_dim() const { return 2 * kernels.size(); }
};

// Weights ~ N(0,1) then centred; bias ~ U[-1,1]; length uniform over {7,9,11};
// dilation 2^a with a uniform over the exponents keeping the receptive field
// within input_length; padding on with probability 1/2.
KernelBank build_kernel_bank(std::size_t count, std::size_t input_length, std::uint64_t seed);

// One row per channel. Column 2k holds the max activation of kernel k,
// column 2k+1 its proportion of positive activations.
struct FeatureMatrix {
    Eigen::MatrixXd f; // C x 2D
};

// projections is T' x C (one channel per column).
FeatureMatrix extract_features(const Eigen::MatrixXd& projections, const KernelBank& bank);

// Element-wise maximum over channels (rows).
Eigen::VectorXd pool_features(const FeatureMatrix& features);

struct TrainingConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 64;
    double label_smoothing = 0.1;
    std::size_t max_epochs = 2500;
    std::size_t patience = 200;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double validation_fraction = 0.2;
    std::size_t projection_dim = 128;
    std::size_t hidden_dim = 256;
    std::uint64_t seed = 0;
};

// Dense head: linear projection to projection_dim, one ReLU hidden layer,
// linear output. Weight matrices are (out x in).
struct Network {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
    Eigen::MatrixXd w3;
    Eigen::VectorXd b3;

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
    static Network initialise(std::size_t input_dim, std::size_t projection_dim, std::size_t hidden_dim,
                              std::size_t classes, Rng& rng);
    static Network zeros_like(const Network& other);

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t classes() const { return static_cast<std::size_t>(w3.rows()); }

    // x is batch x input_dim; returns batch x classes.
    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;

    // Visits (parameter, matching parameter of other) pairs in a fixed order.
    template <class F>
    void for_each_param(Network& other, F&& f) {
        f(w1, other.w1);
        f(b1, other.b1);
        f(w2, other.w2);
        f(b2, other.b2);
        f(w3, other.w3);
        f(b3, other.b3);
    }
};

// Smoothed targets: (1 - alpha) * onehot + alpha / K.
Eigen::MatrixXd smoothed_targets(std::span<const int> labels, std::size_t classes, double alpha);

// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

// Mean label-smoothed cross-entropy over the batch; fills grad (same shapes
// as net) when non-null.
double loss_and_gradient(const Network& net, const Eigen::MatrixXd& x, std::span<const int> labels, double alpha,
                         Network* grad);

struct TrainingHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool early_stopped = false;
};

struct Model {
    KernelBank bank;
    Eigen::VectorXd feature_mean;
    Eigen::VectorXd feature_scale;
    Network net;
    TrainingConfig config;
    TrainingHistory history;

    std::size_t classes() const { return net.classes(); }
};

// Labelled pooled-feature dataset: one row per trial.
struct FeatureDataset {
    Eigen::MatrixXd x;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    FeatureDataset subset(std::span<const std::size_t> rows) const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

// Per class, round(fraction * count) rows (at least one when a class has two
// or more rows) go to validation; seeded shuffle; both lists sorted.
Split stratified_split(std::span<const int> labels, double fraction, std::uint64_t seed);

// AdamW on the smoothed cross-entropy; keeps the weights with the lowest
// validation loss and stops after `patience` epochs without improvement.
// Features are standardised with statistics of the training set.
Model train(const FeatureDataset& train_set, const FeatureDataset& validation_set, std::size_t classes,
            const TrainingConfig& cfg);

// Class distribution for one pooled feature vector.
Eigen::VectorXd predict(const Model& model, const Eigen::VectorXd& pooled);
// Batch version: rows are trials.
Eigen::MatrixXd predict(const Model& model, const Eigen::MatrixXd& pooled);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

} // namespace dorf

#endif
