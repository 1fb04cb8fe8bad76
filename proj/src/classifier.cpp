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

#include "dorf/classifier.hpp"

#include "binary_io.hpp"
#include "dorf/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace dorf {

namespace {

constexpr std::size_t kKernelLengths[] = {7, 9, 11};
constexpr std::uint32_t kModelVersion = 1;

// Largest exponent a with (len - 1) * 2^a + 1 <= input_length.
std::uint32_t max_dilation_exponent(std::size_t len, std::size_t input_length) {
    std::uint32_t a = 0;
    while ((len - 1) * (std::size_t{1} << (a + 1)) + 1 <= input_length) {
        ++a;
    }
    return a;
}

Eigen::MatrixXd standardise(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& scale) {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

void write_matrix(detail::ByteWriter& w, const Eigen::MatrixXd& m) {
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            w.f64(m(i, j));
        }
    }
}

Eigen::MatrixXd read_matrix(detail::ByteReader& r) {
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    r.need(static_cast<std::size_t>(rows * cols) * 8);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = r.f64();
        }
    }
    return m;
}

} // namespace

KernelBank build_kernel_bank(std::size_t count, std::size_t input_length, std::uint64_t seed) {
    if (count < 1) {
        throw InvalidInput("build_kernel_bank: kernel count must be >= 1");
    }
    if (input_length < 1) {
        throw InvalidInput("build_kernel_bank: input length must be >= 1");
    }
    Rng rng(seed);
    KernelBank bank;
    bank.seed = seed;
    bank.input_length = input_length;
    bank.kernels.resize(count);
    for (Kernel& k : bank.kernels) {
        const std::size_t len = kKernelLengths[uniform_index(rng, 3)];
        k.weights.resize(len);
        double mean = 0.0;
        for (double& w : k.weights) {
            w = standard_normal(rng);
            mean += w;
        }
        mean /= static_cast<double>(len);
        for (double& w : k.weights) {
            w -= mean;
        }
        k.bias = uniform(rng, -1.0, 1.0);
        if (input_length >= len) {
            const std::uint32_t a = static_cast<std::uint32_t>(uniform_index(rng, max_dilation_exponent(len, input_length) + 1));
            k.dilation = std::uint32_t{1} << a;
            k.padding = uniform_index(rng, 2) == 1;
        } else {
            // Series shorter than the kernel: only padded convolution produces output.
            k.dilation = 1;
            k.padding = true;
        }
    }
    return bank;
}

FeatureMatrix extract_features(const Eigen::MatrixXd& projections, const KernelBank& bank) {
    const std::size_t length = static_cast<std::size_t>(projections.rows());
    if (length < 2) {
        throw InvalidInput("extract_features: series length must be >= 2");
    }
    if (!projections.allFinite()) {
        throw InvalidInput("extract_features: non-finite projection values");
    }
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const Kernel& ker = bank.kernels[k];
        if (length + 2 * ker.pad() < ker.receptive_field()) {
            throw InvalidInput("extract_features: series of length " + std::to_string(length) +
                               " is shorter than the receptive field of kernel " + std::to_string(k) + " (" +
                               std::to_string(ker.receptive_field()) + ") and padding is off");
        }
    }

    FeatureMatrix out;
    out.f.resize(projections.cols(), static_cast<Eigen::Index>(bank.feature_dim()));
    for (Eigen::Index c = 0; c < projections.cols(); ++c) {
        const double* x = projections.col(c).data();
        for (std::size_t k = 0; k < bank.size(); ++k) {
            const Kernel& ker = bank.kernels[k];
            const auto len = static_cast<std::ptrdiff_t>(ker.weights.size());
            const auto dil = static_cast<std::ptrdiff_t>(ker.dilation);
            const auto pad = static_cast<std::ptrdiff_t>(ker.pad());
            const auto n = static_cast<std::ptrdiff_t>(length);
            const std::ptrdiff_t out_len = n + 2 * pad - (len - 1) * dil;
            double best = -std::numeric_limits<double>::infinity();
            std::ptrdiff_t positive = 0;
            for (std::ptrdiff_t i = 0; i < out_len; ++i) {
                double acc = ker.bias;
                std::ptrdiff_t idx = i - pad;
                for (std::ptrdiff_t j = 0; j < len; ++j, idx += dil) {
                    if (idx >= 0 && idx < n) {
                        acc += ker.weights[static_cast<std::size_t>(j)] * x[idx];
                    }
                }
                best = std::max(best, acc);
                positive += acc > 0.0 ? 1 : 0;
            }
            out.f(c, static_cast<Eigen::Index>(2 * k)) = best;
            out.f(c, static_cast<Eigen::Index>(2 * k + 1)) = static_cast<double>(positive) / static_cast<double>(out_len);
        }
    }
    return out;
}

Eigen::VectorXd pool_features(const FeatureMatrix& features) {
    if (features.f.rows() < 1) {
        throw InvalidInput("pool_features: no channels to pool");
    }
    return features.f.colwise().maxCoeff().transpose();
}

Network Network::initialise(std::size_t input_dim, std::size_t projection_dim, std::size_t hidden_dim,
                            std::size_t classes, Rng& rng) {
    auto layer = [&rng](std::size_t out, std::size_t in, Eigen::MatrixXd& w, Eigen::VectorXd& b) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        w.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        b.resize(static_cast<Eigen::Index>(out));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                w(i, j) = uniform(rng, -bound, bound);
            }
        }
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            b(i) = uniform(rng, -bound, bound);
        }
    };
    Network net;
    layer(projection_dim, input_dim, net.w1, net.b1);
    layer(hidden_dim, projection_dim, net.w2, net.b2);
    layer(classes, hidden_dim, net.w3, net.b3);
    return net;
}

Network Network::zeros_like(const Network& other) {
    Network z;
    z.w1 = Eigen::MatrixXd::Zero(other.w1.rows(), other.w1.cols());
    z.b1 = Eigen::VectorXd::Zero(other.b1.size());
    z.w2 = Eigen::MatrixXd::Zero(other.w2.rows(), other.w2.cols());
    z.b2 = Eigen::VectorXd::Zero(other.b2.size());
    z.w3 = Eigen::MatrixXd::Zero(other.w3.rows(), other.w3.cols());
    z.b3 = Eigen::VectorXd::Zero(other.b3.size());
    return z;
}

Eigen::MatrixXd Network::logits(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd z1 = (x * w1.transpose()).rowwise() + b1.transpose();
    const Eigen::MatrixXd h = ((z1 * w2.transpose()).rowwise() + b2.transpose()).cwiseMax(0.0);
    return (h * w3.transpose()).rowwise() + b3.transpose();
}

Eigen::MatrixXd smoothed_targets(std::span<const int> labels, std::size_t classes, double alpha) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(labels.size()),
                                                  static_cast<Eigen::Index>(classes), alpha / static_cast<double>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw InvalidInput("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
        }
        q(static_cast<Eigen::Index>(i), labels[i]) += 1.0 - alpha;
    }
    return q;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
    p = p.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

double loss_and_gradient(const Network& net, const Eigen::MatrixXd& x, std::span<const int> labels, double alpha,
                         Network* grad) {
    const auto batch = static_cast<double>(x.rows());
    const Eigen::MatrixXd z1 = (x * net.w1.transpose()).rowwise() + net.b1.transpose();
    const Eigen::MatrixXd a2 = (z1 * net.w2.transpose()).rowwise() + net.b2.transpose();
    const Eigen::MatrixXd h = a2.cwiseMax(0.0);
    const Eigen::MatrixXd z3 = (h * net.w3.transpose()).rowwise() + net.b3.transpose();

    const Eigen::MatrixXd shifted = z3.colwise() - z3.rowwise().maxCoeff();
    const Eigen::VectorXd log_norm = shifted.array().exp().rowwise().sum().log();
    const Eigen::MatrixXd log_p = shifted.colwise() - log_norm;
    const Eigen::MatrixXd q = smoothed_targets(labels, net.classes(), alpha);
    const double loss = -(q.array() * log_p.array()).sum() / batch;

    if (grad != nullptr) {
        const Eigen::MatrixXd dz3 = (log_p.array().exp().matrix() - q) / batch;
        grad->w3 = dz3.transpose() * h;
        grad->b3 = dz3.colwise().sum().transpose();
        const Eigen::MatrixXd da2 = ((dz3 * net.w3).array() * (a2.array() > 0.0).cast<double>()).matrix();
        grad->w2 = da2.transpose() * z1;
        grad->b2 = da2.colwise().sum().transpose();
        const Eigen::MatrixXd dz1 = da2 * net.w2;
        grad->w1 = dz1.transpose() * x;
        grad->b1 = dz1.colwise().sum().transpose();
    }
    return loss;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> rows) const {
    FeatureDataset out;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

Split stratified_split(std::span<const int> labels, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw InvalidInput("validation fraction must lie in [0, 1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    Rng rng(seed);
    Split split;
    for (auto& [label, rows] : by_class) {
        for (std::size_t i = rows.size(); i > 1; --i) {
            std::swap(rows[i - 1], rows[uniform_index(rng, i)]);
        }
        std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
        if (fraction > 0.0 && n_val == 0 && rows.size() >= 2) {
            n_val = 1;
        }
        n_val = std::min(n_val, rows.size() - 1);
        split.validation.insert(split.validation.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        split.train.insert(split.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    return split;
}

Model train(const FeatureDataset& train_set, const FeatureDataset& validation_set, std::size_t classes,
            const TrainingConfig& cfg) {
    if (train_set.size() == 0 || validation_set.size() == 0) {
        throw InvalidInput("train: training and validation splits must both be non-empty");
    }
    if (train_set.x.rows() != static_cast<Eigen::Index>(train_set.size()) ||
        validation_set.x.cols() != train_set.x.cols()) {
        throw InvalidInput("train: feature matrix shape does not match labels");
    }
    if (classes < 2) {
        throw InvalidInput("train: need at least 2 classes");
    }
    std::vector<int> present(train_set.labels);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    if (present.size() < 2) {
        throw InvalidInput("train: training split contains fewer than 2 classes");
    }
    if (cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw InvalidInput("train: batch size and learning rate must be positive");
    }

    Model model;
    model.config = cfg;
    const Eigen::Index d = train_set.x.cols();
    model.feature_mean = train_set.x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = train_set.x.rowwise() - model.feature_mean.transpose();
    model.feature_scale = (centred.array().square().colwise().sum() / static_cast<double>(train_set.size())).sqrt().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(model.feature_scale(j) > 1e-12)) {
            model.feature_scale(j) = 1.0;
        }
    }
    const Eigen::MatrixXd x_train = standardise(train_set.x, model.feature_mean, model.feature_scale);
    const Eigen::MatrixXd x_val = standardise(validation_set.x, model.feature_mean, model.feature_scale);

    Rng rng(cfg.seed);
    Network net = Network::initialise(static_cast<std::size_t>(d), cfg.projection_dim, cfg.hidden_dim, classes, rng);
    Network m1 = Network::zeros_like(net);
    Network m2 = Network::zeros_like(net);
    Network grad = Network::zeros_like(net);
    Network best = net;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<int> batch_labels;
    Eigen::MatrixXd batch_x;
    std::uint64_t step = 0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[uniform_index(rng, i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            batch_x.resize(static_cast<Eigen::Index>(stop - start), d);
            batch_labels.clear();
            for (std::size_t i = start; i < stop; ++i) {
                batch_x.row(static_cast<Eigen::Index>(i - start)) = x_train.row(static_cast<Eigen::Index>(order[i]));
                batch_labels.push_back(train_set.labels[order[i]]);
            }
            const double loss = loss_and_gradient(net, batch_x, batch_labels, cfg.label_smoothing, &grad);
            if (!std::isfinite(loss)) {
                throw TrainingError("training loss diverged", epoch);
            }
            epoch_loss += loss * static_cast<double>(stop - start);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            auto adamw = [&](auto& p, auto& g, auto& m, auto& v) {
                p *= 1.0 - cfg.learning_rate * cfg.weight_decay;
                m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
                v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                p.array() -= cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
            };
            adamw(net.w1, grad.w1, m1.w1, m2.w1);
            adamw(net.b1, grad.b1, m1.b1, m2.b1);
            adamw(net.w2, grad.w2, m1.w2, m2.w2);
            adamw(net.b2, grad.b2, m1.b2, m2.b2);
            adamw(net.w3, grad.w3, m1.w3, m2.w3);
            adamw(net.b3, grad.b3, m1.b3, m2.b3);
        }
        const double val = loss_and_gradient(net, x_val, validation_set.labels, cfg.label_smoothing, nullptr);
        if (!std::isfinite(val)) {
            throw TrainingError("validation loss diverged", epoch);
        }
        model.history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
        model.history.validation_loss.push_back(val);
        model.history.epochs_run = epoch;
        if (val < best_val) {
            best_val = val;
            best = net;
            model.history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            model.history.early_stopped = true;
            break;
        }
    }
    model.net = std::move(best);
    return model;
}

Eigen::MatrixXd predict(const Model& model, const Eigen::MatrixXd& pooled) {
    if (pooled.cols() != static_cast<Eigen::Index>(model.net.input_dim())) {
        throw InvalidInput("predict: feature dimension " + std::to_string(pooled.cols()) + " does not match model (" +
                           std::to_string(model.net.input_dim()) + ")");
    }
    return softmax_rows(model.net.logits(standardise(pooled, model.feature_mean, model.feature_scale)));
}

Eigen::VectorXd predict(const Model& model, const Eigen::VectorXd& pooled) {
    return predict(model, Eigen::MatrixXd(pooled.transpose())).row(0).transpose();
}

void save_model(const Model& model, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.magic("DORFMD01");
    w.u32(kModelVersion);
    w.u64(model.bank.seed);
    w.u64(model.bank.input_length);
    w.u64(model.bank.size());
    const TrainingConfig& c = model.config;
    w.f64(c.learning_rate);
    w.u64(c.batch_size);
    w.f64(c.label_smoothing);
    w.u64(c.max_epochs);
    w.u64(c.patience);
    w.f64(c.weight_decay);
    w.f64(c.beta1);
    w.f64(c.beta2);
    w.f64(c.adam_eps);
    w.f64(c.validation_fraction);
    w.u64(c.projection_dim);
    w.u64(c.hidden_dim);
    w.u64(c.seed);
    w.u64(model.history.best_epoch);
    w.u64(model.history.epochs_run);
    write_matrix(w, model.feature_mean);
    write_matrix(w, model.feature_scale);
    write_matrix(w, model.net.w1);
    write_matrix(w, model.net.b1);
    write_matrix(w, model.net.w2);
    write_matrix(w, model.net.b2);
    write_matrix(w, model.net.w3);
    write_matrix(w, model.net.b3);
    w.save(path);
}

Model load_model(const std::filesystem::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic("DORFMD01");
    const std::uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw DataError(path.string() + ": unsupported model version " + std::to_string(version));
    }
    Model model;
    const std::uint64_t seed = r.u64();
    const std::uint64_t input_length = r.u64();
    const std::uint64_t count = r.u64();
    TrainingConfig& c = model.config;
    c.learning_rate = r.f64();
    c.batch_size = r.u64();
    c.label_smoothing = r.f64();
    c.max_epochs = r.u64();
    c.patience = r.u64();
    c.weight_decay = r.f64();
    c.beta1 = r.f64();
    c.beta2 = r.f64();
    c.adam_eps = r.f64();
    c.validation_fraction = r.f64();
    c.projection_dim = r.u64();
    c.hidden_dim = r.u64();
    c.seed = r.u64();
    model.history.best_epoch = r.u64();
    model.history.epochs_run = r.u64();
    model.feature_mean = read_matrix(r);
    model.feature_scale = read_matrix(r);
    model.net.w1 = read_matrix(r);
    model.net.b1 = read_matrix(r);
    model.net.w2 = read_matrix(r);
    model.net.b2 = read_matrix(r);
    model.net.w3 = read_matrix(r);
    model.net.b3 = read_matrix(r);
    r.expect_end();
    if (count == 0) {
        // Head trained on externally supplied features; no bank attached.
        model.bank.seed = seed;
        model.bank.input_length = input_length;
        return model;
    }
    model.bank = build_kernel_bank(count, input_length, seed);
    if (model.net.w1.cols() != static_cast<Eigen::Index>(model.bank.feature_dim())) {
        throw DataError(path.string() + ": network input does not match the kernel bank");
    }
    return model;
}

} // namespace dorf
