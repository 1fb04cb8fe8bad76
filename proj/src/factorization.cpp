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

#include "dorf/factorization.hpp"

#include "dorf/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cassert>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace dorf {

namespace {

// Rows whose pre-normalization norm falls below this fraction of the column
// scale are treated as zero.
constexpr double kZeroNormRel = 1e-12;

// A symmetric PSD 3x3 system is singular when its smallest eigenvalue is
// negligible against the largest.
bool normal_matrix_singular(const Eigen::Matrix3d& g) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    return !std::isfinite(lo) || !std::isfinite(hi) || hi <= 0.0 || lo <= 1e-13 * hi;
}

Eigen::LLT<Eigen::Matrix3d> factor_normal_matrix(const Eigen::Matrix3d& g, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (normal_matrix_singular(g)) {
        std::ostringstream msg;
        msg << what << " is singular (eigenvalues " << lo << " .. " << hi
            << "); use a positive ridge weight or non-degenerate factors";
        throw NumericError(msg.str());
    }
    Eigen::LLT<Eigen::Matrix3d> llt(g);
    if (llt.info() != Eigen::Success) {
        throw NumericError(std::string(what) + " is not positive definite");
    }
    return llt;
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

void DirectionSet::validate(double tol) const {
    if (r.cols() != 3) {
        throw InvalidInput("DirectionSet must have 3 columns");
    }
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        if (std::abs(r.row(i).norm() - 1.0) > tol) {
            throw InvalidInput("direction " + std::to_string(i) + " is not unit norm");
        }
    }
}

void FactorizationConfig::validate() const {
    if (!(lambda >= 0.0) || !(gamma >= 0.0) || !std::isfinite(lambda) || !std::isfinite(gamma)) {
        throw InvalidInput("factorization ridge weights must be finite and >= 0");
    }
    if (!(epsilon > 0.0)) {
        throw InvalidInput("factorization epsilon must be > 0");
    }
    if (max_iters < 1) {
        throw InvalidInput("factorization max_iters must be >= 1");
    }
    if (dtw_band && *dtw_band < 0) {
        throw InvalidInput("dtw_band must be >= 0");
    }
}

int FactorizationConfig::band_for(std::size_t steps) const {
    if (dtw_band) {
        return *dtw_band;
    }
    return static_cast<int>(std::ceil(0.1 * static_cast<double>(steps)));
}

std::string to_string(StopReason reason) {
    return reason == StopReason::Converged ? "converged" : "max_iterations";
}

std::string FitReport::to_text() const {
    std::ostringstream out;
    out << "iterations = " << iterations << '\n';
    out << "stop_reason = " << to_string(stop_reason) << '\n';
    out << "final_loss = " << (losses.empty() ? "nan" : fmt(losses.back())) << '\n';
    out << "relative_residual = " << fmt(relative_residual) << '\n';
    out << "residual_rms = " << fmt(residual_rms) << '\n';
    out << "direction_fallbacks = " << direction_fallbacks << '\n';
    out << "losses = ";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << (i ? "," : "") << fmt(losses[i]);
    }
    out << '\n';
    for (const auto& w : warnings) {
        out << "warning = " << w << '\n';
    }
    return out.str();
}

VelocityTrack velocity_update(const DopplerMatrix& v_r, const DirectionSet& r, double lambda) {
    if (r.r.cols() != 3 || r.r.rows() != v_r.v_r.cols()) {
        throw InvalidInput("velocity_update: direction count " + std::to_string(r.r.rows()) +
                           " does not match Doppler columns " + std::to_string(v_r.v_r.cols()));
    }
    const Eigen::Matrix3d g = r.r.transpose() * r.r + lambda * Eigen::Matrix3d::Identity();
    const auto llt = factor_normal_matrix(g, "R^T R + lambda I");
    VelocityTrack out;
    out.v = llt.solve(r.r.transpose() * v_r.v_r.transpose()).transpose();
    out.times = v_r.window_times;
    return out;
}

DirectionSet random_directions(std::size_t n, Rng& rng) {
    DirectionSet out;
    out.r.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
        out.r.row(static_cast<Eigen::Index>(i)) = random_unit_vector(rng).transpose();
    }
    return out;
}

DirectionUpdate direction_update(const DopplerMatrix& v_r, const VelocityTrack& v, double gamma,
                                 const DirectionSet& previous, Rng& rng) {
    if (v.v.cols() != 3 || v.v.rows() != v_r.v_r.rows()) {
        throw InvalidInput("direction_update: velocity track has " + std::to_string(v.v.rows()) +
                           " steps but the Doppler matrix has " + std::to_string(v_r.v_r.rows()));
    }
    const Eigen::Index n = v_r.v_r.cols();
    DirectionUpdate out;
    if (v.v.isZero(0.0)) {
        if (previous.r.rows() == n && previous.r.cols() == 3) {
            out.directions = previous;
        } else {
            out.directions = random_directions(static_cast<std::size_t>(n), rng);
            out.fallbacks = static_cast<std::size_t>(n);
        }
        return out;
    }

    const Eigen::Matrix3d g = v.v.transpose() * v.v + gamma * Eigen::Matrix3d::Identity();
    const Eigen::MatrixXd rhs = v.v.transpose() * v_r.v_r;
    Eigen::MatrixXd raw; // N x 3
    if (normal_matrix_singular(g)) {
        // Rank-deficient V (e.g. motion confined to a line): minimum-norm least squares.
        raw = Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix3d>(g).solve(rhs).transpose();
    } else {
        raw = g.llt().solve(rhs).transpose();
    }

    const double v_norm = v.v.norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = raw.row(i).norm();
        const double scale = v_r.v_r.col(i).norm() / v_norm;
        if (!std::isfinite(norm) || norm == 0.0 || norm <= kZeroNormRel * scale) {
            raw.row(i) = random_unit_vector(rng).transpose();
            ++out.fallbacks;
        } else {
            raw.row(i) /= norm;
        }
    }
    out.directions.r = std::move(raw);
    return out;
}

Alignment procrustes_align(const VelocityTrack& v, const DirectionSet& r, const VelocityTrack& reference) {
    if (v.v.rows() != reference.v.rows() || v.v.cols() != 3 || reference.v.cols() != 3) {
        throw InvalidInput("procrustes_align: track and reference shapes differ");
    }
    if (r.r.cols() != 3) {
        throw InvalidInput("procrustes_align: directions must have 3 columns");
    }
    const Eigen::Matrix3d m = v.v.transpose() * reference.v;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d& u = svd.matrixU();
    const Eigen::Matrix3d& w = svd.matrixV();
    Eigen::Vector3d d(1.0, 1.0, 1.0);
    if ((u * w.transpose()).determinant() < 0.0) {
        // Flip the factor paired with the smallest singular value.
        d(2) = -1.0;
    }
    Alignment out;
    out.rotation = u * d.asDiagonal() * w.transpose();
    out.velocity.v = v.v * out.rotation;
    out.velocity.times = v.times;
    out.directions.r = r.r * out.rotation;
    return out;
}

DtwResult dtw_distance(std::span<const double> a, std::span<const double> b, std::optional<int> band) {
    if (band && *band < 0) {
        throw InvalidInput("DTW band must be >= 0");
    }
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0 && m == 0) {
        return {};
    }
    if (n == 0 || m == 0) {
        throw InvalidInput("DTW of an empty and a non-empty series is undefined");
    }
    const std::size_t diff = n > m ? n - m : m - n;
    const std::size_t w = band ? std::max(static_cast<std::size_t>(*band), diff) : std::max(n, m);

    struct Cell {
        double cost;
        std::size_t len;
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<Cell> prev(m + 1, Cell{inf, 0});
    std::vector<Cell> cur(m + 1, Cell{inf, 0});
    prev[0] = {0.0, 0};
    auto less = [](const Cell& x, const Cell& y) { return x.cost < y.cost || (x.cost == y.cost && x.len < y.len); };

    for (std::size_t i = 1; i <= n; ++i) {
        std::fill(cur.begin(), cur.end(), Cell{inf, 0});
        const std::size_t lo = i > w ? i - w : 1;
        const std::size_t hi = std::min(m, i + w);
        for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
            Cell best = prev[j - 1];
            if (less(prev[j], best)) {
                best = prev[j];
            }
            if (less(cur[j - 1], best)) {
                best = cur[j - 1];
            }
            if (best.cost == inf) {
                continue;
            }
            cur[j] = {best.cost + std::abs(a[i - 1] - b[j - 1]), best.len + 1};
        }
        std::swap(prev, cur);
    }
    return {prev[m].cost, prev[m].len};
}

double dtw_loss(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted, std::optional<int> band) {
    if (band && *band < 0) {
        throw InvalidInput("DTW band must be >= 0");
    }
    if (observed.cols() != predicted.cols()) {
        throw InvalidInput("dtw_loss: column counts differ (" + std::to_string(observed.cols()) + " vs " +
                           std::to_string(predicted.cols()) + ")");
    }
    if (observed.cols() == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < observed.cols(); ++c) {
        const Eigen::VectorXd x = observed.col(c);
        const Eigen::VectorXd y = predicted.col(c);
        const DtwResult d = dtw_distance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                                         std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), band);
        total += d.path_length ? d.cost / static_cast<double>(d.path_length) : 0.0;
    }
    return total / static_cast<double>(observed.cols());
}

double dtw_loss(const DopplerMatrix& observed, const Eigen::MatrixXd& predicted, std::optional<int> band) {
    return dtw_loss(observed.v_r, predicted, band);
}

double ridge_objective(const Eigen::MatrixXd& v_r, const Eigen::MatrixXd& v, const Eigen::MatrixXd& r,
                       double lambda, double gamma) {
    return 0.5 * (v_r - v * r.transpose()).squaredNorm() + 0.5 * lambda * v.squaredNorm() +
           0.5 * gamma * r.squaredNorm();
}

Factorization factorize(const DopplerMatrix& v_r, const FactorizationConfig& cfg) {
    cfg.validate();
    if (v_r.v_r.rows() < 1 || v_r.v_r.cols() < 1) {
        throw InvalidInput("factorize: empty Doppler matrix");
    }
    if (!v_r.v_r.allFinite()) {
        throw InvalidInput("factorize: Doppler matrix has non-finite entries");
    }
    const std::size_t steps = static_cast<std::size_t>(v_r.v_r.rows());
    const int band = cfg.band_for(steps);

    Rng rng(cfg.seed);
    Factorization out;
    out.directions = random_directions(static_cast<std::size_t>(v_r.v_r.cols()), rng);
    out.velocity.v = Eigen::MatrixXd::Zero(v_r.v_r.rows(), 3);
    out.velocity.times = v_r.window_times;

    FitReport& report = out.report;
    VelocityTrack previous;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
#ifndef NDEBUG
        const double before =
            ridge_objective(v_r.v_r, out.velocity.v, out.directions.r, cfg.lambda, cfg.gamma);
#endif
        out.velocity = velocity_update(v_r, out.directions, cfg.lambda);
#ifndef NDEBUG
        const double after = ridge_objective(v_r.v_r, out.velocity.v, out.directions.r, cfg.lambda, cfg.gamma);
        assert(after <= before + 1e-9 * (1.0 + std::abs(before)));
#endif
        DirectionUpdate upd = direction_update(v_r, out.velocity, cfg.gamma, out.directions, rng);
        out.directions = std::move(upd.directions);
        if (upd.fallbacks > 0) {
            report.direction_fallbacks += upd.fallbacks;
            report.warnings.push_back("iteration " + std::to_string(it) + ": " + std::to_string(upd.fallbacks) +
                                      " direction(s) had zero norm and were redrawn");
        }
        if (it > 1) {
            Alignment aligned = procrustes_align(out.velocity, out.directions, previous);
            out.velocity = std::move(aligned.velocity);
            out.directions = std::move(aligned.directions);
        }
        const Eigen::MatrixXd predicted = out.velocity.v * out.directions.r.transpose();
        const double loss = dtw_loss(v_r.v_r, predicted, band);
        report.losses.push_back(loss);
        report.objectives.push_back(
            ridge_objective(v_r.v_r, out.velocity.v, out.directions.r, cfg.lambda, cfg.gamma));
        report.iterations = it;
        previous = out.velocity;
        if (loss < cfg.epsilon) {
            report.stop_reason = StopReason::Converged;
            break;
        }
    }

    const Eigen::MatrixXd residual = v_r.v_r - out.velocity.v * out.directions.r.transpose();
    const double data_norm = v_r.v_r.norm();
    report.relative_residual = data_norm > 0.0 ? residual.norm() / data_norm : 0.0;
    report.residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
    return out;
}

} // namespace dorf
