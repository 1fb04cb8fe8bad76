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

// Rank-3 factorization V_r ~ V R^T with unit-norm rows of R, solved by
// alternating ridge least squares, Procrustes gauge fixing between iterations
// and a DTW-based stopping loss.

#ifndef DORF_FACTORIZATION_HPP
#define DORF_FACTORIZATION_HPP

#include "dorf/delay_doppler.hpp"
#include "dorf/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dorf {

// T' x 3 velocity track, m/s.
struct VelocityTrack {
    Eigen::MatrixXd v;
    std::vector<double> times;

    std::size_t steps() const { return static_cast<std::size_t>(v.rows()); }
};

// N x 3 unit directions.
struct DirectionSet {
    Eigen::MatrixXd r;

    std::size_t size() const { return static_cast<std::size_t>(r.rows()); }
    // Throws InvalidInput if any row deviates from unit norm by more than tol.
    void validate(double tol = 1e-9) const;
};

struct FactorizationConfig {
    double lambda = 1e-3;    // ridge weight, velocity update
    double gamma = 0.01;     // ridge weight, direction update
    double epsilon = 0.01;   // DTW loss stopping threshold
    std::size_t max_iters = 100;
    std::uint64_t seed = 0;
    std::optional<int> dtw_band; // Sakoe-Chiba half-width; default ceil(0.1 * T')

    void validate() const;
    int band_for(std::size_t steps) const;
};

enum class StopReason { Converged, MaxIterations };

struct FitReport {
    std::vector<double> losses;       // DTW loss per iteration
    std::vector<double> objectives;   // ridge objective per iteration (after the direction update)
    std::size_t iterations = 0;
    StopReason stop_reason = StopReason::MaxIterations;
    std::size_t direction_fallbacks = 0;
    double relative_residual = 0.0;   // ||V_r - V R^T||_F / ||V_r||_F (0 when V_r is zero)
    double residual_rms = 0.0;
    std::vector<std::string> warnings;

    // key = value lines.
    std::string to_text() const;
};

struct Factorization {
    VelocityTrack velocity;
    DirectionSet directions;
    FitReport report;
};

// v(s) = (R^T R + lambda I)^-1 R^T V_r(s,:)^T for every row. Throws NumericError
// when the 3x3 system is singular.
VelocityTrack velocity_update(const DopplerMatrix& v_r, const DirectionSet& r, double lambda);

struct DirectionUpdate {
    DirectionSet directions;
    std::size_t fallbacks = 0; // rows replaced by a fresh random unit vector
};

// r_i = (V^T V + gamma I)^-1 V^T V_r(:,i), then normalized (minimum-norm
// solution when the system is singular). Rows whose
// pre-normalization vector vanishes are redrawn from rng. An all-zero velocity
// track carries no direction information, so `previous` is returned as is.
DirectionUpdate direction_update(const DopplerMatrix& v_r, const VelocityTrack& v, double gamma,
                                 const DirectionSet& previous, Rng& rng);

struct Alignment {
    VelocityTrack velocity;
    DirectionSet directions;
    Eigen::Matrix3d rotation; // Q with det(Q) = +1
};

// Rotation Q minimising ||V Q - reference||_F; returns (V Q, R Q, Q).
Alignment procrustes_align(const VelocityTrack& v, const DirectionSet& r, const VelocityTrack& reference);

struct DtwResult {
    double cost = 0.0;
    std::size_t path_length = 0;
};

// Banded DTW with |a - b| local cost. band = nullopt means unconstrained;
// for unequal lengths the band is widened to |len(a) - len(b)|.
DtwResult dtw_distance(std::span<const double> a, std::span<const double> b, std::optional<int> band);

// Mean over columns of DTW cost / warping-path length. Throws InvalidInput on
// mismatched column counts or a negative band.
double dtw_loss(const Eigen::MatrixXd& observed, const Eigen::MatrixXd& predicted, std::optional<int> band);
double dtw_loss(const DopplerMatrix& observed, const Eigen::MatrixXd& predicted, std::optional<int> band);

// 1/2 ||V_r - V R^T||^2 + lambda/2 sum ||v||^2 + gamma/2 sum ||r||^2, the
// objective whose exact minimisers are the two ridge updates.
double ridge_objective(const Eigen::MatrixXd& v_r, const Eigen::MatrixXd& v, const Eigen::MatrixXd& r,
                       double lambda, double gamma);

// Seeded random unit rows.
DirectionSet random_directions(std::size_t n, Rng& rng);

Factorization factorize(const DopplerMatrix& v_r, const FactorizationConfig& cfg);

std::string to_string(StopReason reason);

} // namespace dorf

#endif
