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

#include "dorf/radiance_field.hpp"

#include "dorf/error.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <string>

namespace dorf {

SphereGrid sphere_grid(std::size_t m_rows) {
    if (m_rows == 0) {
        throw InvalidInput("sphere_grid: M must be >= 1");
    }
    SphereGrid grid;
    grid.m_rows = m_rows;
    const double big_m = static_cast<double>(m_rows);
    grid.thetas.resize(m_rows);
    grid.phis.resize(2 * m_rows);
    for (std::size_t m = 0; m < m_rows; ++m) {
        grid.thetas[m] = (static_cast<double>(m) + 0.5) * std::numbers::pi / big_m;
    }
    for (std::size_t n = 0; n < 2 * m_rows; ++n) {
        grid.phis[n] = (static_cast<double>(n) + 0.5) * 2.0 * std::numbers::pi / (2.0 * big_m);
    }
    grid.directions.resize(static_cast<Eigen::Index>(grid.size()), 3);
    for (std::size_t m = 0; m < m_rows; ++m) {
        const double st = std::sin(grid.thetas[m]);
        const double ct = std::cos(grid.thetas[m]);
        for (std::size_t n = 0; n < 2 * m_rows; ++n) {
            const auto row = static_cast<Eigen::Index>(grid.index(m, n));
            grid.directions(row, 0) = st * std::cos(grid.phis[n]);
            grid.directions(row, 1) = st * std::sin(grid.phis[n]);
            grid.directions(row, 2) = ct;
        }
    }
    return grid;
}

DoRF project_dorf(const VelocityTrack& v, const SphereGrid& grid, std::uint32_t antenna_id) {
    if (v.v.cols() != 3) {
        throw InvalidInput("project_dorf: velocity track must have 3 columns");
    }
    if (grid.directions.rows() != static_cast<Eigen::Index>(grid.size()) || grid.directions.cols() != 3) {
        throw InvalidInput("project_dorf: malformed sphere grid");
    }
    DoRF out;
    out.m_rows = grid.m_rows;
    out.antenna_id = antenna_id;
    out.p.resize(v.v.rows(), static_cast<Eigen::Index>(grid.size()));
    const Eigen::MatrixXd& d = grid.directions;
    // Plain three-term dot products keep the summation order fixed.
    for (Eigen::Index s = 0; s < v.v.rows(); ++s) {
        const double vx = v.v(s, 0);
        const double vy = v.v(s, 1);
        const double vz = v.v(s, 2);
        for (Eigen::Index k = 0; k < d.rows(); ++k) {
            out.p(s, k) = vx * d(k, 0) + vy * d(k, 1) + vz * d(k, 2);
        }
    }
    return out;
}

MergedDoRF merge_dorfs(std::span<const DoRF> fields, MergePolicy policy) {
    if (fields.empty()) {
        throw InvalidInput("merge_dorfs: no fields to merge");
    }
    (void)policy; // concatenation is the only policy
    const DoRF& first = fields.front();
    Eigen::Index total = 0;
    for (const DoRF& f : fields) {
        if (f.p.rows() != first.p.rows()) {
            throw InvalidInput("merge_dorfs: time steps differ between antennas (" + std::to_string(first.p.rows()) +
                               " vs " + std::to_string(f.p.rows()) + ")");
        }
        if (f.m_rows != first.m_rows) {
            throw InvalidInput("merge_dorfs: grid sizes differ between antennas (M=" + std::to_string(first.m_rows) +
                               " vs M=" + std::to_string(f.m_rows) + ")");
        }
        total += f.p.cols();
    }
    MergedDoRF out;
    out.m_rows = first.m_rows;
    out.x.resize(first.p.rows(), total);
    Eigen::Index col = 0;
    const std::size_t n_cols = 2 * first.m_rows;
    for (const DoRF& f : fields) {
        out.x.middleCols(col, f.p.cols()) = f.p;
        for (Eigen::Index k = 0; k < f.p.cols(); ++k) {
            const auto kk = static_cast<std::size_t>(k);
            out.channels.push_back({f.antenna_id, static_cast<std::uint32_t>(kk / n_cols),
                                    static_cast<std::uint32_t>(kk % n_cols)});
        }
        col += f.p.cols();
    }
    return out;
}

Eigen::Vector3d recover_velocity(const DoRF& field, const SphereGrid& grid, std::size_t s) {
    if (s >= field.steps()) {
        throw InvalidInput("recover_velocity: time index out of range");
    }
    const Eigen::VectorXd slice = field.p.row(static_cast<Eigen::Index>(s)).transpose();
    return grid.directions.colPivHouseholderQr().solve(slice);
}

} // namespace dorf
