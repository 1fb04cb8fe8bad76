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

#ifndef DORF_RADIANCE_FIELD_HPP
#define DORF_RADIANCE_FIELD_HPP

#include "dorf/factorization.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace dorf {

// Equiangular M x 2M direction grid. Direction (m, n) is stored at row m * 2M + n.
struct SphereGrid {
    std::size_t m_rows = 0;
    std::vector<double> thetas; // (m + 0.5) pi / M
    std::vector<double> phis;   // (n + 0.5) 2 pi / (2M)
    Eigen::MatrixXd directions; // 2M^2 x 3

    std::size_t n_cols() const { return 2 * m_rows; }
    std::size_t size() const { return 2 * m_rows * m_rows; }
    std::size_t index(std::size_t m, std::size_t n) const { return m * n_cols() + n; }
    Eigen::Vector3d direction(std::size_t m, std::size_t n) const {
        return directions.row(static_cast<Eigen::Index>(index(m, n))).transpose();
    }
    // Grid index of -d_mn: (M - 1 - m, (n + M) mod 2M).
    std::size_t antipode(std::size_t m, std::size_t n) const {
        return index(m_rows - 1 - m, (n + m_rows) % n_cols());
    }
};

SphereGrid sphere_grid(std::size_t m_rows);

// P(s, m, n) = v(s) . d_mn, channels flattened in grid order.
struct DoRF {
    Eigen::MatrixXd p; // T' x 2M^2
    std::size_t m_rows = 0;
    std::uint32_t antenna_id = 0;

    std::size_t steps() const { return static_cast<std::size_t>(p.rows()); }
    double at(std::size_t s, std::size_t m, std::size_t n) const {
        return p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m * 2 * m_rows + n));
    }
};

DoRF project_dorf(const VelocityTrack& v, const SphereGrid& grid, std::uint32_t antenna_id = 0);

struct ChannelTag {
    std::uint32_t antenna = 0;
    std::uint32_t m = 0;
    std::uint32_t n = 0;
};

// Channel-axis concatenation of several antennas' fields.
struct MergedDoRF {
    Eigen::MatrixXd x; // T' x C
    std::size_t m_rows = 0;
    std::vector<ChannelTag> channels;

    std::size_t steps() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t channel_count() const { return static_cast<std::size_t>(x.cols()); }
};

enum class MergePolicy { Concatenate };

// Throws InvalidInput on an empty list, differing T' or differing grids.
MergedDoRF merge_dorfs(std::span<const DoRF> fields, MergePolicy policy = MergePolicy::Concatenate);

// Least-squares velocity from one time slice of a field (recovery check).
Eigen::Vector3d recover_velocity(const DoRF& field, const SphereGrid& grid, std::size_t s);

} // namespace dorf

#endif
