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

// Binary containers (all little-endian) and CSV import/export.
//
//   DORFCSI1  u32 T, u32 N_sub, u32 A, f64 rate, f64 f_c, f64 df, u32 label, u32 subject,
//             then T*N_sub*A (f32 re, f32 im), time-major, then subcarrier, then antenna.
//   DORFVR01  u32 T', u32 N, f64 lambda, then T'*N f32 row-major.
//   DORFVF01  u32 T', u32 N, then V (T'*3 f32 row-major), then R (N*3 f32 row-major).
//   DORFPF01  u32 T', u32 M, u32 antennas, then T'*antennas*M*2M f32 ordered [s][antenna][m][n].

#ifndef DORF_IO_HPP
#define DORF_IO_HPP

#include "dorf/csi.hpp"
#include "dorf/delay_doppler.hpp"
#include "dorf/factorization.hpp"
#include "dorf/radiance_field.hpp"

#include <filesystem>
#include <istream>

namespace dorf {

void write_csi(const std::filesystem::path& path, const CsiTrial& trial);
CsiTrial read_csi(const std::filesystem::path& path);

struct CsvImportOptions {
    std::size_t subcarriers = 52;
    std::size_t antennas = 3;
    CsiMetadata metadata;
};

// One row per frame; columns (re, im) per subcarrier, antennas fastest:
// re(n0,a0), im(n0,a0), re(n0,a1), ... Blank lines and '#' comments are
// skipped; a non-numeric first row is treated as a header.
CsiTrial import_csi_csv(std::istream& in, const CsvImportOptions& opts);
CsiTrial import_csi_csv(const std::filesystem::path& path, const CsvImportOptions& opts);

void write_doppler(const std::filesystem::path& path, const DopplerMatrix& m);
DopplerMatrix read_doppler(const std::filesystem::path& path);
void write_doppler_csv(const std::filesystem::path& path, const DopplerMatrix& m);

void write_factorization(const std::filesystem::path& path, const VelocityTrack& v, const DirectionSet& r);
std::pair<VelocityTrack, DirectionSet> read_factorization(const std::filesystem::path& path);
void write_velocity_csv(const std::filesystem::path& path, const VelocityTrack& v);
void write_directions_csv(const std::filesystem::path& path, const DirectionSet& r);

void write_dorf(const std::filesystem::path& path, const MergedDoRF& field);
MergedDoRF read_dorf(const std::filesystem::path& path);
// Time series of the selected channels, one column each.
void write_dorf_csv(const std::filesystem::path& path, const MergedDoRF& field);

// Text file helpers.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

} // namespace dorf

#endif
