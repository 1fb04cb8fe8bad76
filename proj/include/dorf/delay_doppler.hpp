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

// Delay-Doppler decomposition: IDFT of each CSI frame into delay bins, then a
// windowed periodogram per bin whose peak gives one radial velocity per window.

#ifndef DORF_DELAY_DOPPLER_HPP
#define DORF_DELAY_DOPPLER_HPP

#include "dorf/csi.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dorf {

inline constexpr double kSpeedOfLight = 299792458.0;

inline double wavelength(double carrier_hz) { return kSpeedOfLight / carrier_hz; }

// Delay profile of one antenna: h(s, tau_i) for every frame s and bin i.
struct DelayProfileSeries {
    Eigen::MatrixXcd h;          // frames x bins
    std::vector<double> tau;     // bin centres, seconds
    std::size_t antenna = 0;
};

enum class Taper { Hann, Rectangular };

struct SpectrogramConfig {
    std::size_t window_len = 128;
    std::size_t hop = 16;
    Taper window = Taper::Hann;
    std::size_t zero_pad_factor = 4;
    double dc_guard_hz = 0.5;

    // Throws InvalidInput unless 1 <= hop <= window_len <= frames and zero_pad_factor >= 1.
    void validate(std::size_t frames) const;
    std::size_t fft_len() const { return window_len * zero_pad_factor; }
};

// Which delay bins feed the Doppler matrix.
struct BinSelection {
    enum class Mode { TopPower, All };
    Mode mode = Mode::TopPower;
    std::size_t count = 20; // per antenna, TopPower only

    static BinSelection all() { return {Mode::All, 0}; }
    static BinSelection top(std::size_t n) { return {Mode::TopPower, n}; }
};

struct DopplerPeak {
    double frequency_hz = 0.0;
    bool silent = false;
};

// Radial velocity projections, one column per retained delay bin.
struct DopplerMatrix {
    Eigen::MatrixXd v_r;                    // windows x columns, m/s
    std::vector<double> window_times;       // window centres, seconds
    double lambda_m = 0.0;                  // carrier wavelength; 0 when not derived from CSI
    double sample_rate_hz = 0.0;            // 0 when unknown (skips the Nyquist check)
    std::vector<std::uint32_t> column_antenna;
    std::vector<std::uint32_t> column_bin;
    std::size_t silent_cells = 0;

    std::size_t windows() const { return static_cast<std::size_t>(v_r.rows()); }
    std::size_t columns() const { return static_cast<std::size_t>(v_r.cols()); }
    // Finite entries, |v_r| <= lambda * rate / 2 when both are known, consistent provenance sizes.
    void validate() const;
};

// tau_i = i / (N * delta_f), i = 0..N-1.
std::vector<double> delay_bin_times(std::size_t n_bins, double delta_f);

// N-point IDFT with the +j kernel and 1/N scaling: h_i = (1/N) sum_n H_n e^{+j 2 pi n i / N}.
std::vector<cdouble> inverse_dft(std::span<const cdouble> frame);

DelayProfileSeries delay_profile(const SanitizedTrial& trial, std::size_t antenna);
std::vector<DelayProfileSeries> delay_profile(const SanitizedTrial& trial);

// Peak of the mean-removed, tapered, zero-padded periodogram of the first
// window_len samples. Bins with |f| < dc_guard_hz are excluded; ties go to the
// smaller |f|, then to the positive frequency.
DopplerPeak doppler_peak(std::span<const cdouble> series, const SpectrogramConfig& cfg, double sample_rate_hz);

// floor((frames - window_len) / hop) + 1.
// floor((T - window_len) / hop) + 1; throws InvalidInput when the config does not fit T.
std::size_t window_count(std::size_t frames, const SpectrogramConfig& cfg);

// Per antenna (all antennas, or just `antenna` if given): delay profile,
// bin selection by time-averaged AC power, then v_r = lambda * f_peak for each
// sliding window. Columns are grouped by antenna, ascending bin index within.
DopplerMatrix radial_velocity_matrix(const SanitizedTrial& trial, const SpectrogramConfig& cfg,
                                     const BinSelection& selection = {},
                                     std::optional<std::size_t> antenna = std::nullopt);

// Splits a multi-antenna matrix into one matrix per antenna (ascending antenna id).
std::vector<DopplerMatrix> split_by_antenna(const DopplerMatrix& merged);

std::string to_string(Taper taper);
Taper taper_from_string(const std::string& name);

} // namespace dorf

#endif
