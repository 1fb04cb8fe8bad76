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

#include "dorf/delay_doppler.hpp"

#include "dorf/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dorf {

void SpectrogramConfig::validate(std::size_t frames) const {
    if (hop < 1 || hop > window_len || window_len > frames) {
        throw InvalidInput("spectrogram config requires 1 <= hop <= window_len <= T (hop=" + std::to_string(hop) +
                           ", window_len=" + std::to_string(window_len) + ", T=" + std::to_string(frames) + ")");
    }
    if (zero_pad_factor < 1) {
        throw InvalidInput("zero_pad_factor must be >= 1");
    }
    if (!(dc_guard_hz >= 0.0) || !std::isfinite(dc_guard_hz)) {
        throw InvalidInput("dc_guard_hz must be finite and >= 0");
    }
}

void DopplerMatrix::validate() const {
    if (window_times.size() != windows()) {
        throw InvalidInput("DopplerMatrix: window_times length does not match row count");
    }
    if (column_antenna.size() != columns() || column_bin.size() != columns()) {
        throw InvalidInput("DopplerMatrix: column provenance does not match column count");
    }
    if (!v_r.allFinite()) {
        throw InvalidInput("DopplerMatrix: non-finite radial velocity");
    }
    if (lambda_m > 0.0 && sample_rate_hz > 0.0 && v_r.size() > 0) {
        const double bound = lambda_m * sample_rate_hz / 2.0;
        if (v_r.cwiseAbs().maxCoeff() > bound * (1.0 + 1e-12)) {
            throw InvalidInput("DopplerMatrix: |v_r| exceeds the Nyquist bound lambda * rate / 2");
        }
    }
}

std::vector<double> delay_bin_times(std::size_t n_bins, double delta_f) {
    if (n_bins < 1 || !(delta_f > 0.0) || !std::isfinite(delta_f)) {
        throw InvalidInput("delay_bin_times requires N >= 1 and delta_f > 0");
    }
    std::vector<double> tau(n_bins);
    const double denom = static_cast<double>(n_bins) * delta_f;
    for (std::size_t i = 0; i < n_bins; ++i) {
        tau[i] = static_cast<double>(i) / denom;
    }
    return tau;
}

std::vector<cdouble> inverse_dft(std::span<const cdouble> frame) {
    std::vector<cdouble> in(frame.begin(), frame.end());
    std::vector<cdouble> out;
    Eigen::FFT<double> fft;
    fft.inv(out, in); // scaled by 1/N
    return out;
}

DelayProfileSeries delay_profile(const SanitizedTrial& trial, std::size_t antenna) {
    if (antenna >= trial.antennas()) {
        throw InvalidInput("delay_profile: antenna " + std::to_string(antenna) + " out of range");
    }
    const std::size_t frames = trial.frames();
    const std::size_t n = trial.subcarriers();
    DelayProfileSeries out;
    out.antenna = antenna;
    out.tau = delay_bin_times(n, trial.metadata().subcarrier_spacing_hz);
    out.h.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(n));

    Eigen::FFT<double> fft;
    std::vector<cdouble> in(n);
    std::vector<cdouble> bins;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t k = 0; k < n; ++k) {
            in[k] = trial.value(t, k, antenna);
        }
        fft.inv(bins, in);
        for (std::size_t i = 0; i < n; ++i) {
            out.h(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = bins[i];
        }
    }
    return out;
}

std::vector<DelayProfileSeries> delay_profile(const SanitizedTrial& trial) {
    std::vector<DelayProfileSeries> out;
    out.reserve(trial.antennas());
    for (std::size_t a = 0; a < trial.antennas(); ++a) {
        out.push_back(delay_profile(trial, a));
    }
    return out;
}

namespace {

std::vector<double> make_taper(Taper taper, std::size_t len) {
    std::vector<double> w(len, 1.0);
    if (taper == Taper::Hann && len > 1) {
        // Symmetric Hann, so time reversal maps the periodogram onto its mirror image.
        for (std::size_t k = 0; k < len; ++k) {
            w[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len - 1));
        }
    }
    return w;
}

constexpr double kSilentRelTol = 1e-10;

// Reusable state for many periodograms of the same geometry.
class PeakFinder {
public:
    PeakFinder(const SpectrogramConfig& cfg, double sample_rate_hz)
        : cfg_(cfg), rate_(sample_rate_hz), taper_(make_taper(cfg.window, cfg.window_len)),
          buf_(cfg.fft_len()) {}

    DopplerPeak operator()(std::span<const cdouble> window) {
        const std::size_t len = cfg_.window_len;
        const std::size_t nfft = cfg_.fft_len();
        cdouble mean{};
        for (std::size_t k = 0; k < len; ++k) {
            mean += window[k];
        }
        mean /= static_cast<double>(len);

        // A window is silent when what is left after mean removal is rounding
        // residue of the mean itself.
        double peak_in = 0.0;
        double peak_ac = 0.0;
        std::fill(buf_.begin(), buf_.end(), cdouble{});
        for (std::size_t k = 0; k < len; ++k) {
            const cdouble x = window[k] - mean;
            peak_in = std::max(peak_in, std::abs(window[k]));
            peak_ac = std::max(peak_ac, std::abs(x));
            buf_[k] = x * taper_[k];
        }
        if (peak_ac <= kSilentRelTol * peak_in) {
            return {0.0, true};
        }
        fft_.fwd(spec_, buf_);

        const double df = rate_ / static_cast<double>(nfft);
        double best_power = -1.0;
        double best_f = 0.0;
        for (std::size_t k = 0; k < nfft; ++k) {
            // Signed axis: [0, nfft/2) positive, [nfft/2, nfft) negative (Nyquist counted as -rate/2).
            const double f = k < nfft / 2 + nfft % 2 ? static_cast<double>(k) * df
                                                     : (static_cast<double>(k) - static_cast<double>(nfft)) * df;
            if (std::abs(f) < cfg_.dc_guard_hz) {
                continue;
            }
            const double p = std::norm(spec_[k]);
            bool better = p > best_power;
            if (p == best_power) {
                if (std::abs(f) < std::abs(best_f)) {
                    better = true;
                } else if (std::abs(f) == std::abs(best_f) && f > best_f) {
                    better = true;
                }
            }
            if (better) {
                best_power = p;
                best_f = f;
            }
        }
        if (best_power <= 0.0) {
            return {0.0, true};
        }
        return {best_f, false};
    }

private:
    SpectrogramConfig cfg_;
    double rate_;
    std::vector<double> taper_;
    std::vector<cdouble> buf_;
    std::vector<cdouble> spec_;
    Eigen::FFT<double> fft_;
};

} // namespace

DopplerPeak doppler_peak(std::span<const cdouble> series, const SpectrogramConfig& cfg, double sample_rate_hz) {
    cfg.validate(series.size());
    if (!(sample_rate_hz > 0.0)) {
        throw InvalidInput("doppler_peak: sample rate must be positive");
    }
    PeakFinder finder(cfg, sample_rate_hz);
    return finder(series.first(cfg.window_len));
}

std::size_t window_count(std::size_t frames, const SpectrogramConfig& cfg) {
    cfg.validate(frames);
    return (frames - cfg.window_len) / cfg.hop + 1;
}

DopplerMatrix radial_velocity_matrix(const SanitizedTrial& trial, const SpectrogramConfig& cfg,
                                     const BinSelection& selection, std::optional<std::size_t> antenna) {
    if (trial.frames() < cfg.window_len) {
        throw InvalidInput("trial has " + std::to_string(trial.frames()) + " frames, shorter than one window (" +
                           std::to_string(cfg.window_len) + ")");
    }
    cfg.validate(trial.frames());
    if (antenna && *antenna >= trial.antennas()) {
        throw InvalidInput("radial_velocity_matrix: antenna " + std::to_string(*antenna) + " out of range");
    }

    const CsiMetadata& meta = trial.metadata();
    const double rate = meta.sample_rate_hz;
    const double lambda = wavelength(meta.carrier_hz);
    const std::size_t frames = trial.frames();
    const std::size_t n_bins = trial.subcarriers();
    const std::size_t n_windows = window_count(frames, cfg);

    std::vector<std::size_t> antennas;
    if (antenna) {
        antennas.push_back(*antenna);
    } else {
        antennas.resize(trial.antennas());
        std::iota(antennas.begin(), antennas.end(), std::size_t{0});
    }

    DopplerMatrix out;
    out.lambda_m = lambda;
    out.sample_rate_hz = rate;
    out.window_times.resize(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) {
        out.window_times[w] =
            (static_cast<double>(w * cfg.hop) + 0.5 * static_cast<double>(cfg.window_len - 1)) / rate;
    }

    std::vector<std::vector<double>> columns;
    PeakFinder finder(cfg, rate);
    std::vector<cdouble> series(frames);
    for (std::size_t a : antennas) {
        const DelayProfileSeries profile = delay_profile(trial, a);

        // Time-averaged AC power per bin.
        std::vector<double> power(n_bins);
        for (std::size_t i = 0; i < n_bins; ++i) {
            const auto col = profile.h.col(static_cast<Eigen::Index>(i));
            const cdouble mean = col.mean();
            power[i] = (col.array() - mean).abs2().mean();
        }
        std::vector<std::size_t> bins(n_bins);
        std::iota(bins.begin(), bins.end(), std::size_t{0});
        if (selection.mode == BinSelection::Mode::TopPower && selection.count < n_bins) {
            std::stable_sort(bins.begin(), bins.end(),
                             [&](std::size_t x, std::size_t y) { return power[x] > power[y]; });
            bins.resize(selection.count);
            std::sort(bins.begin(), bins.end());
        }

        for (std::size_t i : bins) {
            for (std::size_t t = 0; t < frames; ++t) {
                series[t] = profile.h(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
            }
            std::vector<double> col(n_windows);
            for (std::size_t w = 0; w < n_windows; ++w) {
                const DopplerPeak peak = finder(std::span<const cdouble>(series).subspan(w * cfg.hop, cfg.window_len));
                col[w] = lambda * peak.frequency_hz;
                out.silent_cells += peak.silent ? 1 : 0;
            }
            columns.push_back(std::move(col));
            out.column_antenna.push_back(static_cast<std::uint32_t>(a));
            out.column_bin.push_back(static_cast<std::uint32_t>(i));
        }
    }

    out.v_r.resize(static_cast<Eigen::Index>(n_windows), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        for (std::size_t w = 0; w < n_windows; ++w) {
            out.v_r(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(c)) = columns[c][w];
        }
    }
    return out;
}

std::vector<DopplerMatrix> split_by_antenna(const DopplerMatrix& merged) {
    std::vector<std::uint32_t> ids(merged.column_antenna);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::vector<DopplerMatrix> out;
    for (std::uint32_t id : ids) {
        DopplerMatrix m;
        m.window_times = merged.window_times;
        m.lambda_m = merged.lambda_m;
        m.sample_rate_hz = merged.sample_rate_hz;
        std::vector<Eigen::Index> cols;
        for (std::size_t c = 0; c < merged.columns(); ++c) {
            if (merged.column_antenna[c] == id) {
                cols.push_back(static_cast<Eigen::Index>(c));
                m.column_antenna.push_back(id);
                m.column_bin.push_back(merged.column_bin[c]);
            }
        }
        m.v_r = merged.v_r(Eigen::all, cols);
        out.push_back(std::move(m));
    }
    return out;
}

std::string to_string(Taper taper) {
    return taper == Taper::Hann ? "hann" : "rectangular";
}

Taper taper_from_string(const std::string& name) {
    if (name == "hann") {
        return Taper::Hann;
    }
    if (name == "rectangular" || name == "rect") {
        return Taper::Rectangular;
    }
    throw InvalidInput("unknown taper '" + name + "'");
}

} // namespace dorf
