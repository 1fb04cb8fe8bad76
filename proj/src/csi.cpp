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

#include "dorf/csi.hpp"

#include "dorf/error.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace dorf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_shape_and_meta(const CsiShape& shape, const CsiMetadata& meta) {
    if (shape.frames < 1 || shape.subcarriers < 2 || shape.antennas < 1) {
        throw InvalidInput("CSI shape must satisfy T >= 1, N_sub >= 2, A >= 1 (got " +
                           std::to_string(shape.frames) + " x " + std::to_string(shape.subcarriers) + " x " +
                           std::to_string(shape.antennas) + ")");
    }
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(meta.sample_rate_hz) || !positive(meta.carrier_hz) || !positive(meta.subcarrier_spacing_hz)) {
        throw InvalidInput("CSI metadata (sample rate, carrier, subcarrier spacing) must be finite and positive");
    }
}

// Unwrap + detrend of one frame; writes residual phases into out.
LinearFit detrend_frame(std::vector<double>& phases, std::vector<double>& out) {
    out = unwrap_phase(phases);
    const LinearFit fit = fit_line(out);
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] -= fit.slope * static_cast<double>(n) + fit.intercept;
    }
    return fit;
}

} // namespace

CsiTrial::CsiTrial(CsiShape shape, CsiMetadata meta) : shape_(shape), meta_(meta) {
    check_shape_and_meta(shape_, meta_);
    samples_.assign(shape_.size(), cdouble{});
}

CsiTrial::CsiTrial(CsiShape shape, CsiMetadata meta, std::vector<cdouble> samples)
    : shape_(shape), meta_(meta), samples_(std::move(samples)) {
    validate();
}

void CsiTrial::validate() const {
    check_shape_and_meta(shape_, meta_);
    if (samples_.size() != shape_.size()) {
        throw InvalidInput("CSI sample count " + std::to_string(samples_.size()) + " does not match shape (" +
                           std::to_string(shape_.size()) + ")");
    }
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!std::isfinite(samples_[i].real()) || !std::isfinite(samples_[i].imag())) {
            throw InvalidInput("CSI contains a non-finite entry at flat index " + std::to_string(i));
        }
    }
}

std::size_t SanitizationReport::flagged_total() const {
    return std::accumulate(zero_magnitude.begin(), zero_magnitude.end(), std::size_t{0});
}

SanitizedTrial::SanitizedTrial(CsiShape shape, CsiMetadata meta, std::vector<double> magnitude,
                               std::vector<double> phase, SanitizationReport report)
    : shape_(shape), meta_(meta), magnitude_(std::move(magnitude)), phase_(std::move(phase)),
      report_(std::move(report)) {
    check_shape_and_meta(shape_, meta_);
    if (magnitude_.size() != shape_.size() || phase_.size() != shape_.size()) {
        throw InvalidInput("sanitized trial buffers do not match shape");
    }
}

std::vector<double> unwrap_phase(std::span<const double> wrapped) {
    std::vector<double> out(wrapped.begin(), wrapped.end());
    for (std::size_t i = 0; i < wrapped.size(); ++i) {
        if (!std::isfinite(wrapped[i])) {
            throw InvalidInput("unwrap_phase: non-finite phase at index " + std::to_string(i));
        }
    }
    for (std::size_t i = 1; i < wrapped.size(); ++i) {
        double d = wrapped[i] - wrapped[i - 1];
        // Shift by the multiple of 2*pi that lands d in (-pi, pi].
        d -= kTwoPi * std::ceil((d - std::numbers::pi) / kTwoPi);
        out[i] = out[i - 1] + d;
    }
    return out;
}

LinearFit fit_line(std::span<const double> y) {
    const std::size_t n = y.size();
    if (n == 0) {
        return {};
    }
    if (n == 1) {
        return {0.0, y[0]};
    }
    const double xbar = 0.5 * static_cast<double>(n - 1);
    double ybar = 0.0;
    for (double v : y) {
        ybar += v;
    }
    ybar /= static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = static_cast<double>(i) - xbar;
        sxy += dx * (y[i] - ybar);
        sxx += dx * dx;
    }
    const double slope = sxy / sxx;
    return {slope, ybar - slope * xbar};
}

SanitizedTrial sanitize_trial(const CsiTrial& trial) {
    const CsiShape& shape = trial.shape();
    std::vector<double> magnitude(shape.size());
    std::vector<double> phase(shape.size());
    SanitizationReport report;
    report.slope.resize(shape.frames * shape.antennas);
    report.intercept.resize(shape.frames * shape.antennas);
    report.zero_magnitude.resize(shape.frames * shape.antennas);

    std::vector<double> raw(shape.subcarriers);
    std::vector<double> residual;
    for (std::size_t t = 0; t < shape.frames; ++t) {
        for (std::size_t a = 0; a < shape.antennas; ++a) {
            std::uint32_t flagged = 0;
            for (std::size_t n = 0; n < shape.subcarriers; ++n) {
                const cdouble h = trial(t, n, a);
                const double mag = std::abs(h);
                magnitude[shape.index(t, n, a)] = mag;
                if (mag == 0.0) {
                    raw[n] = 0.0;
                    ++flagged;
                } else {
                    raw[n] = std::arg(h);
                }
            }
            const LinearFit fit = detrend_frame(raw, residual);
            for (std::size_t n = 0; n < shape.subcarriers; ++n) {
                phase[shape.index(t, n, a)] = residual[n];
            }
            report.slope[t * shape.antennas + a] = fit.slope;
            report.intercept[t * shape.antennas + a] = fit.intercept;
            report.zero_magnitude[t * shape.antennas + a] = flagged;
        }
    }
    return SanitizedTrial(shape, trial.metadata(), std::move(magnitude), std::move(phase), std::move(report));
}

SanitizedTrial sanitize_trial(const SanitizedTrial& trial) {
    const CsiShape& shape = trial.shape();
    std::vector<double> magnitude(trial.magnitudes().begin(), trial.magnitudes().end());
    std::vector<double> phase(shape.size());
    SanitizationReport report;
    report.slope.resize(shape.frames * shape.antennas);
    report.intercept.resize(shape.frames * shape.antennas);
    report.zero_magnitude.resize(shape.frames * shape.antennas);

    std::vector<double> raw(shape.subcarriers);
    std::vector<double> residual;
    for (std::size_t t = 0; t < shape.frames; ++t) {
        for (std::size_t a = 0; a < shape.antennas; ++a) {
            std::uint32_t flagged = 0;
            for (std::size_t n = 0; n < shape.subcarriers; ++n) {
                if (trial.magnitude(t, n, a) == 0.0) {
                    raw[n] = 0.0;
                    ++flagged;
                } else {
                    raw[n] = trial.phase(t, n, a);
                }
            }
            const LinearFit fit = detrend_frame(raw, residual);
            for (std::size_t n = 0; n < shape.subcarriers; ++n) {
                phase[shape.index(t, n, a)] = residual[n];
            }
            report.slope[t * shape.antennas + a] = fit.slope;
            report.intercept[t * shape.antennas + a] = fit.intercept;
            report.zero_magnitude[t * shape.antennas + a] = flagged;
        }
    }
    return SanitizedTrial(shape, trial.metadata(), std::move(magnitude), std::move(phase), std::move(report));
}

SanitizedTrial without_sanitization(const CsiTrial& trial) {
    const CsiShape& shape = trial.shape();
    std::vector<double> magnitude(shape.size());
    std::vector<double> phase(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
        magnitude[i] = std::abs(trial.samples()[i]);
        phase[i] = std::arg(trial.samples()[i]);
    }
    SanitizationReport report;
    report.slope.assign(shape.frames * shape.antennas, 0.0);
    report.intercept.assign(shape.frames * shape.antennas, 0.0);
    report.zero_magnitude.assign(shape.frames * shape.antennas, 0);
    return SanitizedTrial(shape, trial.metadata(), std::move(magnitude), std::move(phase), std::move(report));
}

} // namespace dorf
