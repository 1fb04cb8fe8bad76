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

#ifndef DORF_CSI_HPP
#define DORF_CSI_HPP

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dorf {

using cdouble = std::complex<double>;

struct CsiMetadata {
    double sample_rate_hz = 100.0;
    double carrier_hz = 2.4e9;
    double subcarrier_spacing_hz = 312.5e3;
    std::uint32_t subject_id = 0;
    std::uint32_t activity_label = 0;
};

// Shape of a CSI tensor: time frames x subcarriers x antennas.
struct CsiShape {
    std::size_t frames = 0;
    std::size_t subcarriers = 0;
    std::size_t antennas = 0;

    std::size_t size() const { return frames * subcarriers * antennas; }
    // Time-major, then subcarrier, then antenna (matches the on-disk payload order).
    std::size_t index(std::size_t t, std::size_t n, std::size_t a) const {
        return (t * subcarriers + n) * antennas + a;
    }
    bool operator==(const CsiShape&) const = default;
};

// Complex CSI for one gesture trial.
class CsiTrial {
public:
    // Zero-filled trial. Throws InvalidInput on a bad shape or metadata.
    CsiTrial(CsiShape shape, CsiMetadata meta);
    // Takes ownership of samples; validates shape, metadata and finiteness.
    CsiTrial(CsiShape shape, CsiMetadata meta, std::vector<cdouble> samples);

    const CsiShape& shape() const { return shape_; }
    const CsiMetadata& metadata() const { return meta_; }
    std::size_t frames() const { return shape_.frames; }
    std::size_t subcarriers() const { return shape_.subcarriers; }
    std::size_t antennas() const { return shape_.antennas; }

    cdouble& operator()(std::size_t t, std::size_t n, std::size_t a) { return samples_[shape_.index(t, n, a)]; }
    const cdouble& operator()(std::size_t t, std::size_t n, std::size_t a) const {
        return samples_[shape_.index(t, n, a)];
    }

    std::span<const cdouble> samples() const { return samples_; }
    std::span<cdouble> samples() { return samples_; }

    // Re-checks the invariants (useful after mutating samples in place).
    void validate() const;

private:
    CsiShape shape_;
    CsiMetadata meta_;
    std::vector<cdouble> samples_;
};

// Per frame and antenna: the removed linear phase trend.
struct SanitizationReport {
    std::vector<double> slope;      // rad / subcarrier, index t * antennas + a
    std::vector<double> intercept;  // rad
    std::vector<std::uint32_t> zero_magnitude; // count of flagged subcarriers per frame/antenna

    std::size_t flagged_total() const;
};

// CSI in polar form after phase sanitization. Magnitudes are copied verbatim
// from the source trial; only the phase is rewritten.
class SanitizedTrial {
public:
    SanitizedTrial(CsiShape shape, CsiMetadata meta, std::vector<double> magnitude,
                   std::vector<double> phase, SanitizationReport report);

    const CsiShape& shape() const { return shape_; }
    const CsiMetadata& metadata() const { return meta_; }
    std::size_t frames() const { return shape_.frames; }
    std::size_t subcarriers() const { return shape_.subcarriers; }
    std::size_t antennas() const { return shape_.antennas; }

    double magnitude(std::size_t t, std::size_t n, std::size_t a) const { return magnitude_[shape_.index(t, n, a)]; }
    double phase(std::size_t t, std::size_t n, std::size_t a) const { return phase_[shape_.index(t, n, a)]; }
    cdouble value(std::size_t t, std::size_t n, std::size_t a) const {
        const std::size_t i = shape_.index(t, n, a);
        return std::polar(magnitude_[i], phase_[i]);
    }

    std::span<const double> magnitudes() const { return magnitude_; }
    std::span<const double> phases() const { return phase_; }
    const SanitizationReport& report() const { return report_; }

private:
    CsiShape shape_;
    CsiMetadata meta_;
    std::vector<double> magnitude_;
    std::vector<double> phase_;
    SanitizationReport report_;
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

// Unwraps a phase sequence so that consecutive differences lie in (-pi, pi].
// Throws InvalidInput on non-finite values.
std::vector<double> unwrap_phase(std::span<const double> wrapped);

// Ordinary least-squares line through (n, y[n]), n = 0, 1, ...
LinearFit fit_line(std::span<const double> y);

// Unwraps each frame's phase across subcarriers and subtracts its least-squares
// line, per antenna. Zero-magnitude subcarriers get phase 0 and are flagged.
SanitizedTrial sanitize_trial(const CsiTrial& trial);

// Re-sanitizes already sanitized phases (the operation is idempotent).
SanitizedTrial sanitize_trial(const SanitizedTrial& trial);

// Polar view of a trial with its phases left as measured. For feeding
// impairment-free synthetic CSI straight into delay-Doppler processing.
SanitizedTrial without_sanitization(const CsiTrial& trial);

} // namespace dorf

#endif
