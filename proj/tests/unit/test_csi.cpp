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
#include "dorf/random.hpp"
#include "dorf/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace dorf;

namespace {

constexpr double kPi = std::numbers::pi;

CsiTrial one_frame(const std::vector<double>& phases, double magnitude = 1.0) {
    CsiTrial t(CsiShape{1, phases.size(), 1}, CsiMetadata{});
    for (std::size_t n = 0; n < phases.size(); ++n) {
        t(0, n, 0) = std::polar(magnitude, phases[n]);
    }
    return t;
}

// Least-squares line through (n, y_n) from the closed-form normal equations.
std::pair<double, double> ols(const std::vector<double>& y) {
    const double n = static_cast<double>(y.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = static_cast<double>(i);
        sx += x;
        sy += y[i];
        sxx += x * x;
        sxy += x * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {slope, (sy - slope * sx) / n};
}

} // namespace

TEST_CASE("CsiTrial rejects bad shapes, metadata and non-finite samples") {
    CHECK_THROWS_AS(CsiTrial(CsiShape{0, 52, 3}, CsiMetadata{}), InvalidInput);
    CHECK_THROWS_AS(CsiTrial(CsiShape{10, 1, 3}, CsiMetadata{}), InvalidInput);
    CHECK_THROWS_AS(CsiTrial(CsiShape{10, 52, 0}, CsiMetadata{}), InvalidInput);
    CsiMetadata bad;
    bad.sample_rate_hz = 0.0;
    CHECK_THROWS_AS(CsiTrial(CsiShape{10, 52, 3}, bad), InvalidInput);
    bad = CsiMetadata{};
    bad.carrier_hz = -1.0;
    CHECK_THROWS_AS(CsiTrial(CsiShape{10, 52, 3}, bad), InvalidInput);

    std::vector<cdouble> samples(2 * 2 * 1, cdouble(1.0, 0.0));
    samples[3] = cdouble(std::numeric_limits<double>::quiet_NaN(), 0.0);
    CHECK_THROWS_AS(CsiTrial(CsiShape{2, 2, 1}, CsiMetadata{}, samples), InvalidInput);
    samples[3] = cdouble(0.0, std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(CsiTrial(CsiShape{2, 2, 1}, CsiMetadata{}, samples), InvalidInput);
    samples.pop_back();
    CHECK_THROWS_AS(CsiTrial(CsiShape{2, 2, 1}, CsiMetadata{}, samples), InvalidInput);
}

TEST_CASE("CsiShape index is time-major, then subcarrier, then antenna") {
    const CsiShape s{4, 5, 3};
    CHECK(s.index(0, 0, 1) == 1);
    CHECK(s.index(0, 1, 0) == 3);
    CHECK(s.index(1, 0, 0) == 15);
    CHECK(s.index(3, 4, 2) == s.size() - 1);
}

TEST_CASE("unwrap_phase examples") {
    const std::vector<double> smooth{0.0, 0.1, 0.2};
    CHECK(unwrap_phase(smooth) == smooth);

    const std::vector<double> jump{3.0, -3.0};
    const auto out = unwrap_phase(jump);
    // Oracle: pick the 2 pi k shift minimising the step size.
    double best = -3.0;
    for (int k = -3; k <= 3; ++k) {
        const double cand = -3.0 + 2.0 * kPi * k;
        if (std::abs(cand - 3.0) < std::abs(best - 3.0)) {
            best = cand;
        }
    }
    CHECK(out[0] == 3.0);
    CHECK(out[1] == doctest::Approx(best).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(3.2831853071795862));

    const std::vector<double> half{0.0, kPi};
    CHECK(unwrap_phase(half) == half);
    const std::vector<double> neg_half{0.0, -kPi};
    const auto nh = unwrap_phase(neg_half);
    CHECK(nh[1] == doctest::Approx(kPi));
}

TEST_CASE("unwrap_phase keeps differences in (-pi, pi] and rejects non-finite input") {
    Rng rng(7);
    std::vector<double> wrapped(200);
    double acc = 0.0;
    for (double& w : wrapped) {
        acc += uniform(rng, -3.0, 3.0);
        w = std::remainder(acc, 2.0 * kPi);
    }
    const auto out = unwrap_phase(wrapped);
    CHECK(out[0] == wrapped[0]);
    for (std::size_t i = 1; i < out.size(); ++i) {
        const double d = out[i] - out[i - 1];
        CHECK(d > -kPi);
        CHECK(d <= kPi + 1e-12);
        CHECK(std::abs(std::remainder(out[i] - wrapped[i], 2.0 * kPi)) <= 1e-9);
    }
    const std::vector<double> bad{0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(unwrap_phase(bad), InvalidInput);
    CHECK(unwrap_phase(std::vector<double>{}).empty());
}

TEST_CASE("sanitize_trial removes an exact linear trend") {
    std::vector<double> phases(52);
    for (std::size_t n = 0; n < phases.size(); ++n) {
        phases[n] = 0.3 * static_cast<double>(n) + 1.1;
    }
    const SanitizedTrial s = sanitize_trial(one_frame(phases));
    for (std::size_t n = 0; n < phases.size(); ++n) {
        CHECK(std::abs(s.phase(0, n, 0)) < 1e-12);
    }
    CHECK(s.report().slope[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.report().intercept[0] == doctest::Approx(1.1).epsilon(1e-12));
}

TEST_CASE("sanitize_trial leaves the residual minus its own best-fit line") {
    Rng rng(11);
    std::vector<double> eps(52);
    for (double& e : eps) {
        e = 0.2 * standard_normal(rng);
    }
    std::vector<double> phases(52);
    for (std::size_t n = 0; n < phases.size(); ++n) {
        phases[n] = 0.3 * static_cast<double>(n) + 1.1 + eps[n];
    }
    const auto [es, ei] = ols(eps);
    const SanitizedTrial s = sanitize_trial(one_frame(phases));
    for (std::size_t n = 0; n < eps.size(); ++n) {
        CHECK(s.phase(0, n, 0) == doctest::Approx(eps[n] - es * static_cast<double>(n) - ei).scale(1.0).epsilon(1e-10));
    }
    CHECK(s.report().slope[0] == doctest::Approx(0.3 + es).epsilon(1e-10));
}

TEST_CASE("sanitize_trial on an all-zero-phase frame is the identity") {
    const SanitizedTrial s = sanitize_trial(one_frame(std::vector<double>(52, 0.0), 2.5));
    for (std::size_t n = 0; n < 52; ++n) {
        CHECK(s.phase(0, n, 0) == 0.0);
        CHECK(s.magnitude(0, n, 0) == 2.5);
    }
    CHECK(s.report().slope[0] == 0.0);
    CHECK(s.report().intercept[0] == 0.0);
}

TEST_CASE("sanitize_trial flags zero-magnitude subcarriers and treats their phase as 0") {
    CsiTrial t = one_frame(std::vector<double>(8, 0.5));
    t(0, 3, 0) = cdouble(0.0, 0.0);
    t(0, 6, 0) = cdouble(0.0, 0.0);
    const SanitizedTrial s = sanitize_trial(t);
    CHECK(s.report().zero_magnitude[0] == 2);
    CHECK(s.report().flagged_total() == 2);
    CHECK(s.magnitude(0, 3, 0) == 0.0);
    // Oracle: fit over phases with the two zero entries set to 0.
    std::vector<double> ph(8, 0.5);
    ph[3] = 0.0;
    ph[6] = 0.0;
    const auto [slope, intercept] = ols(ph);
    CHECK(s.report().slope[0] == doctest::Approx(slope).epsilon(1e-12));
    CHECK(s.report().intercept[0] == doctest::Approx(intercept).epsilon(1e-12));
}

TEST_CASE("sanitization invariants on impaired multi-antenna CSI") {
    ChannelSpec chan;
    chan.subcarriers = 52;
    chan.paths = {PathSpec{cdouble(1.0, 0.2), 2e-7, Eigen::Vector3d::UnitX(), false},
                  PathSpec{cdouble(0.3, -0.1), 9e-7, Eigen::Vector3d::UnitY(), true}};
    chan.noise_sigma = 0.01;
    std::vector<ChannelSpec> chans(3, chan);
    for (std::size_t a = 0; a < 3; ++a) {
        chans[a].seed = a + 1;
    }
    MotionSpec m;
    m.duration = 0.5;
    CsiTrial trial = gen_csi(gen_motion(m), chans, m.rate);
    inject_phase_ramp(trial, 0.5, 99);

    const SanitizedTrial s = sanitize_trial(trial);
    const SanitizedTrial twice = sanitize_trial(s);
    for (std::size_t t = 0; t < trial.frames(); ++t) {
        for (std::size_t a = 0; a < trial.antennas(); ++a) {
            std::vector<double> ph(trial.subcarriers());
            for (std::size_t n = 0; n < trial.subcarriers(); ++n) {
                // Magnitudes are bit-identical.
                CHECK(s.magnitude(t, n, a) == std::abs(trial(t, n, a)));
                CHECK(std::abs(twice.phase(t, n, a) - s.phase(t, n, a)) <= 1e-12);
                ph[n] = s.phase(t, n, a);
            }
            CHECK(std::abs(fit_line(unwrap_phase(ph)).slope) <= 1e-9);
        }
    }
}

TEST_CASE("without_sanitization keeps measured phases") {
    CsiTrial t = one_frame({0.1, 0.7, -2.0});
    const SanitizedTrial s = without_sanitization(t);
    CHECK(s.phase(0, 1, 0) == doctest::Approx(0.7));
    CHECK(s.magnitude(0, 2, 0) == std::abs(t(0, 2, 0)));
    CHECK(s.report().slope[0] == 0.0);
}
