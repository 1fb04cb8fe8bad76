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
#include "dorf/random.hpp"
#include "dorf/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace dorf;

namespace {

constexpr double kPi = std::numbers::pi;

// Direct-summation transforms: h_i = 1/N sum_n H_n e^{+j 2 pi n i / N} and back.
std::vector<cdouble> naive_idft(const std::vector<cdouble>& x) {
    const std::size_t n = x.size();
    std::vector<cdouble> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        cdouble acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            acc += x[k] * std::polar(1.0, 2.0 * kPi * static_cast<double>(k * i % n) / static_cast<double>(n));
        }
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

std::vector<cdouble> naive_dft(const std::vector<cdouble>& x) {
    const std::size_t n = x.size();
    std::vector<cdouble> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cdouble acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * i % n) / static_cast<double>(n));
        }
        out[k] = acc;
    }
    return out;
}

SanitizedTrial frames_to_trial(const std::vector<std::vector<cdouble>>& frames, double delta_f = 312.5e3) {
    CsiMetadata meta;
    meta.subcarrier_spacing_hz = delta_f;
    CsiTrial t(CsiShape{frames.size(), frames[0].size(), 1}, meta);
    for (std::size_t s = 0; s < frames.size(); ++s) {
        for (std::size_t n = 0; n < frames[s].size(); ++n) {
            t(s, n, 0) = frames[s][n];
        }
    }
    return without_sanitization(t);
}

std::vector<cdouble> tone(double freq, std::size_t len, double rate, double amp = 1.0) {
    std::vector<cdouble> x(len);
    for (std::size_t k = 0; k < len; ++k) {
        x[k] = std::polar(amp, 2.0 * kPi * freq * static_cast<double>(k) / rate);
    }
    return x;
}

} // namespace

TEST_CASE("delay_bin_times") {
    CHECK(delay_bin_times(4, 1.0) == std::vector<double>{0.0, 0.25, 0.5, 0.75});
    CHECK(delay_bin_times(1, 312500.0) == std::vector<double>{0.0});
    const auto tau = delay_bin_times(52, 312500.0);
    CHECK(tau.size() == 52);
    CHECK(tau[1] == doctest::Approx(6.1538e-8).epsilon(1e-4));
    for (std::size_t i = 0; i < tau.size(); ++i) {
        CHECK(tau[i] == static_cast<double>(i) / (52.0 * 312500.0));
    }
    CHECK_THROWS_AS(delay_bin_times(0, 1.0), InvalidInput);
    CHECK_THROWS_AS(delay_bin_times(4, 0.0), InvalidInput);
    CHECK_THROWS_AS(delay_bin_times(4, -2.0), InvalidInput);
}

TEST_CASE("delay_profile of a flat channel is an impulse at zero delay") {
    const auto p = delay_profile(frames_to_trial({std::vector<cdouble>(16, cdouble(1.0, 0.0))}), 0);
    CHECK(std::abs(p.h(0, 0) - cdouble(1.0, 0.0)) < 1e-12);
    for (Eigen::Index i = 1; i < 16; ++i) {
        CHECK(std::abs(p.h(0, i)) < 1e-12);
    }
}

TEST_CASE("delay_profile localises single- and two-path channels (N = 8)") {
    const std::size_t n = 8;
    const double df = 312.5e3;
    const auto tau = delay_bin_times(n, df);
    std::vector<cdouble> one(n);
    std::vector<cdouble> two(n);
    for (std::size_t k = 0; k < n; ++k) {
        one[k] = std::polar(1.0, -2.0 * kPi * static_cast<double>(k) * df * tau[3]);
        two[k] = one[k] + 0.5 * std::polar(1.0, -2.0 * kPi * static_cast<double>(k) * df * tau[6]);
    }
    const auto p1 = delay_profile(frames_to_trial({one}, df), 0);
    const auto o1 = naive_idft(one);
    Eigen::Index peak = 0;
    p1.h.row(0).cwiseAbs().maxCoeff(&peak);
    CHECK(peak == 3);
    for (Eigen::Index i = 0; i < 8; ++i) {
        CHECK(std::abs(p1.h(0, i) - o1[static_cast<std::size_t>(i)]) < 1e-12);
        if (i != 3) {
            CHECK(std::abs(p1.h(0, i)) <= 1e-10);
        }
    }
    const auto p2 = delay_profile(frames_to_trial({two}, df), 0);
    CHECK(std::abs(p2.h(0, 3)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p2.h(0, 6)) == doctest::Approx(0.5).epsilon(1e-12));
    for (Eigen::Index i : {0, 1, 2, 4, 5, 7}) {
        CHECK(std::abs(p2.h(0, i)) <= 1e-10);
    }
    CHECK(p2.tau == tau);
}

TEST_CASE("inverse_dft matches direct summation and round-trips") {
    Rng rng(3);
    for (std::size_t n : {2u, 8u, 52u, 64u}) {
        std::vector<cdouble> x(n);
        for (auto& v : x) {
            v = cdouble(standard_normal(rng), standard_normal(rng));
        }
        const auto h = inverse_dft(x);
        const auto oracle = naive_idft(x);
        const auto back = naive_dft(h);
        double num = 0.0, den = 0.0, err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            err = std::max(err, std::abs(h[i] - oracle[i]));
            num += std::norm(back[i] - x[i]);
            den += std::norm(x[i]);
        }
        CHECK(err < 1e-12);
        CHECK(std::sqrt(num / den) < 1e-10);
    }
}

TEST_CASE("doppler_peak finds signed tones") {
    SpectrogramConfig cfg;
    const double width = 100.0 / static_cast<double>(cfg.fft_len());
    const auto pos = doppler_peak(tone(8.0, 128, 100.0), cfg, 100.0);
    CHECK_FALSE(pos.silent);
    CHECK(std::abs(pos.frequency_hz - 8.0) <= width);
    const auto neg = doppler_peak(tone(-8.0, 128, 100.0), cfg, 100.0);
    CHECK(std::abs(neg.frequency_hz + 8.0) <= width);

    const auto dc = doppler_peak(std::vector<cdouble>(128, cdouble(0.7, -0.2)), cfg, 100.0);
    CHECK(dc.silent);
    CHECK(dc.frequency_hz == 0.0);

    CHECK_THROWS_AS(doppler_peak(tone(8.0, 100, 100.0), cfg, 100.0), InvalidInput);
}

TEST_CASE("doppler_peak: time reversal negates, scaling leaves unchanged") {
    SpectrogramConfig cfg;
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const double f = uniform(rng, -45.0, 45.0);
        auto x = tone(f, 128, 100.0);
        auto y = tone(uniform(rng, -45.0, 45.0), 128, 100.0, 0.3);
        for (std::size_t k = 0; k < x.size(); ++k) {
            x[k] += y[k] + 0.05 * cdouble(standard_normal(rng), standard_normal(rng));
        }
        const auto fwd = doppler_peak(x, cfg, 100.0);
        std::vector<cdouble> rev(x.rbegin(), x.rend());
        const auto bwd = doppler_peak(rev, cfg, 100.0);
        CHECK(bwd.frequency_hz == doctest::Approx(-fwd.frequency_hz));
        std::vector<cdouble> scaled(x);
        for (auto& v : scaled) {
            v *= 3.7;
        }
        CHECK(doppler_peak(scaled, cfg, 100.0).frequency_hz == fwd.frequency_hz);
    }
}

TEST_CASE("doppler_peak respects the DC guard") {
    SpectrogramConfig cfg;
    cfg.dc_guard_hz = 5.0;
    auto x = tone(2.0, 128, 100.0);
    const auto y = tone(-20.0, 128, 100.0, 0.2);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] += y[k];
    }
    const auto peak = doppler_peak(x, cfg, 100.0);
    CHECK(std::abs(peak.frequency_hz + 20.0) <= 100.0 / 512.0);
}

TEST_CASE("window_count and window validation") {
    SpectrogramConfig cfg;
    CHECK(window_count(500, cfg) == 24);
    CHECK(window_count(128, cfg) == 1);
    CHECK_THROWS_AS(window_count(100, cfg), InvalidInput);
    SpectrogramConfig bad;
    bad.hop = 0;
    CHECK_THROWS_AS(bad.validate(500), InvalidInput);
    bad = SpectrogramConfig{};
    bad.hop = 200;
    CHECK_THROWS_AS(bad.validate(500), InvalidInput);
    bad = SpectrogramConfig{};
    bad.zero_pad_factor = 0;
    CHECK_THROWS_AS(bad.validate(500), InvalidInput);
}

TEST_CASE("radial_velocity_matrix on a 500 x 52 x 3 static channel") {
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(1.0, 0.0), 3.2e-7, Eigen::Vector3d::UnitX(), false},
                  PathSpec{cdouble(0.2, 0.4), 1.6e-6, Eigen::Vector3d::UnitZ(), false}};
    std::vector<ChannelSpec> chans(3, chan);
    VelocityTrack still;
    still.v = Eigen::MatrixXd::Zero(500, 3);
    const CsiTrial trial = gen_csi(still, chans, 100.0);
    CHECK(trial.shape() == CsiShape{500, 52, 3});
    const DopplerMatrix m = radial_velocity_matrix(sanitize_trial(trial), SpectrogramConfig{});
    CHECK(m.windows() == 24);
    CHECK(m.columns() == 60);
    CHECK(m.v_r.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.silent_cells == 24 * 60);
    CHECK(m.window_times[0] == doctest::Approx(63.5 / 100.0));
    CHECK(m.window_times[1] - m.window_times[0] == doctest::Approx(0.16));
    CHECK(m.lambda_m == doctest::Approx(kSpeedOfLight / 2.4e9));
    m.validate();

    const auto per = split_by_antenna(m);
    REQUIRE(per.size() == 3);
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(per[a].columns() == 20);
        for (auto ant : per[a].column_antenna) {
            CHECK(ant == a);
        }
    }
    const DopplerMatrix only = radial_velocity_matrix(sanitize_trial(trial), SpectrogramConfig{}, BinSelection::all(), 1);
    CHECK(only.columns() == 52);
    for (auto ant : only.column_antenna) {
        CHECK(ant == 1);
    }
}

TEST_CASE("radial_velocity_matrix recovers a constant radial speed") {
    const double rate = 100.0;
    for (double speed : {1.0, -0.6, 2.3}) {
        VelocityTrack v;
        v.v = Eigen::MatrixXd::Zero(400, 3);
        const Eigen::Vector3d m = Eigen::Vector3d(1.0, 2.0, -0.5).normalized();
        for (Eigen::Index s = 0; s < v.v.rows(); ++s) {
            v.v.row(s) = speed * m.transpose();
        }
        ChannelSpec chan;
        chan.paths = {PathSpec{cdouble(1.0, 0.0), 5.0 / (52 * 312.5e3), m, true}};
        const CsiTrial trial = gen_csi(v, chan, rate);
        const DopplerMatrix vr = radial_velocity_matrix(without_sanitization(trial), SpectrogramConfig{}, BinSelection::top(1));
        const double lambda = wavelength(2.4e9);
        const double tol = lambda * rate / (128.0 * 4.0);
        REQUIRE(vr.columns() == 1);
        for (Eigen::Index s = 0; s < vr.v_r.rows(); ++s) {
            CHECK(std::abs(vr.v_r(s, 0) - speed) <= tol);
        }
        CHECK(std::abs(vr.v_r(0, 0)) <= lambda * rate / 2.0);
    }
}

TEST_CASE("radial_velocity_matrix rejects trials shorter than one window") {
    CsiTrial t(CsiShape{64, 8, 1}, CsiMetadata{});
    CHECK_THROWS_AS(radial_velocity_matrix(without_sanitization(t), SpectrogramConfig{}), InvalidInput);
}

TEST_CASE("DopplerMatrix::validate enforces the Nyquist bound") {
    DopplerMatrix m;
    m.v_r = Eigen::MatrixXd::Constant(2, 1, 7.0);
    m.window_times = {0.0, 1.0};
    m.column_antenna = {0};
    m.column_bin = {0};
    m.lambda_m = 0.125;
    m.sample_rate_hz = 100.0;
    CHECK_THROWS_AS(m.validate(), InvalidInput);
    m.v_r.setConstant(6.0);
    CHECK_NOTHROW(m.validate());
}

TEST_CASE("taper names") {
    CHECK(to_string(Taper::Hann) == "hann");
    CHECK(taper_from_string("rectangular") == Taper::Rectangular);
    CHECK_THROWS_AS(taper_from_string("kaiser"), InvalidInput);
}
