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

#include <Eigen/Geometry>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace dorf;

namespace {

constexpr double kPi = std::numbers::pi;

// Periodogram peak of a complex series by direct evaluation on a fine grid.
double periodogram_peak(const std::vector<cdouble>& x, double rate, double f_lo, double f_hi, double step) {
    double best_f = 0.0;
    double best_p = -1.0;
    for (double f = f_lo; f <= f_hi; f += step) {
        cdouble acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            acc += x[k] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(k) / rate);
        }
        if (std::norm(acc) > best_p) {
            best_p = std::norm(acc);
            best_f = f;
        }
    }
    return best_f;
}

VelocityTrack constant_track(const Eigen::Vector3d& v, std::size_t steps) {
    VelocityTrack t;
    t.v.resize(static_cast<Eigen::Index>(steps), 3);
    t.v.rowwise() = v.transpose();
    return t;
}

} // namespace

TEST_CASE("gen_motion analytic values") {
    MotionSpec c;
    c.kind = Gesture::Circle;
    c.amplitude = 1.0;
    c.period = 1.0;
    c.duration = 2.0;
    const VelocityTrack v = gen_motion(c);
    CHECK(v.steps() == 200);
    CHECK((v.v.row(0) - Eigen::RowVector3d(0.0, 2 * kPi, 0.0)).norm() < 1e-12);
    CHECK(v.times[100] == doctest::Approx(1.0));

    MotionSpec u;
    u.kind = Gesture::UpDown;
    const VelocityTrack up = gen_motion(u);
    CHECK(up.v.row(0).norm() == 0.0);
    CHECK(up.v.col(0).isZero(0.0));
    CHECK(up.v.col(1).isZero(0.0));
    CHECK(up.v.col(2).cwiseAbs().maxCoeff() > 0.0);

    MotionSpec lr;
    lr.kind = Gesture::LeftRight;
    CHECK(gen_motion(lr).v.col(2).isZero(0.0));
    MotionSpec pp;
    pp.kind = Gesture::PushPull;
    CHECK(gen_motion(pp).v.col(0).isZero(0.0));

    MotionSpec rot = c;
    rot.orientation = Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const VelocityTrack r = gen_motion(rot);
    CHECK((r.v.row(0) - Eigen::RowVector3d(0.0, 0.0, 2 * kPi)).norm() < 1e-12);
}

TEST_CASE("circle mean speed over a period equals A omega") {
    MotionSpec c;
    c.amplitude = 0.3;
    c.period = 2.0;
    c.duration = 2.0;
    c.rate = 1000.0;
    const VelocityTrack v = gen_motion(c);
    // Trapezoidal quadrature of |v| over one full period (closing sample appended analytically).
    const Eigen::VectorXd speed = v.v.rowwise().norm();
    double integral = 0.0;
    for (Eigen::Index k = 0; k + 1 < speed.size(); ++k) integral += 0.5 * (speed(k) + speed(k + 1)) / c.rate;
    integral += 0.5 * (speed(speed.size() - 1) + speed(0)) / c.rate;
    CHECK(integral / c.period == doctest::Approx(c.amplitude * 2 * kPi / c.period).epsilon(1e-9));
}

TEST_CASE("MotionSpec validation") {
    for (auto mutate : {+[](MotionSpec& m) { m.amplitude = 0.0; }, +[](MotionSpec& m) { m.period = -1.0; },
                        +[](MotionSpec& m) { m.duration = 0.0; }, +[](MotionSpec& m) { m.rate = 0.0; }}) {
        MotionSpec m;
        mutate(m);
        CHECK_THROWS_AS(gen_motion(m), InvalidInput);
    }
}

TEST_CASE("gen_projections") {
    MotionSpec m;
    m.duration = 1.0;
    const VelocityTrack v = gen_motion(m);
    const Projections p = gen_projections(v, 15, 0.0, 4);
    CHECK(p.v_r.v_r == v.v * p.directions.r.transpose());
    CHECK_NOTHROW(p.directions.validate(1e-12));
    CHECK(p.v_r.windows() == v.steps());
    const Projections again = gen_projections(v, 15, 0.0, 4);
    CHECK(again.directions.r == p.directions.r);
    CHECK(gen_projections(v, 15, 0.0, 5).directions.r != p.directions.r);
    CHECK_THROWS_AS(gen_projections(v, 0, 0.0, 1), InvalidInput);

    // Noise variance by the law of large numbers.
    const VelocityTrack long_track = constant_track(Eigen::Vector3d(0.2, -0.1, 0.4), 10000);
    const Projections noisy = gen_projections(long_track, 4, 0.05, 9);
    const Eigen::MatrixXd resid = noisy.v_r.v_r - long_track.v * noisy.directions.r.transpose();
    for (Eigen::Index i = 0; i < 4; ++i) {
        const double mean = resid.col(i).mean();
        const double var = (resid.col(i).array() - mean).square().mean();
        CHECK(std::abs(var - 0.0025) <= 0.1 * 0.0025);
    }
}

TEST_CASE("gen_csi: static path is constant in time") {
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(0.7, 0.2), 4e-7, Eigen::Vector3d::UnitY(), true}};
    const CsiTrial t = gen_csi(constant_track(Eigen::Vector3d::Zero(), 50), chan, 100.0);
    for (std::size_t s = 1; s < 50; ++s) {
        for (std::size_t n = 0; n < 52; ++n) {
            CHECK(t(s, n, 0) == t(0, n, 0));
        }
    }
    ChannelSpec fixed = chan;
    fixed.paths[0].moving = false;
    const CsiTrial f = gen_csi(constant_track(Eigen::Vector3d(1, 1, 1), 50), fixed, 100.0);
    CHECK(f(49, 7, 0) == f(0, 7, 0));
}

TEST_CASE("gen_csi: 1 m/s radial motion gives 8 Hz Doppler at 2.4 GHz") {
    const double lambda = wavelength(2.4e9);
    CHECK(lambda == doctest::Approx(0.12491).epsilon(1e-4));
    const Eigen::Vector3d m = Eigen::Vector3d(0.0, 0.6, 0.8);
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(1.0, 0.0), 2e-7, m, true}};
    const CsiTrial t = gen_csi(constant_track(m, 256), chan, 100.0);
    // Subcarrier closest to the carrier: n = N/2.
    std::vector<cdouble> series(256);
    for (std::size_t s = 0; s < 256; ++s) series[s] = t(s, 26, 0);
    const double f = periodogram_peak(series, 100.0, -50.0, 50.0, 0.01);
    CHECK(f == doctest::Approx(1.0 / lambda).epsilon(2e-3));
    CHECK(1.0 / lambda == doctest::Approx(8.0).epsilon(1e-3));
}

TEST_CASE("gen_csi: two paths populate two delay bins") {
    const double bin = 1.0 / (52 * 312.5e3);
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(1.0, 0.0), 3 * bin, Eigen::Vector3d::UnitX(), false},
                  PathSpec{cdouble(0.5, 0.0), 11 * bin, Eigen::Vector3d::UnitX(), false}};
    const CsiTrial t = gen_csi(constant_track(Eigen::Vector3d::Zero(), 2), chan, 100.0);
    const DelayProfileSeries p = delay_profile(without_sanitization(t), 0);
    std::vector<Eigen::Index> populated;
    for (Eigen::Index i = 0; i < 52; ++i) {
        if (std::abs(p.h(0, i)) > 1e-9) populated.push_back(i);
    }
    REQUIRE(populated.size() == 2);
    // Subcarrier frequency decreases with n, so delay bin k appears at (N - k) mod N.
    CHECK(populated[0] == 52 - 11);
    CHECK(populated[1] == 52 - 3);
    CHECK(std::abs(p.h(0, 52 - 3)) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(p.h(0, 52 - 11)) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("gen_csi validation and noise") {
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(1.0, 0.0), 1e-7, Eigen::Vector3d::UnitX(), true},
                  PathSpec{cdouble(1.0, 0.0), 4e-6, Eigen::Vector3d::UnitX(), true}};
    try {
        gen_csi(constant_track(Eigen::Vector3d::Zero(), 4), chan, 100.0);
        FAIL("expected an exception");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("path 1") != std::string::npos);
    }
    chan.paths.pop_back();
    chan.paths[0].direction = Eigen::Vector3d(1.0, 1.0, 0.0);
    CHECK_THROWS_AS(gen_csi(constant_track(Eigen::Vector3d::Zero(), 4), chan, 100.0), InvalidInput);

    ChannelSpec noisy;
    noisy.paths = {PathSpec{}};
    noisy.noise_sigma = 0.1;
    noisy.seed = 3;
    const CsiTrial a = gen_csi(constant_track(Eigen::Vector3d::Zero(), 400), noisy, 100.0);
    const CsiTrial b = gen_csi(constant_track(Eigen::Vector3d::Zero(), 400), noisy, 100.0);
    CHECK(a.samples()[17] == b.samples()[17]);
    ChannelSpec clean = noisy;
    clean.noise_sigma = 0.0;
    const CsiTrial c = gen_csi(constant_track(Eigen::Vector3d::Zero(), 400), clean, 100.0);
    double power = 0.0;
    for (std::size_t i = 0; i < a.samples().size(); ++i) power += std::norm(a.samples()[i] - c.samples()[i]);
    power /= static_cast<double>(a.samples().size());
    CHECK(power == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("inject_phase_ramp is undone by sanitization") {
    // Short delays keep adjacent-subcarrier phase steps well inside (-pi, pi), so unwrapping
    // makes the same decisions with and without the ramp.
    ChannelSpec chan;
    chan.paths = {PathSpec{cdouble(1.0, 0.0), 2e-8, Eigen::Vector3d::UnitX(), false},
                  PathSpec{cdouble(0.3, 0.1), 6e-8, Eigen::Vector3d::UnitY(), true}};
    CsiTrial trial = gen_csi(constant_track(Eigen::Vector3d(0.5, 0.5, 0.0), 60), chan, 100.0);
    const SanitizedTrial clean = sanitize_trial(trial);
    inject_phase_ramp(trial, 0.3, 12);
    const SanitizedTrial ramped = sanitize_trial(trial);
    double worst = 0.0;
    for (std::size_t t = 0; t < trial.frames(); ++t) {
        for (std::size_t n = 0; n < trial.subcarriers(); ++n) {
            worst = std::max(worst, std::abs(std::remainder(ramped.phase(t, n, 0) - clean.phase(t, n, 0), 2 * kPi)));
        }
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("synthetic dataset generator") {
    SynthDatasetSpec spec;
    spec.duration = 1.5;
    const SubjectGeometry g0 = random_subject_geometry(spec, 0);
    const SubjectGeometry g1 = random_subject_geometry(spec, 1);
    CHECK(g0.antennas.size() == 3);
    CHECK(g0.antennas[0].paths.size() == 25);
    CHECK(g0.antennas[0].paths[0].delay_s != g1.antennas[0].paths[0].delay_s);
    SynthDatasetSpec other = spec;
    other.seed = 2;
    CHECK(random_subject_geometry(other, 0).antennas[0].paths[3].gain != g0.antennas[0].paths[3].gain);

    const CsiTrial a = synth_trial(spec, g0, 0, Gesture::PushPull, 4);
    const CsiTrial b = synth_trial(spec, g0, 0, Gesture::PushPull, 4);
    CHECK(a.shape() == CsiShape{150, 52, 3});
    CHECK(a.metadata().activity_label == 3);
    CHECK(a.samples()[1000] == b.samples()[1000]);
    const CsiTrial c = synth_trial(other, random_subject_geometry(other, 0), 0, Gesture::PushPull, 4);
    CHECK(c.shape() == a.shape());
    CHECK(c.samples()[1000] != a.samples()[1000]);

    SynthDatasetSpec zero = spec;
    zero.duration = 0.0;
    CHECK_THROWS_AS(zero.validate(), InvalidInput);
    CHECK_THROWS_AS(random_subject_geometry(zero, 0), InvalidInput);

    for (Gesture g : kAllGestures) CHECK(gesture_from_string(to_string(g)) == g);
    CHECK_THROWS_AS(gesture_from_string("wave"), InvalidInput);
}
