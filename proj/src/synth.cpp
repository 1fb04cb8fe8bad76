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

#include "dorf/synth.hpp"

#include "dorf/error.hpp"
#include "dorf/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dorf {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix3d random_tilt(Rng& rng, double max_angle) {
    const Eigen::Vector3d axis = random_unit_vector(rng);
    const double angle = uniform(rng, -max_angle, max_angle);
    return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

} // namespace

std::string to_string(Gesture g) {
    switch (g) {
    case Gesture::Circle:
        return "circle";
    case Gesture::LeftRight:
        return "left_right";
    case Gesture::UpDown:
        return "up_down";
    case Gesture::PushPull:
        return "push_pull";
    }
    return "unknown";
}

Gesture gesture_from_string(const std::string& name) {
    for (Gesture g : kAllGestures) {
        if (to_string(g) == name) {
            return g;
        }
    }
    throw InvalidInput("unknown gesture '" + name + "'");
}

void MotionSpec::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(amplitude) || !positive(period) || !positive(duration) || !positive(rate)) {
        throw InvalidInput("motion spec: amplitude, period, duration and rate must be positive");
    }
    if (!orientation.allFinite()) {
        throw InvalidInput("motion spec: orientation must be finite");
    }
}

VelocityTrack gen_motion(const MotionSpec& spec) {
    spec.validate();
    const auto steps = static_cast<Eigen::Index>(std::llround(spec.duration * spec.rate));
    if (steps < 1) {
        throw InvalidInput("motion spec: duration * rate rounds to zero samples");
    }
    double phase0 = 0.0;
    if (spec.phase_jitter > 0.0) {
        Rng rng(spec.seed);
        phase0 = uniform(rng, -spec.phase_jitter, spec.phase_jitter);
    }
    const double w = 2.0 * kPi / spec.period;
    const double speed = spec.amplitude * w;

    VelocityTrack out;
    out.v.resize(steps, 3);
    out.times.resize(static_cast<std::size_t>(steps));
    for (Eigen::Index k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / spec.rate;
        const double ph = w * t + phase0;
        Eigen::Vector3d v = Eigen::Vector3d::Zero();
        switch (spec.kind) {
        case Gesture::Circle:
            v = Eigen::Vector3d(-std::sin(ph), std::cos(ph), 0.0) * speed;
            break;
        case Gesture::LeftRight:
            v(0) = speed * std::sin(ph);
            break;
        case Gesture::UpDown:
            v(2) = speed * std::sin(ph);
            break;
        case Gesture::PushPull:
            v(1) = speed * std::sin(ph);
            break;
        }
        out.v.row(k) = (spec.orientation * v).transpose();
        out.times[static_cast<std::size_t>(k)] = t;
    }
    return out;
}

Projections gen_projections(const VelocityTrack& v, std::size_t n_dirs, double noise_sigma, std::uint64_t seed) {
    if (n_dirs < 1) {
        throw InvalidInput("gen_projections: n_dirs must be >= 1");
    }
    if (!(noise_sigma >= 0.0)) {
        throw InvalidInput("gen_projections: noise sigma must be >= 0");
    }
    Rng rng(seed);
    Projections out;
    out.directions = random_directions(n_dirs, rng);
    out.v_r.v_r = v.v * out.directions.r.transpose();
    if (noise_sigma > 0.0) {
        for (Eigen::Index j = 0; j < out.v_r.v_r.cols(); ++j) {
            for (Eigen::Index i = 0; i < out.v_r.v_r.rows(); ++i) {
                out.v_r.v_r(i, j) += noise_sigma * standard_normal(rng);
            }
        }
    }
    out.v_r.window_times = v.times;
    if (out.v_r.window_times.size() != static_cast<std::size_t>(v.v.rows())) {
        out.v_r.window_times.resize(static_cast<std::size_t>(v.v.rows()));
        std::iota(out.v_r.window_times.begin(), out.v_r.window_times.end(), 0.0);
    }
    out.v_r.column_antenna.assign(n_dirs, 0);
    out.v_r.column_bin.resize(n_dirs);
    std::iota(out.v_r.column_bin.begin(), out.v_r.column_bin.end(), std::uint32_t{0});
    return out;
}

void ChannelSpec::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(carrier_hz) || !positive(subcarrier_spacing_hz) || subcarriers < 2) {
        throw InvalidInput("channel spec: carrier, spacing must be positive and N_sub >= 2");
    }
    if (!(noise_sigma >= 0.0)) {
        throw InvalidInput("channel spec: noise sigma must be >= 0");
    }
    const double max_delay = 1.0 / subcarrier_spacing_hz;
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const PathSpec& p = paths[l];
        if (!(p.delay_s >= 0.0) || !(p.delay_s < max_delay)) {
            throw InvalidInput("channel spec: path " + std::to_string(l) + " delay " + std::to_string(p.delay_s) +
                               " s outside the unambiguous range [0, " + std::to_string(max_delay) + ")");
        }
        if (std::abs(p.direction.norm() - 1.0) > 1e-9) {
            throw InvalidInput("channel spec: path " + std::to_string(l) + " direction is not a unit vector");
        }
    }
}

CsiTrial gen_csi(const VelocityTrack& v, std::span<const ChannelSpec> antennas, double rate, std::uint32_t subject,
                 std::uint32_t label) {
    if (antennas.empty()) {
        throw InvalidInput("gen_csi: need at least one antenna channel");
    }
    if (!(rate > 0.0)) {
        throw InvalidInput("gen_csi: rate must be positive");
    }
    if (v.v.cols() != 3 || v.v.rows() < 1) {
        throw InvalidInput("gen_csi: velocity track must be T x 3 with T >= 1");
    }
    const ChannelSpec& ref = antennas.front();
    for (const ChannelSpec& c : antennas) {
        c.validate();
        if (c.subcarriers != ref.subcarriers || c.carrier_hz != ref.carrier_hz ||
            c.subcarrier_spacing_hz != ref.subcarrier_spacing_hz) {
            throw InvalidInput("gen_csi: antennas must share carrier, spacing and subcarrier count");
        }
    }
    const auto frames = static_cast<std::size_t>(v.v.rows());
    const std::size_t n_sub = ref.subcarriers;
    CsiMetadata meta;
    meta.sample_rate_hz = rate;
    meta.carrier_hz = ref.carrier_hz;
    meta.subcarrier_spacing_hz = ref.subcarrier_spacing_hz;
    meta.subject_id = subject;
    meta.activity_label = label;
    CsiTrial trial(CsiShape{frames, n_sub, antennas.size()}, meta);

    std::vector<double> freq(n_sub);
    for (std::size_t n = 0; n < n_sub; ++n) {
        freq[n] = ref.carrier_hz - (static_cast<double>(n) - static_cast<double>(n_sub) / 2.0) * ref.subcarrier_spacing_hz;
    }
    const double dt = 1.0 / rate;

    for (std::size_t a = 0; a < antennas.size(); ++a) {
        const ChannelSpec& chan = antennas[a];
        for (const PathSpec& path : chan.paths) {
            // Radial speed along the path and its trapezoidal running integral.
            const Eigen::VectorXd radial = v.v * path.direction;
            double travelled = 0.0;
            for (std::size_t t = 0; t < frames; ++t) {
                if (t > 0) {
                    travelled += 0.5 * (radial(static_cast<Eigen::Index>(t - 1)) + radial(static_cast<Eigen::Index>(t))) * dt;
                }
                const double tau = path.moving ? path.delay_s - travelled / kSpeedOfLight : path.delay_s;
                for (std::size_t n = 0; n < n_sub; ++n) {
                    const double phase = -2.0 * kPi * std::fmod(freq[n] * tau, 1.0);
                    trial(t, n, a) += path.gain * cdouble(std::cos(phase), std::sin(phase));
                }
            }
        }
        if (chan.noise_sigma > 0.0) {
            Rng rng(chan.seed);
            const double s = chan.noise_sigma / std::sqrt(2.0);
            for (std::size_t t = 0; t < frames; ++t) {
                for (std::size_t n = 0; n < n_sub; ++n) {
                    const double re = standard_normal(rng);
                    const double im = standard_normal(rng);
                    trial(t, n, a) += cdouble(s * re, s * im);
                }
            }
        }
    }
    trial.validate();
    return trial;
}

CsiTrial gen_csi(const VelocityTrack& v, const ChannelSpec& chan, double rate, std::uint32_t subject,
                 std::uint32_t label) {
    return gen_csi(v, std::span<const ChannelSpec>(&chan, 1), rate, subject, label);
}

void inject_phase_ramp(CsiTrial& trial, double max_slope, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t t = 0; t < trial.frames(); ++t) {
        for (std::size_t a = 0; a < trial.antennas(); ++a) {
            const double slope = uniform(rng, -max_slope, max_slope);
            const double intercept = uniform(rng, -kPi, kPi);
            for (std::size_t n = 0; n < trial.subcarriers(); ++n) {
                trial(t, n, a) *= std::polar(1.0, slope * static_cast<double>(n) + intercept);
            }
        }
    }
}

void SynthDatasetSpec::validate() const {
    if (subjects < 1 || trials_per_class < 1 || antennas < 1 || subcarriers < 2) {
        throw InvalidInput("synthetic dataset: subjects, trials, antennas must be >= 1 and subcarriers >= 2");
    }
    if (!(duration > 0.0) || !(rate > 0.0)) {
        throw InvalidInput("synthetic dataset: duration and rate must be positive");
    }
    if (moving_paths + 1 > subcarriers) {
        throw InvalidInput("synthetic dataset: moving_paths + 1 static path must fit in distinct delay bins");
    }
}

SubjectGeometry random_subject_geometry(const SynthDatasetSpec& spec, std::size_t subject) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, "subject-geometry-" + std::to_string(subject)));
    SubjectGeometry geo;
    geo.speed_scale = uniform(rng, 0.85, 1.15);
    const double bin = 1.0 / (static_cast<double>(spec.subcarriers) * spec.subcarrier_spacing_hz);
    for (std::size_t a = 0; a < spec.antennas; ++a) {
        ChannelSpec chan;
        chan.carrier_hz = spec.carrier_hz;
        chan.subcarrier_spacing_hz = spec.subcarrier_spacing_hz;
        chan.subcarriers = spec.subcarriers;
        chan.noise_sigma = spec.noise_sigma;

        std::vector<std::size_t> bins(spec.subcarriers);
        std::iota(bins.begin(), bins.end(), std::size_t{0});
        for (std::size_t i = bins.size(); i > 1; --i) {
            std::swap(bins[i - 1], bins[uniform_index(rng, i)]);
        }
        PathSpec los;
        los.gain = std::polar(spec.static_gain, uniform(rng, -kPi, kPi));
        los.delay_s = static_cast<double>(bins[0]) * bin;
        los.moving = false;
        chan.paths.push_back(los);
        for (std::size_t l = 0; l < spec.moving_paths; ++l) {
            PathSpec p;
            p.gain = std::polar(uniform(rng, 0.03, 0.1), uniform(rng, -kPi, kPi));
            p.delay_s = static_cast<double>(bins[l + 1]) * bin;
            p.direction = random_unit_vector(rng);
            chan.paths.push_back(p);
        }
        geo.antennas.push_back(std::move(chan));
    }
    return geo;
}

MotionSpec gesture_template(Gesture g) {
    MotionSpec m;
    m.kind = g;
    switch (g) {
    case Gesture::Circle:
        m.amplitude = 0.20;
        m.period = 2.5;
        break;
    case Gesture::LeftRight:
        m.amplitude = 0.30;
        m.period = 2.5;
        break;
    case Gesture::UpDown:
        m.amplitude = 0.30;
        m.period = 5.0;
        break;
    case Gesture::PushPull:
        m.amplitude = 0.15;
        m.period = 2.5;
        break;
    }
    return m;
}

CsiTrial synth_trial(const SynthDatasetSpec& spec, const SubjectGeometry& geometry, std::size_t subject, Gesture g,
                     std::size_t trial) {
    Rng rng(derive_seed(spec.seed, "trial-" + std::to_string(subject) + "-" + to_string(g) + "-" +
                                       std::to_string(trial)));
    MotionSpec motion = gesture_template(g);
    motion.amplitude *= geometry.speed_scale * uniform(rng, 0.9, 1.1);
    motion.period *= uniform(rng, 0.95, 1.05);
    motion.duration = spec.duration;
    motion.rate = spec.rate;
    motion.orientation = random_tilt(rng, 20.0 * kPi / 180.0);
    motion.phase_jitter = 0.3;
    motion.seed = rng();
    const VelocityTrack track = gen_motion(motion);

    std::vector<ChannelSpec> channels = geometry.antennas;
    for (ChannelSpec& c : channels) {
        for (PathSpec& p : c.paths) {
            p.gain *= std::polar(1.0, uniform(rng, -kPi, kPi));
        }
        c.seed = rng();
    }
    return gen_csi(track, channels, spec.rate, static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(g));
}

} // namespace dorf
