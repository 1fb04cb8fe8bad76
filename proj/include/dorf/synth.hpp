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

// Ground-truth generators: analytic gesture velocities, noisy projection
// matrices, and multipath CSI with motion-induced path delays.

#ifndef DORF_SYNTH_HPP
#define DORF_SYNTH_HPP

#include "dorf/csi.hpp"
#include "dorf/delay_doppler.hpp"
#include "dorf/factorization.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dorf {

enum class Gesture : std::uint32_t { Circle = 0, LeftRight = 1, UpDown = 2, PushPull = 3 };

inline constexpr std::array<Gesture, 4> kAllGestures = {Gesture::Circle, Gesture::LeftRight, Gesture::UpDown,
                                                        Gesture::PushPull};

std::string to_string(Gesture g);
Gesture gesture_from_string(const std::string& name);

struct MotionSpec {
    Gesture kind = Gesture::Circle;
    double amplitude = 0.2; // m
    double period = 2.5;    // s
    double duration = 5.0;  // s
    double rate = 100.0;    // Hz
    Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
    double phase_jitter = 0.0; // start phase drawn from U[-jitter, jitter] using seed
    std::uint64_t seed = 0;

    void validate() const;
};

// circle:     v(t) = A w (-sin wt, cos wt, 0)
// left_right: v(t) = A w sin(wt) x
// up_down:    v(t) = A w sin(wt) z
// push_pull:  v(t) = A w sin(wt) y
// rotated by orientation; sampled at t = k / rate for k < round(duration * rate).
VelocityTrack gen_motion(const MotionSpec& spec);

struct Projections {
    DopplerMatrix v_r;
    DirectionSet directions;
};

// Directions uniform on the sphere, V_r = V R^T + N(0, sigma^2) i.i.d.
Projections gen_projections(const VelocityTrack& v, std::size_t n_dirs, double noise_sigma, std::uint64_t seed);

struct PathSpec {
    cdouble gain{1.0, 0.0};
    double delay_s = 0.0;
    Eigen::Vector3d direction = Eigen::Vector3d::UnitX(); // unit vector
    bool moving = true; // static paths ignore the motion
};

struct ChannelSpec {
    std::vector<PathSpec> paths;
    double carrier_hz = 2.4e9;
    double subcarrier_spacing_hz = 312.5e3;
    std::size_t subcarriers = 52;
    double noise_sigma = 0.0; // complex white noise std
    std::uint64_t seed = 0;

    void validate() const;
};

// H_n(t) = sum_l beta_l exp(-j 2 pi f_n tau_l(t)), f_n = f_c - (n - N/2) df.
// A moving path's delay is tau_l - d_l(t) / c with d_l the running
// (trapezoidal) integral of v . m_l, so motion along m_l yields Doppler
// +v . m_l / lambda. The track must be sampled at `rate`.
CsiTrial gen_csi(const VelocityTrack& v, const ChannelSpec& chan, double rate, std::uint32_t subject = 0,
                 std::uint32_t label = 0);
// Multi-antenna version: one channel per antenna, all sharing carrier, spacing and subcarrier count.
CsiTrial gen_csi(const VelocityTrack& v, std::span<const ChannelSpec> antennas, double rate, std::uint32_t subject = 0,
                 std::uint32_t label = 0);

// Adds a random per-frame, per-antenna linear phase ramp (slope in
// [-max_slope, max_slope] rad/subcarrier, intercept in [-pi, pi]), the
// STO/SFO-like impairment phase sanitization removes.
void inject_phase_ramp(CsiTrial& trial, double max_slope, std::uint64_t seed);

// Dataset-scale generator used by the CLI and the end-to-end tests. Each
// subject gets its own random multipath geometry per antenna.
struct SynthDatasetSpec {
    std::size_t subjects = 6;
    std::size_t trials_per_class = 20;
    std::size_t antennas = 3;
    std::size_t subcarriers = 52;
    double rate = 100.0;
    double duration = 5.0;
    double carrier_hz = 2.4e9;
    double subcarrier_spacing_hz = 312.5e3;
    std::size_t moving_paths = 24;
    double static_gain = 2.0;
    double noise_sigma = 0.005;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SubjectGeometry {
    std::vector<ChannelSpec> antennas;
    double speed_scale = 1.0;
};

SubjectGeometry random_subject_geometry(const SynthDatasetSpec& spec, std::size_t subject);

// Canonical amplitude and period of each gesture class in the synthetic set.
MotionSpec gesture_template(Gesture g);

// One trial: jittered gesture for this subject, channel phases redrawn per trial.
CsiTrial synth_trial(const SynthDatasetSpec& spec, const SubjectGeometry& geometry, std::size_t subject, Gesture g,
                     std::size_t trial);

} // namespace dorf

#endif
