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


#include "dorf/classifier.hpp"
#include "dorf/csi.hpp"
#include "dorf/delay_doppler.hpp"
#include "dorf/factorization.hpp"
#include "dorf/io.hpp"
#include "dorf/pipeline.hpp"
#include "dorf/radiance_field.hpp"
#include "dorf/synth.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

namespace py = pybind11;
using namespace dorf;

namespace {

using ComplexArray = py::array_t<cdouble, py::array::c_style | py::array::forcecast>;

CsiMetadata make_meta(double sample_rate_hz, double carrier_hz, double spacing_hz, std::uint32_t subject,
                      std::uint32_t label) {
    CsiMetadata m;
    m.sample_rate_hz = sample_rate_hz;
    m.carrier_hz = carrier_hz;
    m.subcarrier_spacing_hz = spacing_hz;
    m.subject_id = subject;
    m.activity_label = label;
    return m;
}

CsiTrial to_trial(const ComplexArray& csi, const CsiMetadata& meta) {
    if (csi.ndim() != 3) {
        throw InvalidInput("csi must be a 3-d array [frames, subcarriers, antennas]");
    }
    const CsiShape shape{static_cast<std::size_t>(csi.shape(0)), static_cast<std::size_t>(csi.shape(1)),
                         static_cast<std::size_t>(csi.shape(2))};
    std::vector<cdouble> samples(csi.data(), csi.data() + shape.size());
    return CsiTrial(shape, meta, std::move(samples));
}

ComplexArray from_trial(const CsiTrial& t) {
    ComplexArray out({t.frames(), t.subcarriers(), t.antennas()});
    std::memcpy(out.mutable_data(), t.samples().data(), t.samples().size() * sizeof(cdouble));
    return out;
}

py::dict meta_dict(const CsiMetadata& m) {
    py::dict d;
    d["sample_rate_hz"] = m.sample_rate_hz;
    d["carrier_hz"] = m.carrier_hz;
    d["subcarrier_spacing_hz"] = m.subcarrier_spacing_hz;
    d["subject"] = m.subject_id;
    d["label"] = m.activity_label;
    return d;
}

PipelineConfig make_config(const std::optional<std::string>& config_text, const std::map<std::string, std::string>& overrides) {
    PipelineConfig cfg = config_text ? PipelineConfig::parse(*config_text) : PipelineConfig{};
    for (const auto& [k, v] : overrides) {
        cfg.set(k, v);
    }
    cfg.validate();
    return cfg;
}

py::dict counts_dict(const StageCounts& c) {
    py::dict d;
    d["doppler"] = c.doppler;
    d["factorize"] = c.factorize;
    d["dorf"] = c.dorf;
    d["features"] = c.features;
    return d;
}

} // namespace

PYBIND11_MODULE(_dorf, m) {
    m.doc() = "DoRF Wi-Fi CSI activity recognition core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("gestures", [] {
        std::vector<std::string> names;
        for (Gesture g : kAllGestures) names.push_back(to_string(g));
        return names;
    });

    m.def("wavelength", &wavelength, py::arg("carrier_hz"));

    m.def(
        "read_csi",
        [](const std::filesystem::path& path) {
            const CsiTrial t = read_csi(path);
            return py::make_tuple(from_trial(t), meta_dict(t.metadata()));
        },
        py::arg("path"), "Returns (csi[T, N, A] complex128, metadata dict).");

    m.def(
        "write_csi",
        [](const std::filesystem::path& path, const ComplexArray& csi, double sample_rate_hz, double carrier_hz,
           double spacing_hz, std::uint32_t subject, std::uint32_t label) {
            write_csi(path, to_trial(csi, make_meta(sample_rate_hz, carrier_hz, spacing_hz, subject, label)));
        },
        py::arg("path"), py::arg("csi"), py::arg("sample_rate_hz") = 100.0, py::arg("carrier_hz") = 2.4e9,
        py::arg("subcarrier_spacing_hz") = 312.5e3, py::arg("subject") = 0, py::arg("label") = 0);

    m.def(
        "sanitize",
        [](const ComplexArray& csi) {
            const SanitizedTrial s = sanitize_trial(to_trial(csi, CsiMetadata{}));
            ComplexArray out({s.frames(), s.subcarriers(), s.antennas()});
            cdouble* dst = out.mutable_data();
            for (std::size_t t = 0; t < s.frames(); ++t)
                for (std::size_t n = 0; n < s.subcarriers(); ++n)
                    for (std::size_t a = 0; a < s.antennas(); ++a) *dst++ = s.value(t, n, a);
            return out;
        },
        py::arg("csi"), "Phase sanitization: per frame and antenna, removes the least-squares linear phase trend.");

    m.def(
        "radial_velocity_matrix",
        [](const ComplexArray& csi, std::size_t antenna, std::size_t bins, bool sanitize, double sample_rate_hz,
           double carrier_hz, double spacing_hz, std::size_t window_len, std::size_t hop) {
            const CsiTrial t = to_trial(csi, make_meta(sample_rate_hz, carrier_hz, spacing_hz, 0, 0));
            SpectrogramConfig sc;
            sc.window_len = window_len;
            sc.hop = hop;
            const BinSelection sel = bins == 0 ? BinSelection::all() : BinSelection::top(bins);
            const DopplerMatrix vr =
                radial_velocity_matrix(sanitize ? sanitize_trial(t) : without_sanitization(t), sc, sel, antenna);
            return py::make_tuple(vr.v_r, vr.window_times);
        },
        py::arg("csi"), py::arg("antenna") = 0, py::arg("bins") = 20, py::arg("sanitize") = true,
        py::arg("sample_rate_hz") = 100.0, py::arg("carrier_hz") = 2.4e9, py::arg("subcarrier_spacing_hz") = 312.5e3,
        py::arg("window_len") = 128, py::arg("hop") = 16, "Returns (v_r[T', bins] in m/s, window centre times).");

    m.def(
        "factorize",
        [](const Eigen::MatrixXd& v_r, double lambda, double gamma, double epsilon, std::size_t max_iters,
           std::uint64_t seed) {
            DopplerMatrix d;
            d.v_r = v_r;
            d.window_times.resize(static_cast<std::size_t>(v_r.rows()));
            for (std::size_t s = 0; s < d.window_times.size(); ++s) d.window_times[s] = static_cast<double>(s);
            d.column_antenna.assign(static_cast<std::size_t>(v_r.cols()), 0);
            d.column_bin.resize(static_cast<std::size_t>(v_r.cols()));
            for (std::size_t i = 0; i < d.column_bin.size(); ++i) d.column_bin[i] = static_cast<std::uint32_t>(i);
            FactorizationConfig cfg;
            cfg.lambda = lambda;
            cfg.gamma = gamma;
            cfg.epsilon = epsilon;
            cfg.max_iters = max_iters;
            cfg.seed = seed;
            const Factorization f = factorize(d, cfg);
            py::dict report;
            report["iterations"] = f.report.iterations;
            report["stop_reason"] = to_string(f.report.stop_reason);
            report["losses"] = f.report.losses;
            report["relative_residual"] = f.report.relative_residual;
            report["direction_fallbacks"] = f.report.direction_fallbacks;
            return py::make_tuple(f.velocity.v, f.directions.r, report);
        },
        py::arg("v_r"), py::arg("lam") = 1e-3, py::arg("gamma") = 0.01, py::arg("epsilon") = 0.01,
        py::arg("max_iters") = 100, py::arg("seed") = 0, "Returns (V[T', 3], R[N, 3], report dict).");

    m.def(
        "sphere_grid", [](std::size_t m_rows) { return sphere_grid(m_rows).directions; }, py::arg("m"),
        "Grid directions [2M^2, 3], row m * 2M + n.");

    m.def(
        "project_dorf",
        [](const Eigen::MatrixXd& v, std::size_t m_rows) {
            VelocityTrack track;
            track.v = v;
            return project_dorf(track, sphere_grid(m_rows)).p;
        },
        py::arg("velocity"), py::arg("m") = 8, "Projections [T', 2M^2] of V onto the grid.");

    m.def(
        "pooled_features",
        [](const Eigen::MatrixXd& projections, std::size_t kernels, std::size_t input_length, std::uint64_t seed) {
            const KernelBank bank = build_kernel_bank(kernels, input_length == 0 ? static_cast<std::size_t>(projections.rows()) : input_length, seed);
            return pool_features(extract_features(projections, bank));
        },
        py::arg("projections"), py::arg("kernels") = 1000, py::arg("input_length") = 0, py::arg("seed") = 0,
        "Random-kernel features per projection channel, max-pooled over channels.");

    m.def(
        "gen_motion",
        [](const std::string& gesture, double amplitude, double period, double duration, double rate) {
            MotionSpec spec = gesture_template(gesture_from_string(gesture));
            spec.amplitude = amplitude;
            spec.period = period;
            spec.duration = duration;
            spec.rate = rate;
            const VelocityTrack v = gen_motion(spec);
            return py::make_tuple(v.v, v.times);
        },
        py::arg("gesture"), py::arg("amplitude") = 0.2, py::arg("period") = 2.5, py::arg("duration") = 5.0,
        py::arg("rate") = 100.0, "Ground-truth hand velocity [T, 3] and sample times.");

    m.def(
        "synth",
        [](const std::filesystem::path& out_dir, std::size_t subjects, std::size_t trials_per_class, double duration,
           std::uint64_t seed, std::size_t jobs) {
            SynthDatasetSpec spec;
            spec.subjects = subjects;
            spec.trials_per_class = trials_per_class;
            spec.duration = duration;
            spec.seed = seed;
            py::gil_scoped_release release;
            return cmd_synth(spec, out_dir, jobs).files;
        },
        py::arg("out_dir"), py::arg("subjects") = 6, py::arg("trials_per_class") = 20, py::arg("duration") = 5.0,
        py::arg("seed") = 1, py::arg("jobs") = 0, "Writes a synthetic trial set; returns the file count.");

    m.def(
        "pipeline",
        [](const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
           const std::optional<std::string>& config_text, const std::map<std::string, std::string>& overrides) {
            PipelineConfig cfg = make_config(config_text, overrides);
            cfg.data_dir = data_dir;
            cfg.out_dir = out_dir;
            PipelineResult r;
            {
                py::gil_scoped_release release;
                r = cmd_pipeline(cfg);
            }
            py::dict d;
            d["trials"] = r.trials.size();
            d["dorf_files"] = r.dorf_files;
            d["executed"] = counts_dict(r.executed);
            d["cached"] = counts_dict(r.cached);
            d["seconds"] = r.seconds;
            return d;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = std::nullopt,
        py::arg("overrides") = std::map<std::string, std::string>{});

    m.def(
        "loso",
        [](const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
           const std::optional<std::string>& config_text, const std::map<std::string, std::string>& overrides) {
            PipelineConfig cfg = make_config(config_text, overrides);
            cfg.data_dir = data_dir;
            cfg.out_dir = out_dir;
            LosoReport r;
            {
                py::gil_scoped_release release;
                r = cmd_loso(cfg);
            }
            py::dict d;
            d["mean"] = r.mean;
            d["std"] = r.stddev;
            std::vector<double> acc;
            std::vector<std::uint32_t> subjects;
            for (const FoldResult& f : r.folds) {
                acc.push_back(f.accuracy);
                subjects.push_back(f.subject);
            }
            d["fold_accuracy"] = acc;
            d["fold_subject"] = subjects;
            d["confusion"] = Eigen::MatrixXi(r.confusion);
            d["config_hash"] = r.config_hash;
            d["report"] = r.to_text();
            return d;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = std::nullopt,
        py::arg("overrides") = std::map<std::string, std::string>{});

    m.def(
        "config_text",
        [](const std::optional<std::string>& config_text, const std::map<std::string, std::string>& overrides) {
            return make_config(config_text, overrides).to_text();
        },
        py::arg("config") = std::nullopt, py::arg("overrides") = std::map<std::string, std::string>{},
        "Effective configuration after overrides, in config-file syntax.");
}
