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


#include "dorf/pipeline.hpp"

#include "binary_io.hpp"
#include "dorf/hash.hpp"
#include "dorf/io.hpp"
#include "dorf/radiance_field.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace dorf {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Shortest text that parses back to the same double.
std::string fmt_double(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string fmt_fixed(double x, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string class_name(std::uint32_t label) {
    if (label < kAllGestures.size()) {
        return to_string(kAllGestures[label]);
    }
    return "class" + std::to_string(label);
}

// Rethrows the active exception with a trial/stage prefix, keeping its category.
[[noreturn]] void rethrow_in_stage(const std::string& trial, const char* stage) {
    const std::string prefix = "trial " + trial + ", stage " + stage + ": ";
    try {
        throw;
    } catch (const InvalidInput& e) {
        throw InvalidInput(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const fs::filesystem_error& e) {
        throw DataError(prefix + e.what());
    }
}

void write_features(const fs::path& path, const Eigen::VectorXd& pooled) {
    detail::ByteWriter w;
    w.magic("DORFFT01");
    w.u32(static_cast<std::uint32_t>(pooled.size()));
    for (Eigen::Index i = 0; i < pooled.size(); ++i) {
        w.f64(pooled(i));
    }
    w.save(path);
}

Eigen::VectorXd read_features(const fs::path& path) {
    auto r = detail::ByteReader::from_file(path);
    r.expect_magic("DORFFT01");
    const std::uint32_t n = r.u32();
    r.need(std::size_t{n} * 8);
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        v(i) = r.f64();
    }
    r.expect_end();
    return v;
}

} // namespace

// ---------------------------------------------------------------- config

void PipelineConfig::set(const std::string& key, const std::string& value) {
    const std::string& v = value;
    if (key == "version") {
        if (parse_uint(key, v) != static_cast<std::uint64_t>(kVersion)) {
            throw ConfigError("unsupported config version " + v + " (expected " + std::to_string(kVersion) + ")");
        }
    } else if (key == "data_dir") {
        data_dir = v;
    } else if (key == "out_dir") {
        out_dir = v;
    } else if (key == "seed") {
        seed = parse_uint(key, v);
    } else if (key == "jobs") {
        jobs = parse_uint(key, v);
    } else if (key == "sanitize") {
        sanitize = parse_bool(key, v);
    } else if (key == "spectrogram.window_len") {
        spectrogram.window_len = parse_uint(key, v);
    } else if (key == "spectrogram.hop") {
        spectrogram.hop = parse_uint(key, v);
    } else if (key == "spectrogram.window") {
        try {
            spectrogram.window = taper_from_string(v);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "spectrogram.zero_pad_factor") {
        spectrogram.zero_pad_factor = parse_uint(key, v);
    } else if (key == "spectrogram.dc_guard_hz") {
        spectrogram.dc_guard_hz = parse_real(key, v);
    } else if (key == "doppler.bins_per_antenna") {
        bins_per_antenna = parse_uint(key, v);
    } else if (key == "factorization.lambda") {
        factorization.lambda = parse_real(key, v);
    } else if (key == "factorization.gamma") {
        factorization.gamma = parse_real(key, v);
    } else if (key == "factorization.epsilon") {
        factorization.epsilon = parse_real(key, v);
    } else if (key == "factorization.max_iters") {
        factorization.max_iters = parse_uint(key, v);
    } else if (key == "factorization.dtw_band") {
        if (v == "auto") {
            factorization.dtw_band.reset();
        } else {
            factorization.dtw_band = static_cast<int>(parse_uint(key, v));
        }
    } else if (key == "grid.m") {
        grid_m = parse_uint(key, v);
    } else if (key == "antenna") {
        if (v == "all") {
            antenna.reset();
        } else {
            antenna = parse_uint(key, v);
        }
    } else if (key == "classifier.kernels") {
        kernels = parse_uint(key, v);
    } else if (key == "training.learning_rate") {
        training.learning_rate = parse_real(key, v);
    } else if (key == "training.batch_size") {
        training.batch_size = parse_uint(key, v);
    } else if (key == "training.label_smoothing") {
        training.label_smoothing = parse_real(key, v);
    } else if (key == "training.max_epochs") {
        training.max_epochs = parse_uint(key, v);
    } else if (key == "training.patience") {
        training.patience = parse_uint(key, v);
    } else if (key == "training.weight_decay") {
        training.weight_decay = parse_real(key, v);
    } else if (key == "training.beta1") {
        training.beta1 = parse_real(key, v);
    } else if (key == "training.beta2") {
        training.beta2 = parse_real(key, v);
    } else if (key == "training.adam_eps") {
        training.adam_eps = parse_real(key, v);
    } else if (key == "training.validation_fraction") {
        training.validation_fraction = parse_real(key, v);
    } else if (key == "training.projection_dim") {
        training.projection_dim = parse_uint(key, v);
    } else if (key == "training.hidden_dim") {
        training.hidden_dim = parse_uint(key, v);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool saw_version = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
        saw_version = saw_version || key == "version";
    }
    if (!saw_version) {
        throw ConfigError("config is missing 'version = " + std::to_string(kVersion) + "'");
    }
    return cfg;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    std::ostringstream s;
    s << in.rdbuf();
    return parse(s.str());
}

std::string PipelineConfig::doppler_settings() const {
    std::ostringstream o;
    o << "sanitize = " << (sanitize ? "true" : "false") << '\n'
      << "spectrogram.window_len = " << spectrogram.window_len << '\n'
      << "spectrogram.hop = " << spectrogram.hop << '\n'
      << "spectrogram.window = " << to_string(spectrogram.window) << '\n'
      << "spectrogram.zero_pad_factor = " << spectrogram.zero_pad_factor << '\n'
      << "spectrogram.dc_guard_hz = " << fmt_double(spectrogram.dc_guard_hz) << '\n'
      << "doppler.bins_per_antenna = " << bins_per_antenna << '\n';
    return o.str();
}

std::string PipelineConfig::factorization_settings() const {
    std::ostringstream o;
    o << "seed = " << seed << '\n'
      << "factorization.lambda = " << fmt_double(factorization.lambda) << '\n'
      << "factorization.gamma = " << fmt_double(factorization.gamma) << '\n'
      << "factorization.epsilon = " << fmt_double(factorization.epsilon) << '\n'
      << "factorization.max_iters = " << factorization.max_iters << '\n'
      << "factorization.dtw_band = "
      << (factorization.dtw_band ? std::to_string(*factorization.dtw_band) : std::string("auto")) << '\n';
    return o.str();
}

std::string PipelineConfig::dorf_settings() const {
    std::ostringstream o;
    o << "grid.m = " << grid_m << '\n'
      << "antenna = " << (antenna ? std::to_string(*antenna) : std::string("all")) << '\n';
    return o.str();
}

std::string PipelineConfig::feature_settings() const {
    std::ostringstream o;
    o << "seed = " << seed << '\n' << "classifier.kernels = " << kernels << '\n';
    return o.str();
}

std::string PipelineConfig::training_settings() const {
    std::ostringstream o;
    o << "training.learning_rate = " << fmt_double(training.learning_rate) << '\n'
      << "training.batch_size = " << training.batch_size << '\n'
      << "training.label_smoothing = " << fmt_double(training.label_smoothing) << '\n'
      << "training.max_epochs = " << training.max_epochs << '\n'
      << "training.patience = " << training.patience << '\n'
      << "training.weight_decay = " << fmt_double(training.weight_decay) << '\n'
      << "training.beta1 = " << fmt_double(training.beta1) << '\n'
      << "training.beta2 = " << fmt_double(training.beta2) << '\n'
      << "training.adam_eps = " << fmt_double(training.adam_eps) << '\n'
      << "training.validation_fraction = " << fmt_double(training.validation_fraction) << '\n'
      << "training.projection_dim = " << training.projection_dim << '\n'
      << "training.hidden_dim = " << training.hidden_dim << '\n';
    return o.str();
}

std::string PipelineConfig::to_text() const {
    std::ostringstream o;
    o << "version = " << kVersion << '\n'
      << "data_dir = " << data_dir.string() << '\n'
      << "out_dir = " << out_dir.string() << '\n'
      << "jobs = " << jobs << '\n'
      << doppler_settings() << factorization_settings() << dorf_settings()
      << "classifier.kernels = " << kernels << '\n'
      << training_settings();
    return o.str();
}

std::string PipelineConfig::hash() const {
    // Paths and thread count do not affect results.
    return sha256_hex(doppler_settings() + factorization_settings() + dorf_settings() + feature_settings() +
                      training_settings());
}

void PipelineConfig::validate() const {
    if (spectrogram.hop < 1 || spectrogram.window_len < 1 || spectrogram.zero_pad_factor < 1 ||
        spectrogram.hop > spectrogram.window_len) {
        throw ConfigError("spectrogram: need 1 <= hop <= window_len and zero_pad_factor >= 1");
    }
    if (grid_m < 1) {
        throw ConfigError("grid.m must be >= 1");
    }
    if (kernels < 1) {
        throw ConfigError("classifier.kernels must be >= 1");
    }
    if (!(training.validation_fraction > 0.0) || !(training.validation_fraction < 1.0)) {
        throw ConfigError("training.validation_fraction must lie in (0, 1)");
    }
    if (training.batch_size < 1 || training.max_epochs < 1 || !(training.learning_rate > 0.0)) {
        throw ConfigError("training: batch_size, max_epochs and learning_rate must be positive");
    }
    try {
        factorization.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

std::size_t PipelineConfig::effective_jobs() const {
    if (jobs > 0) {
        return jobs;
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------- utilities

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::vector<TrialInfo> scan_trials(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw DataError("data directory " + dir.string() + " does not exist");
    }
    std::vector<TrialInfo> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".csi") {
            continue;
        }
        auto r = detail::ByteReader::from_file(entry.path());
        r.expect_magic("DORFCSI1");
        TrialInfo info;
        info.id = entry.path().stem().string();
        info.path = entry.path();
        info.shape.frames = r.u32();
        info.shape.subcarriers = r.u32();
        info.shape.antennas = r.u32();
        r.f64();
        r.f64();
        r.f64();
        info.label = r.u32();
        info.subject = r.u32();
        out.push_back(std::move(info));
    }
    std::sort(out.begin(), out.end(), [](const TrialInfo& a, const TrialInfo& b) { return a.id < b.id; });
    return out;
}

Inventory inventory(const std::vector<TrialInfo>& trials) {
    Inventory inv;
    for (const TrialInfo& t : trials) {
        ++inv.counts[t.subject][t.label];
    }
    return inv;
}

std::string Inventory::to_text() const {
    std::set<std::uint32_t> labels;
    std::size_t total = 0;
    for (const auto& [s, per] : counts) {
        for (const auto& [l, n] : per) {
            labels.insert(l);
            total += n;
        }
    }
    std::ostringstream o;
    o << "subjects: " << counts.size() << ", classes: " << labels.size() << ", trials: " << total << '\n';
    for (const auto& [s, per] : counts) {
        o << "  subject " << s << ':';
        for (std::uint32_t l : labels) {
            const auto it = per.find(l);
            o << ' ' << class_name(l) << '=' << (it == per.end() ? 0 : it->second);
        }
        o << '\n';
    }
    return o.str();
}

std::string synth_trial_id(std::size_t subject, Gesture g, std::size_t trial) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "s%02zu_c%u_t%02zu", subject, static_cast<unsigned>(g), trial);
    return buf;
}

// ---------------------------------------------------------------- synth / ingest

SynthResult cmd_synth(const SynthDatasetSpec& spec, const fs::path& out_dir, std::size_t jobs) {
    spec.validate();
    std::vector<SubjectGeometry> geometry;
    for (std::size_t s = 0; s < spec.subjects; ++s) {
        geometry.push_back(random_subject_geometry(spec, s));
    }
    const std::size_t per_subject = kAllGestures.size() * spec.trials_per_class;
    const std::size_t n = spec.subjects * per_subject;
    fs::create_directories(out_dir);
    parallel_for(n, jobs, [&](std::size_t i) {
        const std::size_t s = i / per_subject;
        const Gesture g = kAllGestures[(i % per_subject) / spec.trials_per_class];
        const std::size_t t = i % spec.trials_per_class;
        const CsiTrial trial = synth_trial(spec, geometry[s], s, g, t);
        write_csi(out_dir / (synth_trial_id(s, g, t) + ".csi"), trial);
    });
    SynthResult res;
    res.files = n;
    res.inventory = inventory(scan_trials(out_dir));
    return res;
}

IngestResult cmd_ingest(const std::vector<fs::path>& inputs, const CsvImportOptions& opts, const fs::path& out_dir) {
    if (inputs.empty()) {
        throw InvalidInput("ingest: no input files");
    }
    IngestResult res;
    std::vector<TrialInfo> infos;
    for (const fs::path& in : inputs) {
        const fs::path target = out_dir / (in.stem().string() + ".csi");
        CsiTrial trial = in.extension() == ".csv" ? import_csi_csv(in, opts) : read_csi(in);
        write_csi(target, trial);
        res.written.push_back(target);
        TrialInfo info;
        info.id = in.stem().string();
        info.path = target;
        info.subject = trial.metadata().subject_id;
        info.label = trial.metadata().activity_label;
        info.shape = trial.shape();
        infos.push_back(std::move(info));
    }
    res.inventory = inventory(infos);
    return res;
}

// ---------------------------------------------------------------- pipeline

namespace {

struct StageCounters {
    std::atomic<std::size_t> doppler{0};
    std::atomic<std::size_t> factorize{0};
    std::atomic<std::size_t> dorf{0};
    std::atomic<std::size_t> features{0};

    StageCounts snapshot() const { return {doppler.load(), factorize.load(), dorf.load(), features.load()}; }
};

struct TrialKeys {
    std::string doppler;
    std::string factor;
    std::string dorf;
};

TrialKeys trial_keys(const PipelineConfig& cfg, const TrialInfo& trial) {
    TrialKeys k;
    const std::string input = sha256_file(trial.path);
    k.doppler = sha256_hex(input + '\n' + cfg.doppler_settings());
    k.factor = sha256_hex(k.doppler + '\n' + cfg.factorization_settings());
    k.dorf = sha256_hex(k.factor + '\n' + cfg.dorf_settings());
    return k;
}

std::vector<std::size_t> antennas_for(const PipelineConfig& cfg, const TrialInfo& trial) {
    if (cfg.antenna) {
        if (*cfg.antenna >= trial.shape.antennas) {
            throw InvalidInput("antenna " + std::to_string(*cfg.antenna) + " requested but trial has " +
                               std::to_string(trial.shape.antennas));
        }
        return {*cfg.antenna};
    }
    std::vector<std::size_t> all(trial.shape.antennas);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

std::string read_key_file(const fs::path& p) {
    std::ifstream in(p);
    std::string s;
    std::getline(in, s);
    return s;
}

fs::path run_trial(const PipelineConfig& cfg, const TrialInfo& trial, StageCounters& executed,
                   StageCounters& cached) {
    const fs::path cache = cfg.out_dir / "cache";
    const fs::path out = cfg.out_dir / "dorf" / (trial.id + ".pf");
    const fs::path key_file = cfg.out_dir / "dorf" / (trial.id + ".key");
    TrialKeys keys;
    try {
        keys = trial_keys(cfg, trial);
    } catch (...) {
        rethrow_in_stage(trial.id, "hash");
    }
    if (fs::exists(out) && fs::exists(key_file) && read_key_file(key_file) == keys.dorf) {
        ++cached.dorf;
        return out;
    }

    const std::vector<std::size_t> antennas = antennas_for(cfg, trial);
    auto doppler_path = [&](std::size_t a) {
        return cache / "doppler" / (keys.doppler + "_a" + std::to_string(a) + ".vr");
    };
    auto factor_path = [&](std::size_t a) {
        return cache / "factor" / (keys.factor + "_a" + std::to_string(a) + ".vf");
    };

    std::optional<SanitizedTrial> sanitized;
    bool ran_doppler = false;
    bool ran_factor = false;
    for (std::size_t a : antennas) {
        if (fs::exists(factor_path(a))) {
            continue;
        }
        if (!fs::exists(doppler_path(a))) {
            try {
                if (!sanitized) {
                    const CsiTrial csi = read_csi(trial.path);
                    sanitized = cfg.sanitize ? sanitize_trial(csi) : without_sanitization(csi);
                }
                const BinSelection sel =
                    cfg.bins_per_antenna == 0 ? BinSelection::all() : BinSelection::top(cfg.bins_per_antenna);
                const DopplerMatrix vr = radial_velocity_matrix(*sanitized, cfg.spectrogram, sel, a);
                write_doppler(doppler_path(a), vr);
            } catch (...) {
                rethrow_in_stage(trial.id, "doppler");
            }
            ran_doppler = true;
        }
        try {
            const DopplerMatrix vr = read_doppler(doppler_path(a));
            FactorizationConfig fc = cfg.factorization;
            fc.seed = derive_seed(cfg.seed, "factorize-" + keys.doppler + "-" + std::to_string(a));
            const Factorization f = factorize(vr, fc);
            write_text(cache / "factor" / (keys.factor + "_a" + std::to_string(a) + ".fit.txt"), f.report.to_text());
            write_factorization(factor_path(a), f.velocity, f.directions);
        } catch (...) {
            rethrow_in_stage(trial.id, "factorize");
        }
        ran_factor = true;
    }
    if (ran_doppler) {
        ++executed.doppler;
    } else if (!ran_factor) {
        ++cached.doppler;
    }
    if (ran_factor) {
        ++executed.factorize;
    } else {
        ++cached.factorize;
    }

    try {
        const SphereGrid grid = sphere_grid(cfg.grid_m);
        std::vector<DoRF> fields;
        for (std::size_t a : antennas) {
            const auto [velocity, directions] = read_factorization(factor_path(a));
            fields.push_back(project_dorf(velocity, grid, static_cast<std::uint32_t>(a)));
        }
        write_dorf(out, merge_dorfs(fields));
        write_text(key_file, keys.dorf + '\n');
    } catch (...) {
        rethrow_in_stage(trial.id, "dorf");
    }
    ++executed.dorf;
    return out;
}

} // namespace

PipelineResult cmd_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    const auto start = Clock::now();
    PipelineResult res;
    res.trials = scan_trials(cfg.data_dir);
    if (res.trials.empty()) {
        throw DataError("no .csi trials found in " + cfg.data_dir.string());
    }
    res.dorf_files.resize(res.trials.size());
    StageCounters executed;
    StageCounters cached;
    parallel_for(res.trials.size(), cfg.effective_jobs(), [&](std::size_t i) {
        res.dorf_files[i] = run_trial(cfg, res.trials[i], executed, cached);
    });
    res.executed = executed.snapshot();
    res.cached = cached.snapshot();
    res.seconds = seconds_since(start);
    return res;
}

// ---------------------------------------------------------------- LOSO

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) {
        return {0.0, 0.0};
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return {mean, std::sqrt(ss / n)};
}

std::string LosoReport::to_text() const {
    std::ostringstream o;
    o << "LOSO evaluation (" << folds.size() << " folds)\n";
    o << "config hash: " << config_hash << "\n\n";
    o << "subject  train  val  test  epochs  accuracy\n";
    for (const FoldResult& f : folds) {
        char line[128];
        std::snprintf(line, sizeof line, "%7u  %5zu  %3zu  %4zu  %6zu  %7.2f%%\n", f.subject, f.train_trials,
                      f.validation_trials, f.test_trials, f.epochs, 100.0 * f.accuracy);
        o << line;
    }
    o << "\nMean: " << fmt_fixed(100.0 * mean, 2) << "%\n";
    o << "Standard Deviation: " << fmt_fixed(100.0 * stddev, 2) << "%\n\n";
    o << "Confusion matrix (rows: true, columns: predicted)\n";
    o << "            ";
    for (std::uint32_t c : classes) {
        char cell[32];
        std::snprintf(cell, sizeof cell, "%11s", class_name(c).c_str());
        o << cell;
    }
    o << '\n';
    for (Eigen::Index i = 0; i < confusion.rows(); ++i) {
        char head[32];
        std::snprintf(head, sizeof head, "%11s ", class_name(classes[static_cast<std::size_t>(i)]).c_str());
        o << head;
        for (Eigen::Index j = 0; j < confusion.cols(); ++j) {
            char cell[32];
            std::snprintf(cell, sizeof cell, "%11d", confusion(i, j));
            o << cell;
        }
        o << '\n';
    }
    return o.str();
}

std::string LosoReport::to_kv() const {
    std::ostringstream o;
    o << "config_hash = " << config_hash << '\n';
    o << "folds = " << folds.size() << '\n';
    o << "classes =";
    for (std::uint32_t c : classes) {
        o << ' ' << class_name(c);
    }
    o << '\n';
    for (std::size_t i = 0; i < folds.size(); ++i) {
        const FoldResult& f = folds[i];
        const std::string p = "fold." + std::to_string(i) + ".";
        o << p << "subject = " << f.subject << '\n'
          << p << "train_trials = " << f.train_trials << '\n'
          << p << "validation_trials = " << f.validation_trials << '\n'
          << p << "test_trials = " << f.test_trials << '\n'
          << p << "epochs = " << f.epochs << '\n'
          << p << "best_epoch = " << f.best_epoch << '\n'
          << p << "accuracy = " << fmt_double(f.accuracy) << '\n';
        o << p << "confusion =";
        for (Eigen::Index r = 0; r < f.confusion.rows(); ++r) {
            for (Eigen::Index c = 0; c < f.confusion.cols(); ++c) {
                o << ' ' << f.confusion(r, c);
            }
        }
        o << '\n';
    }
    o << "mean = " << fmt_double(mean) << '\n';
    o << "std = " << fmt_double(stddev) << '\n';
    o << "confusion =";
    for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
        for (Eigen::Index c = 0; c < confusion.cols(); ++c) {
            o << ' ' << confusion(r, c);
        }
    }
    o << '\n';
    for (const auto& [k, v] : timing) {
        o << "timing." << k << " = " << fmt_fixed(v, 3) << '\n';
    }
    return o.str();
}

LosoReport cmd_loso(const PipelineConfig& cfg) {
    cfg.validate();
    const auto start = Clock::now();
    LosoReport report;
    report.config_hash = cfg.hash();

    const std::vector<TrialInfo> trials = scan_trials(cfg.data_dir);
    std::set<std::uint32_t> subjects;
    std::set<std::uint32_t> labels;
    for (const TrialInfo& t : trials) {
        subjects.insert(t.subject);
        labels.insert(t.label);
    }
    if (subjects.size() < 2) {
        throw InvalidInput("LOSO requires ≥2 subjects (found " + std::to_string(subjects.size()) + ")");
    }
    report.classes.assign(labels.begin(), labels.end());
    const std::size_t k = report.classes.size();
    if (k < 2) {
        throw InvalidInput("LOSO requires at least 2 classes");
    }
    auto class_index = [&](std::uint32_t label) {
        return static_cast<int>(std::lower_bound(report.classes.begin(), report.classes.end(), label) -
                                report.classes.begin());
    };

    const PipelineResult pipe = cmd_pipeline(cfg);
    report.timing["pipeline_s"] = pipe.seconds;

    // Features: one pooled vector per trial, cached by DoRF key.
    const auto feat_start = Clock::now();
    std::size_t min_steps = std::numeric_limits<std::size_t>::max();
    for (const TrialInfo& t : pipe.trials) {
        min_steps = std::min(min_steps, window_count(t.shape.frames, cfg.spectrogram));
    }
    const KernelBank bank = build_kernel_bank(cfg.kernels, min_steps, derive_seed(cfg.seed, "kernels"));
    const std::string feature_settings = cfg.feature_settings() + "input_length = " + std::to_string(min_steps) + '\n';
    Eigen::MatrixXd features(static_cast<Eigen::Index>(pipe.trials.size()),
                             static_cast<Eigen::Index>(bank.feature_dim()));
    parallel_for(pipe.trials.size(), cfg.effective_jobs(), [&](std::size_t i) {
        const TrialInfo& t = pipe.trials[i];
        try {
            const std::string dorf_key = read_key_file(cfg.out_dir / "dorf" / (t.id + ".key"));
            const fs::path path = cfg.out_dir / "cache" / "features" / (sha256_hex(dorf_key + '\n' + feature_settings) + ".ft");
            if (!fs::exists(path)) {
                const MergedDoRF field = read_dorf(pipe.dorf_files[i]);
                write_features(path, pool_features(extract_features(field.x, bank)));
            }
            const Eigen::VectorXd v = read_features(path);
            if (v.size() != features.cols()) {
                throw DataError(path.string() + ": feature length " + std::to_string(v.size()) + ", expected " +
                                std::to_string(features.cols()));
            }
            features.row(static_cast<Eigen::Index>(i)) = v.transpose();
        } catch (...) {
            rethrow_in_stage(t.id, "features");
        }
    });
    report.timing["features_s"] = seconds_since(feat_start);

    report.confusion = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    std::ostringstream predictions;
    predictions << "trial_id,subject,label";
    for (std::uint32_t c : report.classes) {
        predictions << ",p_" << class_name(c);
    }
    predictions << ",predicted\n";

    std::vector<double> accuracies;
    std::size_t fold_index = 0;
    for (std::uint32_t held_out : subjects) {
        const auto fold_start = Clock::now();
        std::vector<std::size_t> train_rows;
        std::vector<std::size_t> test_rows;
        for (std::size_t i = 0; i < pipe.trials.size(); ++i) {
            (pipe.trials[i].subject == held_out ? test_rows : train_rows).push_back(i);
        }
        std::vector<int> train_labels;
        for (std::size_t i : train_rows) {
            train_labels.push_back(class_index(pipe.trials[i].label));
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (std::count(train_labels.begin(), train_labels.end(), static_cast<int>(c)) < 2) {
                throw InvalidInput("fold " + std::to_string(fold_index) + " (held-out subject " +
                                   std::to_string(held_out) + "): class " + class_name(report.classes[c]) +
                                   " has fewer than 2 training trials");
            }
        }
        const Split split = stratified_split(train_labels, cfg.training.validation_fraction,
                                             derive_seed(cfg.seed, "split-" + std::to_string(held_out)));
        FeatureDataset all;
        all.x.resize(static_cast<Eigen::Index>(train_rows.size()), features.cols());
        for (std::size_t r = 0; r < train_rows.size(); ++r) {
            all.x.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(train_rows[r]));
        }
        all.labels = train_labels;

        TrainingConfig tc = cfg.training;
        tc.seed = derive_seed(cfg.seed, "train-" + std::to_string(held_out));
        Model model;
        try {
            model = train(all.subset(split.train), all.subset(split.validation), k, tc);
        } catch (const NumericError& e) {
            throw NumericError("fold " + std::to_string(fold_index) + ": " + e.what());
        }

        FoldResult fold;
        fold.subject = held_out;
        fold.train_trials = split.train.size();
        fold.validation_trials = split.validation.size();
        fold.test_trials = test_rows.size();
        fold.epochs = model.history.epochs_run;
        fold.best_epoch = model.history.best_epoch;
        fold.confusion = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        std::size_t correct = 0;
        for (std::size_t i : test_rows) {
            const Eigen::VectorXd p = predict(model, Eigen::VectorXd(features.row(static_cast<Eigen::Index>(i)).transpose()));
            Eigen::Index best = 0;
            p.maxCoeff(&best);
            const int truth = class_index(pipe.trials[i].label);
            ++fold.confusion(truth, best);
            correct += best == truth ? 1 : 0;
            predictions << pipe.trials[i].id << ',' << pipe.trials[i].subject << ',' << class_name(pipe.trials[i].label);
            for (Eigen::Index c = 0; c < p.size(); ++c) {
                predictions << ',' << fmt_double(p(c));
            }
            predictions << ',' << class_name(report.classes[static_cast<std::size_t>(best)]) << '\n';
        }
        fold.accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
        fold.seconds = seconds_since(fold_start);
        report.timing["fold." + std::to_string(fold_index) + "_s"] = fold.seconds;
        report.confusion += fold.confusion;
        accuracies.push_back(fold.accuracy);
        report.folds.push_back(std::move(fold));
        ++fold_index;
    }
    std::tie(report.mean, report.stddev) = mean_std(accuracies);
    report.timing["total_s"] = seconds_since(start);

    const fs::path dir = cfg.out_dir / "loso";
    std::vector<std::string> names;
    for (std::uint32_t c : report.classes) {
        names.push_back(class_name(c));
    }
    write_text(dir / "report.txt", report.to_text());
    write_text(dir / "report.kv", report.to_kv());
    write_text(dir / "predictions.csv", predictions.str());
    write_text(dir / "confusion.svg", confusion_svg(report.confusion, names, "LOSO confusion (all folds)"));
    for (const FoldResult& f : report.folds) {
        write_text(dir / ("confusion_subject" + std::to_string(f.subject) + ".svg"),
                   confusion_svg(f.confusion, names, "Held-out subject " + std::to_string(f.subject)));
    }
    return report;
}

// ---------------------------------------------------------------- plots

std::string confusion_svg(const Eigen::MatrixXi& confusion, const std::vector<std::string>& labels,
                          const std::string& title) {
    const int k = static_cast<int>(confusion.rows());
    const int cell = 70;
    const int left = 110;
    const int top = 60;
    const int width = left + k * cell + 20;
    const int height = top + k * cell + 60;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    for (int i = 0; i < k; ++i) {
        const int row_total = confusion.row(i).sum();
        for (int j = 0; j < k; ++j) {
            const double frac = row_total > 0 ? static_cast<double>(confusion(i, j)) / row_total : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - frac)));
            o << "<rect x=\"" << left + j * cell << "\" y=\"" << top + i * cell << "\" width=\"" << cell
              << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#888\"/>\n";
            o << "<text x=\"" << left + j * cell + cell / 2 << "\" y=\"" << top + i * cell + cell / 2 + 4
              << "\" text-anchor=\"middle\" fill=\"" << (frac > 0.5 ? "white" : "black") << "\">" << confusion(i, j)
              << "</text>\n";
        }
        const std::string& name = i < static_cast<int>(labels.size()) ? labels[static_cast<std::size_t>(i)] : "";
        o << "<text x=\"" << left - 6 << "\" y=\"" << top + i * cell + cell / 2 + 4 << "\" text-anchor=\"end\">"
          << name << "</text>\n";
        o << "<text x=\"" << left + i * cell + cell / 2 << "\" y=\"" << top + k * cell + 18
          << "\" text-anchor=\"middle\">" << name << "</text>\n";
    }
    o << "<text x=\"" << left + k * cell / 2 << "\" y=\"" << top + k * cell + 40
      << "\" text-anchor=\"middle\">predicted</text>\n";
    o << "<text x=\"14\" y=\"" << top + k * cell / 2 << "\" transform=\"rotate(-90 14," << top + k * cell / 2
      << ")\" text-anchor=\"middle\">true</text>\n";
    o << "</svg>\n";
    return o.str();
}

std::string projection_traces_svg(const MergedDoRF& field, const std::string& title) {
    if (field.m_rows == 0 || field.channel_count() == 0) {
        throw InvalidInput("projection_traces_svg: empty field");
    }
    const SphereGrid grid = sphere_grid(field.m_rows);
    const std::size_t per = grid.size();
    const std::size_t antennas = field.channel_count() / per;
    const std::array<std::pair<const char*, Eigen::Vector3d>, 4> views = {{
        {"+x", Eigen::Vector3d::UnitX()},
        {"+y", Eigen::Vector3d::UnitY()},
        {"+z", Eigen::Vector3d::UnitZ()},
        {"(1,1,1)", Eigen::Vector3d::Ones().normalized()},
    }};
    static constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    const int pw = 360;
    const int ph = 200;
    const int margin = 50;
    const int width = 2 * (pw + margin) + 20;
    const int height = 2 * (ph + margin) + 60;
    double vmax = field.x.cwiseAbs().maxCoeff();
    if (!(vmax > 0.0)) {
        vmax = 1.0;
    }
    const Eigen::Index steps = field.x.rows();

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    for (std::size_t v = 0; v < views.size(); ++v) {
        Eigen::Index best = 0;
        (grid.directions * views[v].second).maxCoeff(&best);
        const Eigen::Vector3d d = grid.directions.row(best).transpose();
        const int x0 = margin + static_cast<int>(v % 2) * (pw + margin);
        const int y0 = 40 + static_cast<int>(v / 2) * (ph + margin);
        o << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
          << "\" fill=\"none\" stroke=\"#444\"/>\n";
        o << "<line x1=\"" << x0 << "\" y1=\"" << y0 + ph / 2 << "\" x2=\"" << x0 + pw << "\" y2=\"" << y0 + ph / 2
          << "\" stroke=\"#ccc\"/>\n";
        char label[160];
        std::snprintf(label, sizeof label, "view %s: d = (%.2f, %.2f, %.2f)", views[v].first, d.x(), d.y(), d.z());
        o << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\">" << label << "</text>\n";
        char range[64];
        std::snprintf(range, sizeof range, "%.3g", vmax);
        o << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">" << range << "</text>\n";
        o << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + ph << "\" text-anchor=\"end\">-" << range << "</text>\n";
        for (std::size_t a = 0; a < antennas; ++a) {
            const Eigen::Index col = static_cast<Eigen::Index>(a * per) + best;
            o << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kColours[a % 6] << "\" points=\"";
            for (Eigen::Index s = 0; s < steps; ++s) {
                const double px = x0 + (steps > 1 ? static_cast<double>(s) / static_cast<double>(steps - 1) : 0.5) * pw;
                const double py = y0 + ph / 2.0 - field.x(s, col) / vmax * (ph / 2.0);
                o << fmt_fixed(px, 1) << ',' << fmt_fixed(py, 1) << ' ';
            }
            o << "\"/>\n";
        }
    }
    for (std::size_t a = 0; a < antennas; ++a) {
        const int lx = margin + static_cast<int>(a) * 110;
        const int ly = height - 12;
        o << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 20 << "\" y2=\"" << ly - 4
          << "\" stroke=\"" << kColours[a % 6] << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << lx + 24 << "\" y=\"" << ly << "\">antenna "
          << (a < field.channels.size() / std::max<std::size_t>(per, 1) ? field.channels[a * per].antenna : a)
          << "</text>\n";
    }
    o << "<text x=\"" << width - 20 << "\" y=\"" << height - 12 << "\" text-anchor=\"end\">velocity (m/s) vs. window index</text>\n";
    o << "</svg>\n";
    return o.str();
}

std::vector<fs::path> cmd_report(const PipelineConfig& cfg, const std::optional<std::string>& only) {
    const fs::path dir = cfg.out_dir / "dorf";
    std::vector<fs::path> inputs;
    if (only) {
        inputs.push_back(dir / (*only + ".pf"));
        if (!fs::exists(inputs.back())) {
            throw DataError("no DoRF for trial " + *only + " (expected " + inputs.back().string() + ")");
        }
    } else {
        if (!fs::is_directory(dir)) {
            throw DataError("no DoRF directory at " + dir.string() + "; run the pipeline first");
        }
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".pf") {
                inputs.push_back(e.path());
            }
        }
        std::sort(inputs.begin(), inputs.end());
    }
    std::vector<fs::path> written(inputs.size());
    parallel_for(inputs.size(), cfg.effective_jobs(), [&](std::size_t i) {
        const MergedDoRF field = read_dorf(inputs[i]);
        const std::string id = inputs[i].stem().string();
        written[i] = cfg.out_dir / "plots" / (id + ".svg");
        write_text(written[i], projection_traces_svg(field, "DoRF projection traces: " + id));
    });
    return written;
}

} // namespace dorf
