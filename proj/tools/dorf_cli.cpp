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


// Command-line front end: synth, ingest, pipeline, loso, report.
// Exit codes: 0 success, 1 usage/config, 2 data or invalid input, 3 numeric failure.

#include "dorf/error.hpp"
#include "dorf/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

namespace {

using dorf::PipelineConfig;

struct ConfigFlags {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string data_dir;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::string antenna;
    std::optional<std::size_t> grid_m;
    std::optional<double> epsilon;
    std::optional<std::size_t> max_iters;
    std::optional<std::size_t> bins;
    std::optional<std::size_t> kernels;
    std::optional<std::size_t> max_epochs;
    std::optional<std::size_t> patience;
    bool no_sanitize = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_file, "Key-value config file (must contain 'version = 1')");
        cmd->add_option("--set", overrides, "Override a config key: --set key=value (repeatable)");
        cmd->add_option("--data", data_dir, "Directory of .csi trials");
        cmd->add_option("--out", out_dir, "Output directory");
        cmd->add_option("--seed", seed, "Global seed");
        cmd->add_option("-j,--jobs", jobs, "Worker threads (0: all cores)");
        cmd->add_option("--antenna", antenna, "Use a single antenna index, or 'all'");
        cmd->add_option("--grid-m", grid_m, "Sphere grid rows M (2M^2 directions)");
        cmd->add_option("--epsilon", epsilon, "DTW stopping threshold");
        cmd->add_option("--max-iters", max_iters, "Factorization iteration cap");
        cmd->add_option("--bins", bins, "Delay bins per antenna (0: all)");
        cmd->add_option("--kernels", kernels, "Random convolution kernels");
        cmd->add_option("--max-epochs", max_epochs, "Training epoch cap");
        cmd->add_option("--patience", patience, "Early-stopping patience");
        cmd->add_flag("--no-sanitize", no_sanitize, "Skip phase sanitization");
    }

    PipelineConfig build() const {
        PipelineConfig cfg = config_file.empty() ? PipelineConfig{} : PipelineConfig::load(config_file);
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw dorf::ConfigError("--set expects key=value, got '" + kv + "'");
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (!data_dir.empty()) cfg.data_dir = data_dir;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        if (!antenna.empty()) cfg.set("antenna", antenna);
        if (grid_m) cfg.grid_m = *grid_m;
        if (epsilon) cfg.factorization.epsilon = *epsilon;
        if (max_iters) cfg.factorization.max_iters = *max_iters;
        if (bins) cfg.bins_per_antenna = *bins;
        if (kernels) cfg.kernels = *kernels;
        if (max_epochs) cfg.training.max_epochs = *max_epochs;
        if (patience) cfg.training.patience = *patience;
        if (no_sanitize) cfg.sanitize = false;
        cfg.validate();
        return cfg;
    }
};

void print_counts(const char* what, const dorf::StageCounts& c) {
    std::printf("%s: doppler=%zu factorize=%zu dorf=%zu (total %zu)\n", what, c.doppler, c.factorize, c.dorf,
                c.total());
}

int run(int argc, char** argv) {
    CLI::App app{"Doppler radiance fields from Wi-Fi CSI"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic gesture dataset");
    dorf::SynthDatasetSpec spec;
    std::string synth_out = "data";
    std::size_t synth_jobs = 0;
    synth->add_option("--out", synth_out, "Output directory for .csi files");
    synth->add_option("--subjects", spec.subjects, "Subjects");
    synth->add_option("--trials", spec.trials_per_class, "Trials per class per subject");
    synth->add_option("--antennas", spec.antennas, "Receive antennas");
    synth->add_option("--subcarriers", spec.subcarriers, "Subcarriers");
    synth->add_option("--rate", spec.rate, "Sample rate, Hz");
    synth->add_option("--duration", spec.duration, "Trial duration, s");
    synth->add_option("--noise", spec.noise_sigma, "Complex noise std");
    synth->add_option("--seed", spec.seed, "Dataset seed");
    synth->add_option("-j,--jobs", synth_jobs, "Worker threads (0: all cores)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert CSV or DORFCSI1 trials into the canonical container");
    std::vector<std::string> ingest_inputs;
    std::string ingest_out = "data";
    dorf::CsvImportOptions csv;
    ingest->add_option("inputs", ingest_inputs, "CSV or .csi files")->required();
    ingest->add_option("--out", ingest_out, "Output directory");
    ingest->add_option("--subcarriers", csv.subcarriers, "Subcarriers per antenna");
    ingest->add_option("--antennas", csv.antennas, "Antennas");
    ingest->add_option("--rate", csv.metadata.sample_rate_hz, "Sample rate, Hz");
    ingest->add_option("--carrier", csv.metadata.carrier_hz, "Carrier frequency, Hz");
    ingest->add_option("--spacing", csv.metadata.subcarrier_spacing_hz, "Subcarrier spacing, Hz");
    ingest->add_option("--subject", csv.metadata.subject_id, "Subject id");
    ingest->add_option("--label", csv.metadata.activity_label, "Activity label");

    ConfigFlags pipe_flags;
    auto* pipeline = app.add_subcommand("pipeline", "Run sanitize -> Doppler -> factorize -> DoRF for every trial");
    pipe_flags.add_to(pipeline);

    ConfigFlags loso_flags;
    auto* loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation");
    loso_flags.add_to(loso);

    ConfigFlags report_flags;
    std::string report_trial;
    auto* report = app.add_subcommand("report", "Render projection-trace plots of DoRF files");
    report_flags.add_to(report);
    report->add_option("--trial", report_trial, "Only this trial id");

    ConfigFlags dump_flags;
    auto* dump = app.add_subcommand("config", "Print the effective configuration");
    dump_flags.add_to(dump);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (*synth) {
        const auto res = dorf::cmd_synth(spec, synth_out, synth_jobs == 0 ? std::max(1u, std::thread::hardware_concurrency()) : synth_jobs);
        std::printf("wrote %zu trials to %s\n%s", res.files, synth_out.c_str(), res.inventory.to_text().c_str());
    } else if (*ingest) {
        std::vector<std::filesystem::path> inputs(ingest_inputs.begin(), ingest_inputs.end());
        const auto res = dorf::cmd_ingest(inputs, csv, ingest_out);
        for (const auto& p : res.written) {
            std::printf("wrote %s\n", p.string().c_str());
        }
        std::printf("%s", res.inventory.to_text().c_str());
    } else if (*pipeline) {
        const PipelineConfig cfg = pipe_flags.build();
        const auto res = dorf::cmd_pipeline(cfg);
        std::printf("%zu trials, %zu DoRF files in %s\n", res.trials.size(), res.dorf_files.size(),
                    (cfg.out_dir / "dorf").string().c_str());
        print_counts("stages executed", res.executed);
        print_counts("stages cached", res.cached);
        std::printf("elapsed %.2f s\n", res.seconds);
    } else if (*loso) {
        const PipelineConfig cfg = loso_flags.build();
        const auto rep = dorf::cmd_loso(cfg);
        std::printf("%s\nreport written to %s\n", rep.to_text().c_str(), (cfg.out_dir / "loso").string().c_str());
        std::printf("elapsed %.2f s\n", rep.timing.at("total_s"));
    } else if (*report) {
        const PipelineConfig cfg = report_flags.build();
        const auto written = dorf::cmd_report(cfg, report_trial.empty() ? std::nullopt : std::optional(report_trial));
        for (const auto& p : written) {
            std::printf("wrote %s\n", p.string().c_str());
        }
    } else if (*dump) {
        std::printf("%s", dump_flags.build().to_text().c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const dorf::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const dorf::InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const dorf::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const dorf::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
