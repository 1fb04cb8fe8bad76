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


// End-to-end orchestration behind the command-line tool: dataset generation
// and ingestion, cached per-trial stages, leave-one-subject-out evaluation
// and plot emission.

#ifndef DORF_PIPELINE_HPP
#define DORF_PIPELINE_HPP

#include "dorf/classifier.hpp"
#include "dorf/csi.hpp"
#include "dorf/delay_doppler.hpp"
#include "dorf/error.hpp"
#include "dorf/factorization.hpp"
#include "dorf/io.hpp"
#include "dorf/radiance_field.hpp"
#include "dorf/synth.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dorf {

// Configuration errors (unknown keys, unparsable values, wrong version).
class ConfigError : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

struct PipelineConfig {
    static constexpr int kVersion = 1;

    std::filesystem::path data_dir = "data";
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    std::size_t jobs = 0; // 0: hardware concurrency

    bool sanitize = true;
    SpectrogramConfig spectrogram;
    std::size_t bins_per_antenna = 20; // 0 selects every delay bin
    FactorizationConfig factorization;
    std::size_t grid_m = 8;
    std::optional<std::size_t> antenna; // restrict to one antenna

    std::size_t kernels = 1000;
    TrainingConfig training;

    // Parses "key = value" lines; '#' starts a comment. The text must contain
    // "version = 1". Unknown keys and bad values throw ConfigError.
    static PipelineConfig parse(const std::string& text);
    static PipelineConfig load(const std::filesystem::path& path);
    // Sets one key from its text form (used by parse and CLI overrides).
    void set(const std::string& key, const std::string& value);
    std::string to_text() const;
    void validate() const;

    // Canonical text of the settings each stage depends on. Equal text means
    // equal outputs given equal inputs.
    std::string doppler_settings() const;
    std::string factorization_settings() const;
    std::string dorf_settings() const;
    std::string feature_settings() const;
    std::string training_settings() const;
    std::string hash() const;

    std::size_t effective_jobs() const;
};

struct TrialInfo {
    std::string id; // file stem
    std::filesystem::path path;
    std::uint32_t subject = 0;
    std::uint32_t label = 0;
    CsiShape shape;
};

// Every *.csi file in dir, sorted by id.
std::vector<TrialInfo> scan_trials(const std::filesystem::path& dir);

struct Inventory {
    std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> counts; // subject -> label -> trials
    std::string to_text() const;
};
Inventory inventory(const std::vector<TrialInfo>& trials);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Canonical trial id for generated data.
std::string synth_trial_id(std::size_t subject, Gesture g, std::size_t trial);

struct SynthResult {
    std::size_t files = 0;
    Inventory inventory;
};
SynthResult cmd_synth(const SynthDatasetSpec& spec, const std::filesystem::path& out_dir, std::size_t jobs);

struct IngestResult {
    std::vector<std::filesystem::path> written;
    Inventory inventory;
};
// Accepts CSV (converted with opts) or DORFCSI1 files (validated and copied).
IngestResult cmd_ingest(const std::vector<std::filesystem::path>& inputs, const CsvImportOptions& opts,
                        const std::filesystem::path& out_dir);

struct StageCounts {
    std::size_t doppler = 0;
    std::size_t factorize = 0;
    std::size_t dorf = 0;
    std::size_t features = 0;

    std::size_t total() const { return doppler + factorize + dorf + features; }
};

struct PipelineResult {
    std::vector<TrialInfo> trials;
    std::vector<std::filesystem::path> dorf_files; // parallel to trials
    StageCounts executed;
    StageCounts cached;
    double seconds = 0.0;
};

// sanitize -> radial velocities -> per-antenna factorization -> DoRF -> merge,
// one file per trial under out_dir/dorf. Intermediates are cached under
// out_dir/cache keyed by input content and stage settings.
PipelineResult cmd_pipeline(const PipelineConfig& cfg);

struct FoldResult {
    std::uint32_t subject = 0;
    std::size_t train_trials = 0;
    std::size_t validation_trials = 0;
    std::size_t test_trials = 0;
    double accuracy = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    Eigen::MatrixXi confusion; // true x predicted
    double seconds = 0.0;
};

struct LosoReport {
    std::string config_hash;
    std::vector<std::uint32_t> classes;
    std::vector<FoldResult> folds;
    double mean = 0.0;
    double stddev = 0.0; // population (divide by fold count)
    Eigen::MatrixXi confusion;
    std::map<std::string, double> timing;

    // Human-readable table.
    std::string to_text() const;
    // key = value lines; timing keys carry a "timing." prefix.
    std::string to_kv() const;
};

// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

// Runs the pipeline (cached), extracts pooled features and evaluates every
// held-out subject. Writes report.txt, report.kv, predictions.csv and
// confusion-matrix SVGs to out_dir/loso.
LosoReport cmd_loso(const PipelineConfig& cfg);

// SVG of a confusion matrix.
std::string confusion_svg(const Eigen::MatrixXi& confusion, const std::vector<std::string>& labels,
                          const std::string& title);

// SVG with four panels: projection traces of the field along the grid
// directions closest to +x, +y, +z and (1,1,1)/sqrt(3), per antenna.
std::string projection_traces_svg(const MergedDoRF& field, const std::string& title);

// Writes the projection-trace plot for every DoRF file under out_dir/dorf
// (or just `only` when given) to out_dir/plots. Returns the written paths.
std::vector<std::filesystem::path> cmd_report(const PipelineConfig& cfg, const std::optional<std::string>& only);

} // namespace dorf

#endif
