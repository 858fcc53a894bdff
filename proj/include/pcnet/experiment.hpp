#pragma once

// Experiment orchestration: one JSON config drives the stages
// train-ff -> train-fb -> train-hp -> eval -> attack, each of which reads its
// inputs from the output directory so any stage can be rerun on its own.

#include "pcnet/attacks.hpp"
#include "pcnet/metrics.hpp"
#include "pcnet/serialize.hpp"
#include "pcnet/training.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

enum class Stage { train_ff, train_fb, train_hp, eval, attack };
std::string to_string(Stage s);
Stage parse_stage(const std::string& name);
inline constexpr Stage kAllStages[] = {Stage::train_ff, Stage::train_fb, Stage::train_hp, Stage::eval, Stage::attack};

struct DataConfig {
    std::string source = "synthetic";  // "cifar10" or "synthetic"
    std::string dir;                   // CIFAR-10 binary batches
    std::size_t train_count = 10000;   // from the training batches
    std::size_t val_count = 2000;      // the next images of the training batches
    std::size_t test_count = 2000;     // from test_batch.bin
};

struct EvalConfig {
    int timesteps = 10;
    std::size_t batch_size = 128;
    /// When set, used for every condition instead of the learned values.
    std::vector<HyperParams> hyperparams;
};

struct ExperimentConfig {
    std::string id = "pcnet";
    /// Every stage seed is derived from this one; nested `seed` fields are
    /// overwritten.
    std::uint64_t seed = 0;
    NetSpec model;
    std::string out_dir = "out";
    std::size_t threads = 1;
    DataConfig data;
    std::vector<Stage> stages{std::begin(kAllStages), std::end(kAllStages)};
    TrainConfig train_ff = TrainConfig::defaults(Regime::ff_supervised);
    TrainConfig train_fb = TrainConfig::defaults(Regime::fb_unsupervised);
    TrainConfig train_hp = TrainConfig::defaults(Regime::hp_only);
    std::vector<BaselineVariant> baselines{BaselineVariant::same};
    std::vector<NoiseKind> noise_kinds{NoiseKind::gaussian, NoiseKind::salt_pepper};
    std::vector<int> noise_levels{0, 1, 2, 3};
    std::uint64_t noise_seed = 1;
    std::vector<HPMask> masks{HPMask{}};
    EvalConfig eval;
    AttackConfig attack;
    /// Names from robustness_configurations(); empty = all of them.
    std::vector<std::string> attack_configurations;
    std::size_t attack_images = 100;

    void validate() const;
    /// Copy with per-stage seeds and thread counts filled in.
    ExperimentConfig resolved() const;
    /// The noise conditions, kinds x levels, in config order.
    std::vector<NoiseSpec> noise_conditions() const;
    /// Hash of everything that affects results (not out_dir, threads, the
    /// data directory or the stage selection).
    std::string hash() const;
};

Json to_json(const ExperimentConfig& v);
ExperimentConfig experiment_config_from_json(const Json& j, const std::string& path = "config");
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

struct ExperimentData {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// The train/validation/test splits named by the config. CIFAR-10 reads
/// only as many training batches as the counts need.
ExperimentData load_experiment_data(const ExperimentConfig& cfg);

using Logger = std::function<void(std::string_view)>;

struct ExperimentOutputs {
    std::vector<MetricsRecord> hp_records;
    std::vector<MetricsRecord> eval_records;
    std::vector<std::filesystem::path> written;  // relative to out_dir, in write order
};

/// Runs `cfg.stages` in pipeline order. A stage whose input artifact is
/// missing throws std::runtime_error naming the file.
ExperimentOutputs run_experiment(const ExperimentConfig& cfg, const Logger& log = {});
/// Same, with the data already loaded.
ExperimentOutputs run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, const Logger& log = {});

/// Rebuilds metrics.csv, relative_hp.*, eval.csv and the charts from the
/// JSON reports in out_dir.
ExperimentOutputs regenerate_reports(const ExperimentConfig& cfg, const Logger& log = {});

/// The rows saved in reports/eval.json under `out_dir`.
std::vector<MetricsRecord> read_eval_records(const std::filesystem::path& out_dir);

/// Every file the given stages write, relative to out_dir.
std::vector<std::filesystem::path> declared_artifacts(const ExperimentConfig& cfg);

/// Weights file produced by train-fb for the configured regime.
std::string feedback_weights_name(const ExperimentConfig& cfg);
/// reports/hp/<mask>__<noise label>.json
std::filesystem::path hp_report_path(const HPMask& mask, const NoiseSpec& noise);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
