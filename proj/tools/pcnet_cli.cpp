// pcnet: command-line front end for the experiment pipeline.

#include "pcnet/cifar.hpp"
#include "pcnet/experiment.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fmt/format.h>
#include <optional>

using namespace pcnet;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string data;
    std::optional<std::size_t> threads;
    bool quiet = false;
};

ExperimentConfig make_config(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.data.empty()) {
        cfg.data.source = "cifar10";
        cfg.data.dir = g.data;
    }
    if (g.threads) cfg.threads = *g.threads;
    cfg.validate();
    return cfg;
}

Logger logger(const Globals& g) {
    if (g.quiet) return {};
    return [](std::string_view msg) { fmt::print(stderr, "{}\n", msg); };
}

void run_stages(const Globals& g, std::vector<Stage> stages, std::vector<HPMask> masks = {}) {
    ExperimentConfig cfg = make_config(g);
    if (!stages.empty()) cfg.stages = std::move(stages);
    if (!masks.empty()) cfg.masks = std::move(masks);
    const auto out = run_experiment(cfg, logger(g));
    if (!g.quiet) fmt::print(stderr, "wrote {} files under {}\n", out.written.size(), cfg.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictive-coding network experiments: training, evaluation under noise, attacks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Global seed (overrides the config)");
    app.add_option("--out-dir", g.out_dir, "Output directory (overrides the config)");
    app.add_option("--data", g.data, "CIFAR-10 binary directory; selects the cifar10 source")->check(CLI::ExistingDirectory);
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", g.quiet, "No progress output");

    auto* run = app.add_subcommand("run", "Run the stages listed in the config");
    auto* ff = app.add_subcommand("train-ff", "Train the feed-forward path and the baselines");
    auto* fb = app.add_subcommand("train-fb", "Train the feedback decoders");
    auto* hp = app.add_subcommand("train-hp", "Learn hyper-parameters over the noise grid");
    auto* ev = app.add_subcommand("eval", "Evaluate on the noisy test split");
    auto* at = app.add_subcommand("attack", "Targeted L-infinity attacks on the fixed configurations");
    auto* ab = app.add_subcommand("ablate", "Learn hyper-parameters with the full, zero_beta and zero_alpha masks");
    auto* rp = app.add_subcommand("report", "Rebuild CSV tables and charts from saved reports");
    auto* pc = app.add_subcommand("print-config", "Print the effective config as JSON");

    auto* sd = app.add_subcommand("synth-data", "Write synthetic images as CIFAR-10 binary batches");
    std::string synth_dir;
    std::size_t synth_train = 10000, synth_test = 2000;
    std::uint64_t synth_seed = 0;
    sd->add_option("dir", synth_dir, "Output directory")->required();
    sd->add_option("--train-count", synth_train, "Training images (split into 10000-image batches)");
    sd->add_option("--test-count", synth_test, "Test images (at most 10000)");
    sd->add_option("--synth-seed", synth_seed, "Generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) run_stages(g, {});
        else if (ff->parsed()) run_stages(g, {Stage::train_ff});
        else if (fb->parsed()) run_stages(g, {Stage::train_fb});
        else if (hp->parsed()) run_stages(g, {Stage::train_hp});
        else if (ev->parsed()) run_stages(g, {Stage::eval});
        else if (at->parsed()) run_stages(g, {Stage::attack});
        else if (ab->parsed())
            run_stages(g, {Stage::train_hp}, {HPMask{}, HPMask{true, false}, HPMask{false, true}});
        else if (rp->parsed()) {
            const auto out = regenerate_reports(make_config(g), logger(g));
            if (!g.quiet) fmt::print(stderr, "wrote {} files\n", out.written.size());
        } else if (pc->parsed()) {
            fmt::print("{}\n", to_json(make_config(g).resolved()).dump(2));
        } else if (sd->parsed()) {
            if (synth_train == 0 || synth_test == 0 || synth_test > kCifarRecordsPerBatch ||
                synth_train > 5 * kCifarRecordsPerBatch)
                throw std::invalid_argument("synth-data: need 1..50000 training and 1..10000 test images");
            const Dataset all = make_synthetic_dataset(synth_train + synth_test, kCifarClasses,
                                                       {3, kCifarSide, kCifarSide}, synth_seed);
            std::filesystem::create_directories(synth_dir);
            for (std::size_t b = 0; b * kCifarRecordsPerBatch < synth_train; ++b) {
                const std::size_t begin = b * kCifarRecordsPerBatch;
                const std::size_t n = std::min(kCifarRecordsPerBatch, synth_train - begin);
                save_cifar10_batch(std::filesystem::path(synth_dir) / fmt::format("data_batch_{}.bin", b + 1),
                                   all.slice(begin, n));
            }
            save_cifar10_batch(std::filesystem::path(synth_dir) / "test_batch.bin", all.slice(synth_train, synth_test));
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
