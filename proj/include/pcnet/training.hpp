#pragma once

// Training regimes: feed-forward classification, feedback reconstruction,
// supervised feedback under unrolling, and hyper-parameter-only optimization
// on frozen weights (plus the ablation sweep built on it).

#include "pcnet/corruption.hpp"
#include "pcnet/dataset.hpp"
#include "pcnet/hyperparams.hpp"
#include "pcnet/network.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

enum class Regime { ff_supervised, fb_unsupervised, fb_supervised, hp_only };
std::string to_string(Regime regime);
Regime parse_regime(const std::string& name);

struct TrainConfig {
    Regime regime = Regime::ff_supervised;
    int epochs = 1;
    std::size_t batch_size = 128;
    /// SGD learning rate, or the Adam rate of the (mu, gamma, beta) group.
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    /// Adam rate of the alpha group (hp_only).
    double alpha_lr = 0.001;
    int timesteps = 10;
    NoiseSpec noise;  // hp_only
    HPMask mask;      // hp_only
    int restarts = 1;
    std::uint64_t seed = 0;
    HPMode hp_mode = HPMode::shared;
    /// Fixed hyper-parameters of fb_supervised.
    HyperParams pinned{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.01};
    /// hp_only: start every restart from this point instead of a uniform draw.
    std::optional<AuxParams> init;
    /// hp_only: restarts run concurrently on this many threads.
    std::size_t threads = 1;

    /// Defaults per regime: SGD 0.01/0.9 (ff, fb_unsupervised), SGD
    /// 0.005/0.9 (fb_supervised), Adam 0.001 with weight decay 5e-4 and 10
    /// restarts (hp_only); batch 128 and T = 10 throughout.
    static TrainConfig defaults(Regime regime);
    void validate() const;
};

struct CurvePoint {
    int epoch = 0;  // 0 = before any update
    std::string split;
    std::string metric;
    double value = 0;
};

struct RestartRecord {
    int restart = 0;
    std::vector<AuxParams> init;      // one per hyper-parameter set
    std::vector<AuxParams> aux;       // learned
    std::vector<HyperParams> hps;     // learned, constrained under the mask
    std::vector<double> val_accuracy; // per time-step t = 0..T
    std::vector<std::vector<double>> val_epsilon;  // [t][pcoder]
    double final_loss = 0;            // last epoch's mean training loss
    std::vector<CurvePoint> curves;
    std::size_t steps = 0;
};

struct TrainReport {
    Regime regime = Regime::ff_supervised;
    std::vector<CurvePoint> curves;  // hp_only: the best restart's
    std::vector<RestartRecord> restarts;
    int best_restart = -1;
    /// Validation accuracy per time-step (a single entry without unrolling).
    std::vector<double> final_accuracy;
    std::size_t steps = 0;

    const RestartRecord& best() const;
    /// Columns: epoch,split,metric,value
    std::string curves_csv() const;
};

/// The validation split feeds the curves and picks the best restart.
struct TrainData {
    Dataset train;
    Dataset validation;
};

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const std::int32_t> labels);

struct EvalResult {
    std::vector<double> accuracy;             // per t
    std::vector<std::vector<double>> epsilon;  // [t][pcoder], averaged over batches
    std::vector<double> loss;                  // cross-entropy per t
};

/// Unrolled evaluation under `noise`; image n of `data` is corrupted with
/// Rng(noise.seed).fork(n) regardless of batching.
EvalResult evaluate(PCNet& net, const Dataset& data, std::span<const HyperParams> hps, int timesteps,
                    const NoiseSpec& noise = {}, std::size_t batch_size = 128);
EvalResult evaluate(const BaselineNet& net, const Dataset& data, const NoiseSpec& noise = {},
                    std::size_t batch_size = 128);

/// Order-sensitive 64-bit hash of names, shapes and raw values.
std::uint64_t fingerprint(const std::vector<NamedTensor>& tensors);

/// theta_ff + head by cross-entropy in one forward pass; feedback weights
/// are left bitwise untouched.
TrainReport train_feedforward(PCNet& net, const TrainData& data, const TrainConfig& cfg);
TrainReport train_feedforward(BaselineNet& net, const TrainData& data, const TrainConfig& cfg);

/// theta_fb by sum_i mse(B_i(m_i), m_{i-1}) on feed-forward states of clean
/// images; theta_ff and the head are frozen.
TrainReport train_feedback_unsupervised(PCNet& net, const TrainData& data, const TrainConfig& cfg);

/// theta_ff, theta_fb and the head jointly, by cross-entropy averaged over
/// t = 1..T with hyper-parameters pinned to cfg.pinned.
TrainReport train_feedback_supervised(PCNet& net, const TrainData& data, const TrainConfig& cfg);

/// Observer for every optimizer step of train_hyperparams: (restart, step,
/// constrained hyper-parameters after the step).
using HPStepObserver = std::function<void(int, std::size_t, std::span<const HyperParams>)>;

/// Auxiliary hyper-parameters only, on a fully frozen network (throws
/// std::invalid_argument otherwise). Loss is the cross-entropy averaged over
/// t = 1..T on images corrupted with fresh noise every epoch; restarts are
/// chosen by validation accuracy at t = T on a fixed noisy copy.
TrainReport train_hyperparams(PCNet& net, const TrainData& data, const TrainConfig& cfg,
                              const HPStepObserver& on_step = {});

/// The hp_only loss for one batch, as optimized: mean over t = 1..T of the
/// cross-entropy. Records on the active tape.
Tensor unrolled_loss(PCNet& net, const Tensor& images, std::span<const std::int32_t> labels,
                     std::span<const HPTerms> hps, int timesteps);

struct AblationCell {
    HPMask mask;
    NoiseSpec noise;
    TrainReport report;
};

/// The grid kinds x levels 0..3 (level 0 = clean).
std::vector<NoiseSpec> noise_grid(std::span<const NoiseKind> kinds, std::uint64_t seed);

/// train_hyperparams for each mask over the noise grid, one cell per
/// (mask, kind, level). Clean cells are trained once per mask and shared.
std::vector<AblationCell> hp_sweep(PCNet& net, const TrainData& data, const TrainConfig& base,
                                   std::span<const HPMask> masks, std::span<const NoiseSpec> grid);
/// hp_sweep with the zero_beta and zero_alpha masks.
std::vector<AblationCell> ablation_suite(PCNet& net, const TrainData& data, const TrainConfig& base,
                                         std::span<const NoiseSpec> grid);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
