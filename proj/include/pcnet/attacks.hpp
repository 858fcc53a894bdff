#pragma once

// Targeted L-infinity attacks (BIM, random-start PGD) on the final-time-step
// logits of an unrolled network, and the median minimal perturbation.

#include "pcnet/dataset.hpp"
#include "pcnet/hyperparams.hpp"
#include "pcnet/network.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

/// Anything mapping images [N,C,H,W] to logits [N,K], differentiably on the
/// active tape. Attacks clone one replica per worker thread.
class AttackModel {
public:
    virtual ~AttackModel() = default;
    virtual Tensor logits(const Tensor& images) = 0;
    virtual std::unique_ptr<AttackModel> clone() const = 0;
};

/// Frozen PCNet unrolled for T steps; logits are those of the final step.
class UnrolledModel final : public AttackModel {
public:
    UnrolledModel(const PCNet& net, std::vector<HyperParams> hps, int timesteps);
    Tensor logits(const Tensor& images) override;
    std::unique_ptr<AttackModel> clone() const override;

private:
    PCNet net_;
    std::vector<HyperParams> hps_;
    std::vector<HPTerms> terms_;
    int timesteps_;
};

/// Stateless function of the images.
class FunctionModel final : public AttackModel {
public:
    explicit FunctionModel(std::function<Tensor(const Tensor&)> fn) : fn_(std::move(fn)) {}
    Tensor logits(const Tensor& images) override { return fn_(images); }
    std::unique_ptr<AttackModel> clone() const override { return std::make_unique<FunctionModel>(fn_); }

private:
    std::function<Tensor(const Tensor&)> fn_;
};

enum class AttackMethod { bim, rpgd };
std::string to_string(AttackMethod m);
AttackMethod parse_attack_method(const std::string& name);

enum class TargetRule { least_likely, offset };
std::string to_string(TargetRule r);
TargetRule parse_target_rule(const std::string& name);

/// `count` values from lo to hi with a constant ratio.
std::vector<double> geometric_grid(double lo, double hi, std::size_t count);

struct AttackConfig {
    AttackMethod method = AttackMethod::bim;
    /// Ascending L-infinity budgets; default 1/255 .. 64/255 in 13 steps.
    std::vector<double> epsilons = geometric_grid(1.0 / 255, 64.0 / 255, 13);
    int steps = 40;
    /// step size = step_factor * eps / steps
    double step_factor = 2.5;
    TargetRule target = TargetRule::least_likely;
    /// target = (label + offset) mod K under TargetRule::offset
    int target_offset = 1;
    int timesteps = 10;
    std::uint64_t seed = 0;
    /// Fewer correctly classified images than this is an error.
    std::size_t min_eligible = 50;
    std::size_t batch_size = 32;
    std::size_t threads = 1;

    void validate() const;
};

struct AttackOutcome {
    std::vector<bool> success;  // per image
    Tensor adversarial;         // same shape as the input; the clean image on failure
    std::vector<int> steps;     // gradient steps taken before success
    std::string diagnostic;     // set when an image aborted on a non-finite gradient
};

/// Attacks every image in the batch toward its target within the budget.
/// Success = argmax of the logits equals the target, checked before each
/// step, so an image already classified as its target succeeds at eps = 0.
/// `image_ids` key the random starts of RPGD; default 0..N-1.
AttackOutcome bim_attack(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets, double eps,
                         const AttackConfig& cfg);
AttackOutcome rpgd_attack(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets, double eps,
                          const AttackConfig& cfg, std::span<const std::size_t> image_ids = {});

/// Gradient of the summed targeted cross-entropy with respect to the images.
Tensor input_gradient(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets);

struct AttackResult {
    std::vector<double> epsilons;
    std::vector<std::size_t> image_index;  // eligible images, dataset order
    std::vector<std::int32_t> targets;
    std::vector<double> min_eps;           // +inf when no budget succeeded
    std::vector<double> success_rate;      // per budget, over eligible images
    double median = std::numeric_limits<double>::infinity();
    std::size_t skipped = 0;               // misclassified, excluded

    /// Columns: image,target,min_eps
    std::string per_image_csv() const;
};

/// Median over images of the smallest budget with a successful attack.
/// Misclassified images are skipped.
AttackResult median_min_perturbation(const AttackModel& model, const Dataset& data, const AttackConfig& cfg);

/// Median with +inf entries sorting above every finite value.
double median(std::vector<double> values);

struct NamedHyperParams {
    std::string name;
    HyperParams hp;
};

/// The robustness bars: feed-forward, two alpha = 0 mixes, two pure
/// error-correction settings and two mixes with alpha = 1.
std::vector<NamedHyperParams> robustness_configurations();

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
