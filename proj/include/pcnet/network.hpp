#pragma once

#include "pcnet/hyperparams.hpp"
#include "pcnet/pcoder.hpp"
#include "pcnet/rng.hpp"
#include "pcnet/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

/// Layout of a convolutional stack with a dense classification head.
struct NetSpec {
    Shape input_chw{3, 32, 32};
    std::vector<ConvLayerSpec> layers{{12, 5, true}, {18, 5, true}, {24, 5, true}};
    std::vector<std::size_t> head_hidden{120};
    std::size_t classes = 10;
    int decoder_kernel = 3;

    /// The three-layer model: 12/18/24 channels, 5x5 kernels, pooled,
    /// dense 120 -> 10.
    static NetSpec shallow() { return {}; }
};

/// flatten -> dense -> relu -> ... -> dense (logits)
struct Head {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    Head() = default;
    Head(std::size_t in_features, const std::vector<std::size_t>& hidden, std::size_t classes, Rng& rng);

    Tensor forward(const Tensor& features) const;
    std::size_t param_count() const;
    Head clone() const;
};

enum class HPMode { shared, separate };
std::string to_string(HPMode mode);
HPMode parse_hp_mode(const std::string& name);

struct UnrollOptions {
    bool record_states = false;
    /// Treat the scaled error gradient as a constant for autodiff.
    bool detach_error_gradient = false;
};

struct UnrollResult {
    std::vector<Tensor> logits;               // t = 0..T
    std::vector<std::vector<double>> errors;  // [t][pcoder], eps_i(t) for t = 0..T
    std::vector<std::vector<Tensor>> states;  // [t][pcoder] when recorded
};

enum class ParamGroupKind { feedforward, feedback, head };

/// Stack of PCoders plus a classification head on the top state.
class PCNet {
public:
    static PCNet build(const NetSpec& spec, Rng& rng);
    static PCNet build_shallow(Rng& rng) { return build(NetSpec::shallow(), rng); }

    const NetSpec& spec() const { return spec_; }
    std::size_t num_pcoders() const { return pcoders_.size(); }
    PCoder& pcoder(std::size_t i) { return pcoders_.at(i); }
    const PCoder& pcoder(std::size_t i) const { return pcoders_.at(i); }
    const Head& head() const { return head_; }
    Head& head() { return head_; }

    /// Plain one-pass classifier, no recurrence.
    Tensor feedforward(const Tensor& images) const;
    /// m_1..m_L of the feed-forward pass.
    std::vector<Tensor> feedforward_states(const Tensor& images) const;
    Tensor classify(const Tensor& top_state) const;

    /// t = 0 is the feed-forward initialization; each later t is one
    /// ascending sweep of PCoder updates followed by the head. `hps` holds
    /// one entry (shared) or one per PCoder (separate).
    UnrollResult unroll(const Tensor& images, std::span<const HPTerms> hps, int timesteps,
                        const UnrollOptions& options = {});
    UnrollResult unroll(const Tensor& images, const std::vector<HyperParams>& hps, int timesteps,
                        const UnrollOptions& options = {});

    std::vector<NamedTensor> named_parameters() const;
    std::vector<Tensor> parameters(ParamGroupKind kind) const;
    std::vector<Tensor> all_parameters() const;
    void set_requires_grad(ParamGroupKind kind, bool flag);
    void freeze_all();

    /// Conv blocks + head.
    std::size_t forward_param_count() const;
    std::size_t feedback_param_count() const;

    void load_parameters(const std::vector<NamedTensor>& tensors);
    PCNet clone() const;

private:
    NetSpec spec_;
    std::vector<PCoder> pcoders_;
    Head head_;
};

/// The four matched feed-forward controls.
enum class BaselineVariant { same, kernel, feat, deep };
std::string to_string(BaselineVariant v);
BaselineVariant parse_baseline_variant(const std::string& name);
/// same = the PC network's forward path; kernel = 7x7 convs; feat = 16/24/32
/// channels; deep = an extra unpooled 5x5 conv after the third layer.
NetSpec baseline_spec(BaselineVariant v);
/// The same transformations applied to any stack: kernel + 2, channels x 4/3,
/// or an extra unpooled 5x5 layer.
NetSpec baseline_spec(BaselineVariant v, const NetSpec& base);

class BaselineNet {
public:
    static BaselineNet build(BaselineVariant variant, Rng& rng);
    static BaselineNet build(BaselineVariant variant, const NetSpec& spec, Rng& rng);

    BaselineVariant variant() const { return variant_; }
    Tensor forward(const Tensor& images) const;
    std::size_t param_count() const;
    std::vector<NamedTensor> named_parameters() const;
    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool flag);
    void load_parameters(const std::vector<NamedTensor>& tensors);

private:
    BaselineVariant variant_ = BaselineVariant::same;
    std::vector<ConvBlock> blocks_;
    Head head_;
};

/// "PCW1" weights file. Layout (little-endian): magic "PCW1", u32 count,
/// then per tensor u32 name length, UTF-8 name, u32 rank, rank x u32 dims,
/// raw 32-bit reals. Written atomically.
void save_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_weights(const std::filesystem::path& path);

/// Copies values from `source` into same-named, same-shaped `targets`.
/// Throws if any target is missing or mis-shaped.
void assign_by_name(const std::vector<NamedTensor>& targets, const std::vector<NamedTensor>& source);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
