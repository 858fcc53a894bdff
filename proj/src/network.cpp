#include "pcnet/network.hpp"

#include "pcnet/io.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/tape.hpp"

#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

// --- head -------------------------------------------------------------------

Head::Head(std::size_t in_features, const std::vector<std::size_t>& hidden, std::size_t classes, Rng& rng) {
    std::vector<std::size_t> sizes{in_features};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(classes);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const bool last = l + 2 == sizes.size();
        const double bound = std::sqrt((last ? 3.0 : 6.0) / static_cast<double>(sizes[l]));
        Tensor w({sizes[l + 1], sizes[l]});
        for (Real& v : w.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
        weights.push_back(w);
        biases.emplace_back(Shape{sizes[l + 1]});
    }
}

Tensor Head::forward(const Tensor& features) const {
    Tensor x = ops::flatten(features);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        x = ops::dense(x, weights[l], biases[l]);
        if (l + 1 < weights.size()) x = ops::relu(x);
    }
    return x;
}

std::size_t Head::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].numel() + biases[l].numel();
    return n;
}

Head Head::clone() const {
    Head h;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h.weights.push_back(weights[l].clone().set_requires_grad(weights[l].requires_grad()));
        h.biases.push_back(biases[l].clone().set_requires_grad(biases[l].requires_grad()));
    }
    return h;
}

namespace {

void append_head(std::vector<NamedTensor>& out, const Head& head) {
    for (std::size_t l = 0; l < head.weights.size(); ++l) {
        out.push_back({fmt::format("head.fc{}.weight", l + 1), head.weights[l]});
        out.push_back({fmt::format("head.fc{}.bias", l + 1), head.biases[l]});
    }
}

Shape block_output_chw(const Shape& in, const ConvLayerSpec& spec) {
    const std::size_t h = spec.pool ? in[1] / 2 : in[1];
    const std::size_t w = spec.pool ? in[2] / 2 : in[2];
    return {spec.out_channels, h, w};
}

void check_images(const Tensor& images, const Shape& chw) {
    if (images.rank() != 4 || images.dim(1) != chw[0] || images.dim(2) != chw[1] || images.dim(3) != chw[2]) {
        throw std::invalid_argument(fmt::format("images of shape {} do not match [N,{},{},{}]",
                                                shape_str(images.shape()), chw[0], chw[1], chw[2]));
    }
}

}  // namespace

std::string to_string(HPMode mode) { return mode == HPMode::shared ? "shared" : "separate"; }

HPMode parse_hp_mode(const std::string& name) {
    if (name == "shared") return HPMode::shared;
    if (name == "separate") return HPMode::separate;
    throw std::invalid_argument(fmt::format("unknown hyper-parameter mode '{}'", name));
}

// --- PCNet ------------------------------------------------------------------

PCNet PCNet::build(const NetSpec& spec, Rng& rng) {
    if (spec.layers.empty()) throw std::invalid_argument("PCNet needs at least one layer");
    PCNet net;
    net.spec_ = spec;
    Shape chw = spec.input_chw;
    for (const auto& layer : spec.layers) {
        net.pcoders_.emplace_back(chw, layer, spec.decoder_kernel, rng);
        chw = net.pcoders_.back().state_shape();
    }
    net.head_ = Head(shape_numel(chw), spec.head_hidden, spec.classes, rng);
    return net;
}

Tensor PCNet::classify(const Tensor& top_state) const { return head_.forward(top_state); }

std::vector<Tensor> PCNet::feedforward_states(const Tensor& images) const {
    check_images(images, spec_.input_chw);
    std::vector<Tensor> states;
    const Tensor* below = &images;
    for (const auto& pc : pcoders_) {
        states.push_back(pc.feedforward(*below));
        below = &states.back();
    }
    return states;
}

Tensor PCNet::feedforward(const Tensor& images) const { return classify(feedforward_states(images).back()); }

UnrollResult PCNet::unroll(const Tensor& images, std::span<const HPTerms> hps, int timesteps,
                           const UnrollOptions& options) {
    const std::size_t layers = pcoders_.size();
    if (timesteps < 0) throw std::invalid_argument("unroll: timesteps must be >= 0");
    if (hps.size() != 1 && hps.size() != layers) {
        throw std::invalid_argument(fmt::format("unroll: got {} hyper-parameter sets; expected 1 (shared) or {} "
                                                "(separate)",
                                                hps.size(), layers));
    }
    check_images(images, spec_.input_chw);
    auto hp_for = [&](std::size_t i) -> const HPTerms& { return hps.size() == 1 ? hps[0] : hps[i]; };
    auto is_zero = [](const Tensor& s) { return !s.requires_grad() && s.item() == Real(0); };

    UnrollResult result;
    auto target_of = [&](std::size_t i) -> const Tensor& { return i == 0 ? images : pcoders_[i - 1].state(); };
    auto observe = [&]() {
        result.logits.push_back(classify(pcoders_.back().state()));
        std::vector<double> eps(layers);
        for (std::size_t i = 0; i < layers; ++i) {
            pcoders_[i].predict();
            Tape::Pause pause;
            eps[i] = pcoders_[i].prediction_error(target_of(i)).item();
        }
        result.errors.push_back(std::move(eps));
        if (options.record_states) {
            std::vector<Tensor> snap;
            for (const auto& pc : pcoders_) snap.push_back(pc.state());
            result.states.push_back(std::move(snap));
        }
    };

    const Tensor* below = &images;
    for (auto& pc : pcoders_) below = &pc.forward_init(*below);
    observe();

    for (int t = 1; t <= timesteps; ++t) {
        // everything on the right-hand side of the update is read at time t-1,
        // except the feed-forward input, which is the freshly updated layer below
        std::vector<Tensor> predictions(layers);
        for (std::size_t i = 0; i < layers; ++i) {
            if (!is_zero(hp_for(i).alpha)) {
                pcoders_[i].scaled_error_gradient(target_of(i), options.detach_error_gradient);
            }
            predictions[i] = pcoders_[i].prediction();
        }
        for (std::size_t i = 0; i < layers; ++i) {
            std::optional<Tensor> feedback;
            if (i + 1 < layers) feedback = predictions[i + 1];
            pcoders_[i].step(i == 0 ? images : pcoders_[i - 1].state(), feedback, hp_for(i));
        }
        observe();
    }
    return result;
}

UnrollResult PCNet::unroll(const Tensor& images, const std::vector<HyperParams>& hps, int timesteps,
                           const UnrollOptions& options) {
    std::vector<HPTerms> terms;
    for (const auto& hp : hps) {
        hp.validate();
        terms.push_back(HPTerms::constant(hp));
    }
    return unroll(images, std::span<const HPTerms>(terms), timesteps, options);
}

std::vector<NamedTensor> PCNet::named_parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < pcoders_.size(); ++i) {
        const auto& pc = pcoders_[i];
        out.push_back({fmt::format("pcoder{}.ff.weight", i + 1), pc.ff().weight});
        out.push_back({fmt::format("pcoder{}.ff.bias", i + 1), pc.ff().bias});
        out.push_back({fmt::format("pcoder{}.fb.weight", i + 1), pc.fb().weight});
        out.push_back({fmt::format("pcoder{}.fb.bias", i + 1), pc.fb().bias});
    }
    append_head(out, head_);
    return out;
}

std::vector<Tensor> PCNet::parameters(ParamGroupKind kind) const {
    std::vector<Tensor> out;
    switch (kind) {
        case ParamGroupKind::feedforward:
            for (const auto& pc : pcoders_) {
                out.push_back(pc.ff().weight);
                out.push_back(pc.ff().bias);
            }
            break;
        case ParamGroupKind::feedback:
            for (const auto& pc : pcoders_) {
                out.push_back(pc.fb().weight);
                out.push_back(pc.fb().bias);
            }
            break;
        case ParamGroupKind::head:
            for (std::size_t l = 0; l < head_.weights.size(); ++l) {
                out.push_back(head_.weights[l]);
                out.push_back(head_.biases[l]);
            }
            break;
    }
    return out;
}

std::vector<Tensor> PCNet::all_parameters() const {
    std::vector<Tensor> out;
    for (auto kind : {ParamGroupKind::feedforward, ParamGroupKind::feedback, ParamGroupKind::head}) {
        auto p = parameters(kind);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

void PCNet::set_requires_grad(ParamGroupKind kind, bool flag) {
    for (auto& t : parameters(kind)) t.set_requires_grad(flag);
}

void PCNet::freeze_all() {
    for (auto& t : all_parameters()) t.set_requires_grad(false);
}

std::size_t PCNet::forward_param_count() const {
    std::size_t n = head_.param_count();
    for (const auto& pc : pcoders_) n += pc.ff().param_count();
    return n;
}

std::size_t PCNet::feedback_param_count() const {
    std::size_t n = 0;
    for (const auto& pc : pcoders_) n += pc.fb().param_count();
    return n;
}

void PCNet::load_parameters(const std::vector<NamedTensor>& tensors) { assign_by_name(named_parameters(), tensors); }

PCNet PCNet::clone() const {
    PCNet net;
    net.spec_ = spec_;
    for (const auto& pc : pcoders_) net.pcoders_.push_back(pc.clone());
    net.head_ = head_.clone();
    return net;
}

// --- baselines --------------------------------------------------------------

std::string to_string(BaselineVariant v) {
    switch (v) {
        case BaselineVariant::same: return "same";
        case BaselineVariant::kernel: return "kernel";
        case BaselineVariant::feat: return "feat";
        case BaselineVariant::deep: return "deep";
    }
    return "?";
}

BaselineVariant parse_baseline_variant(const std::string& name) {
    if (name == "same") return BaselineVariant::same;
    if (name == "kernel") return BaselineVariant::kernel;
    if (name == "feat") return BaselineVariant::feat;
    if (name == "deep") return BaselineVariant::deep;
    throw std::invalid_argument(fmt::format("unknown baseline variant '{}'", name));
}

NetSpec baseline_spec(BaselineVariant v) { return baseline_spec(v, NetSpec::shallow()); }

NetSpec baseline_spec(BaselineVariant v, const NetSpec& base) {
    NetSpec spec = base;
    switch (v) {
        case BaselineVariant::same: break;
        case BaselineVariant::kernel:
            for (auto& l : spec.layers) l.kernel += 2;
            break;
        case BaselineVariant::feat:
            for (auto& l : spec.layers) l.out_channels = (l.out_channels * 4 + 2) / 3;
            break;
        case BaselineVariant::deep:
            spec.layers.push_back({spec.layers.back().out_channels, 5, false});
            break;
    }
    return spec;
}

BaselineNet BaselineNet::build(BaselineVariant variant, Rng& rng) { return build(variant, baseline_spec(variant), rng); }

BaselineNet BaselineNet::build(BaselineVariant variant, const NetSpec& spec, Rng& rng) {
    BaselineNet net;
    net.variant_ = variant;
    Shape chw = spec.input_chw;
    for (const auto& layer : spec.layers) {
        net.blocks_.emplace_back(chw[0], layer, rng);
        chw = block_output_chw(chw, layer);
    }
    net.head_ = Head(shape_numel(chw), spec.head_hidden, spec.classes, rng);
    return net;
}

Tensor BaselineNet::forward(const Tensor& images) const {
    Tensor x = images;
    for (const auto& b : blocks_) x = b.forward(x);
    return head_.forward(x);
}

std::size_t BaselineNet::param_count() const {
    std::size_t n = head_.param_count();
    for (const auto& b : blocks_) n += b.param_count();
    return n;
}

std::vector<NamedTensor> BaselineNet::named_parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        out.push_back({fmt::format("conv{}.weight", i + 1), blocks_[i].weight});
        out.push_back({fmt::format("conv{}.bias", i + 1), blocks_[i].bias});
    }
    append_head(out, head_);
    return out;
}

std::vector<Tensor> BaselineNet::parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : named_parameters()) out.push_back(nt.tensor);
    return out;
}

void BaselineNet::set_requires_grad(bool flag) {
    for (auto& t : parameters()) t.set_requires_grad(flag);
}

void BaselineNet::load_parameters(const std::vector<NamedTensor>& tensors) {
    assign_by_name(named_parameters(), tensors);
}

// --- PCW1 -------------------------------------------------------------------

void save_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    ByteWriter w;
    w.bytes("PCW1", 4);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        w.u32(static_cast<std::uint32_t>(nt.name.size()));
        w.bytes(nt.name.data(), nt.name.size());
        w.u32(static_cast<std::uint32_t>(nt.tensor.rank()));
        for (std::size_t d : nt.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (Real v : nt.tensor.data()) w.f32(static_cast<float>(v));
    }
    write_file_atomic(path, w.buffer());
}

std::vector<NamedTensor> load_weights(const std::filesystem::path& path) {
    ByteReader r(read_file(path), path.string());
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "PCW1", 4) != 0) {
        throw std::runtime_error(fmt::format("{}: bad magic at byte offset 0 (expected PCW1)", path.string()));
    }
    const std::uint32_t count = r.u32();
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32();
        std::string name(len, '\0');
        r.bytes(name.data(), len);
        const std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (auto& d : shape) d = r.u32();
        Tensor t(shape);
        for (Real& v : t.data()) v = static_cast<Real>(r.f32());
        out.push_back({std::move(name), t});
    }
    if (!r.at_end()) {
        throw std::runtime_error(fmt::format("{}: {} trailing bytes after {} tensors at byte offset {}",
                                             path.string(), r.remaining(), count, r.offset()));
    }
    return out;
}

void assign_by_name(const std::vector<NamedTensor>& targets, const std::vector<NamedTensor>& source) {
    for (const auto& target : targets) {
        const NamedTensor* match = nullptr;
        for (const auto& s : source) {
            if (s.name == target.name) {
                match = &s;
                break;
            }
        }
        if (match == nullptr) throw std::runtime_error(fmt::format("missing tensor '{}'", target.name));
        if (match->tensor.shape() != target.tensor.shape()) {
            throw std::runtime_error(fmt::format("tensor '{}' has shape {}, expected {}", target.name,
                                                 shape_str(match->tensor.shape()), shape_str(target.tensor.shape())));
        }
        Tensor dst = target.tensor;
        dst.assign(match->tensor);
    }
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
