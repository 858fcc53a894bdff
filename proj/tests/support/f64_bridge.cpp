#include "support/f64_bridge.hpp"

#include "pcnet/hyperparams.hpp"
#include "pcnet/network.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/tape.hpp"

static_assert(std::is_same_v<pcnet::Real, double>);

namespace pcnet::bridge {

double unrolled_loss_f64(const SpecDesc& desc, const Weights& weights, const std::vector<double>& images,
                         const std::vector<std::int32_t>& labels, const std::vector<std::array<double, 4>>& aux,
                         const std::string& mask, int timesteps) {
    Tape::Pause pause;
    NetSpec spec;
    spec.input_chw = desc.input_chw;
    spec.layers.clear();
    for (const auto& [c, k, pool] : desc.layers) spec.layers.push_back({c, k, pool});
    spec.head_hidden = desc.head_hidden;
    spec.classes = desc.classes;
    spec.decoder_kernel = desc.decoder_kernel;
    Rng rng(0);
    PCNet net = PCNet::build(spec, rng);
    std::vector<NamedTensor> named;
    for (std::size_t i = 0; i < weights.names.size(); ++i)
        named.push_back({weights.names[i], Tensor(weights.shapes[i], weights.values[i])});
    net.load_parameters(named);

    const std::size_t n = labels.size();
    Tensor x({n, spec.input_chw[0], spec.input_chw[1], spec.input_chw[2]}, images);
    const HPMask m = HPMask::parse(mask);
    std::vector<HPTerms> terms;
    for (const auto& a : aux) terms.push_back(HyperParamVariables({a[0], a[1], a[2], a[3]}).terms(m));
    auto r = net.unroll(x, std::span<const HPTerms>(terms), timesteps);
    double loss = 0;
    for (int t = 1; t <= timesteps; ++t) loss += ops::cross_entropy(r.logits[t], labels).item();
    return loss / timesteps;
}

}  // namespace pcnet::bridge
