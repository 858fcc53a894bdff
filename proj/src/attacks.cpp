#include "pcnet/attacks.hpp"

#include "pcnet/ops.hpp"
#include "pcnet/parallel.hpp"
#include "pcnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

UnrolledModel::UnrolledModel(const PCNet& net, std::vector<HyperParams> hps, int timesteps)
    : net_(net.clone()), hps_(std::move(hps)), timesteps_(timesteps) {
    if (timesteps < 0) throw std::invalid_argument("UnrolledModel: timesteps must be >= 0");
    net_.freeze_all();
    for (const auto& hp : hps_) {
        hp.validate();
        terms_.push_back(HPTerms::constant(hp));
    }
}

Tensor UnrolledModel::logits(const Tensor& images) {
    return net_.unroll(images, std::span<const HPTerms>(terms_), timesteps_).logits.back();
}

std::unique_ptr<AttackModel> UnrolledModel::clone() const {
    return std::make_unique<UnrolledModel>(net_, hps_, timesteps_);
}

std::string to_string(AttackMethod m) { return m == AttackMethod::bim ? "bim" : "rpgd"; }

AttackMethod parse_attack_method(const std::string& name) {
    if (name == "bim") return AttackMethod::bim;
    if (name == "rpgd") return AttackMethod::rpgd;
    throw std::invalid_argument(fmt::format("unknown attack method '{}'", name));
}

std::string to_string(TargetRule r) { return r == TargetRule::least_likely ? "least_likely" : "offset"; }

TargetRule parse_target_rule(const std::string& name) {
    if (name == "least_likely") return TargetRule::least_likely;
    if (name == "offset") return TargetRule::offset;
    throw std::invalid_argument(fmt::format("unknown target rule '{}'", name));
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0) || !(hi >= lo) || count < 1)
        throw std::invalid_argument(fmt::format("geometric_grid: need 0 < lo <= hi and count >= 1 (got {}, {}, {})", lo,
                                                hi, count));
    if (count == 1) return {lo};
    std::vector<double> g(count);
    for (std::size_t i = 0; i < count; ++i)
        g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
    g.back() = hi;
    return g;
}

void AttackConfig::validate() const {
    if (epsilons.empty()) throw std::invalid_argument("AttackConfig: epsilon grid is empty");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0) || !std::isfinite(epsilons[i]))
            throw std::invalid_argument(fmt::format("AttackConfig: epsilon[{}] = {} must be positive", i, epsilons[i]));
        if (i > 0 && !(epsilons[i] > epsilons[i - 1]))
            throw std::invalid_argument(fmt::format("AttackConfig: epsilon grid must be ascending at index {}", i));
    }
    if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
    if (!(step_factor > 0)) throw std::invalid_argument("AttackConfig: step_factor must be > 0");
    if (target_offset < 0) throw std::invalid_argument("AttackConfig: target_offset must be >= 0");
    if (timesteps < 0) throw std::invalid_argument("AttackConfig: timesteps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("AttackConfig: batch_size must be >= 1");
    if (threads < 1) throw std::invalid_argument("AttackConfig: threads must be >= 1");
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t n) {
    const std::size_t k = logits.dim(1);
    const Real* row = logits.data().data() + n * k;
    return static_cast<std::size_t>(std::max_element(row, row + k) - row);
}

std::size_t argmin_row(const Tensor& logits, std::size_t n) {
    const std::size_t k = logits.dim(1);
    const Real* row = logits.data().data() + n * k;
    return static_cast<std::size_t>(std::min_element(row, row + k) - row);
}

void check_inputs(const Tensor& images, std::span<const std::int32_t> targets, double eps) {
    if (images.rank() != 4)
        throw std::invalid_argument(fmt::format("attack: images must be [N,C,H,W], got {}", shape_str(images.shape())));
    if (targets.size() != images.dim(0))
        throw std::invalid_argument(fmt::format("attack: {} targets for {} images", targets.size(), images.dim(0)));
    if (!(eps >= 0) || !std::isfinite(eps)) throw std::invalid_argument(fmt::format("attack: bad budget {}", eps));
    for (Real v : images.data())
        if (!(v >= 0 && v <= 1)) throw std::invalid_argument("attack: image values must lie in [0,1]");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    const std::size_t per = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data().data() + rows[i] * per, per, out.data().data() + i * per);
    return out;
}

AttackOutcome run_attack(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets, double eps,
                         const AttackConfig& cfg, bool random_start, std::span<const std::size_t> ids) {
    cfg.validate();
    check_inputs(images, targets, eps);
    const std::size_t n = images.dim(0), per = images.numel() / n;
    const Real e = static_cast<Real>(eps);
    const Real step = static_cast<Real>(cfg.step_factor * eps / cfg.steps);

    Tensor lo(images.shape()), hi(images.shape());
    for (std::size_t i = 0; i < images.numel(); ++i) {
        lo[i] = std::max(Real(0), images[i] - e);
        hi[i] = std::min(Real(1), images[i] + e);
    }
    Tensor x = images.clone();
    if (random_start) {
        for (std::size_t s = 0; s < n; ++s) {
            Rng rng = Rng(cfg.seed).fork(ids.empty() ? s : ids[s]);
            for (std::size_t j = s * per; j < (s + 1) * per; ++j) {
                const Real v = images[j] + static_cast<Real>(rng.uniform(-eps, eps));
                x[j] = std::clamp(v, lo[j], hi[j]);
            }
        }
    }

    AttackOutcome out;
    out.success.assign(n, false);
    out.steps.assign(n, 0);
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = i;

    for (int s = 0; s <= cfg.steps && !active.empty(); ++s) {
        Tensor xin = gather_rows(x, active);
        xin.set_requires_grad(true);
        std::vector<std::int32_t> tgt;
        for (auto i : active) tgt.push_back(targets[i]);
        Tape tape;
        Tape::Scope scope(tape);
        Tensor logits;
        try {
            logits = model.logits(xin);
        } catch (const NumericError& err) {
            out.diagnostic = fmt::format("forward at step {}: {}", s, err.what());
            break;
        }
        std::vector<std::size_t> still;
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < active.size(); ++r) {
            if (argmax_row(logits, r) == static_cast<std::size_t>(tgt[r])) {
                out.success[active[r]] = true;
                out.steps[active[r]] = s;
            } else {
                still.push_back(active[r]);
                rows.push_back(r);
            }
        }
        if (still.empty() || s == cfg.steps) break;
        try {
            tape.backward(ops::cross_entropy(logits, tgt));
        } catch (const NumericError& err) {
            out.diagnostic = fmt::format("backward at step {}: {}", s, err.what());
            break;
        }
        auto g = xin.grad();
        std::vector<std::size_t> next;
        for (std::size_t k = 0; k < still.size(); ++k) {
            const std::size_t img = still[k], r = rows[k];
            const Real* gr = g.data() + r * per;
            if (!std::all_of(gr, gr + per, [](Real v) { return std::isfinite(v); })) {
                out.diagnostic = fmt::format("image {}: non-finite gradient at step {}", img, s);
                continue;
            }
            for (std::size_t j = 0; j < per; ++j) {
                const std::size_t at = img * per + j;
                const Real sg = gr[j] > 0 ? Real(1) : (gr[j] < 0 ? Real(-1) : Real(0));
                x[at] = std::clamp(x[at] - step * sg, lo[at], hi[at]);
            }
            next.push_back(img);
        }
        active = std::move(next);
    }

    out.adversarial = images.clone();
    for (std::size_t i = 0; i < n; ++i)
        if (out.success[i]) std::copy_n(x.data().data() + i * per, per, out.adversarial.data().data() + i * per);
    return out;
}

}  // namespace

AttackOutcome bim_attack(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets, double eps,
                         const AttackConfig& cfg) {
    return run_attack(model, images, targets, eps, cfg, false, {});
}

AttackOutcome rpgd_attack(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets, double eps,
                          const AttackConfig& cfg, std::span<const std::size_t> image_ids) {
    if (!image_ids.empty() && image_ids.size() != images.dim(0))
        throw std::invalid_argument("rpgd_attack: one image id per image required");
    return run_attack(model, images, targets, eps, cfg, true, image_ids);
}

Tensor input_gradient(AttackModel& model, const Tensor& images, std::span<const std::int32_t> targets) {
    Tensor x = images.clone();
    x.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    const Tensor logits = model.logits(x);
    tape.backward(ops::mul_scalar(ops::cross_entropy(logits, targets), static_cast<Real>(images.dim(0))));
    return x.grad_tensor();
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    if (values.size() % 2 == 1) return values[m];
    const double a = values[m - 1], b = values[m];
    if (std::isinf(a) || std::isinf(b)) return std::numeric_limits<double>::infinity();
    return 0.5 * (a + b);
}

std::string AttackResult::per_image_csv() const {
    std::string out = "image,target,min_eps\n";
    for (std::size_t i = 0; i < image_index.size(); ++i)
        out += fmt::format("{},{},{}\n", image_index[i], targets[i], min_eps[i]);
    return out;
}

AttackResult median_min_perturbation(const AttackModel& model, const Dataset& data, const AttackConfig& cfg) {
    cfg.validate();
    data.validate();
    AttackResult res;
    res.epsilons = cfg.epsilons;

    // clean predictions decide eligibility and targets
    std::vector<std::int32_t> all_targets(data.size());
    std::vector<bool> already(data.size(), false);
    {
        auto m = model.clone();
        Tape::Pause pause;
        for (const auto& [begin, end] : batch_ranges(data.size(), cfg.batch_size)) {
            std::vector<std::size_t> ids(end - begin);
            for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = begin + i;
            const Tensor logits = m->logits(data.subset(ids).images);
            const std::size_t k = logits.dim(1);
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t pred = argmax_row(logits, i - begin);
                if (pred != static_cast<std::size_t>(data.labels[i])) {
                    ++res.skipped;
                    continue;
                }
                const std::int32_t t = cfg.target == TargetRule::least_likely
                                           ? static_cast<std::int32_t>(argmin_row(logits, i - begin))
                                           : static_cast<std::int32_t>((data.labels[i] + cfg.target_offset) % k);
                res.image_index.push_back(i);
                res.targets.push_back(t);
                already[i] = pred == static_cast<std::size_t>(t);
            }
        }
    }
    if (res.image_index.empty() || res.image_index.size() < cfg.min_eligible)
        throw std::invalid_argument(fmt::format("median_min_perturbation: {} correctly classified images, need at least {}",
                                                res.image_index.size(), std::max<std::size_t>(cfg.min_eligible, 1)));

    const std::size_t n = res.image_index.size();
    res.min_eps.assign(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < n; ++i) {
        if (already[res.image_index[i]])
            res.min_eps[i] = 0;
        else
            remaining.push_back(i);
    }

    for (std::size_t e = 0; e < cfg.epsilons.size() && !remaining.empty(); ++e) {
        const double eps = cfg.epsilons[e];
        const auto ranges = batch_ranges(remaining.size(), cfg.batch_size);
        std::vector<char> won(remaining.size(), 0);
        parallel_for(ranges.size(), cfg.threads, [&](std::size_t b) {
            const auto [begin, end] = ranges[b];
            std::vector<std::size_t> rows, keys;
            std::vector<std::int32_t> tgt;
            for (std::size_t r = begin; r < end; ++r) {
                const std::size_t i = remaining[r];
                rows.push_back(res.image_index[i]);
                keys.push_back(res.image_index[i] * cfg.epsilons.size() + e);
                tgt.push_back(res.targets[i]);
            }
            const Tensor x = data.subset(rows).images;
            auto m = model.clone();
            const AttackOutcome out = cfg.method == AttackMethod::bim ? bim_attack(*m, x, tgt, eps, cfg)
                                                                      : rpgd_attack(*m, x, tgt, eps, cfg, keys);
            for (std::size_t r = begin; r < end; ++r) won[r] = out.success[r - begin];
        });
        std::vector<std::size_t> next;
        for (std::size_t r = 0; r < remaining.size(); ++r) {
            if (won[r])
                res.min_eps[remaining[r]] = eps;
            else
                next.push_back(remaining[r]);
        }
        remaining = std::move(next);
    }

    for (double eps : cfg.epsilons) {
        const auto hits = std::count_if(res.min_eps.begin(), res.min_eps.end(), [&](double m) { return m <= eps; });
        res.success_rate.push_back(static_cast<double>(hits) / static_cast<double>(n));
    }
    res.median = median(res.min_eps);
    return res;
}

std::vector<NamedHyperParams> robustness_configurations() {
    // (mu, gamma, beta) = (0.33, 0.3, 0.33) does not sum to 1; renormalized
    const double s = 0.33 + 0.3 + 0.33;
    return {
        {"feedforward", {0, 1, 0, 0}},
        {"equal_alpha0", {1.0 / 3, 1.0 / 3, 1.0 / 3, 0}},
        {"beta0.5_alpha0", {0.2, 0.3, 0.5, 0}},
        {"gamma1_alpha1", {0, 1, 0, 1}},
        {"gamma1_alpha2", {0, 1, 0, 2}},
        {"equal_alpha1", {0.33 / s, 0.3 / s, 0.33 / s, 1}},
        {"beta0.5_alpha1", {0.2, 0.3, 0.5, 1}},
    };
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
