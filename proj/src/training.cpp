#include "pcnet/training.hpp"

#include "pcnet/io.hpp"
#include "pcnet/ops.hpp"
#include "pcnet/optim.hpp"
#include "pcnet/parallel.hpp"
#include "pcnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <map>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

std::string to_string(Regime regime) {
    switch (regime) {
        case Regime::ff_supervised: return "ff_supervised";
        case Regime::fb_unsupervised: return "fb_unsupervised";
        case Regime::fb_supervised: return "fb_supervised";
        case Regime::hp_only: return "hp_only";
    }
    return "?";
}

Regime parse_regime(const std::string& name) {
    for (auto r : {Regime::ff_supervised, Regime::fb_unsupervised, Regime::fb_supervised, Regime::hp_only})
        if (to_string(r) == name) return r;
    throw std::invalid_argument(fmt::format("unknown training regime '{}'", name));
}

TrainConfig TrainConfig::defaults(Regime regime) {
    TrainConfig c;
    c.regime = regime;
    switch (regime) {
        case Regime::ff_supervised:
            c.epochs = 30;
            break;
        case Regime::fb_unsupervised:
            c.epochs = 20;
            break;
        case Regime::fb_supervised:
            c.epochs = 20;
            c.lr = 0.005;
            break;
        case Regime::hp_only:
            c.epochs = 5;
            c.lr = 0.001;
            c.alpha_lr = 0.001;
            c.momentum = 0;
            c.weight_decay = 5e-4;
            c.restarts = 10;
            break;
    }
    return c;
}

void TrainConfig::validate() const {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument(fmt::format("TrainConfig ({}): {}", to_string(regime), what));
    };
    if (epochs < 0) fail(fmt::format("epochs must be >= 0, got {}", epochs));
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(lr > 0)) fail(fmt::format("lr must be > 0, got {}", lr));
    if (!(alpha_lr > 0)) fail(fmt::format("alpha_lr must be > 0, got {}", alpha_lr));
    if (momentum < 0) fail("momentum must be >= 0");
    if (weight_decay < 0) fail("weight_decay must be >= 0");
    if (restarts < 1) fail("restarts must be >= 1");
    if (threads < 1) fail("threads must be >= 1");
    const bool unrolled = regime == Regime::fb_supervised || regime == Regime::hp_only;
    if (unrolled && timesteps < 1) fail(fmt::format("timesteps must be >= 1, got {}", timesteps));
    noise.param();
    pinned.validate();
}

const RestartRecord& TrainReport::best() const {
    if (best_restart < 0 || static_cast<std::size_t>(best_restart) >= restarts.size())
        throw std::logic_error("TrainReport has no restarts");
    return restarts[best_restart];
}

std::string TrainReport::curves_csv() const {
    std::string out = "epoch,split,metric,value\n";
    for (const auto& c : curves) out += fmt::format("{},{},{},{}\n", c.epoch, c.split, c.metric, c.value);
    return out;
}

double accuracy(const Tensor& logits, std::span<const std::int32_t> labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw std::invalid_argument(fmt::format("accuracy: logits {} vs {} labels", shape_str(logits.shape()),
                                                labels.size()));
    if (labels.empty()) return 0;
    const std::size_t k = logits.dim(1);
    auto v = logits.data();
    std::size_t correct = 0;
    for (std::size_t n = 0; n < labels.size(); ++n) {
        const Real* row = v.data() + n * k;
        const auto arg = std::max_element(row, row + k) - row;
        correct += arg == labels[n];
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::uint64_t fingerprint(const std::vector<NamedTensor>& tensors) {
    std::uint64_t h = fnv1a64("");
    for (const auto& nt : tensors) {
        h = fnv1a64(nt.name, h);
        h = fnv1a64(shape_str(nt.tensor.shape()), h);
        auto v = nt.tensor.data();
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size_bytes()), h);
    }
    return h;
}

namespace {

struct Batch {
    Tensor images;
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> ids;
};

Batch gather(const Dataset& data, std::span<const std::size_t> ids) {
    Dataset d = data.subset(ids);
    return {d.images, std::move(d.labels), {ids.begin(), ids.end()}};
}

std::vector<std::size_t> iota(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> v(end - begin);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = begin + i;
    return v;
}

void require_regime(const TrainConfig& cfg, Regime want) {
    cfg.validate();
    if (cfg.regime != want)
        throw std::invalid_argument(fmt::format("expected a {} config, got {}", to_string(want), to_string(cfg.regime)));
}

void require_data(const TrainData& data, bool need_validation) {
    data.train.validate();
    if (data.train.empty()) throw std::invalid_argument("training set is empty");
    if (!data.validation.empty()) data.validation.validate();
    if (need_validation && data.validation.empty()) throw std::invalid_argument("validation set is empty");
}

/// Scalar metrics accumulated over batches, weighted by batch size.
class Meter {
public:
    void add(const std::string& metric, double value, std::size_t weight) {
        auto& [sum, n] = acc_[metric];
        sum += value * static_cast<double>(weight);
        n += weight;
    }
    void flush(std::vector<CurvePoint>& out, int epoch, const std::string& split) const {
        for (const auto& [metric, acc] : acc_) out.push_back({epoch, split, metric, acc.first / double(acc.second)});
    }
    double mean(const std::string& metric) const {
        auto it = acc_.find(metric);
        return it == acc_.end() || it->second.second == 0 ? 0.0 : it->second.first / double(it->second.second);
    }

private:
    std::map<std::string, std::pair<double, std::size_t>> acc_;
};

template <class Fn>
auto with_context(const std::string& context, int epoch, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(fmt::format("{}: epoch {} evaluation: {}", context, epoch, e.what()));
    }
}

/// One shuffled pass per epoch. `step` trains on a batch and feeds the meter;
/// numeric failures are rethrown with the position in the run.
template <class Step>
double run_epochs(const TrainConfig& cfg, const Dataset& train, Rng rng, std::vector<CurvePoint>& curves,
                  const std::string& context, Step&& step, const std::function<void(int)>& after_epoch) {
    double last_loss = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train.size(), rng);
        Meter meter;
        std::size_t b = 0;
        for (const auto& [begin, end] : batch_ranges(order.size(), cfg.batch_size)) {
            const std::span<const std::size_t> ids(order.data() + begin, end - begin);
            try {
                step(epoch, gather(train, ids), meter);
            } catch (const NumericError& e) {
                throw NumericError(fmt::format("{}: epoch {} batch {}: {}", context, epoch, b, e.what()));
            }
            ++b;
        }
        meter.flush(curves, epoch, "train");
        last_loss = meter.mean("loss");
        if (after_epoch) with_context(context, epoch, [&] { after_epoch(epoch); });
    }
    return last_loss;
}

void check_unchanged(std::uint64_t before, const std::vector<NamedTensor>& params, const char* what) {
    if (fingerprint(params) != before) throw std::logic_error(fmt::format("{} changed during training", what));
}

std::vector<NamedTensor> named_group(const PCNet& net, std::initializer_list<const char*> parts) {
    std::vector<NamedTensor> out;
    for (const auto& nt : net.named_parameters())
        for (const char* p : parts)
            if (nt.name.find(p) != std::string::npos) out.push_back(nt);
    return out;
}

std::vector<Tensor> collect(const PCNet& net, std::initializer_list<ParamGroupKind> kinds) {
    std::vector<Tensor> out;
    for (auto k : kinds) {
        auto p = net.parameters(k);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

void push_eval(std::vector<CurvePoint>& curves, int epoch, const EvalResult& r) {
    const std::size_t T = r.accuracy.size() - 1;
    curves.push_back({epoch, "validation", "accuracy", r.accuracy[T]});
    curves.push_back({epoch, "validation", "loss", r.loss[T]});
    if (T > 0)
        for (std::size_t t = 0; t <= T; ++t)
            curves.push_back({epoch, "validation", fmt::format("accuracy_t{}", t), r.accuracy[t]});
}

EvalResult finish_eval(std::vector<double> correct, std::vector<double> loss, std::vector<std::vector<double>> eps,
                       std::size_t n) {
    EvalResult r;
    const double dn = static_cast<double>(std::max<std::size_t>(n, 1));
    for (auto& c : correct) r.accuracy.push_back(c / dn);
    for (auto& l : loss) r.loss.push_back(l / dn);
    for (auto& row : eps) {
        for (auto& e : row) e /= dn;
        r.epsilon.push_back(std::move(row));
    }
    return r;
}

Tensor noisy(const Tensor& images, const NoiseSpec& noise, std::size_t first) {
    return noise.is_clean() ? images : corrupt(images, noise, first);
}

}  // namespace

// --- evaluation -------------------------------------------------------------

EvalResult evaluate(PCNet& net, const Dataset& data, std::span<const HyperParams> hps, int timesteps,
                    const NoiseSpec& noise, std::size_t batch_size) {
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    data.validate();
    const std::vector<HyperParams> hp(hps.begin(), hps.end());
    const std::size_t steps = static_cast<std::size_t>(std::max(timesteps, 0)) + 1;
    std::vector<double> correct(steps), loss(steps);
    std::vector<std::vector<double>> eps(steps, std::vector<double>(net.num_pcoders()));
    Tape::Pause pause;
    for (const auto& [begin, end] : batch_ranges(data.size(), batch_size)) {
        const auto ids = iota(begin, end);
        Batch b = gather(data, ids);
        const auto r = net.unroll(noisy(b.images, noise, begin), hp, timesteps);
        const double w = static_cast<double>(end - begin);
        for (std::size_t t = 0; t < steps; ++t) {
            correct[t] += accuracy(r.logits[t], b.labels) * w;
            loss[t] += ops::cross_entropy(r.logits[t], b.labels).item() * w;
            for (std::size_t i = 0; i < net.num_pcoders(); ++i) eps[t][i] += r.errors[t][i] * w;
        }
    }
    return finish_eval(std::move(correct), std::move(loss), std::move(eps), data.size());
}

EvalResult evaluate(const BaselineNet& net, const Dataset& data, const NoiseSpec& noise, std::size_t batch_size) {
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    data.validate();
    std::vector<double> correct(1), loss(1);
    Tape::Pause pause;
    for (const auto& [begin, end] : batch_ranges(data.size(), batch_size)) {
        const auto ids = iota(begin, end);
        Batch b = gather(data, ids);
        const Tensor logits = net.forward(noisy(b.images, noise, begin));
        const double w = static_cast<double>(end - begin);
        correct[0] += accuracy(logits, b.labels) * w;
        loss[0] += ops::cross_entropy(logits, b.labels).item() * w;
    }
    return finish_eval(std::move(correct), std::move(loss), {}, data.size());
}

// --- feed-forward -----------------------------------------------------------

namespace {

template <class Forward, class Eval>
TrainReport train_classifier(const TrainData& data, const TrainConfig& cfg, std::vector<Tensor> params,
                             Forward&& forward, Eval&& eval) {
    TrainReport report;
    report.regime = cfg.regime;
    const Dataset& val = data.validation.empty() ? data.train : data.validation;
    push_eval(report.curves, 0, with_context(to_string(cfg.regime), 0, [&] { return eval(val); }));

    for (auto& p : params) p.set_requires_grad(true);
    Sgd opt(params, {cfg.lr, cfg.momentum, cfg.weight_decay});
    try {
        run_epochs(cfg, data.train, Rng(cfg.seed), report.curves, to_string(cfg.regime),
                   [&](int, const Batch& b, Meter& meter) {
                       Tape tape;
                       Tape::Scope scope(tape);
                       const Tensor logits = forward(b.images);
                       const Tensor loss = ops::cross_entropy(logits, b.labels);
                       tape.backward(loss);
                       opt.step();
                       opt.zero_grad();
                       meter.add("loss", loss.item(), b.labels.size());
                       meter.add("accuracy", accuracy(logits, b.labels), b.labels.size());
                   },
                   [&](int epoch) { push_eval(report.curves, epoch, eval(val)); });
    } catch (...) {
        for (auto& p : params) p.set_requires_grad(false);
        throw;
    }
    for (auto& p : params) p.set_requires_grad(false);
    report.steps = opt.steps();
    report.final_accuracy = {eval(val).accuracy[0]};
    return report;
}

}  // namespace

TrainReport train_feedforward(PCNet& net, const TrainData& data, const TrainConfig& cfg) {
    require_regime(cfg, Regime::ff_supervised);
    require_data(data, false);
    net.freeze_all();
    const auto fb = named_group(net, {".fb."});
    const std::uint64_t before = fingerprint(fb);
    auto report = train_classifier(
        data, cfg, collect(net, {ParamGroupKind::feedforward, ParamGroupKind::head}),
        [&](const Tensor& x) { return net.feedforward(x); },
        [&](const Dataset& d) {
            const HyperParams ff = HyperParams::feedforward();
            return evaluate(net, d, std::span(&ff, 1), 0, {}, cfg.batch_size);
        });
    check_unchanged(before, fb, "feedback weights");
    return report;
}

TrainReport train_feedforward(BaselineNet& net, const TrainData& data, const TrainConfig& cfg) {
    require_regime(cfg, Regime::ff_supervised);
    require_data(data, false);
    net.set_requires_grad(false);
    return train_classifier(
        data, cfg, net.parameters(), [&](const Tensor& x) { return net.forward(x); },
        [&](const Dataset& d) { return evaluate(net, d, {}, cfg.batch_size); });
}

// --- feedback ---------------------------------------------------------------

namespace {

/// Per-PCoder reconstruction losses on feed-forward states; recorded on the
/// active tape when the decoders require grad.
std::vector<Tensor> reconstruction_losses(const PCNet& net, const Tensor& images) {
    std::vector<Tensor> states;
    {
        Tape::Pause pause;
        states = net.feedforward_states(images);
    }
    std::vector<Tensor> losses;
    for (std::size_t i = 0; i < net.num_pcoders(); ++i) {
        const Tensor pred = net.pcoder(i).fb().forward(states[i]);
        losses.push_back(ops::mse(pred, i == 0 ? images : states[i - 1]));
    }
    return losses;
}

void reconstruction_eval(const PCNet& net, const Dataset& data, std::size_t batch, std::vector<CurvePoint>& curves,
                         int epoch) {
    Tape::Pause pause;
    Meter meter;
    for (const auto& [begin, end] : batch_ranges(data.size(), batch)) {
        const auto ids = iota(begin, end);
        Batch b = gather(data, ids);
        const auto losses = reconstruction_losses(net, b.images);
        double total = 0;
        for (std::size_t i = 0; i < losses.size(); ++i) {
            meter.add(fmt::format("recon_pcoder{}", i + 1), losses[i].item(), end - begin);
            total += losses[i].item();
        }
        meter.add("loss", total, end - begin);
    }
    meter.flush(curves, epoch, "validation");
}

}  // namespace

TrainReport train_feedback_unsupervised(PCNet& net, const TrainData& data, const TrainConfig& cfg) {
    require_regime(cfg, Regime::fb_unsupervised);
    require_data(data, false);
    net.freeze_all();
    const auto frozen = named_group(net, {".ff.", "head."});
    const std::uint64_t before = fingerprint(frozen);
    const Dataset& val = data.validation.empty() ? data.train : data.validation;

    TrainReport report;
    report.regime = cfg.regime;
    reconstruction_eval(net, val, cfg.batch_size, report.curves, 0);

    auto params = net.parameters(ParamGroupKind::feedback);
    for (auto& p : params) p.set_requires_grad(true);
    Sgd opt(params, {cfg.lr, cfg.momentum, cfg.weight_decay});
    try {
        run_epochs(cfg, data.train, Rng(cfg.seed), report.curves, to_string(cfg.regime),
                   [&](int, const Batch& b, Meter& meter) {
                       Tape tape;
                       Tape::Scope scope(tape);
                       const auto losses = reconstruction_losses(net, b.images);
                       Tensor total = losses[0];
                       for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
                       tape.backward(total);
                       opt.step();
                       opt.zero_grad();
                       for (std::size_t i = 0; i < losses.size(); ++i)
                           meter.add(fmt::format("recon_pcoder{}", i + 1), losses[i].item(), b.labels.size());
                       meter.add("loss", total.item(), b.labels.size());
                   },
                   [&](int epoch) { reconstruction_eval(net, val, cfg.batch_size, report.curves, epoch); });
    } catch (...) {
        net.freeze_all();
        throw;
    }
    net.freeze_all();
    report.steps = opt.steps();
    check_unchanged(before, frozen, "feed-forward weights");
    return report;
}

Tensor unrolled_loss(PCNet& net, const Tensor& images, std::span<const std::int32_t> labels,
                     std::span<const HPTerms> hps, int timesteps) {
    if (timesteps < 1) throw std::invalid_argument("unrolled_loss: timesteps must be >= 1");
    const auto r = net.unroll(images, hps, timesteps);
    Tensor total = ops::cross_entropy(r.logits[1], labels);
    for (int t = 2; t <= timesteps; ++t) total = ops::add(total, ops::cross_entropy(r.logits[t], labels));
    return ops::mul_scalar(total, Real(1) / static_cast<Real>(timesteps));
}

TrainReport train_feedback_supervised(PCNet& net, const TrainData& data, const TrainConfig& cfg) {
    require_regime(cfg, Regime::fb_supervised);
    require_data(data, false);
    const Dataset& val = data.validation.empty() ? data.train : data.validation;
    const HPTerms pinned = HPTerms::constant(cfg.pinned);
    auto eval = [&] { return evaluate(net, val, std::span(&cfg.pinned, 1), cfg.timesteps, {}, cfg.batch_size); };

    TrainReport report;
    report.regime = cfg.regime;
    push_eval(report.curves, 0, eval());

    auto params = net.all_parameters();
    for (auto& p : params) p.set_requires_grad(true);
    Sgd opt(params, {cfg.lr, cfg.momentum, cfg.weight_decay});
    try {
        run_epochs(cfg, data.train, Rng(cfg.seed), report.curves, to_string(cfg.regime),
                   [&](int, const Batch& b, Meter& meter) {
                       Tape tape;
                       Tape::Scope scope(tape);
                       const auto r = net.unroll(b.images, std::span(&pinned, 1), cfg.timesteps);
                       Tensor total = ops::cross_entropy(r.logits[1], b.labels);
                       for (int t = 2; t <= cfg.timesteps; ++t)
                           total = ops::add(total, ops::cross_entropy(r.logits[t], b.labels));
                       const Tensor loss = ops::mul_scalar(total, Real(1) / static_cast<Real>(cfg.timesteps));
                       tape.backward(loss);
                       opt.step();
                       opt.zero_grad();
                       meter.add("loss", loss.item(), b.labels.size());
                       meter.add("accuracy", accuracy(r.logits.back(), b.labels), b.labels.size());
                   },
                   [&](int epoch) { push_eval(report.curves, epoch, eval()); });
    } catch (...) {
        net.freeze_all();
        throw;
    }
    net.freeze_all();
    report.steps = opt.steps();
    report.final_accuracy = eval().accuracy;
    return report;
}

// --- hyper-parameters -------------------------------------------------------

namespace {

std::vector<HyperParams> constrained(const std::vector<HyperParamVariables>& vars, const HPMask& mask) {
    std::vector<HyperParams> out;
    for (const auto& v : vars) out.push_back(v.constrained(mask));
    return out;
}

void push_hps(std::vector<CurvePoint>& curves, int epoch, const std::vector<HyperParams>& hps) {
    for (std::size_t i = 0; i < hps.size(); ++i) {
        const std::string suffix = hps.size() == 1 ? "" : fmt::format("_pcoder{}", i + 1);
        curves.push_back({epoch, "hp", "mu" + suffix, hps[i].mu});
        curves.push_back({epoch, "hp", "gamma" + suffix, hps[i].gamma});
        curves.push_back({epoch, "hp", "beta" + suffix, hps[i].beta});
        curves.push_back({epoch, "hp", "alpha" + suffix, hps[i].alpha});
    }
}

}  // namespace

TrainReport train_hyperparams(PCNet& net, const TrainData& data, const TrainConfig& cfg,
                              const HPStepObserver& on_step) {
    require_regime(cfg, Regime::hp_only);
    require_data(data, true);
    for (const auto& nt : net.named_parameters())
        if (nt.tensor.requires_grad())
            throw std::invalid_argument(fmt::format("train_hyperparams: parameter '{}' is not frozen", nt.name));
    const auto weights = net.named_parameters();
    const std::uint64_t before = fingerprint(weights);

    const std::size_t sets = cfg.hp_mode == HPMode::shared ? 1 : net.num_pcoders();
    // one fixed noisy validation copy, fresh training noise every epoch
    Dataset val = data.validation;
    val.images = noisy(val.images, cfg.noise, 0);
    NoiseSpec train_noise = cfg.noise;
    train_noise.seed = Rng(cfg.noise.seed).fork(1).key();
    const std::size_t n = data.train.size();

    TrainReport report;
    report.regime = cfg.regime;
    report.restarts.resize(cfg.restarts);

    parallel_for(cfg.restarts, cfg.threads, [&](std::size_t r) {
        PCNet local = net.clone();
        const Rng stream = Rng(cfg.seed).fork(r);
        Rng init_rng = stream.fork(0);
        RestartRecord& rec = report.restarts[r];
        rec.restart = static_cast<int>(r);

        std::vector<HyperParamVariables> vars;
        for (std::size_t i = 0; i < sets; ++i) {
            rec.init.push_back(cfg.init ? *cfg.init : init_uniform(init_rng));
            vars.emplace_back(rec.init.back());
        }
        ParamGroup simplex{{}, cfg.lr}, alpha{{}, cfg.alpha_lr};
        for (auto& v : vars) {
            simplex.params.push_back(v.simplex_aux());
            alpha.params.push_back(v.alpha());
        }
        AdamOptions adam_opt;
        adam_opt.weight_decay = cfg.weight_decay;
        Adam opt({simplex, alpha}, adam_opt);

        auto eval = [&] {
            const auto hps = constrained(vars, cfg.mask);
            return evaluate(local, val, hps, cfg.timesteps, {}, cfg.batch_size);
        };
        auto push_all = [&](int epoch) {
            const auto e = eval();
            push_eval(rec.curves, epoch, e);
            push_hps(rec.curves, epoch, constrained(vars, cfg.mask));
            return e;
        };
        push_all(0);

        EvalResult last;
        rec.final_loss = run_epochs(
            cfg, data.train, stream.fork(1), rec.curves, fmt::format("hp_only restart {}", r),
            [&](int epoch, const Batch& b, Meter& meter) {
                std::vector<std::size_t> ids(b.ids);
                for (auto& id : ids) id += static_cast<std::size_t>(epoch - 1) * n;
                const Tensor x = train_noise.is_clean() ? b.images : corrupt(b.images, train_noise, ids);
                Tape tape;
                Tape::Scope scope(tape);
                std::vector<HPTerms> terms;
                for (const auto& v : vars) terms.push_back(v.terms(cfg.mask));
                const Tensor loss = unrolled_loss(local, x, b.labels, terms, cfg.timesteps);
                tape.backward(loss);
                opt.step();
                opt.zero_grad();
                for (auto& v : vars) v.clamp_alpha();
                const auto hps = constrained(vars, cfg.mask);
                for (const auto& hp : hps) hp.validate(1e-6);
                ++rec.steps;
                if (on_step) on_step(static_cast<int>(r), rec.steps, hps);
                meter.add("loss", loss.item(), b.labels.size());
            },
            [&](int epoch) { last = push_all(epoch); });
        if (cfg.epochs == 0) last = eval();
        rec.val_accuracy = last.accuracy;
        rec.val_epsilon = last.epsilon;
        for (const auto& v : vars) rec.aux.push_back(v.aux());
        rec.hps = constrained(vars, cfg.mask);
    });

    check_unchanged(before, weights, "frozen weights");
    int best = 0;
    for (std::size_t r = 1; r < report.restarts.size(); ++r)
        if (report.restarts[r].val_accuracy.back() > report.restarts[best].val_accuracy.back()) best = static_cast<int>(r);
    report.best_restart = best;
    report.curves = report.restarts[best].curves;
    report.final_accuracy = report.restarts[best].val_accuracy;
    for (const auto& rec : report.restarts) report.steps += rec.steps;
    return report;
}

// --- sweeps -----------------------------------------------------------------

std::vector<NoiseSpec> noise_grid(std::span<const NoiseKind> kinds, std::uint64_t seed) {
    std::vector<NoiseSpec> grid;
    for (auto kind : kinds)
        for (int level = 0; level <= 3; ++level) grid.push_back({kind, level, seed});
    return grid;
}

std::vector<AblationCell> hp_sweep(PCNet& net, const TrainData& data, const TrainConfig& base,
                                   std::span<const HPMask> masks, std::span<const NoiseSpec> grid) {
    std::vector<AblationCell> cells;
    for (const auto& mask : masks) {
        std::optional<TrainReport> clean;
        for (const auto& noise : grid) {
            TrainConfig cfg = base;
            cfg.mask = mask;
            cfg.noise = noise;
            if (noise.is_clean()) {
                cfg.noise = NoiseSpec{NoiseKind::clean, 0, noise.seed};
                if (!clean) clean = train_hyperparams(net, data, cfg);
                cells.push_back({mask, noise, *clean});
            } else {
                cells.push_back({mask, noise, train_hyperparams(net, data, cfg)});
            }
        }
    }
    return cells;
}

std::vector<AblationCell> ablation_suite(PCNet& net, const TrainData& data, const TrainConfig& base,
                                         std::span<const NoiseSpec> grid) {
    const HPMask masks[] = {HPMask{true, false}, HPMask{false, true}};
    return hp_sweep(net, data, base, masks, grid);
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
