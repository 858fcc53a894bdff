#include "pcnet/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

StrictObject::StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument(fmt::format("{}: expected a JSON object", path_));
}

const Json* StrictObject::find(const char* key) {
    seen_.emplace_back(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
}

void StrictObject::finish() const {
    for (const auto& [key, _] : j_.items())
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
            throw std::invalid_argument(fmt::format("{}: unknown field '{}'", path_, key));
}

namespace {

// JSON has no infinity; unbounded values are written as null
Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <class T, class Fn>
Json array_of(const std::vector<T>& xs, Fn&& fn) {
    Json a = Json::array();
    for (const auto& x : xs) a.push_back(fn(x));
    return a;
}

template <class Fn>
auto vector_from(const Json* j, const std::string& path, Fn&& fn) {
    using T = decltype(fn(std::declval<const Json&>(), std::string()));
    std::vector<T> out;
    if (!j) return out;
    if (!j->is_array()) throw std::invalid_argument(fmt::format("{}: expected an array", path));
    for (std::size_t i = 0; i < j->size(); ++i) out.push_back(fn((*j)[i], fmt::format("{}[{}]", path, i)));
    return out;
}

template <class T>
T parse_enum(StrictObject& o, const char* key, T fallback, T (*parse)(const std::string&)) {
    std::string name;
    o.get(key, name);
    if (name.empty()) return fallback;
    try {
        return parse(name);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(fmt::format("{}: {}", o.child(key), e.what()));
    }
}

}  // namespace

// --- small types --------------------------------------------------------------

Json to_json(const NetSpec& v) {
    Json j;
    j["input_chw"] = v.input_chw;
    j["layers"] = array_of(v.layers, [](const ConvLayerSpec& l) {
        return Json{{"channels", l.out_channels}, {"kernel", l.kernel}, {"pool", l.pool}};
    });
    j["head_hidden"] = v.head_hidden;
    j["classes"] = v.classes;
    j["decoder_kernel"] = v.decoder_kernel;
    return j;
}

NetSpec net_spec_from_json(const Json& j, const std::string& path) {
    NetSpec v;
    StrictObject o(j, path);
    o.get("input_chw", v.input_chw);
    if (const Json* layers = o.find("layers")) {
        v.layers = vector_from(layers, o.child("layers"), [](const Json& e, const std::string& p) {
            ConvLayerSpec l;
            StrictObject lo(e, p);
            lo.get("channels", l.out_channels);
            lo.get("kernel", l.kernel);
            lo.get("pool", l.pool);
            lo.finish();
            return l;
        });
    }
    o.get("head_hidden", v.head_hidden);
    o.get("classes", v.classes);
    o.get("decoder_kernel", v.decoder_kernel);
    o.finish();
    if (v.input_chw.size() != 3) throw std::invalid_argument(fmt::format("{}.input_chw: expected 3 values", path));
    if (v.layers.empty()) throw std::invalid_argument(fmt::format("{}.layers: at least one layer required", path));
    return v;
}

Json to_json(const NoiseSpec& v) { return {{"kind", to_string(v.kind)}, {"level", v.level}, {"seed", v.seed}}; }

NoiseSpec noise_spec_from_json(const Json& j, const std::string& path) {
    NoiseSpec v;
    StrictObject o(j, path);
    v.kind = parse_enum(o, "kind", v.kind, &parse_noise_kind);
    o.get("level", v.level);
    o.get("seed", v.seed);
    o.finish();
    try {
        v.param();
    } catch (const std::exception& e) {
        throw std::invalid_argument(fmt::format("{}: {}", path, e.what()));
    }
    return v;
}

Json to_json(const HyperParams& v) {
    return {{"mu", v.mu}, {"gamma", v.gamma}, {"beta", v.beta}, {"alpha", v.alpha}};
}

HyperParams hyper_params_from_json(const Json& j, const std::string& path) {
    HyperParams v;
    StrictObject o(j, path);
    o.get("mu", v.mu);
    o.get("gamma", v.gamma);
    o.get("beta", v.beta);
    o.get("alpha", v.alpha);
    o.finish();
    try {
        v.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(fmt::format("{}: {}", path, e.what()));
    }
    return v;
}

Json to_json(const AuxParams& v) {
    return {{"mu_aux", v.mu_aux}, {"gamma_aux", v.gamma_aux}, {"beta_aux", v.beta_aux}, {"alpha_raw", v.alpha_raw}};
}

AuxParams aux_params_from_json(const Json& j, const std::string& path) {
    AuxParams v;
    StrictObject o(j, path);
    o.get("mu_aux", v.mu_aux);
    o.get("gamma_aux", v.gamma_aux);
    o.get("beta_aux", v.beta_aux);
    o.get("alpha_raw", v.alpha_raw);
    o.finish();
    return v;
}

// --- configs ------------------------------------------------------------------

Json to_json(const TrainConfig& v) {
    Json j;
    j["regime"] = to_string(v.regime);
    j["epochs"] = v.epochs;
    j["batch_size"] = v.batch_size;
    j["lr"] = v.lr;
    j["momentum"] = v.momentum;
    j["weight_decay"] = v.weight_decay;
    j["alpha_lr"] = v.alpha_lr;
    j["timesteps"] = v.timesteps;
    j["noise"] = to_json(v.noise);
    j["mask"] = v.mask.name();
    j["restarts"] = v.restarts;
    j["seed"] = v.seed;
    j["hp_mode"] = to_string(v.hp_mode);
    j["pinned"] = to_json(v.pinned);
    j["init"] = v.init ? to_json(*v.init) : Json(nullptr);
    j["threads"] = v.threads;
    return j;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
    StrictObject o(j, path);
    std::string regime;
    o.get("regime", regime);
    if (regime.empty()) throw std::invalid_argument(fmt::format("{}.regime: required", path));
    TrainConfig v;
    try {
        v = TrainConfig::defaults(parse_regime(regime));
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(fmt::format("{}.regime: {}", path, e.what()));
    }
    o.get("epochs", v.epochs);
    o.get("batch_size", v.batch_size);
    o.get("lr", v.lr);
    o.get("momentum", v.momentum);
    o.get("weight_decay", v.weight_decay);
    o.get("alpha_lr", v.alpha_lr);
    o.get("timesteps", v.timesteps);
    if (const Json* n = o.find("noise")) v.noise = noise_spec_from_json(*n, o.child("noise"));
    v.mask = parse_enum(o, "mask", v.mask, &HPMask::parse);
    o.get("restarts", v.restarts);
    o.get("seed", v.seed);
    v.hp_mode = parse_enum(o, "hp_mode", v.hp_mode, &parse_hp_mode);
    if (const Json* p = o.find("pinned")) v.pinned = hyper_params_from_json(*p, o.child("pinned"));
    if (const Json* i = o.find("init"); i && !i->is_null()) v.init = aux_params_from_json(*i, o.child("init"));
    o.get("threads", v.threads);
    o.finish();
    try {
        v.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(fmt::format("{}: {}", path, e.what()));
    }
    return v;
}

Json to_json(const AttackConfig& v) {
    Json j;
    j["method"] = to_string(v.method);
    j["epsilons"] = v.epsilons;
    j["steps"] = v.steps;
    j["step_factor"] = v.step_factor;
    j["target"] = to_string(v.target);
    j["target_offset"] = v.target_offset;
    j["timesteps"] = v.timesteps;
    j["seed"] = v.seed;
    j["min_eligible"] = v.min_eligible;
    j["batch_size"] = v.batch_size;
    j["threads"] = v.threads;
    return j;
}

AttackConfig attack_config_from_json(const Json& j, const std::string& path) {
    AttackConfig v;
    StrictObject o(j, path);
    v.method = parse_enum(o, "method", v.method, &parse_attack_method);
    o.get("epsilons", v.epsilons);
    o.get("steps", v.steps);
    o.get("step_factor", v.step_factor);
    v.target = parse_enum(o, "target", v.target, &parse_target_rule);
    o.get("target_offset", v.target_offset);
    o.get("timesteps", v.timesteps);
    o.get("seed", v.seed);
    o.get("min_eligible", v.min_eligible);
    o.get("batch_size", v.batch_size);
    o.get("threads", v.threads);
    o.finish();
    try {
        v.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(fmt::format("{}: {}", path, e.what()));
    }
    return v;
}

// --- reports ------------------------------------------------------------------

Json to_json(const EvalResult& v) {
    return {{"accuracy", v.accuracy}, {"loss", v.loss}, {"epsilon", v.epsilon}};
}

namespace {

Json curves_json(const std::vector<CurvePoint>& curves) {
    return array_of(curves, [](const CurvePoint& c) {
        return Json{{"epoch", c.epoch}, {"split", c.split}, {"metric", c.metric}, {"value", number(c.value)}};
    });
}

std::vector<CurvePoint> curves_from(const Json* j, const std::string& path) {
    return vector_from(j, path, [](const Json& e, const std::string& p) {
        CurvePoint c;
        StrictObject o(e, p);
        o.get("epoch", c.epoch);
        o.get("split", c.split);
        o.get("metric", c.metric);
        const Json* v = o.find("value");
        c.value = v && !v->is_null() ? v->get<double>() : std::nan("");
        o.finish();
        return c;
    });
}

}  // namespace

Json to_json(const TrainReport& v) {
    Json j;
    j["regime"] = to_string(v.regime);
    j["steps"] = v.steps;
    j["best_restart"] = v.best_restart;
    j["final_accuracy"] = v.final_accuracy;
    j["restarts"] = array_of(v.restarts, [](const RestartRecord& r) {
        Json e;
        e["restart"] = r.restart;
        e["init"] = array_of(r.init, [](const AuxParams& a) { return to_json(a); });
        e["aux"] = array_of(r.aux, [](const AuxParams& a) { return to_json(a); });
        e["hps"] = array_of(r.hps, [](const HyperParams& h) { return to_json(h); });
        e["val_accuracy"] = r.val_accuracy;
        e["val_epsilon"] = r.val_epsilon;
        e["final_loss"] = number(r.final_loss);
        e["steps"] = r.steps;
        e["curves"] = curves_json(r.curves);
        return e;
    });
    j["curves"] = curves_json(v.curves);
    return j;
}

TrainReport train_report_from_json(const Json& j, const std::string& path) {
    TrainReport v;
    StrictObject o(j, path);
    v.regime = parse_enum(o, "regime", v.regime, &parse_regime);
    o.get("steps", v.steps);
    o.get("best_restart", v.best_restart);
    o.get("final_accuracy", v.final_accuracy);
    v.restarts = vector_from(o.find("restarts"), o.child("restarts"), [](const Json& e, const std::string& p) {
        RestartRecord r;
        StrictObject ro(e, p);
        ro.get("restart", r.restart);
        r.init = vector_from(ro.find("init"), ro.child("init"), aux_params_from_json);
        r.aux = vector_from(ro.find("aux"), ro.child("aux"), aux_params_from_json);
        // learned values are stored constrained; re-validate loosely on read
        r.hps = vector_from(ro.find("hps"), ro.child("hps"), hyper_params_from_json);
        ro.get("val_accuracy", r.val_accuracy);
        ro.get("val_epsilon", r.val_epsilon);
        const Json* fl = ro.find("final_loss");
        r.final_loss = fl && !fl->is_null() ? fl->get<double>() : std::nan("");
        ro.get("steps", r.steps);
        r.curves = curves_from(ro.find("curves"), ro.child("curves"));
        ro.finish();
        return r;
    });
    v.curves = curves_from(o.find("curves"), o.child("curves"));
    o.finish();
    return v;
}

Json to_json(const AttackResult& v) {
    Json j;
    j["epsilons"] = v.epsilons;
    j["median"] = number(v.median);
    j["success_rate"] = v.success_rate;
    j["eligible"] = v.image_index.size();
    j["skipped"] = v.skipped;
    return j;
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
