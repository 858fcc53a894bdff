#include "pcnet/experiment.hpp"

#include "pcnet/cifar.hpp"
#include "pcnet/io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <set>
#include <stdexcept>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

namespace fs = std::filesystem;

std::string to_string(Stage s) {
    switch (s) {
        case Stage::train_ff: return "train-ff";
        case Stage::train_fb: return "train-fb";
        case Stage::train_hp: return "train-hp";
        case Stage::eval: return "eval";
        case Stage::attack: return "attack";
    }
    return "?";
}

Stage parse_stage(const std::string& name) {
    for (auto s : kAllStages)
        if (to_string(s) == name) return s;
    throw std::invalid_argument(fmt::format("unknown stage '{}'", name));
}

// --- config ---------------------------------------------------------------------

namespace {

// Stream ids under Rng(seed).fork(...)
enum SeedStream : std::uint64_t {
    kNetInit = 0,
    kTrainFF = 1,
    kTestNoise = 2,  // under the noise seed
    kTrainFB = 3,
    kTrainHP = 4,
    kBaselineInit = 5,
    kBaselineTrain = 6,
    kAttack = 7,
    kSynthetic = 8,
};

bool valid_id(const std::string& id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

template <class T>
bool has_duplicates(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("experiment config: " + what); };
    if (!valid_id(id)) fail(fmt::format("id '{}' must be non-empty and use only [A-Za-z0-9_.-]", id));
    if (threads == 0) fail("threads must be at least 1");
    if (data.source != "cifar10" && data.source != "synthetic")
        fail(fmt::format("data.source '{}' must be cifar10 or synthetic", data.source));
    if (data.train_count == 0 || data.val_count == 0 || data.test_count == 0) fail("data counts must be positive");
    if (data.source == "cifar10") {
        if (model.input_chw != Shape{3, kCifarSide, kCifarSide} || model.classes != kCifarClasses)
            fail("cifar10 data needs a 3x32x32 input and 10 classes");
        if (data.train_count + data.val_count > 5 * kCifarRecordsPerBatch)
            fail("data.train_count + data.val_count exceeds the 50000 training images");
        if (data.test_count > kCifarRecordsPerBatch) fail("data.test_count exceeds the 10000 test images");
    }
    if (stages.empty()) fail("no stages");
    {
        std::vector<int> s;
        for (auto st : stages) s.push_back(static_cast<int>(st));
        if (has_duplicates(s)) fail("duplicate stage");
    }
    if (train_ff.regime != Regime::ff_supervised) fail("train_ff.regime must be ff_supervised");
    if (train_fb.regime != Regime::fb_unsupervised && train_fb.regime != Regime::fb_supervised)
        fail("train_fb.regime must be fb_unsupervised or fb_supervised");
    if (train_hp.regime != Regime::hp_only) fail("train_hp.regime must be hp_only");
    train_ff.validate();
    train_fb.validate();
    train_hp.validate();
    {
        std::vector<int> b;
        for (auto v : baselines) b.push_back(static_cast<int>(v));
        if (has_duplicates(b)) fail("duplicate baseline");
    }
    if (noise_kinds.empty()) fail("noise_kinds is empty");
    for (auto k : noise_kinds)
        if (k == NoiseKind::clean) fail("noise_kinds: the clean condition is level 0 of every kind");
    {
        std::vector<int> k;
        for (auto v : noise_kinds) k.push_back(static_cast<int>(v));
        if (has_duplicates(k)) fail("duplicate noise kind");
    }
    if (noise_levels.empty()) fail("noise_levels is empty");
    if (std::find(noise_levels.begin(), noise_levels.end(), 0) == noise_levels.end())
        fail("noise_levels must include 0 (the clean reference)");
    for (int l : noise_levels)
        if (l < 0 || l > 3) fail(fmt::format("noise level {} outside 0..3", l));
    if (has_duplicates(noise_levels)) fail("duplicate noise level");
    if (masks.empty()) fail("masks is empty");
    {
        std::vector<std::string> m;
        for (const auto& v : masks) m.push_back(v.name());
        if (has_duplicates(m)) fail("duplicate mask");
    }
    if (eval.timesteps < 0) fail("eval.timesteps must be >= 0");
    if (eval.batch_size == 0) fail("eval.batch_size must be positive");
    if (!eval.hyperparams.empty()) {
        if (eval.hyperparams.size() != 1 && eval.hyperparams.size() != model.layers.size())
            fail(fmt::format("eval.hyperparams: expected 1 or {} entries", model.layers.size()));
        for (const auto& h : eval.hyperparams) h.validate();
    }
    attack.validate();
    const auto known = robustness_configurations();
    for (const auto& name : attack_configurations)
        if (std::none_of(known.begin(), known.end(), [&](const NamedHyperParams& k) { return k.name == name; }))
            fail(fmt::format("unknown attack configuration '{}'", name));
    if (has_duplicates(attack_configurations)) fail("duplicate attack configuration");
    if (attack_images == 0) fail("attack_images must be positive");
}

ExperimentConfig ExperimentConfig::resolved() const {
    ExperimentConfig c = *this;
    const Rng root(seed);
    c.train_ff.seed = root.fork(kTrainFF).key();
    c.train_fb.seed = root.fork(kTrainFB).key();
    c.train_hp.seed = root.fork(kTrainHP).key();
    c.attack.seed = root.fork(kAttack).key();
    c.train_ff.threads = c.train_fb.threads = c.train_hp.threads = threads;
    c.attack.threads = threads;
    return c;
}

std::vector<NoiseSpec> ExperimentConfig::noise_conditions() const {
    std::vector<NoiseSpec> out;
    for (auto kind : noise_kinds)
        for (int level : noise_levels) out.push_back({kind, level, noise_seed});
    return out;
}

std::string ExperimentConfig::hash() const {
    ExperimentConfig c = resolved();
    c.out_dir.clear();
    c.data.dir.clear();
    c.stages.assign(std::begin(kAllStages), std::end(kAllStages));
    c.threads = 1;
    c.train_ff.threads = c.train_fb.threads = c.train_hp.threads = 1;
    c.attack.threads = 1;
    return hex64(fnv1a64(to_json(c).dump()));
}

Json to_json(const ExperimentConfig& v) {
    Json j;
    j["id"] = v.id;
    j["seed"] = v.seed;
    j["model"] = to_json(v.model);
    j["out_dir"] = v.out_dir;
    j["threads"] = v.threads;
    j["data"] = {{"source", v.data.source},
                 {"dir", v.data.dir},
                 {"train_count", v.data.train_count},
                 {"val_count", v.data.val_count},
                 {"test_count", v.data.test_count}};
    Json stages = Json::array();
    for (auto s : v.stages) stages.push_back(to_string(s));
    j["stages"] = stages;
    j["train_ff"] = to_json(v.train_ff);
    j["train_fb"] = to_json(v.train_fb);
    j["train_hp"] = to_json(v.train_hp);
    Json baselines = Json::array();
    for (auto b : v.baselines) baselines.push_back(to_string(b));
    j["baselines"] = baselines;
    Json kinds = Json::array();
    for (auto k : v.noise_kinds) kinds.push_back(to_string(k));
    j["noise_kinds"] = kinds;
    j["noise_levels"] = v.noise_levels;
    j["noise_seed"] = v.noise_seed;
    Json masks = Json::array();
    for (const auto& m : v.masks) masks.push_back(m.name());
    j["masks"] = masks;
    Json hps = Json::array();
    for (const auto& h : v.eval.hyperparams) hps.push_back(to_json(h));
    j["eval"] = {{"timesteps", v.eval.timesteps}, {"batch_size", v.eval.batch_size}, {"hyperparams", hps}};
    j["attack"] = to_json(v.attack);
    j["attack_configurations"] = v.attack_configurations;
    j["attack_images"] = v.attack_images;
    return j;
}

namespace {

// Nested train configs may omit the regime, which then defaults per slot.
TrainConfig train_slot(const Json& j, const std::string& path, Regime fallback) {
    if (j.is_object() && !j.contains("regime")) {
        Json copy = j;
        copy["regime"] = to_string(fallback);
        return train_config_from_json(copy, path);
    }
    return train_config_from_json(j, path);
}

template <class T, class Parse>
std::vector<T> names_from(const Json* j, const std::string& path, Parse&& parse) {
    std::vector<T> out;
    if (!j) return out;
    if (!j->is_array()) throw std::invalid_argument(path + ": expected an array of names");
    for (std::size_t i = 0; i < j->size(); ++i) {
        const auto& e = (*j)[i];
        if (!e.is_string()) throw std::invalid_argument(fmt::format("{}[{}]: expected a string", path, i));
        try {
            out.push_back(parse(e.template get<std::string>()));
        } catch (const std::invalid_argument& ex) {
            throw std::invalid_argument(fmt::format("{}[{}]: {}", path, i, ex.what()));
        }
    }
    return out;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const Json& j, const std::string& path) {
    ExperimentConfig v;
    StrictObject o(j, path);
    o.get("id", v.id);
    o.get("seed", v.seed);
    if (const Json* m = o.find("model")) v.model = net_spec_from_json(*m, o.child("model"));
    o.get("out_dir", v.out_dir);
    o.get("threads", v.threads);
    if (const Json* d = o.find("data")) {
        StrictObject dobj(*d, o.child("data"));
        dobj.get("source", v.data.source);
        dobj.get("dir", v.data.dir);
        dobj.get("train_count", v.data.train_count);
        dobj.get("val_count", v.data.val_count);
        dobj.get("test_count", v.data.test_count);
        dobj.finish();
    }
    if (const Json* s = o.find("stages")) v.stages = names_from<Stage>(s, o.child("stages"), parse_stage);
    if (const Json* t = o.find("train_ff")) v.train_ff = train_slot(*t, o.child("train_ff"), Regime::ff_supervised);
    if (const Json* t = o.find("train_fb")) v.train_fb = train_slot(*t, o.child("train_fb"), Regime::fb_unsupervised);
    if (const Json* t = o.find("train_hp")) v.train_hp = train_slot(*t, o.child("train_hp"), Regime::hp_only);
    if (const Json* b = o.find("baselines"))
        v.baselines = names_from<BaselineVariant>(b, o.child("baselines"), parse_baseline_variant);
    if (const Json* k = o.find("noise_kinds"))
        v.noise_kinds = names_from<NoiseKind>(k, o.child("noise_kinds"), parse_noise_kind);
    o.get("noise_levels", v.noise_levels);
    o.get("noise_seed", v.noise_seed);
    if (const Json* m = o.find("masks")) v.masks = names_from<HPMask>(m, o.child("masks"), HPMask::parse);
    if (const Json* e = o.find("eval")) {
        StrictObject eo(*e, o.child("eval"));
        eo.get("timesteps", v.eval.timesteps);
        eo.get("batch_size", v.eval.batch_size);
        if (const Json* h = eo.find("hyperparams")) {
            if (!h->is_array()) throw std::invalid_argument(eo.child("hyperparams") + ": expected an array");
            for (std::size_t i = 0; i < h->size(); ++i)
                v.eval.hyperparams.push_back(
                    hyper_params_from_json((*h)[i], fmt::format("{}[{}]", eo.child("hyperparams"), i)));
        }
        eo.finish();
    }
    if (const Json* a = o.find("attack")) v.attack = attack_config_from_json(*a, o.child("attack"));
    o.get("attack_configurations", v.attack_configurations);
    o.get("attack_images", v.attack_images);
    o.finish();
    v.validate();
    return v;
}

ExperimentConfig load_experiment_config(const fs::path& file) {
    const std::string text = read_file(file);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(fmt::format("{}: {}", file.string(), e.what()));
    }
    return experiment_config_from_json(j, file.filename().string());
}

// --- data -----------------------------------------------------------------------

namespace {

Dataset concat(const std::vector<Dataset>& parts) {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    Shape shape{n};
    for (auto d : parts.front().image_chw()) shape.push_back(d);
    Dataset out{Tensor(shape), {}};
    std::size_t at = 0;
    for (const auto& p : parts) {
        std::copy(p.images.data().begin(), p.images.data().end(), out.images.data().begin() + at);
        at += p.images.numel();
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    ExperimentData out;
    if (d.source == "synthetic") {
        const Dataset all = make_synthetic_dataset(d.train_count + d.val_count + d.test_count, cfg.model.classes,
                                                   cfg.model.input_chw, Rng(cfg.seed).fork(kSynthetic).key());
        out.train = all.slice(0, d.train_count);
        out.validation = all.slice(d.train_count, d.val_count);
        out.test = all.slice(d.train_count + d.val_count, d.test_count);
        return out;
    }
    if (d.dir.empty()) throw std::invalid_argument("data.dir is required for cifar10 (or pass --data)");
    const fs::path dir(d.dir);
    const std::size_t need = d.train_count + d.val_count;
    std::vector<Dataset> batches;
    std::size_t have = 0;
    for (int b = 1; have < need; ++b) {
        batches.push_back(load_cifar10_batch(dir / fmt::format("data_batch_{}.bin", b)));
        have += batches.back().size();
    }
    const Dataset train = batches.size() == 1 ? batches.front() : concat(batches);
    out.train = train.slice(0, d.train_count);
    out.validation = train.slice(d.train_count, d.val_count);
    out.test = load_cifar10_batch(dir / "test_batch.bin").slice(0, d.test_count);
    return out;
}

// --- artifacts ------------------------------------------------------------------

std::string feedback_weights_name(const ExperimentConfig& cfg) {
    return cfg.train_fb.regime == Regime::fb_supervised ? "fb_sup.pcw" : "fb_unsup.pcw";
}

fs::path hp_report_path(const HPMask& mask, const NoiseSpec& noise) {
    return fs::path("reports") / "hp" / fmt::format("{}__{}.json", mask.name(), noise.label());
}

namespace {

fs::path hp_curves_path(const HPMask& mask, const NoiseSpec& noise) {
    return fs::path("curves") / "hp" / fmt::format("{}__{}.csv", mask.name(), noise.label());
}

std::vector<NamedHyperParams> attack_configs(const ExperimentConfig& cfg) {
    auto all = robustness_configurations();
    if (cfg.attack_configurations.empty()) return all;
    std::vector<NamedHyperParams> out;
    for (const auto& name : cfg.attack_configurations)
        for (const auto& c : all)
            if (c.name == name) out.push_back(c);
    return out;
}

// Unique (mask, condition) cells in run order; clean cells are shared by kind.
std::vector<std::pair<HPMask, NoiseSpec>> hp_cells(const ExperimentConfig& cfg, const std::vector<HPMask>& masks) {
    std::vector<std::pair<HPMask, NoiseSpec>> out;
    for (const auto& m : masks)
        for (const auto& n : cfg.noise_conditions()) out.emplace_back(m, n);
    return out;
}

}  // namespace

std::vector<fs::path> declared_artifacts(const ExperimentConfig& cfg) {
    std::vector<fs::path> out{"config.json"};
    auto add = [&](const fs::path& p) {
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    };
    for (auto stage : cfg.stages) {
        switch (stage) {
            case Stage::train_ff:
                add("ff.pcw");
                add("reports/train_ff.json");
                add("curves/train_ff.csv");
                for (auto v : cfg.baselines) {
                    add(fmt::format("baseline_{}.pcw", to_string(v)));
                    add(fmt::format("reports/baseline_{}.json", to_string(v)));
                    add(fmt::format("curves/baseline_{}.csv", to_string(v)));
                }
                break;
            case Stage::train_fb:
                add(feedback_weights_name(cfg));
                add("reports/train_fb.json");
                add("curves/train_fb.csv");
                break;
            case Stage::train_hp:
                for (const auto& [m, n] : hp_cells(cfg, cfg.masks)) {
                    add(hp_report_path(m, n));
                    add(hp_curves_path(m, n));
                }
                add("metrics.csv");
                add("relative_hp.csv");
                add("relative_hp.svg");
                break;
            case Stage::eval:
                add("reports/eval.json");
                add("eval.csv");
                add("accuracy_vs_t.svg");
                add("robustness.svg");
                break;
            case Stage::attack:
                add("reports/attack.json");
                add("attack.csv");
                for (const auto& c : attack_configs(cfg)) add(fs::path("attack") / (c.name + ".csv"));
                break;
        }
    }
    return out;
}

// --- metrics records as JSON ------------------------------------------------------

namespace {

Json record_json(const MetricsRecord& r) {
    Json hps = Json::array();
    for (const auto& h : r.hps) hps.push_back(to_json(h));
    return {{"regime", r.regime}, {"mask", r.mask},       {"noise", to_string(r.kind)}, {"level", r.level},
            {"restart", r.restart}, {"t", r.t},          {"accuracy", r.accuracy},    {"epsilon", r.epsilon},
            {"hps", hps}};
}

MetricsRecord record_from(const Json& j, const std::string& path, const std::string& experiment) {
    MetricsRecord r;
    r.experiment = experiment;
    StrictObject o(j, path);
    o.get("regime", r.regime);
    o.get("mask", r.mask);
    std::string kind;
    o.get("noise", kind);
    r.kind = parse_noise_kind(kind);
    o.get("level", r.level);
    o.get("restart", r.restart);
    o.get("t", r.t);
    o.get("accuracy", r.accuracy);
    o.get("epsilon", r.epsilon);
    if (const Json* h = o.find("hps"))
        for (std::size_t i = 0; i < h->size(); ++i)
            r.hps.push_back(hyper_params_from_json((*h)[i], fmt::format("{}.hps[{}]", path, i)));
    o.finish();
    return r;
}

// --- running ----------------------------------------------------------------------

struct Context {
    const ExperimentConfig& cfg;  // resolved
    fs::path out;
    std::string hash;
    const Logger& log;
    ExperimentOutputs& outputs;

    void note(const std::string& msg) const {
        if (log) log(msg);
    }
    void write(const fs::path& rel, std::string_view contents) {
        fs::create_directories((out / rel).parent_path());
        write_file_atomic(out / rel, contents);
        outputs.written.push_back(rel);
    }
    void write_weights(const fs::path& rel, const std::vector<NamedTensor>& tensors) {
        save_weights(out / rel, tensors);
        outputs.written.push_back(rel);
    }
    fs::path require(const fs::path& rel) const {
        const fs::path p = out / rel;
        if (!fs::exists(p)) throw std::runtime_error(fmt::format("missing artifact {}; run the stage that writes it", p.string()));
        return p;
    }
    Json read_json(const fs::path& rel) const {
        const fs::path p = require(rel);
        try {
            return Json::parse(read_file(p));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(fmt::format("{}: {}", p.string(), e.what()));
        }
    }
};

PCNet load_pcnet(const Context& ctx, const std::string& name) {
    Rng unused(0);
    PCNet net = PCNet::build(ctx.cfg.model, unused);
    const fs::path p = ctx.require(name);
    try {
        net.load_parameters(load_weights(p));
    } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", p.string(), e.what()));
    }
    return net;
}

BaselineNet load_baseline(const Context& ctx, BaselineVariant v) {
    Rng unused(0);
    BaselineNet net = BaselineNet::build(v, baseline_spec(v, ctx.cfg.model), unused);
    const fs::path p = ctx.require(fmt::format("baseline_{}.pcw", to_string(v)));
    try {
        net.load_parameters(load_weights(p));
    } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", p.string(), e.what()));
    }
    return net;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

double last_or_nan(const std::vector<double>& v) { return v.empty() ? std::nan("") : v.back(); }

void stage_train_ff(Context& ctx, const ExperimentData& data) {
    const auto& cfg = ctx.cfg;
    const TrainData td{data.train, data.validation};
    Rng init = Rng(cfg.seed).fork(kNetInit);
    PCNet net = PCNet::build(cfg.model, init);
    ctx.note(fmt::format("train-ff: {} epochs on {} images", cfg.train_ff.epochs, td.train.size()));
    const TrainReport report = train_feedforward(net, td, cfg.train_ff);
    ctx.note(fmt::format("train-ff: validation accuracy {:.4f}", last_or_nan(report.final_accuracy)));
    ctx.write_weights("ff.pcw", net.named_parameters());
    ctx.write("reports/train_ff.json", dump(to_json(report)));
    ctx.write("curves/train_ff.csv", report.curves_csv());

    for (auto v : cfg.baselines) {
        const std::string name = to_string(v);
        Rng binit = Rng(cfg.seed).fork(kBaselineInit).fork(static_cast<std::uint64_t>(v));
        BaselineNet b = BaselineNet::build(v, baseline_spec(v, cfg.model), binit);
        TrainConfig bc = cfg.train_ff;
        bc.seed = Rng(cfg.seed).fork(kBaselineTrain).fork(static_cast<std::uint64_t>(v)).key();
        ctx.note(fmt::format("train-ff: baseline '{}' ({} parameters)", name, b.param_count()));
        const TrainReport br = train_feedforward(b, td, bc);
        ctx.note(fmt::format("train-ff: baseline '{}' validation accuracy {:.4f}", name, last_or_nan(br.final_accuracy)));
        ctx.write_weights(fmt::format("baseline_{}.pcw", name), b.named_parameters());
        ctx.write(fmt::format("reports/baseline_{}.json", name), dump(to_json(br)));
        ctx.write(fmt::format("curves/baseline_{}.csv", name), br.curves_csv());
    }
}

void stage_train_fb(Context& ctx, const ExperimentData& data) {
    const auto& cfg = ctx.cfg;
    PCNet net = load_pcnet(ctx, "ff.pcw");
    const TrainData td{data.train, data.validation};
    ctx.note(fmt::format("train-fb: {} for {} epochs", to_string(cfg.train_fb.regime), cfg.train_fb.epochs));
    const TrainReport report = cfg.train_fb.regime == Regime::fb_supervised
                                   ? train_feedback_supervised(net, td, cfg.train_fb)
                                   : train_feedback_unsupervised(net, td, cfg.train_fb);
    ctx.write_weights(feedback_weights_name(cfg), net.named_parameters());
    ctx.write("reports/train_fb.json", dump(to_json(report)));
    ctx.write("curves/train_fb.csv", report.curves_csv());
}

// metrics.csv, relative_hp.csv and relative_hp.svg from trained cells.
void write_hp_outputs(Context& ctx, const std::vector<AblationCell>& cells) {
    const auto& cfg = ctx.cfg;
    std::vector<MetricsRecord> records;
    std::vector<HPSummary> summaries;
    for (const auto& cell : cells) {
        for (const auto& r : cell.report.restarts)
            for (std::size_t t = 0; t < r.val_accuracy.size(); ++t)
                records.push_back({cfg.id, "hp_only", cell.mask.name(), cell.noise.kind, cell.noise.level, r.restart,
                                   static_cast<int>(t), r.val_accuracy[t],
                                   t < r.val_epsilon.size() ? r.val_epsilon[t] : std::vector<double>{}, r.hps});
        summaries.push_back({cell.mask.name(), cell.noise.kind, cell.noise.level, cell.report.best().hps});
    }
    ctx.write("metrics.csv", metrics_csv(records, ctx.hash, cfg.id));
    const auto rows = relative_hp_table(summaries);
    ctx.write("relative_hp.csv",
              fmt::format("# config_hash={} experiment={}\n", ctx.hash, cfg.id) + relative_hp_csv(rows));

    std::vector<ChartPanel> panels;
    for (const auto& mask : cfg.masks) {
        for (auto kind : cfg.noise_kinds) {
            ChartPanel p{fmt::format("{} / {}", mask.name(), to_string(kind)), "noise level", "value / clean value", {}};
            std::map<std::string, Series> by_name;
            std::vector<std::string> order;
            for (const auto& r : rows) {
                if (r.mask != mask.name() || r.kind != kind) continue;
                const std::string name = r.set == 0 && cfg.train_hp.hp_mode == HPMode::shared
                                             ? r.name
                                             : fmt::format("{}_{}", r.name, r.set + 1);
                if (!by_name.count(name)) order.push_back(name);
                auto& s = by_name[name];
                s.name = name;
                s.x.push_back(r.level);
                s.y.push_back(r.relative);
            }
            for (const auto& n : order) p.series.push_back(by_name[n]);
            panels.push_back(std::move(p));
        }
    }
    ctx.write("relative_hp.svg", svg_line_chart(fmt::format("{}: learned hyper-parameters relative to clean", cfg.id), panels));
    ctx.outputs.hp_records = std::move(records);
}

void stage_train_hp(Context& ctx, const ExperimentData& data, const std::vector<HPMask>& masks) {
    const auto& cfg = ctx.cfg;
    PCNet net = load_pcnet(ctx, feedback_weights_name(cfg));
    net.freeze_all();
    const TrainData td{data.train, data.validation};
    std::vector<AblationCell> cells;
    std::map<std::string, TrainReport> done;  // by report path
    for (const auto& [mask, noise] : hp_cells(cfg, masks)) {
        const fs::path rel = hp_report_path(mask, noise);
        if (auto it = done.find(rel.string()); it != done.end()) {
            cells.push_back({mask, noise, it->second});
            continue;
        }
        TrainConfig tc = cfg.train_hp;
        tc.mask = mask;
        tc.noise = noise.is_clean() ? NoiseSpec{NoiseKind::clean, 0, noise.seed} : noise;
        ctx.note(fmt::format("train-hp: mask {} noise {} ({} restarts x {} epochs)", mask.name(), noise.label(),
                             tc.restarts, tc.epochs));
        TrainReport report = train_hyperparams(net, td, tc);
        const auto& best = report.best();
        ctx.note(fmt::format("train-hp:   best restart {} accuracy(T) {:.4f} mu {:.4f} gamma {:.4f} beta {:.4f} alpha {:.4f}",
                             best.restart, last_or_nan(best.val_accuracy), best.hps[0].mu, best.hps[0].gamma,
                             best.hps[0].beta, best.hps[0].alpha));
        ctx.write(rel, dump(to_json(report)));
        ctx.write(hp_curves_path(mask, noise), report.curves_csv());
        done.emplace(rel.string(), report);
        cells.push_back({mask, noise, std::move(report)});
    }
    write_hp_outputs(ctx, cells);
}

void write_eval_outputs(Context& ctx, const std::vector<MetricsRecord>& records) {
    const auto& cfg = ctx.cfg;
    Json rows = Json::array();
    for (const auto& r : records) rows.push_back(record_json(r));
    ctx.write("reports/eval.json", dump(Json{{"config_hash", ctx.hash}, {"experiment", cfg.id}, {"records", rows}}));
    ctx.write("eval.csv", metrics_csv(records, ctx.hash, cfg.id));

    // accuracy vs t: one panel per (pc regime/mask, kind), one series per level
    std::vector<ChartPanel> time_panels;
    std::vector<std::pair<std::string, std::string>> pc_groups;  // (regime, mask)
    for (const auto& r : records)
        if (r.regime.rfind("pc", 0) == 0 &&
            std::find(pc_groups.begin(), pc_groups.end(), std::pair{r.regime, r.mask}) == pc_groups.end())
            pc_groups.emplace_back(r.regime, r.mask);
    for (const auto& [regime, mask] : pc_groups) {
        for (auto kind : cfg.noise_kinds) {
            ChartPanel p{fmt::format("{} {} / {}", regime, mask, to_string(kind)), "time-step t", "accuracy", {}};
            for (int level : cfg.noise_levels) {
                Series s{fmt::format("level {}", level), {}, {}};
                for (const auto& r : records)
                    if (r.regime == regime && r.mask == mask && r.kind == kind && r.level == level) {
                        s.x.push_back(r.t);
                        s.y.push_back(r.accuracy);
                    }
                p.series.push_back(std::move(s));
            }
            time_panels.push_back(std::move(p));
        }
    }
    ctx.write("accuracy_vs_t.svg", svg_line_chart(fmt::format("{}: test accuracy over time-steps", cfg.id), time_panels));

    // final-step accuracy vs noise level, PC models against baselines
    std::vector<ChartPanel> level_panels;
    for (auto kind : cfg.noise_kinds) {
        ChartPanel p{to_string(kind), "noise level", "accuracy", {}};
        std::vector<std::pair<std::string, std::string>> groups;
        for (const auto& r : records)
            if (r.kind == kind && std::find(groups.begin(), groups.end(), std::pair{r.regime, r.mask}) == groups.end())
                groups.emplace_back(r.regime, r.mask);
        for (const auto& [regime, mask] : groups) {
            Series s{regime.rfind("pc", 0) == 0 ? fmt::format("{} {}", regime, mask) : regime, {}, {}};
            for (int level : cfg.noise_levels) {
                const MetricsRecord* last = nullptr;
                for (const auto& r : records)
                    if (r.regime == regime && r.mask == mask && r.kind == kind && r.level == level &&
                        (!last || r.t > last->t))
                        last = &r;
                if (last) {
                    s.x.push_back(level);
                    s.y.push_back(last->accuracy);
                }
            }
            p.series.push_back(std::move(s));
        }
        level_panels.push_back(std::move(p));
    }
    ctx.write("robustness.svg", svg_line_chart(fmt::format("{}: final-step accuracy under noise", cfg.id), level_panels));
    ctx.outputs.eval_records = records;
}

void stage_eval(Context& ctx, const ExperimentData& data) {
    const auto& cfg = ctx.cfg;
    PCNet net = load_pcnet(ctx, feedback_weights_name(cfg));
    net.freeze_all();
    const std::uint64_t test_seed = Rng(cfg.noise_seed).fork(kTestNoise).key();
    std::vector<MetricsRecord> records;

    auto add_pc = [&](const std::string& regime, const std::string& mask, const NoiseSpec& cond,
                      const std::vector<HyperParams>& hps, int restart) {
        NoiseSpec tn = cond;
        tn.seed = test_seed;
        const EvalResult r = evaluate(net, data.test, hps, cfg.eval.timesteps, tn, cfg.eval.batch_size);
        for (std::size_t t = 0; t < r.accuracy.size(); ++t)
            records.push_back({cfg.id, regime, mask, cond.kind, cond.level, restart, static_cast<int>(t), r.accuracy[t],
                               t < r.epsilon.size() ? r.epsilon[t] : std::vector<double>{}, hps});
        ctx.note(fmt::format("eval: {} {} {}: accuracy t=0 {:.4f} t={} {:.4f}", regime, mask, cond.label(),
                             r.accuracy.front(), r.accuracy.size() - 1, r.accuracy.back()));
    };

    if (!cfg.eval.hyperparams.empty()) {
        for (const auto& cond : cfg.noise_conditions()) add_pc("pc_fixed", "full", cond, cfg.eval.hyperparams, 0);
    } else {
        for (const auto& mask : cfg.masks)
            for (const auto& cond : cfg.noise_conditions()) {
                const fs::path rel = hp_report_path(mask, cond);
                const TrainReport report = train_report_from_json(ctx.read_json(rel), rel.string());
                add_pc("pc", mask.name(), cond, report.best().hps, report.best().restart);
            }
    }
    for (auto v : cfg.baselines) {
        const BaselineNet b = load_baseline(ctx, v);
        const std::string regime = fmt::format("baseline_{}", to_string(v));
        for (const auto& cond : cfg.noise_conditions()) {
            NoiseSpec tn = cond;
            tn.seed = test_seed;
            const EvalResult r = evaluate(b, data.test, tn, cfg.eval.batch_size);
            records.push_back({cfg.id, regime, "-", cond.kind, cond.level, 0, 0, r.accuracy.front(), {}, {}});
            ctx.note(fmt::format("eval: {} {}: accuracy {:.4f}", regime, cond.label(), r.accuracy.front()));
        }
    }
    write_eval_outputs(ctx, records);
}

void stage_attack(Context& ctx, const ExperimentData& data) {
    const auto& cfg = ctx.cfg;
    PCNet net = load_pcnet(ctx, feedback_weights_name(cfg));
    const Dataset images = data.test.slice(0, std::min(cfg.attack_images, data.test.size()));
    Json results = Json::array();
    std::string summary = fmt::format("# config_hash={} experiment={}\n", ctx.hash, cfg.id);
    summary += "configuration,mu,gamma,beta,alpha,median_eps,eligible,skipped,error\n";
    for (const auto& c : attack_configs(cfg)) {
        ctx.note(fmt::format("attack: {} on {} images", c.name, images.size()));
        const UnrolledModel model(net, {c.hp}, cfg.attack.timesteps);
        Json entry{{"name", c.name}, {"hp", to_json(c.hp)}};
        std::string median = "", eligible = "", skipped = "", error = "";
        try {
            const AttackResult r = median_min_perturbation(model, images, cfg.attack);
            ctx.note(fmt::format("attack: {} median minimal eps {:.5f} ({} eligible)", c.name, r.median,
                                 r.image_index.size()));
            ctx.write(fs::path("attack") / (c.name + ".csv"), r.per_image_csv());
            entry["result"] = to_json(r);
            median = std::isfinite(r.median) ? fmt::format("{}", r.median) : "inf";
            eligible = std::to_string(r.image_index.size());
            skipped = std::to_string(r.skipped);
        } catch (const std::invalid_argument& e) {
            // too few correctly classified images: recorded, other configurations still run
            ctx.note(fmt::format("attack: {} not measured: {}", c.name, e.what()));
            ctx.write(fs::path("attack") / (c.name + ".csv"), AttackResult{}.per_image_csv());
            entry["error"] = e.what();
            error = e.what();
        }
        results.push_back(entry);
        summary += fmt::format("{},{},{},{},{},{},{},{},\"{}\"\n", c.name, c.hp.mu, c.hp.gamma, c.hp.beta, c.hp.alpha,
                               median, eligible, skipped, error);
    }
    ctx.write("reports/attack.json", dump(Json{{"config_hash", ctx.hash},
                                              {"experiment", cfg.id},
                                              {"attack", to_json(cfg.attack)},
                                              {"images", images.size()},
                                              {"results", results}}));
    ctx.write("attack.csv", summary);
}

}  // namespace

std::vector<MetricsRecord> read_eval_records(const fs::path& out_dir) {
    const fs::path p = out_dir / "reports" / "eval.json";
    if (!fs::exists(p)) throw std::runtime_error(fmt::format("missing artifact {}", p.string()));
    Json j;
    try {
        j = Json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", p.string(), e.what()));
    }
    const std::string experiment = j.value("experiment", "");
    std::vector<MetricsRecord> records;
    const Json& rows = j.at("records");
    for (std::size_t i = 0; i < rows.size(); ++i)
        records.push_back(record_from(rows[i], fmt::format("eval.records[{}]", i), experiment));
    return records;
}

ExperimentOutputs run_experiment(const ExperimentConfig& cfg, const Logger& log) {
    cfg.validate();
    const ExperimentData data = load_experiment_data(cfg);
    return run_experiment(cfg, data, log);
}

ExperimentOutputs run_experiment(const ExperimentConfig& config, const ExperimentData& data, const Logger& log) {
    config.validate();
    const ExperimentConfig cfg = config.resolved();
    ExperimentOutputs outputs;
    Context ctx{cfg, fs::path(cfg.out_dir), cfg.hash(), log, outputs};
    fs::create_directories(ctx.out);
    ctx.write("config.json", dump(to_json(cfg)));
    for (auto stage : kAllStages) {
        if (std::find(cfg.stages.begin(), cfg.stages.end(), stage) == cfg.stages.end()) continue;
        try {
            switch (stage) {
                case Stage::train_ff: stage_train_ff(ctx, data); break;
                case Stage::train_fb: stage_train_fb(ctx, data); break;
                case Stage::train_hp: stage_train_hp(ctx, data, cfg.masks); break;
                case Stage::eval: stage_eval(ctx, data); break;
                case Stage::attack: stage_attack(ctx, data); break;
            }
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(fmt::format("{}: {}", to_string(stage), e.what()));
        } catch (const std::exception& e) {
            throw std::runtime_error(fmt::format("{}: {}", to_string(stage), e.what()));
        }
    }
    return outputs;
}

ExperimentOutputs regenerate_reports(const ExperimentConfig& config, const Logger& log) {
    config.validate();
    const ExperimentConfig cfg = config.resolved();
    ExperimentOutputs outputs;
    Context ctx{cfg, fs::path(cfg.out_dir), cfg.hash(), log, outputs};
    std::vector<AblationCell> cells;
    bool any_hp = false;
    for (const auto& [mask, noise] : hp_cells(cfg, cfg.masks)) {
        const fs::path rel = hp_report_path(mask, noise);
        if (fs::exists(ctx.out / rel)) any_hp = true;
    }
    if (any_hp) {
        for (const auto& [mask, noise] : hp_cells(cfg, cfg.masks)) {
            const fs::path rel = hp_report_path(mask, noise);
            cells.push_back({mask, noise, train_report_from_json(ctx.read_json(rel), rel.string())});
        }
        write_hp_outputs(ctx, cells);
        ctx.note(fmt::format("report: rebuilt hyper-parameter tables from {} cells", cells.size()));
    }
    if (fs::exists(ctx.out / "reports/eval.json")) {
        const auto records = read_eval_records(ctx.out);
        write_eval_outputs(ctx, records);
        ctx.note(fmt::format("report: rebuilt evaluation outputs from {} rows", records.size()));
    }
    if (!any_hp && outputs.written.empty())
        throw std::runtime_error(fmt::format("missing artifact {}: nothing to report on",
                                             (ctx.out / hp_report_path(cfg.masks.front(), cfg.noise_conditions().front())).string()));
    return outputs;
}

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
