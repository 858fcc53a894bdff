#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pcnet/cifar.hpp"
#include "pcnet/experiment.hpp"
#include "pcnet/io.hpp"

#include <cmath>
#include <fmt/format.h>
#include <filesystem>
#include <unistd.h>

using namespace pcnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / fmt::format("pcnet_harness_{}_{}", tag, ::getpid())) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// two hand-written records: label 3 then label 9
std::string two_records() {
    std::string bytes(2 * kCifarRecordBytes, '\0');
    bytes[0] = 3;
    for (std::size_t j = 0; j < kCifarPixels; ++j) bytes[1 + j] = static_cast<char>(j % 256);
    bytes[kCifarRecordBytes] = 9;
    for (std::size_t j = 0; j < kCifarPixels; ++j) bytes[kCifarRecordBytes + 1 + j] = static_cast<char>(255 - j % 256);
    return bytes;
}

// The smoke configuration: 1k training images, 2 epochs, T = 3, on a
// reduced network so that the whole pipeline runs in seconds.
ExperimentConfig smoke_config(const fs::path& out) {
    ExperimentConfig c;
    c.id = "smoke";
    c.seed = 11;
    c.out_dir = out.string();
    c.model.input_chw = {3, 16, 16};
    c.model.layers = {{4, 3, true}, {6, 3, true}};
    c.model.head_hidden = {16};
    c.data = {"synthetic", "", 1000, 200, 200};
    c.train_ff.epochs = 2;
    c.train_ff.lr = 0.05;
    c.train_fb.epochs = 2;
    c.train_hp.epochs = 2;
    c.train_hp.restarts = 2;
    c.train_hp.timesteps = 3;
    c.noise_kinds = {NoiseKind::gaussian, NoiseKind::salt_pepper};
    c.noise_levels = {0, 3};
    c.eval.timesteps = 3;
    c.attack.timesteps = 3;
    c.attack.steps = 5;
    c.attack.epsilons = {0.01, 0.05, 0.2, 0.8};
    c.attack.min_eligible = 1;
    c.attack_configurations = {"feedforward", "beta0.5_alpha0"};
    c.attack_images = 16;
    return c;
}

}  // namespace

TEST_CASE("cifar constants and pixel scaling") {
    CHECK(kCifarRecordBytes == 3073);
    CHECK(kCifarPixels == 3072);
    CHECK(kCifarRecordsPerBatch * kCifarRecordBytes == 30730000);
    const Dataset d = parse_cifar10(two_records(), "mem");
    REQUIRE(d.size() == 2);
    CHECK(d.labels == std::vector<std::int32_t>{3, 9});
    CHECK(d.images.shape() == Shape{2, 3, 32, 32});
    CHECK(d.images[0] == 0.0f);
    CHECK(d.images[255] == 1.0f);
    CHECK(d.images[kCifarPixels] == 1.0f);
    CHECK(d.images[kCifarPixels + 255] == 0.0f);
    // channel-planar: pixel (c, y, x) is byte c*1024 + y*32 + x
    CHECK(d.images[1024 + 5] == doctest::Approx((1024 + 5) % 256 / 255.0));
}

TEST_CASE("cifar two-record file round-trips byte for byte") {
    TempDir dir("cifar");
    const std::string bytes = two_records();
    write_file_atomic(dir.path / "in.bin", bytes);
    const Dataset d = load_cifar10_batch(dir.path / "in.bin");
    save_cifar10_batch(dir.path / "out.bin", d);
    CHECK(read_file(dir.path / "out.bin") == bytes);
    CHECK(encode_cifar10(d) == bytes);
}

TEST_CASE("cifar errors carry byte offsets") {
    std::string bytes = two_records();
    SUBCASE("truncated") {
        bytes.resize(bytes.size() - 10);
        CHECK_THROWS_WITH(parse_cifar10(bytes, "b.bin"), doctest::Contains("byte offset 3073"));
    }
    SUBCASE("bad label") {
        bytes[kCifarRecordBytes] = 10;
        CHECK_THROWS_WITH(parse_cifar10(bytes, "b.bin"), doctest::Contains("label 10 out of range at byte offset 3073"));
    }
    SUBCASE("empty") { CHECK_THROWS_WITH(parse_cifar10("", "b.bin"), doctest::Contains("empty")); }
}

TEST_CASE("cifar source reads only the batches it needs") {
    TempDir dir("cifar_src");
    const Dataset all = make_synthetic_dataset(100, 10, {3, 32, 32}, 5);
    save_cifar10_batch(dir.path / "data_batch_1.bin", all.slice(0, 30));
    save_cifar10_batch(dir.path / "data_batch_2.bin", all.slice(30, 30));
    save_cifar10_batch(dir.path / "test_batch.bin", all.slice(60, 40));
    ExperimentConfig c;
    c.data = {"cifar10", dir.path.string(), 40, 15, 25};
    const ExperimentData d = load_experiment_data(c);
    REQUIRE(d.train.size() == 40);
    REQUIRE(d.validation.size() == 15);
    REQUIRE(d.test.size() == 25);
    for (std::size_t i = 0; i < 40; ++i) CHECK(d.train.labels[i] == all.labels[i]);
    for (std::size_t i = 0; i < 15; ++i) CHECK(d.validation.labels[i] == all.labels[40 + i]);
    for (std::size_t i = 0; i < 25; ++i) CHECK(d.test.labels[i] == all.labels[60 + i]);
    // quantized to bytes on the way through
    CHECK(d.test.images[7] == doctest::Approx(std::round(all.images[60 * kCifarPixels + 7] * 255) / 255).epsilon(1e-6));

    c.data.train_count = 50;  // needs a third batch
    CHECK_THROWS_WITH(load_experiment_data(c), doctest::Contains("data_batch_3.bin"));
}

TEST_CASE("experiment config json round-trips and is strict") {
    ExperimentConfig c = smoke_config("somewhere");
    c.masks = {HPMask{}, HPMask{true, false}};
    c.eval.hyperparams = {HyperParams::feedforward()};
    c.train_fb = TrainConfig::defaults(Regime::fb_supervised);
    c.train_hp.init = AuxParams{0.1, -0.2, 0.3, 0.4};
    const Json j = to_json(c);
    const ExperimentConfig back = experiment_config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.hash() == c.hash());

    SUBCASE("unknown top-level field") {
        Json bad = j;
        bad["epochs"] = 3;
        CHECK_THROWS_WITH(experiment_config_from_json(bad), doctest::Contains("unknown field 'epochs'"));
    }
    SUBCASE("unknown nested field names its path") {
        Json bad = j;
        bad["train_hp"]["restart"] = 3;
        CHECK_THROWS_WITH(experiment_config_from_json(bad), doctest::Contains("config.train_hp: unknown field 'restart'"));
    }
    SUBCASE("wrong type") {
        Json bad = j;
        bad["seed"] = "seven";
        CHECK_THROWS_WITH(experiment_config_from_json(bad), doctest::Contains("config.seed"));
    }
    SUBCASE("bad enum value") {
        Json bad = j;
        bad["noise_kinds"] = {"gaussian", "speckle"};
        CHECK_THROWS_WITH(experiment_config_from_json(bad), doctest::Contains("config.noise_kinds[1]"));
    }
    SUBCASE("a train slot may omit its regime") {
        const ExperimentConfig p = experiment_config_from_json(Json{{"train_hp", {{"epochs", 2}}}});
        CHECK(p.train_hp.regime == Regime::hp_only);
        CHECK(p.train_hp.restarts == 10);
        CHECK(p.train_hp.epochs == 2);
    }
    SUBCASE("wrong regime in a slot") {
        CHECK_THROWS_WITH(experiment_config_from_json(Json{{"train_ff", {{"regime", "hp_only"}}}}),
                          doctest::Contains("train_ff.regime"));
    }
    SUBCASE("hash ignores paths, threads and stage selection") {
        ExperimentConfig d = c;
        d.out_dir = "elsewhere";
        d.threads = 4;
        d.stages = {Stage::eval};
        CHECK(d.hash() == c.hash());
        d.seed += 1;
        CHECK(d.hash() != c.hash());
    }
}

TEST_CASE("relative hyper-parameter table") {
    const HyperParams clean{0.2, 0.6, 0.2, 0.1};
    const HyperParams noisy{0.1, 0.5, 0.4, 0.3};
    std::vector<HPSummary> s;
    for (auto kind : {NoiseKind::gaussian, NoiseKind::salt_pepper})
        for (int level = 0; level <= 3; ++level) s.push_back({"full", kind, level, {level == 0 ? clean : noisy}});
    const auto rows = relative_hp_table(s);
    CHECK(rows.size() == 2 * 4 * 4);
    for (const auto& r : rows) {
        if (r.level == 0) CHECK(r.relative == doctest::Approx(1.0));
        if (r.level > 0 && r.name == "beta") CHECK(r.relative == doctest::Approx(2.0));
        if (r.level > 0 && r.name == "alpha") CHECK(r.relative == doctest::Approx(3.0));
    }
    const std::string csv = relative_hp_csv(rows);
    CHECK(csv.rfind("mask,noise,level,set,hp,value,clean,relative\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 32);

    SUBCASE("zero clean value gives NaN, not a division error") {
        const auto z = relative_hp_table({{"m", NoiseKind::gaussian, 0, {{0.5, 0.5, 0, 0}}},
                                          {"m", NoiseKind::gaussian, 1, {{0.4, 0.4, 0.2, 0.1}}}});
        CHECK(std::isnan(z[6].relative));
    }
    SUBCASE("missing clean baseline") {
        CHECK_THROWS_WITH(relative_hp_table({{"zero_beta", NoiseKind::gaussian, 2, {noisy}}}),
                          doctest::Contains("no clean condition for mask 'zero_beta'"));
    }
}

TEST_CASE("metrics csv layout") {
    MetricsRecord r{"x", "hp_only", "full", NoiseKind::gaussian, 2, 1, 3, 0.5, {0.1, 0.2}, {{0.2, 0.6, 0.2, 0.1}}};
    MetricsRecord sep = r;
    sep.hps = {{0.2, 0.6, 0.2, 0.1}, {0.3, 0.3, 0.4, 0}};
    const std::string one = metrics_csv({r}, "abc", "x");
    CHECK(one ==
          "# config_hash=abc experiment=x\n"
          "experiment,regime,mask,noise,level,restart,t,accuracy,eps_1,eps_2,mu,gamma,beta,alpha\n"
          "x,hp_only,full,gaussian,2,1,3,0.5,0.1,0.2,0.2,0.6,0.2,0.1\n");
    const std::string two = metrics_csv({sep, r}, "abc", "x");
    CHECK(two.find("mu_1,gamma_1,beta_1,alpha_1,mu_2,gamma_2,beta_2,alpha_2\n") != std::string::npos);
    CHECK(two.find("0.1,0.2,0.2,0.6,0.2,0.1,,,,\n") != std::string::npos);
    r.accuracy = 1.5;
    CHECK_THROWS_WITH(metrics_csv({r}, "abc", "x"), doctest::Contains("outside [0,1]"));
}

TEST_CASE("svg charts are deterministic and skip non-finite points") {
    const ChartPanel p{"a<b", "x", "y", {{"s1", {0, 1, 2}, {1, NAN, 3}}, {"s2", {0, 1}, {2, 2}}}};
    const std::string a = svg_line_chart("t", {p, p});
    CHECK(a == svg_line_chart("t", {p, p}));
    CHECK(a.rfind("<svg", 0) == 0);
    CHECK(a.find("a&lt;b") != std::string::npos);
    CHECK(std::count(a.begin(), a.end(), '\n') > 10);
    const auto polylines = [&] {
        std::size_t n = 0;
        for (auto at = a.find("<polyline"); at != std::string::npos; at = a.find("<polyline", at + 1)) ++n;
        return n;
    }();
    CHECK(polylines == 4);
    CHECK(a.find("nan") == std::string::npos);
}

TEST_CASE("smoke run emits every declared artifact and reruns byte-identically") {
    TempDir dir("smoke");
    const ExperimentConfig a = smoke_config(dir.path / "a");
    const ExperimentData data = load_experiment_data(a);
    CHECK(data.train.size() == 1000);
    const ExperimentOutputs out = run_experiment(a, data);

    const auto declared = declared_artifacts(a);
    for (const auto& rel : declared) {
        INFO(rel.string());
        CHECK(fs::exists(dir.path / "a" / rel));
    }
    for (const auto& rel : out.written) {
        INFO(rel.string());
        CHECK(std::find(declared.begin(), declared.end(), rel) != declared.end());
    }
    // 2 kinds x 2 levels x 2 restarts x 4 time-steps
    CHECK(out.hp_records.size() == 32);
    // PC rows for t = 0..3 plus one baseline row, per condition
    CHECK(out.eval_records.size() == 4 * 4 + 4);
    const std::string metrics = read_file(dir.path / "a" / "metrics.csv");
    CHECK(metrics.rfind(fmt::format("# config_hash={} experiment=smoke\n", a.hash()), 0) == 0);

    ExperimentConfig b = a;
    b.out_dir = (dir.path / "b").string();
    b.threads = 2;
    run_experiment(b, data);
    for (const char* f : {"metrics.csv", "relative_hp.csv", "eval.csv", "attack.csv", "curves/train_ff.csv",
                          "curves/train_fb.csv", "relative_hp.svg", "accuracy_vs_t.svg", "ff.pcw", "fb_unsup.pcw"}) {
        INFO(f);
        CHECK(read_file(dir.path / "a" / f) == read_file(dir.path / "b" / f));
    }

    {
        // report rebuilds the same tables from the saved reports
        const std::string eval_csv = read_file(dir.path / "a" / "eval.csv");
        fs::remove(dir.path / "a" / "metrics.csv");
        fs::remove(dir.path / "a" / "eval.csv");
        regenerate_reports(a);
        CHECK(read_file(dir.path / "a" / "metrics.csv") == metrics);
        CHECK(read_file(dir.path / "a" / "eval.csv") == eval_csv);
    }
    {
        // resuming a single stage reuses saved weights
        ExperimentConfig e = a;
        e.stages = {Stage::train_hp};
        run_experiment(e, data);
        CHECK(read_file(dir.path / "a" / "metrics.csv") == metrics);
    }
    {
        // eval with gamma = 1 is flat over time-steps
        ExperimentConfig e = a;
        e.stages = {Stage::eval};
        e.eval.hyperparams = {HyperParams::feedforward()};
        e.eval.timesteps = 5;
        const auto rec = run_experiment(e, data).eval_records;
        for (const auto& r : rec) {
            if (r.regime != "pc_fixed") continue;
            for (const auto& q : rec)
                if (q.regime == r.regime && q.kind == r.kind && q.level == r.level) CHECK(q.accuracy == r.accuracy);
        }
    }
}

TEST_CASE("a stage without its input names the missing artifact") {
    TempDir dir("missing");
    ExperimentConfig c = smoke_config(dir.path);
    c.data = {"synthetic", "", 20, 10, 10};
    c.stages = {Stage::eval};
    CHECK_THROWS_WITH(run_experiment(c), doctest::Contains("fb_unsup.pcw"));
    c.stages = {Stage::train_fb};
    CHECK_THROWS_WITH(run_experiment(c), doctest::Contains("ff.pcw"));
    c.train_fb = TrainConfig::defaults(Regime::fb_supervised);
    c.stages = {Stage::attack};
    CHECK_THROWS_WITH(run_experiment(c), doctest::Contains("fb_sup.pcw"));
}
