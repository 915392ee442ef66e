#include <cstdlib>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "gando/orchestrator/commands.hpp"

using namespace gando;
using namespace gando::orchestrator;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test.
fs::path scratch() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const fs::path p = fs::temp_directory_path() / ("gando_test_" + std::to_string(::getpid()) + "_" + info->test_suite_name() + "_" + info->name());
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// A pipeline small enough to run in seconds.
KeyValues tiny_keys(const fs::path& out) {
    return KeyValues::parse("experiment.id = tiny\n"
                            "output.dir = " + out.string() + "\n"
                            "data.image_size = 32\n"
                            "data.max_objects = 2\n"
                            "data.min_side = 8\n"
                            "data.max_side = 20\n"
                            "data.texture.cell = 8\n"
                            "data.train = 16\n"
                            "data.val = 8\n"
                            "data.test = 8\n"
                            "data.seed = 5\n"
                            "model.widths = 4, 6, 8, 8\n"
                            "train.batch_size = 8\n"
                            "train.max_epochs = 1\n"
                            "train.lr = 1e-3\n"
                            "eval.families = gaussian, awgn\n");
}

ExperimentConfig tiny(const fs::path& out) { return resolve_config(tiny_keys(out)); }

/// Clears GANDO_OUTPUT_ROOT for the scope so tests see the configured output.dir.
struct EnvGuard {
    std::optional<std::string> saved;
    EnvGuard() {
        if (const char* v = std::getenv("GANDO_OUTPUT_ROOT")) saved = v;
        ::unsetenv("GANDO_OUTPUT_ROOT");
    }
    ~EnvGuard() {
        if (saved) ::setenv("GANDO_OUTPUT_ROOT", saved->c_str(), 1);
        else ::unsetenv("GANDO_OUTPUT_ROOT");
    }
};

int run_cli(const std::string& args) {
    const int rc = std::system((std::string(GANDO_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

// ---------------------------------------------------------------- config

TEST(Config, ParsesCommentsAndRejectsGarbage) {
    const auto kv = KeyValues::parse("# header\n a = 1 \n\nb=two # trailing\n");
    EXPECT_EQ(kv.str("a", ""), "1");
    EXPECT_EQ(kv.str("b", ""), "two");
    EXPECT_THROW(KeyValues::parse("no equals sign\n"), ConfigError);
    EXPECT_THROW(kv.integer("b", 0), ConfigError);
}

TEST(Config, HashStableUnderKeyReordering) {
    EnvGuard env;
    const auto a = resolve_config(KeyValues::parse("data.seed = 3\ntrain.lr = 0.01\nexperiment.id = x\n"));
    const auto b = resolve_config(KeyValues::parse("experiment.id = x\ntrain.lr = 0.01\ndata.seed = 3\n"));
    EXPECT_EQ(a.hash(), b.hash());
    const auto c = resolve_config(KeyValues::parse("experiment.id = x\ntrain.lr = 0.02\ndata.seed = 3\n"));
    EXPECT_NE(a.hash(), c.hash());
    // where results are written does not change what they are
    const auto d = resolve_config(KeyValues::parse("experiment.id = x\ntrain.lr = 0.01\ndata.seed = 3\noutput.dir = /elsewhere\n"));
    EXPECT_EQ(a.hash(), d.hash());
}

TEST(Config, OverridePrecedence) {
    EnvGuard env;
    auto kv = KeyValues::parse("train.lr = 0.01\ngando.lr = 0.02\ntrain.patience = 7\n");
    auto cfg = resolve_config(kv);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::finetune).lr, 0.01);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::gando).lr, 0.02);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::gando).patience, 7);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::gando).beta1, 0.5);
    kv.set_override("train.lr=0.5");
    cfg = resolve_config(kv);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::finetune).lr, 0.5);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::gando).lr, 0.02);
    EXPECT_THROW(kv.set_override("missing-equals"), ConfigError);
}

TEST(Config, DefaultsAndValidation) {
    EnvGuard env;
    const auto cfg = resolve_config(KeyValues{});
    EXPECT_EQ(cfg.scene.image_size, 96);
    EXPECT_EQ(cfg.counts.train, 2000);
    EXPECT_EQ(cfg.family, DistortionFamily::defocus);
    EXPECT_EQ(cfg.train_config(advtrain::TrainMode::gando).lambda, 1.0);
    EXPECT_THROW(resolve_config(KeyValues::parse("model.widths = 1,2,3\n")), ConfigError);
    EXPECT_THROW(resolve_config(KeyValues::parse("distortion.family = fog\n")), ConfigError);
    EXPECT_THROW(resolve_config(KeyValues::parse("train.batch_size = 3\n")).train_config(advtrain::TrainMode::baseline), ConfigError);
}

TEST(Config, EnvironmentOverridesOutputRoot) {
    EnvGuard env;
    const fs::path root = scratch();
    ::setenv("GANDO_OUTPUT_ROOT", root.c_str(), 1);
    const auto cfg = resolve_config(KeyValues::parse("experiment.id = e1\noutput.dir = /nowhere\n"));
    EXPECT_EQ(cfg.output_dir, root / "e1");
}

// ---------------------------------------------------------------- ledger

TEST(Ledger, AppendsOneRecordPerRun) {
    const fs::path dir = scratch();
    RunRecord r;
    r.command = "x";
    r.config_hash = "abc";
    r.outputs.push_back({"report", "a.md", "01"});
    append_run_record(dir / "runs.jsonl", r);
    r.command = "y";
    append_run_record(dir / "runs.jsonl", r);
    const auto back = read_run_records(dir / "runs.jsonl");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].command, "x");
    EXPECT_EQ(back[1].command, "y");
    EXPECT_EQ(back[1].outputs.at(0).id, "01");
}

TEST(Ledger, ConcurrentAppendsStayLineAtomic) {
    const fs::path dir = scratch();
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t)
        ts.emplace_back([&, t] {
            for (int i = 0; i < 25; ++i) {
                RunRecord r;
                r.command = "t" + std::to_string(t);
                r.error = std::string(500, static_cast<char>('a' + t));
                append_run_record(dir / "runs.jsonl", r);
            }
        });
    for (auto& t : ts) t.join();
    EXPECT_EQ(read_run_records(dir / "runs.jsonl").size(), 100u);
}

// ---------------------------------------------------------------- pipeline

TEST(Pipeline, MissingPrerequisitesNameTheArtifact) {
    EnvGuard env;
    const auto cfg = tiny(scratch());
    try {
        cmd_train(cfg, advtrain::TrainMode::baseline);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("manifest"), std::string::npos);
    }
    cmd_generate_data(cfg);
    try {
        cmd_train(cfg, advtrain::TrainMode::gando);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("baseline.ckpt"), std::string::npos);
    }
    const auto recs = read_run_records(cfg.ledger_path());
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].status, "failed");
    EXPECT_TRUE(recs[0].outputs.empty());
    EXPECT_EQ(recs[1].status, "ok");
    EXPECT_EQ(recs[2].status, "failed");
    EXPECT_FALSE(fs::exists(cfg.checkpoint_path("gando")));
}

TEST(Pipeline, GenerateDataIsIdempotentAndSeeded) {
    EnvGuard env;
    const fs::path dir = scratch();
    const auto a = tiny(dir / "a");
    cmd_generate_data(a);
    const std::string first = read_file(a.manifest_path());
    cmd_generate_data(a);
    EXPECT_EQ(read_file(a.manifest_path()), first);
    const auto m = synthkit::load_manifest(a.manifest_path().string());
    EXPECT_EQ(m.split(synthkit::Split::train).size(), 16u);
    EXPECT_EQ(m.split(synthkit::Split::test).size(), 8u);

    auto kv = tiny_keys(dir / "b");
    kv.set("data.seed", "6");
    const auto b = resolve_config(kv);
    cmd_generate_data(b);
    EXPECT_NE(read_file(b.manifest_path()), first);
}

TEST(Pipeline, EndToEnd) {
    EnvGuard env;
    auto kv = tiny_keys(scratch());
    kv.set("eval.cross_models", "gaussian:finetune, awgn:gando");
    kv.set("eval.gank_layers", "block2");
    const auto cfg = resolve_config(kv);
    cmd_generate_data(cfg);
    cmd_train(cfg, advtrain::TrainMode::baseline);
    cmd_train(cfg, advtrain::TrainMode::finetune);
    const auto g = cmd_train(cfg, advtrain::TrainMode::gando);
    cmd_train(cfg, advtrain::TrainMode::gando, std::string("block2"));
    ASSERT_TRUE(fs::exists(cfg.checkpoint_path("gando")));
    ASSERT_TRUE(fs::exists(cfg.checkpoint_path("gando-block2")));

    // G starts from the named baseline
    const auto ck = tinyssd::load_checkpoint(cfg.checkpoint_path("gando"));
    EXPECT_EQ(ck.meta.parent_id, tinyssd::load_checkpoint(cfg.checkpoint_path("baseline")).id);
    EXPECT_EQ(g.inputs.back().id, ck.meta.parent_id);

    const std::string base_log = read_file(cfg.log_path("baseline"));
    EXPECT_EQ(base_log.find("d_loss"), std::string::npos);
    EXPECT_EQ(base_log.find("l_gan"), std::string::npos);
    EXPECT_NE(read_file(cfg.log_path("gando")).find("d_loss"), std::string::npos);

    cmd_evaluate(cfg, known_suites());
    for (const auto& s : known_suites()) {
        const std::string md = read_file(cfg.reports_dir() / (s + ".md"));
        EXPECT_NE(md.find(cfg.hash()), std::string::npos) << s;
        EXPECT_FALSE(read_file(cfg.reports_dir() / (s + ".jsonl")).empty()) << s;
    }
    const std::string t3 = read_file(cfg.reports_dir() / "table3.md");
    EXPECT_NE(t3.find(ck.id), std::string::npos);
    EXPECT_NE(t3.find("awgn"), std::string::npos);
    EXPECT_TRUE(fs::exists(cfg.reports_dir() / "table6.svg"));
    // table6: label column plus r = 0, 2, ..., 12
    const std::string t6 = read_file(cfg.reports_dir() / "table6.md");
    const auto header_line = t6.substr(t6.find("| Model"), t6.find('\n', t6.find("| Model")) - t6.find("| Model"));
    EXPECT_EQ(std::count(header_line.begin(), header_line.end(), '|'), 9) << header_line;

    cmd_report(cfg);
    EXPECT_NE(read_file(cfg.reports_dir() / "report.md").find("Partial retraining"), std::string::npos);

    const auto recs = read_run_records(cfg.ledger_path());
    ASSERT_EQ(recs.size(), 7u);
    for (const auto& r : recs) {
        EXPECT_EQ(r.status, "ok") << r.command;
        EXPECT_EQ(r.config_hash, cfg.hash());
        EXPECT_NE(r.provenance.find(cfg.hash()), std::string::npos);
        EXPECT_GE(r.finished_at, r.started_at);
    }
}

TEST(Pipeline, EvaluateErrors) {
    EnvGuard env;
    const auto cfg = tiny(scratch());
    EXPECT_EQ(cmd_evaluate(cfg, {}).status, "ok");
    EXPECT_THROW(cmd_evaluate(cfg, {"table9"}), ConfigError);
    cmd_generate_data(cfg);
    EXPECT_THROW(cmd_evaluate(cfg, {"clean"}), LoadError);
    EXPECT_THROW(cmd_report(cfg), ConfigError);
    const auto recs = read_run_records(cfg.ledger_path());
    EXPECT_EQ(recs.back().status, "failed");
    EXPECT_FALSE(fs::exists(cfg.reports_dir() / "clean.md"));
}

// ---------------------------------------------------------------- distort

TEST(Distort, LevelRangeAndDeterminism) {
    EnvGuard env;
    const fs::path dir = scratch();
    const auto cfg = tiny(dir / "exp");
    Image img = synthkit::render_scene(cfg.scene, 9).first;
    write_atomic(dir / "in" / "a.ppm", encode_ppm(img));
    write_atomic(dir / "in" / "b.pfm", encode_pfm(img));

    try {
        cmd_distort(cfg, dir / "in", DistortionFamily::gaussian, 7, 1, dir / "out");
        FAIL();
    } catch (const LevelError& e) {
        EXPECT_NE(std::string(e.what()).find("[1, 6]"), std::string::npos);
    }
    EXPECT_THROW(cmd_distort(cfg, dir / "in", DistortionFamily::awgn, 0, 1, dir / "out"), LevelError);

    cmd_distort(cfg, dir / "in", DistortionFamily::awgn, 2, 4, dir / "o1");
    cmd_distort(cfg, dir / "in", DistortionFamily::awgn, 2, 4, dir / "o2");
    EXPECT_EQ(read_file(dir / "o1" / "a.pfm"), read_file(dir / "o2" / "a.pfm"));
    EXPECT_EQ(read_file(dir / "o1" / "b.pfm"), read_file(dir / "o2" / "b.pfm"));
    cmd_distort(cfg, dir / "in", DistortionFamily::awgn, 2, 5, dir / "o3");
    EXPECT_NE(read_file(dir / "o1" / "a.pfm"), read_file(dir / "o3" / "a.pfm"));
    const auto tag = nlohmann::json::parse(read_file(dir / "o1" / "a.tag.json"));
    EXPECT_EQ(tag["family"], "awgn");
    EXPECT_EQ(tag["level_index"], 2);
    EXPECT_EQ(tag["is_clean"], false);
}

TEST(Distort, GaussianRadiusTwoMatchesLibraryConvolution) {
    EnvGuard env;
    const fs::path dir = scratch();
    const auto cfg = tiny(dir / "exp");
    const Image img = synthkit::render_scene(cfg.scene, 10).first;
    write_atomic(dir / "in" / "x.pfm", encode_pfm(img));
    cmd_distort(cfg, dir / "in" / "x.pfm", DistortionFamily::gaussian, degrade::blur_level_index(2), 0, dir / "out");
    const Image got = read_image(dir / "out" / "x.pfm");
    EXPECT_EQ(got.pixels, degrade::convolve2d(img, degrade::gaussian_kernel(2)).pixels);
}

// ---------------------------------------------------------------- CLI

TEST(Cli, ExitStatusAndOutputRoot) {
    EnvGuard env;
    const fs::path dir = scratch();
    std::string cfgtext;
    const KeyValues kv = tiny_keys(dir / "ignored");
    for (const auto& [k, v] : kv.values())
        if (k != "output.dir") cfgtext += k + " = " + v + "\n";
    write_atomic(dir / "exp.cfg", cfgtext);

    ::setenv("GANDO_OUTPUT_ROOT", (dir / "root").c_str(), 1);
    EXPECT_EQ(run_cli("generate-data -c " + (dir / "exp.cfg").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "root" / "tiny" / "manifest.txt"));
    EXPECT_NE(run_cli("train --mode gando -c " + (dir / "exp.cfg").string()), 0);
    EXPECT_NE(run_cli("evaluate --suite nope -c " + (dir / "exp.cfg").string()), 0);
    EXPECT_NE(run_cli("train --mode sideways -c " + (dir / "exp.cfg").string()), 0);
    EXPECT_EQ(run_cli("evaluate -c " + (dir / "exp.cfg").string()), 0);  // no suites: no-op
    EXPECT_EQ(run_cli("train --mode baseline --set train.max_epochs=1 -c " + (dir / "exp.cfg").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "root" / "tiny" / "checkpoints" / "baseline.ckpt"));
    EXPECT_NE(run_cli("distort " + (dir / "missing").string() + " -f gaussian -l 1"), 0);
}
