// gando: command-line driver for data generation, training, evaluation and reporting.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gando/orchestrator/commands.hpp"

namespace orch = gando::orchestrator;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string output;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("-c,--config", c.config_file, "experiment config file (key = value lines)");
    sub->add_option("-s,--set", c.overrides, "override a config key, e.g. --set train.lr=1e-4")->take_all();
    sub->add_option("-o,--output", c.output, "output directory (overrides output.dir)");
}

orch::ExperimentConfig load(const Common& c) {
    orch::KeyValues kv;
    if (!c.config_file.empty()) kv = orch::KeyValues::load(c.config_file);
    for (const auto& o : c.overrides) kv.set_override(o);
    if (!c.output.empty()) kv.set("output.dir", c.output);
    auto cfg = orch::resolve_config(kv);
    if (!c.output.empty()) cfg.output_dir = c.output;
    return cfg;
}

void print_outputs(const orch::RunRecord& r) {
    for (const auto& a : r.outputs)
        if (a.role != "image" && a.role != "tag") std::cout << a.role << "  " << a.path << "  " << a.id << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAN-DO training and evaluation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(orch::kToolVersion));

    Common gen_c, train_c, eval_c, dist_c, rep_c;

    auto* gen = app.add_subcommand("generate-data", "write the seeded dataset manifest");
    add_common(gen, gen_c);

    auto* train = app.add_subcommand("train", "train a baseline, fine-tuned or GAN-DO detector");
    add_common(train, train_c);
    std::string mode = "baseline";
    std::optional<std::string> freeze_after;
    train->add_option("-m,--mode", mode, "baseline | finetune | gando")->check(CLI::IsMember({"baseline", "finetune", "gando"}));
    train->add_option("--freeze-after", freeze_after, "train layers up to and including this one (block1..block4, head, all)");

    auto* eval = app.add_subcommand("evaluate", "emit evaluation suites as tables, records and plots");
    add_common(eval, eval_c);
    std::vector<std::string> suites;
    eval->add_option("--suite", suites, "suite names (clean, degraded, heavy, table1..table6); default: eval.suites")->take_all();

    auto* dist = app.add_subcommand("distort", "degrade PPM/PFM images with one pool level");
    add_common(dist, dist_c);
    std::string input, family = "gaussian", dist_out = "distorted";
    int level = 1;
    std::uint64_t seed = 0;
    dist->add_option("input", input, "image file or directory")->required();
    dist->add_option("-f,--family", family, "gaussian | defocus | camshake | awgn");
    dist->add_option("-l,--level", level, "1-based level index into the family's pool");
    dist->add_option("--seed", seed, "noise seed");
    dist->add_option("-d,--dest", dist_out, "destination directory");

    auto* rep = app.add_subcommand("report", "collect suite tables into reports/report.md");
    add_common(rep, rep_c);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            print_outputs(orch::cmd_generate_data(load(gen_c)));
        } else if (train->parsed()) {
            print_outputs(orch::cmd_train(load(train_c), gando::advtrain::parse_mode(mode), freeze_after));
        } else if (eval->parsed()) {
            const auto cfg = load(eval_c);
            print_outputs(orch::cmd_evaluate(cfg, suites.empty() ? cfg.suites : suites));
        } else if (dist->parsed()) {
            const auto cfg = load(dist_c);
            const auto r = orch::cmd_distort(cfg, input, gando::parse_family(family), level, seed, dist_out);
            std::cout << r.outputs.size() / 2 << " image(s) written to " << dist_out << "\n";
        } else if (rep->parsed()) {
            print_outputs(orch::cmd_report(load(rep_c)));
        }
    } catch (const std::exception& e) {
        std::cerr << "gando: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
