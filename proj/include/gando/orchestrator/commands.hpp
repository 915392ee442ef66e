#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gando/advtrain/trainer.hpp"
#include "gando/core/error.hpp"
#include "gando/core/fs.hpp"
#include "gando/core/hash.hpp"
#include "gando/core/image_io.hpp"
#include "gando/evalkit/analysis.hpp"
#include "gando/evalkit/io.hpp"
#include "gando/orchestrator/config.hpp"
#include "gando/orchestrator/ledger.hpp"
#include "gando/orchestrator/report.hpp"
#include "gando/synthkit/dataset.hpp"
#include "gando/tinyssd/checkpoint.hpp"

namespace gando::orchestrator {

namespace fs = std::filesystem;

inline const std::vector<std::string>& known_suites() {
    static const std::vector<std::string> s{"clean", "degraded", "heavy", "table1", "table2", "table3", "table4", "table5", "table6"};
    return s;
}

inline std::string content_id(const std::string& bytes) { return hex64(fnv1a(bytes)); }

/// Runs `body`, then appends exactly one RunRecord. A failed run is recorded with no outputs
/// and the exception is rethrown.
template <class Body>
RunRecord logged_run(const ExperimentConfig& cfg, const std::string& command, Body&& body) {
    RunRecord rec;
    rec.command = command;
    rec.config_hash = cfg.hash();
    rec.provenance = std::string(kToolVersion) + "+" + cfg.id + "@" + rec.config_hash;
    rec.started_at = unix_now();
    try {
        body(rec);
    } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.outputs.clear();
        rec.finished_at = unix_now();
        try {
            append_run_record(cfg.ledger_path(), rec);
        } catch (const std::exception&) {
        }
        throw;
    }
    rec.finished_at = unix_now();
    append_run_record(cfg.ledger_path(), rec);
    return rec;
}

inline Artifact write_artifact(RunRecord& rec, const std::string& role, const fs::path& path, const std::string& bytes) {
    write_atomic(path, bytes);
    Artifact a{role, path.string(), content_id(bytes)};
    rec.outputs.push_back(a);
    return a;
}

inline synthkit::DatasetManifest require_manifest(const ExperimentConfig& cfg) {
    if (!fs::exists(cfg.manifest_path()))
        throw ConfigError("missing dataset manifest " + cfg.manifest_path().string() + "; run `gando generate-data` first");
    return synthkit::load_manifest(cfg.manifest_path().string());
}

// ---------------------------------------------------------------- generate-data

inline RunRecord cmd_generate_data(const ExperimentConfig& cfg) {
    return logged_run(cfg, "generate-data", [&](RunRecord& rec) {
        rec.seeds = {cfg.data_seed};
        const auto m = synthkit::generate_dataset(cfg.scene, cfg.counts, cfg.data_seed);
        write_artifact(rec, "manifest", cfg.manifest_path(), synthkit::serialize_manifest(m));
        const long cache = cfg.raw.integer("data.cache_images", 0);
        for (long i = 0; i < cache && i < static_cast<long>(m.records.size()); ++i) {
            const auto& r = m.records[static_cast<std::size_t>(i)];
            const Sample s = synthkit::render_record(r);
            const fs::path p = cfg.output_dir / "cache" / (synthkit::to_string(r.split) + "_" + std::to_string(r.index) + ".ppm");
            write_artifact(rec, "image", p, encode_ppm(s.image));
        }
    });
}

// ---------------------------------------------------------------- train

/// Checkpoint name for a training mode; partial retraining appends the last trainable layer.
inline std::string model_name(advtrain::TrainMode mode, const std::string& freeze_after) {
    std::string n = advtrain::to_string(mode);
    if (!freeze_after.empty() && freeze_after != "all" && freeze_after != "all_layers") n += "-" + freeze_after;
    return n;
}

inline RunRecord cmd_train(const ExperimentConfig& cfg, advtrain::TrainMode mode,
                           const std::optional<std::string>& freeze_after = std::nullopt) {
    return logged_run(cfg, "train --mode " + advtrain::to_string(mode), [&](RunRecord& rec) {
        auto tc = cfg.train_config(mode);
        if (freeze_after) tc.freeze_after = *freeze_after;
        const std::string name = model_name(mode, tc.freeze_after);
        rec.seeds = {cfg.data_seed, tc.seed, cfg.arch.init_seed};

        const auto data = require_manifest(cfg);
        rec.inputs.push_back({"manifest", cfg.manifest_path().string(), content_id(read_file(cfg.manifest_path()))});

        std::optional<tinyssd::Checkpoint> parent;
        if (mode != advtrain::TrainMode::baseline) {
            const fs::path bp = cfg.raw.has("train.init_checkpoint") ? fs::path(cfg.raw.str("train.init_checkpoint", ""))
                                                                     : cfg.checkpoint_path("baseline");
            if (!fs::exists(bp))
                throw ConfigError("missing baseline checkpoint " + bp.string() + "; run `gando train --mode baseline` first");
            parent = tinyssd::load_checkpoint(bp);
            rec.inputs.push_back({"checkpoint", bp.string(), parent->id});
        }

        // Decay checkpoints are written as they happen but only registered once the run succeeds.
        std::vector<Artifact> staged;
        auto save = [&](const std::string& file, int epoch, const ParamSet<float>& p) {
            tinyssd::CheckpointMeta meta{cfg.arch.canonical(), name, cfg.hash(), cfg.data_seed, epoch, parent ? parent->id : ""};
            const std::string bytes = tinyssd::serialize_checkpoint(meta, p);
            const fs::path path = cfg.checkpoint_path(file);
            write_atomic(path, bytes);
            staged.push_back({"checkpoint", path.string(), tinyssd::checkpoint_id(bytes)});
        };
        const advtrain::CheckpointSink sink = [&](const advtrain::CheckpointEvent& ev, const ParamSet<float>& p) {
            if (ev.reason == "lr_decay") save(name + ".decay-e" + std::to_string(ev.epoch), ev.epoch, p);
        };

        advtrain::TrainResult res = [&] {
            switch (mode) {
            case advtrain::TrainMode::baseline: return advtrain::train_baseline(tc, cfg.arch, data, sink);
            case advtrain::TrainMode::finetune: return advtrain::train_finetune(tc, *parent, cfg.arch, data, cfg.pool(), sink);
            case advtrain::TrainMode::gando: break;
            }
            return advtrain::train_gando(tc, *parent, cfg.arch, data, cfg.pool(), sink);
        }();

        const int last_epoch = res.log.epochs.empty() ? 0 : res.log.epochs.back().epoch;
        save(name, last_epoch, res.model.params);
        write_atomic(cfg.log_path(name), res.log.to_jsonl());
        staged.push_back({"log", cfg.log_path(name).string(), content_id(res.log.to_jsonl())});
        rec.outputs = std::move(staged);
    });
}

// ---------------------------------------------------------------- evaluate

class ModelStore {
public:
    explicit ModelStore(const ExperimentConfig& cfg) : cfg_(cfg) {}

    const tinyssd::Detector<float>& get(const std::string& name) {
        auto it = models_.find(name);
        if (it == models_.end()) {
            const fs::path p = cfg_.checkpoint_path(name);
            if (!fs::exists(p)) throw LoadError("missing checkpoint " + p.string() + " (model '" + name + "')");
            auto ck = tinyssd::load_checkpoint(p);
            ids_[name] = ck.id;
            it = models_.emplace(name, tinyssd::detector_from_checkpoint<float>(ck, cfg_.arch)).first;
        }
        return it->second;
    }

    const std::string& id(const std::string& name) {
        get(name);
        return ids_.at(name);
    }

    /// Loads every model up front so a missing checkpoint fails before any work is done.
    std::vector<std::pair<std::string, std::string>> require(const std::vector<std::string>& names) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& n : names) out.emplace_back(n, id(n));
        return out;
    }

private:
    const ExperimentConfig& cfg_;
    std::map<std::string, tinyssd::Detector<float>> models_;
    std::map<std::string, std::string> ids_;
};

namespace detail {

inline std::vector<std::string> ap_header(const std::string& first) {
    return {first, "mAP@0.5", "mAP@0.75", "mAP@[.5:.95]", "AP_S", "AP_M", "AP_L"};
}

inline std::vector<std::string> ap_row(const std::string& label, const evalkit::APReport& r) {
    return {label, pct(r.map50), pct(r.map75), pct(r.map_avg), pct(r.ap_small), pct(r.ap_medium), pct(r.ap_large)};
}

inline std::string delta_pct(double v, double ref) { return ref > 0 ? fixed(100.0 * (v - ref) / ref, 1) + "%" : "n/a"; }

} // namespace detail

struct SuiteOutput {
    Table table;
    std::optional<std::string> svg;
};

inline SuiteOutput run_suite(const std::string& suite, const ExperimentConfig& cfg, const evalkit::RecordList& test, ModelStore& store) {
    SuiteOutput out;
    Table& t = out.table;
    t.name = suite;
    t.config_hash = cfg.hash();
    const std::uint64_t seed = cfg.eval_seed;
    const int ncls = cfg.arch.num_classes;
    auto ap_report = [&](const tinyssd::Detector<float>& m, const degrade::DistortionPool* pool) {
        const auto e = evalkit::run_detector(m, test, pool, seed);
        return evalkit::coco_ap(e.dets, e.gts, ncls, cfg.scene.image_size, evalkit::AreaBins::scaled_coco(cfg.scene.image_size));
    };

    if (suite == "clean" || suite == "degraded") {
        const auto pool = cfg.pool();
        const degrade::DistortionPool* p = suite == "clean" ? nullptr : &pool;
        t.title = suite == "clean" ? "Clean test split" : "Degraded test split (" + to_string(cfg.family) + ", all levels)";
        t.header = detail::ap_header("Model");
        t.checkpoints = store.require(cfg.eval_models);
        for (const auto& name : cfg.eval_models) {
            const auto r = ap_report(store.get(name), p);
            t.rows.push_back(detail::ap_row(name, r));
            auto j = evalkit::to_json(r);
            j["model"] = name;
            j["split"] = suite;
            t.records.push_back(j);
        }
    } else if (suite == "heavy") {
        const auto pool = degrade::make_pool(cfg.family, cfg.distortion_seed, cfg.heavy_levels);
        t.title = "Clean vs heavy " + to_string(cfg.family) + " blur";
        t.header = {"Model", "clean mAP@0.5", "heavy mAP@0.5"};
        t.checkpoints = store.require(cfg.eval_models);
        for (const auto& name : cfg.eval_models) {
            const auto& m = store.get(name);
            const double c = evalkit::map50(m, test, nullptr, seed), h = evalkit::map50(m, test, &pool, seed);
            t.rows.push_back({name, fixed(100 * c), fixed(100 * h)});
            t.records.push_back({{"model", name}, {"clean_map50", c}, {"heavy_map50", h}, {"heavy_levels", cfg.heavy_levels}});
        }
    } else if (suite == "table1") {
        t.title = "Loss decomposition, baseline model";
        t.header = {"Test images", "L_class", "L_bb", "dL_class", "dL_bb"};
        t.checkpoints = store.require({"baseline"});
        const auto& m = store.get("baseline");
        const auto clean = evalkit::loss_decomposition(m, test, nullptr, seed);
        auto add = [&](const std::string& label, const evalkit::LossBreakdown& b) {
            t.rows.push_back({label, fixed(b.mean_l_class, 4), fixed(b.mean_l_bb, 5), detail::delta_pct(b.mean_l_class, clean.mean_l_class),
                              detail::delta_pct(b.mean_l_bb, clean.mean_l_bb)});
            auto j = evalkit::to_json(b);
            j["label"] = label;
            t.records.push_back(j);
        };
        add("clean", clean);
        for (auto f : cfg.eval_families) {
            const auto pool = degrade::make_pool(f, cfg.distortion_seed);
            add(to_string(f), evalkit::loss_decomposition(m, test, &pool, seed));
        }
        const auto heavy = degrade::make_pool(cfg.family, cfg.distortion_seed, cfg.heavy_levels);
        add(to_string(cfg.family) + " heavy", evalkit::loss_decomposition(m, test, &heavy, seed));
    } else if (suite == "table2") {
        t.title = "Loss decomposition by blur radius (" + to_string(cfg.sweep_family) + "), baseline model";
        t.header = {"Radius", "L_class", "L_bb", "dL_class", "dL_bb"};
        t.checkpoints = store.require({"baseline"});
        const auto& m = store.get("baseline");
        const auto clean = evalkit::loss_decomposition(m, test, nullptr, seed);
        auto add = [&](int r, const evalkit::LossBreakdown& b) {
            t.rows.push_back({std::to_string(r), fixed(b.mean_l_class, 4), fixed(b.mean_l_bb, 5),
                              detail::delta_pct(b.mean_l_class, clean.mean_l_class), detail::delta_pct(b.mean_l_bb, clean.mean_l_bb)});
            auto j = evalkit::to_json(b);
            j["radius"] = r;
            t.records.push_back(j);
        };
        add(0, clean);
        for (int r : degrade::kBlurRadii) {
            const auto pool = degrade::make_pool(cfg.sweep_family, 0, {r});
            add(r, evalkit::loss_decomposition(m, test, &pool, seed));
        }
    } else if (suite == "table3") {
        t.title = "mAP@0.5 by test image quality";
        t.header = {"Test images"};
        for (const auto& n : cfg.eval_models) t.header.push_back(n);
        t.checkpoints = store.require(cfg.eval_models);
        auto add = [&](const std::string& label, const degrade::DistortionPool* pool) {
            std::vector<std::string> row{label};
            nlohmann::json j = {{"test", label}};
            for (const auto& n : cfg.eval_models) {
                const double v = evalkit::map50(store.get(n), test, pool, seed);
                row.push_back(fixed(100 * v));
                j[n] = v;
            }
            t.rows.push_back(row);
            t.records.push_back(j);
        };
        add("clean", nullptr);
        for (auto f : cfg.eval_families) {
            const auto pool = degrade::make_pool(f, cfg.distortion_seed);
            add(to_string(f), &pool);
        }
    } else if (suite == "table4") {
        if (cfg.cross_models.empty()) throw ConfigError("suite table4 needs eval.cross_models = family:checkpoint,...");
        t.title = "Cross-distortion generalization (mAP@0.5)";
        std::vector<std::pair<std::string, const tinyssd::Detector<float>*>> models;
        for (const auto& [fam, ck] : cfg.cross_models) {
            t.checkpoints.emplace_back(ck, store.id(ck));
            models.emplace_back("trained on " + fam, &store.get(ck));
        }
        const auto m = evalkit::cross_distortion_matrix(models, cfg.eval_families, test, seed, cfg.distortion_seed);
        t.header = {"Model"};
        for (const auto& f : m.families) t.header.push_back(f);
        for (std::size_t i = 0; i < m.models.size(); ++i) {
            std::vector<std::string> row{m.models[i]};
            nlohmann::json j = {{"model", m.models[i]}};
            for (std::size_t k = 0; k < m.families.size(); ++k) {
                row.push_back(fixed(100 * m.map[i][k]));
                j[m.families[k]] = m.map[i][k];
            }
            t.rows.push_back(row);
            t.records.push_back(j);
        }
    } else if (suite == "table5") {
        if (cfg.gank_layers.empty()) throw ConfigError("suite table5 needs eval.gank_layers = block1,...");
        t.title = "Partial retraining (GAN-k), mAP@0.5";
        t.header = {"Trainable up to", "clean", to_string(cfg.family), to_string(cfg.family) + " heavy"};
        const auto pool = cfg.pool();
        const auto heavy = degrade::make_pool(cfg.family, cfg.distortion_seed, cfg.heavy_levels);
        for (const auto& layer : cfg.gank_layers) {
            const std::string name = model_name(advtrain::TrainMode::gando, layer);
            t.checkpoints.emplace_back(name, store.id(name));
            const auto& m = store.get(name);
            const double c = evalkit::map50(m, test, nullptr, seed), d = evalkit::map50(m, test, &pool, seed),
                         h = evalkit::map50(m, test, &heavy, seed);
            t.rows.push_back({layer, fixed(100 * c), fixed(100 * d), fixed(100 * h)});
            t.records.push_back({{"layer", layer}, {"clean", c}, {"degraded", d}, {"heavy", h}});
        }
    } else if (suite == "table6") {
        t.title = "mAP@0.5 by " + to_string(cfg.sweep_family) + " blur radius";
        t.header = {"Model"};
        std::vector<std::string> ticks;
        t.header.push_back("r=0");
        ticks.push_back("0");
        for (int r : degrade::kBlurRadii) {
            t.header.push_back("r=" + std::to_string(r));
            ticks.push_back(std::to_string(r));
        }
        t.checkpoints = store.require(cfg.eval_models);
        std::vector<Series> series;
        for (const auto& n : cfg.eval_models) {
            const auto sweep = evalkit::per_level_sweep(store.get(n), test, cfg.sweep_family, seed);
            std::vector<std::string> row{n};
            nlohmann::json j = {{"model", n}, {"family", to_string(cfg.sweep_family)}};
            Series s{n, {}};
            for (const auto& p : sweep) {
                row.push_back(fixed(100 * p.map));
                j["r" + std::to_string(p.radius)] = p.map;
                s.y.push_back(100 * p.map);
            }
            t.rows.push_back(row);
            t.records.push_back(j);
            series.push_back(std::move(s));
        }
        out.svg = svg_line_plot(t.title, "blur radius r", "mAP@0.5 (%)", ticks, series);
    } else {
        std::string names;
        for (const auto& s : known_suites()) names += (names.empty() ? "" : ", ") + s;
        throw ConfigError("unknown suite '" + suite + "' (known: " + names + ")");
    }
    return out;
}

inline RunRecord cmd_evaluate(const ExperimentConfig& cfg, const std::vector<std::string>& suites) {
    return logged_run(cfg, "evaluate", [&](RunRecord& rec) {
        if (suites.empty()) return;
        for (const auto& s : suites)
            if (std::find(known_suites().begin(), known_suites().end(), s) == known_suites().end()) {
                std::string names;
                for (const auto& k : known_suites()) names += (names.empty() ? "" : ", ") + k;
                throw ConfigError("unknown suite '" + s + "' (known: " + names + ")");
            }
        rec.seeds = {cfg.eval_seed};
        const auto data = require_manifest(cfg);
        const auto test = data.split(synthkit::Split::test);
        ModelStore store(cfg);
        for (const auto& s : suites) {
            const SuiteOutput o = run_suite(s, cfg, test, store);
            for (const auto& [label, id] : o.table.checkpoints) rec.inputs.push_back({"checkpoint", label, id});
            write_artifact(rec, "report", cfg.reports_dir() / (s + ".md"), o.table.markdown());
            write_artifact(rec, "report", cfg.reports_dir() / (s + ".jsonl"), o.table.jsonl());
            if (o.svg) write_artifact(rec, "plot", cfg.reports_dir() / (s + ".svg"), *o.svg);
        }
    });
}

// ---------------------------------------------------------------- distort

/// Degrades every .ppm/.pfm under `input` with level `level` of `family`'s pool; writes PFM copies
/// plus a `.tag.json` sidecar per image.
inline RunRecord cmd_distort(const ExperimentConfig& cfg, const fs::path& input, DistortionFamily family, int level,
                             std::uint64_t seed, const fs::path& out_dir) {
    return logged_run(cfg, "distort", [&](RunRecord& rec) {
        rec.seeds = {seed};
        const auto pool = degrade::make_pool(family, cfg.distortion_seed);
        if (level < 1 || level > pool.size())
            throw LevelError("level " + std::to_string(level) + " outside valid range [1, " + std::to_string(pool.size()) + "] for " +
                             to_string(family));
        std::vector<fs::path> files;
        if (fs::is_directory(input)) {
            for (const auto& e : fs::directory_iterator(input)) {
                const auto ext = e.path().extension().string();
                if (e.is_regular_file() && (ext == ".ppm" || ext == ".pfm")) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
        } else if (fs::exists(input)) {
            files.push_back(input);
        } else {
            throw IoError("input '" + input.string() + "' does not exist");
        }
        for (const auto& f : files) {
            const std::string bytes = read_file(f);
            rec.inputs.push_back({"image", f.string(), content_id(bytes)});
            const Image img = decode_image(bytes, f.string());
            const std::uint64_t s = substream(seed, {fnv1a(f.filename().string())});
            const Image out = degrade::apply_level(img, pool, level, s);
            const fs::path stem = out_dir / f.stem();
            write_artifact(rec, "image", fs::path(stem.string() + ".pfm"), encode_pfm(out));
            const nlohmann::json tag = {{"source", f.filename().string()}, {"is_clean", out.tag.is_clean},
                                        {"family", to_string(family)},      {"level_index", level},
                                        {"seed", s},                        {"pool_seed", cfg.distortion_seed}};
            write_artifact(rec, "tag", fs::path(stem.string() + ".tag.json"), tag.dump(2) + "\n");
        }
    });
}

// ---------------------------------------------------------------- report

/// Collects every rendered suite table into one markdown document.
inline RunRecord cmd_report(const ExperimentConfig& cfg) {
    return logged_run(cfg, "report", [&](RunRecord& rec) {
        std::string doc = "# Experiment " + cfg.id + "\n\nconfig `" + cfg.hash() + "`\n\n";
        int found = 0;
        for (const auto& s : known_suites()) {
            const fs::path p = cfg.reports_dir() / (s + ".md");
            if (!fs::exists(p)) continue;
            const std::string md = read_file(p);
            rec.inputs.push_back({"report", p.string(), content_id(md)});
            doc += md + "\n";
            if (fs::exists(cfg.reports_dir() / (s + ".svg"))) doc += "![" + s + "](" + s + ".svg)\n\n";
            ++found;
        }
        if (!found) throw ConfigError("no suite reports under " + cfg.reports_dir().string() + "; run `gando evaluate` first");
        write_artifact(rec, "report", cfg.reports_dir() / "report.md", doc);
    });
}

} // namespace gando::orchestrator
