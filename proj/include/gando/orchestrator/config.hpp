#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gando/advtrain/trainer.hpp"
#include "gando/core/error.hpp"
#include "gando/core/fs.hpp"
#include "gando/core/hash.hpp"
#include "gando/degrade/pool.hpp"
#include "gando/synthkit/dataset.hpp"
#include "gando/tinyssd/detector.hpp"

namespace gando::orchestrator {

/// Flat `key = value` configuration. Lines starting with '#' are comments.
/// Precedence: command-line overrides > file > built-in defaults.
class KeyValues {
public:
    static KeyValues parse(const std::string& text) {
        KeyValues kv;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return kv;
    }

    static KeyValues load(const std::filesystem::path& path) { return parse(read_file(path)); }

    void set(const std::string& key, const std::string& value) {
        if (key.empty()) throw ConfigError("empty config key");
        values_[key] = value;
    }

    /// Applies a `key=value` override.
    void set_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like key=value");
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::optional<std::string> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::string str(const std::string& key, const std::string& def) const { return get(key).value_or(def); }

    long long integer(const std::string& key, long long def) const {
        const auto v = get(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const long long r = std::stoll(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing");
            return r;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects an integer, got '" + *v + "'");
        }
    }

    std::uint64_t u64(const std::string& key, std::uint64_t def) const {
        const auto v = get(key);
        if (!v) return def;
        try {
            return std::stoull(*v);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + *v + "'");
        }
    }

    double real(const std::string& key, double def) const {
        const auto v = get(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const double r = std::stod(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing");
            return r;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' expects a number, got '" + *v + "'");
        }
    }

    std::vector<std::string> list(const std::string& key, const std::vector<std::string>& def = {}) const {
        const auto v = get(key);
        if (!v) return def;
        std::vector<std::string> out;
        std::istringstream is(*v);
        std::string item;
        while (std::getline(is, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    std::vector<int> int_list(const std::string& key, const std::vector<int>& def = {}) const {
        if (!has(key)) return def;
        std::vector<int> out;
        for (const auto& s : list(key)) {
            try {
                out.push_back(std::stoi(s));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "' expects integers, got '" + s + "'");
            }
        }
        return out;
    }

    std::vector<double> real_list(const std::string& key, const std::vector<double>& def = {}) const {
        if (!has(key)) return def;
        std::vector<double> out;
        for (const auto& s : list(key)) {
            try {
                out.push_back(std::stod(s));
            } catch (const std::exception&) {
                throw ConfigError("config key '" + key + "' expects numbers, got '" + s + "'");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
};

/// Fully resolved experiment configuration.
struct ExperimentConfig {
    std::string id = "experiment";
    std::filesystem::path output_dir = "runs/experiment";

    synthkit::SceneSpec scene;
    synthkit::DatasetCounts counts;
    std::uint64_t data_seed = 0;

    DistortionFamily family = DistortionFamily::defocus;
    std::vector<int> levels;  // empty: the family's full pool
    std::uint64_t distortion_seed = 0;

    tinyssd::DetectorConfig arch;

    std::vector<std::string> suites;
    std::uint64_t eval_seed = 0;
    std::vector<int> heavy_levels{8, 10, 12};
    std::vector<DistortionFamily> eval_families{DistortionFamily::gaussian, DistortionFamily::defocus, DistortionFamily::camshake,
                                                DistortionFamily::awgn};
    DistortionFamily sweep_family = DistortionFamily::gaussian;
    std::vector<std::string> eval_models{"baseline", "finetune", "gando"};
    std::vector<std::pair<std::string, std::string>> cross_models;  // family -> checkpoint path
    std::vector<std::string> gank_layers;

    KeyValues raw;  // the merged key/values (for per-mode training lookups)

    degrade::DistortionPool pool() const { return degrade::make_pool(family, distortion_seed, levels); }

    /// TrainConfig for a mode: `<mode>.<key>` beats `train.<key>` beats the mode default.
    advtrain::TrainConfig train_config(advtrain::TrainMode mode) const {
        auto c = advtrain::TrainConfig::for_mode(mode);
        const std::string m = advtrain::to_string(mode);
        auto key = [&](const std::string& k) -> std::string { return raw.has(m + "." + k) ? m + "." + k : "train." + k; };
        c.lambda = raw.real(key("lambda"), c.lambda);
        c.lr = raw.real(key("lr"), mode == advtrain::TrainMode::baseline ? 1e-3 : c.lr);
        c.lr_d = raw.real(key("lr_d"), c.lr_d);
        c.beta1 = raw.real(key("beta1"), c.beta1);
        c.beta2 = raw.real(key("beta2"), c.beta2);
        c.beta1_d = raw.real(key("beta1_d"), c.beta1_d);
        c.beta2_d = raw.real(key("beta2_d"), c.beta2_d);
        c.adam_eps = raw.real(key("adam_eps"), c.adam_eps);
        c.patience = static_cast<int>(raw.integer(key("patience"), c.patience));
        c.decay_factor = raw.real(key("decay_factor"), c.decay_factor);
        c.max_decays = static_cast<int>(raw.integer(key("max_decays"), c.max_decays));
        c.batch_size = static_cast<int>(raw.integer(key("batch_size"), c.batch_size));
        c.d_period = static_cast<int>(raw.integer(key("d_period"), c.d_period));
        c.freeze_after = raw.str(key("freeze_after"), c.freeze_after);
        c.max_epochs = static_cast<int>(raw.integer(key("max_epochs"), c.max_epochs));
        c.iterations_per_epoch = static_cast<int>(raw.integer(key("iterations_per_epoch"), c.iterations_per_epoch));
        c.seed = raw.u64(key("seed"), substream(data_seed, {static_cast<std::uint64_t>(mode) + 1}));
        const std::string sched = raw.str(key("schedule"), "plateau");
        if (sched == "plateau") c.schedule = advtrain::Schedule::plateau;
        else if (sched == "two_phase") c.schedule = advtrain::Schedule::two_phase;
        else throw ConfigError("train.schedule must be plateau or two_phase, got '" + sched + "'");
        c.two_phase_epoch = static_cast<int>(raw.integer(key("two_phase_epoch"), c.two_phase_epoch));
        c.d_init_std = raw.real(key("d_init_std"), c.d_init_std);
        c.loss.alpha = raw.real(key("alpha"), c.loss.alpha);
        c.loss.neg_pos_ratio = static_cast<int>(raw.integer(key("neg_pos_ratio"), c.loss.neg_pos_ratio));
        c.validate();
        return c;
    }

    /// Canonical dump of every resolved value; sorted, so independent of file key order.
    std::string canonical() const {
        std::map<std::string, std::string> kv = raw.values();
        kv["_resolved.scene"] = scene.canonical();
        kv["_resolved.arch"] = arch.canonical();
        kv["_resolved.counts"] =
            std::to_string(counts.train) + "," + std::to_string(counts.val) + "," + std::to_string(counts.test);
        kv["_resolved.data_seed"] = std::to_string(data_seed);
        kv["_resolved.distortion"] = to_string(family) + ":" + std::to_string(distortion_seed);
        kv.erase("output.dir");  // where results go does not change what they are
        kv.erase("eval.suites");
        std::string s;
        for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
        return s;
    }

    std::string hash() const { return hex64(fnv1a(canonical())); }

    std::filesystem::path manifest_path() const { return output_dir / "manifest.txt"; }
    std::filesystem::path checkpoint_path(const std::string& name) const { return output_dir / "checkpoints" / (name + ".ckpt"); }
    std::filesystem::path log_path(const std::string& name) const { return output_dir / "logs" / (name + ".jsonl"); }
    std::filesystem::path reports_dir() const { return output_dir / "reports"; }
    std::filesystem::path ledger_path() const { return output_dir / "runs.jsonl"; }
};

/// Documented key schema with defaults; see README for the full table.
inline ExperimentConfig resolve_config(const KeyValues& kv) {
    ExperimentConfig c;
    c.raw = kv;
    c.id = kv.str("experiment.id", c.id);
    c.output_dir = kv.str("output.dir", "runs/" + c.id);
    if (const char* root = std::getenv("GANDO_OUTPUT_ROOT"); root && *root) c.output_dir = std::filesystem::path(root) / c.id;

    c.scene.image_size = static_cast<int>(kv.integer("data.image_size", 96));
    c.scene.num_objects = static_cast<int>(kv.integer("data.max_objects", 4));
    if (kv.has("data.classes")) {
        c.scene.class_set.clear();
        for (const auto& s : kv.list("data.classes")) c.scene.class_set.push_back(synthkit::parse_shape(s));
    }
    c.scene.min_object_side = static_cast<int>(kv.integer("data.min_side", 12));
    c.scene.max_object_side = static_cast<int>(kv.integer("data.max_side", 48));
    c.scene.background.octaves = static_cast<int>(kv.integer("data.texture.octaves", c.scene.background.octaves));
    c.scene.background.cell_size = static_cast<int>(kv.integer("data.texture.cell", c.scene.background.cell_size));
    c.scene.background.amplitude = kv.real("data.texture.amplitude", c.scene.background.amplitude);
    c.scene.validate();
    c.counts.train = static_cast<int>(kv.integer("data.train", 2000));
    c.counts.val = static_cast<int>(kv.integer("data.val", 200));
    c.counts.test = static_cast<int>(kv.integer("data.test", 400));
    c.data_seed = kv.u64("data.seed", 0);

    c.family = parse_family(kv.str("distortion.family", "defocus"));
    c.levels = kv.int_list("distortion.levels");
    c.distortion_seed = kv.u64("distortion.seed", 0);

    c.arch.image_size = c.scene.image_size;
    c.arch.num_classes = c.scene.num_classes();
    if (kv.has("model.widths")) {
        const auto w = kv.int_list("model.widths");
        if (w.size() != 4) throw ConfigError("model.widths needs exactly 4 values");
        for (int i = 0; i < 4; ++i) c.arch.widths[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)];
    }
    c.arch.aspect_ratios = kv.real_list("model.aspect_ratios", c.arch.aspect_ratios);
    c.arch.anchor_scales = kv.real_list("model.anchor_scales", c.arch.anchor_scales);
    c.arch.activation = tinyssd::parse_activation(kv.str("model.activation", tinyssd::to_string(c.arch.activation)));
    c.arch.init_seed = kv.u64("model.init_seed", substream(c.data_seed, {0x1a17}));
    c.arch.validate();

    c.suites = kv.list("eval.suites");
    c.eval_seed = kv.u64("eval.seed", substream(c.data_seed, {0xe7a1}));
    c.heavy_levels = kv.int_list("eval.heavy_levels", c.heavy_levels);
    if (kv.has("eval.families")) {
        c.eval_families.clear();
        for (const auto& f : kv.list("eval.families")) c.eval_families.push_back(parse_family(f));
    }
    c.sweep_family = parse_family(kv.str("eval.sweep_family", "gaussian"));
    c.eval_models = kv.list("eval.models", c.eval_models);
    for (const auto& item : kv.list("eval.cross_models")) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("eval.cross_models entries look like family:checkpoint_name");
        c.cross_models.emplace_back(item.substr(0, colon), item.substr(colon + 1));
    }
    c.gank_layers = kv.list("eval.gank_layers");
    return c;
}

} // namespace gando::orchestrator
