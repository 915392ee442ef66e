#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gando/core/error.hpp"
#include "gando/core/hash.hpp"
#include "gando/synthkit/scene.hpp"

namespace gando::synthkit {

enum class Split { train = 0, val = 1, test = 2 };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + s + "'");
}

struct DatasetCounts {
    int train = 8;
    int val = 2;
    int test = 2;

    int of(Split s) const noexcept { return s == Split::train ? train : s == Split::val ? val : test; }
};

struct ManifestRecord {
    Split split = Split::train;
    int index = 0;
    std::uint64_t seed = 0;
    SceneSpec spec;
    std::vector<BoxLabel> labels;
};

struct DatasetManifest {
    std::uint64_t global_seed = 0;
    SceneSpec base_spec;
    DatasetCounts counts;
    std::vector<ManifestRecord> records;

    std::vector<const ManifestRecord*> split(Split s) const {
        std::vector<const ManifestRecord*> out;
        for (const auto& r : records)
            if (r.split == s) out.push_back(&r);
        return out;
    }
};

/// First seed of each split; ranges are consecutive and therefore disjoint.
inline std::array<std::uint64_t, 3> split_seed_bases(std::uint64_t global_seed, const DatasetCounts& counts) {
    const std::uint64_t origin = mix64(global_seed) >> 2;
    return {origin, origin + static_cast<std::uint64_t>(counts.train),
            origin + static_cast<std::uint64_t>(counts.train) + static_cast<std::uint64_t>(counts.val)};
}

/// Per-item scenes draw their object count uniformly from [1, base.num_objects].
inline DatasetManifest generate_dataset(const SceneSpec& base, const DatasetCounts& counts, std::uint64_t seed) {
    base.validate();
    if (counts.train <= 0 || counts.val <= 0 || counts.test <= 0)
        throw ConfigError("dataset split counts must be positive");
    DatasetManifest m;
    m.global_seed = seed;
    m.base_spec = base;
    m.counts = counts;
    const auto bases = split_seed_bases(seed, counts);
    for (Split s : {Split::train, Split::val, Split::test}) {
        const int n = counts.of(s);
        for (int i = 0; i < n; ++i) {
            ManifestRecord r;
            r.split = s;
            r.index = i;
            r.seed = bases[static_cast<int>(s)] + static_cast<std::uint64_t>(i);
            r.spec = base;
            Rng rng = make_rng(r.seed, {0x0b1ec7});
            r.spec.num_objects = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(base.num_objects)));
            r.labels = render_scene(r.spec, r.seed).second;
            m.records.push_back(std::move(r));
        }
    }
    return m;
}

inline Sample render_record(const ManifestRecord& r) {
    auto [img, labels] = render_scene(r.spec, r.seed);
    return {std::move(img), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   gando-manifest 1
//   global_seed <u64>
//   base_spec <canonical spec>
//   spec_hash <hex>
//   counts <train> <val> <test>
//   record <split> <index> <seed> <spec_hash> <num_objects> <n> {<class> <cx> <cy> <w> <h>}*n
// ---------------------------------------------------------------------------

inline std::string serialize_manifest(const DatasetManifest& m) {
    std::ostringstream os;
    os << "gando-manifest 1\n";
    os << "global_seed " << m.global_seed << "\n";
    os << "base_spec " << m.base_spec.canonical() << "\n";
    os << "spec_hash " << hex64(m.base_spec.hash()) << "\n";
    os << "counts " << m.counts.train << " " << m.counts.val << " " << m.counts.test << "\n";
    for (const auto& r : m.records) {
        os << "record " << to_string(r.split) << " " << r.index << " " << r.seed << " " << hex64(r.spec.hash()) << " "
           << r.spec.num_objects << " " << r.labels.size();
        for (const auto& l : r.labels) {
            os << "  " << l.class_id << " " << exact_double(l.box.cx) << " " << exact_double(l.box.cy) << " "
               << exact_double(l.box.w) << " " << exact_double(l.box.h);
        }
        os << "\n";
    }
    return os.str();
}

namespace detail {

inline SceneSpec parse_canonical_spec(const std::string& text) {
    SceneSpec s;
    s.class_set.clear();
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw LoadError("malformed spec token '" + tok + "'");
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "image_size") s.image_size = std::stoi(val);
        else if (key == "num_objects") s.num_objects = std::stoi(val);
        else if (key == "min_side") s.min_object_side = std::stoi(val);
        else if (key == "max_side") s.max_object_side = std::stoi(val);
        else if (key == "octaves") s.background.octaves = std::stoi(val);
        else if (key == "cell") s.background.cell_size = std::stoi(val);
        else if (key == "amplitude") s.background.amplitude = std::stod(val);
        else if (key == "base_lo") s.background.base_lo = std::stod(val);
        else if (key == "base_hi") s.background.base_hi = std::stod(val);
        else if (key == "classes") {
            std::istringstream cs(val);
            std::string c;
            while (std::getline(cs, c, ',')) s.class_set.push_back(parse_shape(c));
        } else {
            throw LoadError("unknown spec key '" + key + "'");
        }
    }
    return s;
}

} // namespace detail

inline DatasetManifest parse_manifest(const std::string& text) {
    DatasetManifest m;
    std::istringstream is(text);
    std::string line;
    std::string expected_hash;
    if (!std::getline(is, line) || line != "gando-manifest 1") throw LoadError("not a gando manifest (bad header)");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "global_seed") {
            ls >> m.global_seed;
        } else if (kind == "base_spec") {
            std::string rest;
            std::getline(ls, rest);
            m.base_spec = detail::parse_canonical_spec(rest);
        } else if (kind == "spec_hash") {
            ls >> expected_hash;
        } else if (kind == "counts") {
            ls >> m.counts.train >> m.counts.val >> m.counts.test;
        } else if (kind == "record") {
            ManifestRecord r;
            std::string split, hash;
            std::size_t n = 0;
            ls >> split >> r.index >> r.seed >> hash >> r.spec.num_objects >> n;
            r.split = parse_split(split);
            const int num_objects = r.spec.num_objects;
            r.spec = m.base_spec;
            r.spec.num_objects = num_objects;
            if (hex64(r.spec.hash()) != hash) throw LoadError("record spec hash mismatch at line: " + line);
            for (std::size_t i = 0; i < n; ++i) {
                BoxLabel l;
                std::string cx, cy, w, h;
                ls >> l.class_id >> cx >> cy >> w >> h;
                l.box = {std::stod(cx), std::stod(cy), std::stod(w), std::stod(h)};
                r.labels.push_back(l);
            }
            if (!ls) throw LoadError("truncated manifest record: " + line);
            m.records.push_back(std::move(r));
        } else {
            throw LoadError("unknown manifest line kind '" + kind + "'");
        }
    }
    if (hex64(m.base_spec.hash()) != expected_hash) throw LoadError("manifest base spec hash mismatch");
    return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open manifest '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

} // namespace gando::synthkit
