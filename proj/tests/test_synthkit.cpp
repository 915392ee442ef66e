#include <map>
#include <set>

#include <gtest/gtest.h>

#include "gando/synthkit/dataset.hpp"

using namespace gando;
using namespace gando::synthkit;

namespace {
SceneSpec spec_with(int objects) {
    SceneSpec s;
    s.num_objects = objects;
    return s;
}
} // namespace

TEST(RenderScene, DeterministicInSeed) {
    const auto a = render_scene(spec_with(1), 7), b = render_scene(spec_with(1), 7);
    EXPECT_EQ(a.first.pixels, b.first.pixels);
    ASSERT_EQ(a.second.size(), b.second.size());
    for (std::size_t i = 0; i < a.second.size(); ++i) {
        EXPECT_EQ(a.second[i].class_id, b.second[i].class_id);
        EXPECT_EQ(a.second[i].box.cx, b.second[i].box.cx);
        EXPECT_EQ(a.second[i].box.w, b.second[i].box.w);
    }
}

TEST(RenderScene, SeedSensitive) {
    EXPECT_NE(render_scene(spec_with(1), 7).first.pixels, render_scene(spec_with(1), 8).first.pixels);
}

TEST(RenderScene, InvariantsOverManySeeds) {
    const SceneSpec spec = spec_with(4);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto [img, labels] = render_scene(spec, seed);
        ASSERT_EQ(static_cast<int>(labels.size()), 4);
        for (float p : img.pixels) {
            ASSERT_GE(p, 0.0f);
            ASSERT_LE(p, 1.0f);
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const Box& b = labels[i].box;
            ASSERT_GE(b.x0(), 0.0) << seed;
            ASSERT_LE(b.x1(), 1.0) << seed;
            ASSERT_GE(b.y0(), 0.0) << seed;
            ASSERT_LE(b.y1(), 1.0) << seed;
            ASSERT_GT(b.w, 0.0);
            ASSERT_LE(b.w, 1.0);
            ASSERT_GE(std::min(b.w, b.h) * spec.image_size, spec.min_object_side - 1e-6) << seed;
            ASSERT_GE(labels[i].class_id, 0);
            ASSERT_LT(labels[i].class_id, spec.num_classes());
            for (std::size_t j = i + 1; j < labels.size(); ++j) ASSERT_LT(iou(b, labels[j].box), 0.3) << seed;
        }
    }
}

TEST(RenderScene, ObjectColorDiffersFromBackground) {
    // The object interior must differ from the background mean by >= 0.2 in some channel.
    SceneSpec spec = spec_with(1);
    spec.background.amplitude = 0.0;  // flat background makes the mean exact
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto [img, labels] = render_scene(spec, seed);
        const Box& b = labels[0].box;
        const int cx = static_cast<int>(b.cx * spec.image_size), cy = static_cast<int>(b.cy * spec.image_size);
        double best = 0;
        for (int c = 0; c < 3; ++c) best = std::max(best, std::abs(static_cast<double>(img.at(cy, cx, c) - img.at(0, 0, c))));
        EXPECT_GE(best, 0.2 - 1e-6) << seed;
    }
}

TEST(RenderScene, InvalidSpecRejected) {
    SceneSpec s;
    s.num_objects = 5;
    EXPECT_THROW(render_scene(s, 1), ConfigError);
}

TEST(RenderScene, ImpossiblePlacementNamesSeed) {
    SceneSpec s;
    s.num_objects = 4;
    s.min_object_side = 60;
    s.max_object_side = 90;
    try {
        render_scene(s, 1234);
        FAIL() << "expected a placement error";
    } catch (const PlacementError& e) {
        EXPECT_NE(std::string(e.what()).find("1234"), std::string::npos);
    }
}

TEST(GenerateDataset, CountsAndSplits) {
    const auto m = generate_dataset(spec_with(2), {8, 2, 2}, 1);
    EXPECT_EQ(m.records.size(), 12u);
    EXPECT_EQ(m.split(Split::train).size(), 8u);
    EXPECT_EQ(m.split(Split::val).size(), 2u);
    EXPECT_EQ(m.split(Split::test).size(), 2u);
}

TEST(GenerateDataset, DeterministicAndSeedSensitive) {
    const auto a = serialize_manifest(generate_dataset(spec_with(3), {20, 5, 5}, 9));
    EXPECT_EQ(a, serialize_manifest(generate_dataset(spec_with(3), {20, 5, 5}, 9)));
    EXPECT_NE(a, serialize_manifest(generate_dataset(spec_with(3), {20, 5, 5}, 10)));
}

TEST(GenerateDataset, SplitsDisjointBySeed) {
    const auto m = generate_dataset(spec_with(1), {50, 20, 20}, 3);
    std::map<Split, std::set<std::uint64_t>> seeds;
    for (const auto& r : m.records) seeds[r.split].insert(r.seed);
    for (auto a : {Split::train, Split::val, Split::test})
        for (auto b : {Split::train, Split::val, Split::test})
            if (a != b)
                for (auto s : seeds[a]) EXPECT_EQ(seeds[b].count(s), 0u);
}

TEST(GenerateDataset, ClassFrequencyNearUniform) {
    const auto m = generate_dataset(spec_with(1), {3000, 1, 1}, 21);
    std::array<int, 3> counts{};
    for (const auto* r : m.split(Split::train))
        for (const auto& l : r->labels) ++counts[static_cast<std::size_t>(l.class_id)];
    for (int c : counts) {
        EXPECT_GE(c, 900);
        EXPECT_LE(c, 1100);
    }
}

TEST(GenerateDataset, RegenerationReproducesLabels) {
    const auto m = generate_dataset(spec_with(4), {30, 5, 5}, 5);
    for (const auto& r : m.records) {
        const auto [img, labels] = render_scene(r.spec, r.seed);
        ASSERT_EQ(labels.size(), r.labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            EXPECT_EQ(labels[i].class_id, r.labels[i].class_id);
            EXPECT_EQ(labels[i].box.cx, r.labels[i].box.cx);
            EXPECT_EQ(labels[i].box.cy, r.labels[i].box.cy);
            EXPECT_EQ(labels[i].box.w, r.labels[i].box.w);
            EXPECT_EQ(labels[i].box.h, r.labels[i].box.h);
        }
    }
}

TEST(Manifest, TextRoundTrip) {
    const auto m = generate_dataset(spec_with(4), {10, 3, 3}, 77);
    const std::string text = serialize_manifest(m);
    const auto back = parse_manifest(text);
    EXPECT_EQ(serialize_manifest(back), text);
    ASSERT_EQ(back.records.size(), m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        EXPECT_EQ(back.records[i].seed, m.records[i].seed);
        EXPECT_EQ(render_record(back.records[i]).image.pixels, render_record(m.records[i]).image.pixels);
    }
}

TEST(Manifest, CorruptHashRejected) {
    std::string text = serialize_manifest(generate_dataset(spec_with(1), {2, 1, 1}, 1));
    const auto pos = text.find("record train 0 ");
    ASSERT_NE(pos, std::string::npos);
    // flip a digit of the first record's spec hash (fifth field)
    auto fields_start = pos;
    for (int k = 0; k < 4; ++k) fields_start = text.find(' ', fields_start + 1);
    char& c = text[fields_start + 1];
    c = c == '0' ? '1' : '0';
    EXPECT_THROW(parse_manifest(text), LoadError);
}
