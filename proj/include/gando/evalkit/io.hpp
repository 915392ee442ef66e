#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gando/core/error.hpp"
#include "gando/evalkit/analysis.hpp"
#include "gando/evalkit/metrics.hpp"

namespace gando::evalkit {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const APReport& r) {
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& c : r.per_class)
        pc.push_back({{"class_id", c.class_id}, {"ap50", opt_json(c.ap)}, {"num_gt", c.num_gt}, {"num_det", c.num_det}});
    nlohmann::json at = nlohmann::json::array();
    for (const auto& v : r.map_at) at.push_back(opt_json(v));
    return {{"type", "ap_report"},         {"interpolation", r.interpolation}, {"per_class", pc},
            {"map50", opt_json(r.map50)},  {"map75", opt_json(r.map75)},       {"map_avg", opt_json(r.map_avg)},
            {"map_at", at},                {"ap_small", opt_json(r.ap_small)}, {"ap_medium", opt_json(r.ap_medium)},
            {"ap_large", opt_json(r.ap_large)}, {"num_gt", r.num_gt},          {"num_det", r.num_det}};
}

inline nlohmann::json to_json(const LossBreakdown& b) {
    return {{"type", "loss_breakdown"}, {"family", b.family}, {"mean_l_class", b.mean_l_class},
            {"mean_l_bb", b.mean_l_bb},  {"images", b.images}};
}

/// Detection dump: one JSON object per line {image, class_id, score, cx, cy, w, h}.
inline std::string write_detections(const std::vector<ImageDetections>& dets) {
    std::string s;
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (const auto& d : dets[i])
            s += nlohmann::json{{"image", i},      {"class_id", d.class_id}, {"score", d.score}, {"cx", d.box.cx},
                                {"cy", d.box.cy},  {"w", d.box.w},           {"h", d.box.h}}
                     .dump() +
                 "\n";
    return s;
}

inline std::vector<ImageDetections> read_detections(const std::string& text, std::size_t num_images = 0) {
    std::vector<ImageDetections> out(num_images);
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw LoadError("malformed detection record: " + line);
        const std::size_t img = j.at("image").get<std::size_t>();
        if (img >= out.size()) out.resize(img + 1);
        out[img].push_back({j.at("class_id").get<int>(), j.at("score").get<double>(),
                            Box{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()}});
    }
    return out;
}

} // namespace gando::evalkit
