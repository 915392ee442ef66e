#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gando/core/error.hpp"
#include "gando/core/fs.hpp"

namespace gando::orchestrator {

inline constexpr const char* kToolVersion = "gando 0.1.0";

struct Artifact {
    std::string role;  // "checkpoint", "manifest", "log", "report", ...
    std::string path;
    std::string id;    // content hash where one exists
};

/// One line of the append-only run ledger.
struct RunRecord {
    std::string command;
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::vector<Artifact> inputs;
    std::vector<Artifact> outputs;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;
    double started_at = 0;      // unix seconds
    double finished_at = 0;
    std::string provenance = kToolVersion;

    nlohmann::json to_json() const {
        auto arts = [](const std::vector<Artifact>& v) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& x : v) a.push_back({{"role", x.role}, {"path", x.path}, {"id", x.id}});
            return a;
        };
        return {{"command", command},       {"config_hash", config_hash}, {"seeds", seeds},
                {"inputs", arts(inputs)},   {"outputs", arts(outputs)},   {"status", status},
                {"error", error},           {"started_at", started_at},   {"finished_at", finished_at},
                {"provenance", provenance}};
    }

    static RunRecord from_json(const nlohmann::json& j) {
        RunRecord r;
        r.command = j.at("command").get<std::string>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        for (const auto& a : j.at("inputs")) r.inputs.push_back({a.at("role"), a.at("path"), a.at("id")});
        for (const auto& a : j.at("outputs")) r.outputs.push_back({a.at("role"), a.at("path"), a.at("id")});
        r.status = j.at("status").get<std::string>();
        r.error = j.at("error").get<std::string>();
        r.started_at = j.at("started_at").get<double>();
        r.finished_at = j.at("finished_at").get<double>();
        r.provenance = j.at("provenance").get<std::string>();
        return r;
    }
};

inline double unix_now() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Appends one JSON line under an exclusive lock so concurrent runs never interleave.
inline void append_run_record(const std::filesystem::path& ledger, const RunRecord& rec) {
    if (ledger.has_parent_path()) std::filesystem::create_directories(ledger.parent_path());
    const std::string line = rec.to_json().dump() + "\n";
    const int fd = ::open(ledger.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("cannot open run ledger " + ledger.string());
    if (::flock(fd, LOCK_EX) != 0) {
        ::close(fd);
        throw IoError("cannot lock run ledger " + ledger.string());
    }
    std::size_t done = 0;
    bool ok = true;
    while (done < line.size()) {
        const auto n = ::write(fd, line.data() + done, line.size() - done);
        if (n <= 0) {
            ok = false;
            break;
        }
        done += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::flock(fd, LOCK_UN);
    ::close(fd);
    if (!ok) throw IoError("short write to run ledger " + ledger.string());
}

inline std::vector<RunRecord> read_run_records(const std::filesystem::path& ledger) {
    std::vector<RunRecord> out;
    if (!std::filesystem::exists(ledger)) return out;
    const std::string text = read_file(ledger);
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        if (nl > pos) out.push_back(RunRecord::from_json(nlohmann::json::parse(text.substr(pos, nl - pos))));
        pos = nl + 1;
    }
    return out;
}

} // namespace gando::orchestrator
