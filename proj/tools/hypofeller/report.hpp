#pragma once

// Report emission: CSV bodies that depend only on the configuration, and one JSON
// metadata sidecar per run that carries everything volatile (timestamps, thread count).

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hypofeller/config.hpp"

namespace hfl::cli {

#ifndef HYPOFELLER_VERSION
#define HYPOFELLER_VERSION "unknown"
#endif

inline constexpr const char* kVersion = HYPOFELLER_VERSION;

class ReportWriter {
public:
    ReportWriter(const ExperimentConfig& config, std::string command, std::filesystem::path dir)
        : config_(&config), command_(std::move(command)), dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        meta_["command"] = command_;
        meta_["config"] = config.source;
        meta_["config_hash"] = config.hash_hex();
        meta_["version"] = kVersion;
        meta_["seed"] = config.seed;
        meta_["tolerances"] = {{"flow_tol", config.flows.flow_tol},
                               {"jacobian_step_ratio", config.flows.jacobian_step_ratio},
                               {"h_max", config.integrator.h_max},
                               {"guard_ratio", config.integrator.guard_ratio},
                               {"rank_safety", config.hormander.rank_safety}};
        meta_["files"] = nlohmann::json::array();
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }

    /// Writes `name` atomically. The body is prefixed by a comment line naming the config hash,
    /// version and tolerances, so it is identical across reruns of the same configuration.
    void csv(const std::string& name, const std::string& body) {
        std::ostringstream os;
        os << "# hypofeller " << kVersion << " config_hash=" << config_->hash_hex() << " seed=" << config_->seed
           << " flow_tol=" << config_->flows.flow_tol << " h_max=" << config_->integrator.h_max
           << " rank_safety=" << config_->hormander.rank_safety << '\n'
           << body;
        write_atomic(dir_ / name, os.str());
        meta_["files"].push_back(name);
    }

    nlohmann::json& summary() { return meta_["summary"]; }

    /// Sidecar `<command>.meta.json`; the only file that carries a timestamp.
    void finish(int exit_code) {
        meta_["exit_code"] = exit_code;
        meta_["threads"] = worker_threads().load();
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        meta_["timestamp"] = stamp;
        write_atomic(dir_ / (command_ + ".meta.json"), meta_.dump(2) + "\n");
    }

    static void write_atomic(const std::filesystem::path& path, const std::string& text) {
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw Error("cannot write " + tmp);
            f << text;
            if (!f) throw Error("cannot write " + tmp);
        }
        std::filesystem::rename(tmp, path);
    }

private:
    const ExperimentConfig* config_;
    std::string command_;
    std::filesystem::path dir_;
    nlohmann::json meta_;
};

}  // namespace hfl::cli
