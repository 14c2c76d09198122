#pragma once

#include <filesystem>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <papergym/providers.hpp>
#include <papergym/util.hpp>

namespace papergym {

// Append-only record of one run: a config snapshot plus named JSONL streams.
// A completed manifest is sufficient to regenerate every report table
// without provider access.
class RunManifest {
public:
    static RunManifest create(const std::filesystem::path& dir, json config_snapshot) {
        std::filesystem::create_directories(dir);
        config_snapshot["created_at"] = now_unix_ms();
        write_text_file(dir / "config.json", config_snapshot.dump(2) + "\n");
        return RunManifest(dir);
    }

    static RunManifest open(const std::filesystem::path& dir) {
        if (!std::filesystem::is_regular_file(dir / "config.json"))
            throw ConfigError("not a run manifest (no config.json): " + dir.string());
        return RunManifest(dir);
    }

    static bool exists(const std::filesystem::path& dir) {
        return std::filesystem::is_regular_file(dir / "config.json");
    }

    const std::filesystem::path& dir() const { return dir_; }

    json config() const { return json::parse(read_text_file(dir_ / "config.json")); }

    void append(const std::string& stream, const json& record) {
        std::lock_guard<std::mutex> lock(mutex_);
        append_jsonl(dir_ / (stream + ".jsonl"), record);
    }

    bool has_stream(const std::string& stream) const {
        return std::filesystem::is_regular_file(dir_ / (stream + ".jsonl"));
    }

    std::vector<json> read_stream(const std::string& stream) const {
        auto path = dir_ / (stream + ".jsonl");
        if (!std::filesystem::is_regular_file(path)) return {};
        return read_jsonl(path);
    }

    // Cell completion markers for crash-resume.
    void mark_cell(const std::string& key) { append("cells", json{{"cell", key}}); }

    std::set<std::string> completed_cells() const {
        std::set<std::string> cells;
        for (const auto& rec : read_stream("cells")) cells.insert(rec.at("cell").get<std::string>());
        return cells;
    }

    // Write-ahead provider logging into the provider_calls stream.
    CallLog& call_log() { return log_; }

    void write_report(const std::string& name, const std::string& text) {
        write_text_file(dir_ / "reports" / name, text);
    }

    std::filesystem::path report_path(const std::string& name) const {
        return dir_ / "reports" / name;
    }

private:
    class ManifestCallLog : public CallLog {
    public:
        explicit ManifestCallLog(RunManifest* owner) : owner_(owner) {}
        void record(const json& event) override { owner_->append("provider_calls", event); }

    private:
        RunManifest* owner_;
    };

    explicit RunManifest(std::filesystem::path dir) : dir_(std::move(dir)), log_(this) {}

    std::filesystem::path dir_;
    std::mutex mutex_;
    ManifestCallLog log_;
};

// Strips volatile timing fields so two mock runs can be compared byte-wise.
inline json normalize_manifest_record(json record) {
    static const std::set<std::string> volatile_keys = {"created_at", "latency_ms", "elapsed_ms",
                                                        "elapsed_s", "ts"};
    if (record.is_object()) {
        for (auto& [key, value] : record.items()) {
            if (volatile_keys.count(key)) {
                value = 0;
            } else {
                value = normalize_manifest_record(value);
            }
        }
    } else if (record.is_array()) {
        for (auto& item : record) item = normalize_manifest_record(item);
    }
    return record;
}

}  // namespace papergym
