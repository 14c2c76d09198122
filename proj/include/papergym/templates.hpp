#pragma once

#include <filesystem>
#include <map>
#include <regex>
#include <string>

#include <papergym/util.hpp>

namespace papergym {

// Versioned prompt templates. Files are named `<name>_v<N>.txt`; the store
// serves the highest version per name and reports versions + content hashes
// for the manifest. Placeholders use {{key}} syntax.
class TemplateStore {
public:
    struct Entry {
        std::string name;
        std::string version;  // "v<N>"
        std::string text;
        std::string content_hash;
    };

    explicit TemplateStore(const std::filesystem::path& dir) : dir_(dir) {
        if (!std::filesystem::is_directory(dir))
            throw ConfigError("template directory not found: " + dir.string());
        static const std::regex file_re(R"((.+)_v(\d+)\.txt)");
        for (const auto& de : std::filesystem::directory_iterator(dir)) {
            if (!de.is_regular_file()) continue;
            std::smatch m;
            const std::string fname = de.path().filename().string();
            if (!std::regex_match(fname, m, file_re)) continue;
            const std::string name = m[1];
            const int version = std::stoi(m[2]);
            auto it = versions_.find(name);
            if (it == versions_.end() || it->second < version) versions_[name] = version;
        }
        for (const auto& [name, version] : versions_) {
            Entry e;
            e.name = name;
            e.version = "v" + std::to_string(version);
            e.text = read_text_file(dir / (name + "_" + e.version + ".txt"));
            e.content_hash = to_hex64(fnv1a64(e.text));
            entries_[name] = std::move(e);
        }
    }

    bool has(const std::string& name) const { return entries_.count(name) > 0; }

    const Entry& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ConfigError("unknown template: " + name);
        return it->second;
    }

    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& vars) const {
        std::string out = get(name).text;
        for (const auto& [key, value] : vars) out = replace_all(out, "{{" + key + "}}", value);
        size_t leftover = out.find("{{");
        if (leftover != std::string::npos) {
            size_t end = out.find("}}", leftover);
            std::string token = out.substr(leftover, end == std::string::npos
                                                         ? std::string::npos
                                                         : end - leftover + 2);
            throw ConfigError("template " + name + ": unbound placeholder " + token);
        }
        return out;
    }

    // name -> {version, hash}; recorded in every run manifest.
    json versions_json() const {
        json out = json::object();
        for (const auto& [name, e] : entries_)
            out[name] = {{"version", e.version}, {"hash", e.content_hash}};
        return out;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : entries_) out.push_back(name);
        return out;
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::map<std::string, int> versions_;
    std::map<std::string, Entry> entries_;
};

// Point rubrics carry this sentence verbatim; a lint test enforces it.
inline constexpr const char* kTieDefaultSentence =
    "If torn between two adjacent anchors, default to the lower score.";

}  // namespace papergym
