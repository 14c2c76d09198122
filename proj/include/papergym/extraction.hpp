#pragma once

#include <fcntl.h>
#include <fnmatch.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <papergym/judges.hpp>
#include <papergym/providers.hpp>
#include <papergym/seed_store.hpp>
#include <papergym/templates.hpp>

namespace papergym {

// ---------------------------------------------------------------------------
// Sandbox
// ---------------------------------------------------------------------------

enum class IsolationBackend { container, restricted_subprocess };

inline const char* isolation_backend_name(IsolationBackend b) {
    return b == IsolationBackend::container ? "container" : "restricted-subprocess";
}

struct SandboxLimits {
    size_t output_cap = 8000;      // chars per tool result
    int64_t bash_timeout_ms = 10000;
    size_t grep_max_lines = 200;
};

// One paper's isolated working directory. All tool operations resolve
// strictly inside root; escape attempts are refused and recorded.
class Sandbox {
public:
    Sandbox(std::filesystem::path root, IsolationBackend backend, SandboxLimits limits = {})
        : root_(std::filesystem::weakly_canonical(root)), backend_(backend), limits_(limits) {
        if (!std::filesystem::is_directory(root_))
            throw SandboxError("sandbox root does not exist: " + root_.string());
    }

    const std::filesystem::path& root() const { return root_; }
    IsolationBackend backend() const { return backend_; }
    const SandboxLimits& limits() const { return limits_; }
    const std::vector<std::string>& violations() const { return violations_; }
    void record_violation(const std::string& v) { violations_.push_back(v); }

    // Resolves a tool-supplied relative path; refuses anything that escapes.
    std::optional<std::filesystem::path> resolve(const std::string& rel) {
        if (rel.empty() || rel.front() == '/' || rel.front() == '~') {
            record_violation("path escape refused: " + rel);
            return std::nullopt;
        }
        auto resolved = std::filesystem::weakly_canonical(root_ / rel);
        auto root_str = root_.string();
        auto res_str = resolved.string();
        if (res_str.compare(0, root_str.size(), root_str) != 0 ||
            (res_str.size() > root_str.size() && res_str[root_str.size()] != '/')) {
            record_violation("path escape refused: " + rel);
            return std::nullopt;
        }
        return resolved;
    }

private:
    std::filesystem::path root_;
    IsolationBackend backend_;
    SandboxLimits limits_;
    std::vector<std::string> violations_;
};

// Creates per-paper sandboxes from paper bundles (directories holding
// paper.md and an optional repo_url file).
struct PaperBundle {
    std::string paper_id;
    std::filesystem::path dir;
};

class SandboxFactory {
public:
    SandboxFactory(std::filesystem::path work_root, IsolationBackend backend,
                   bool allow_network_clone = false, SandboxLimits limits = {})
        : work_root_(std::move(work_root)),
          backend_(backend),
          allow_clone_(allow_network_clone),
          limits_(limits) {}

    // Copies the bundle into a fresh sandbox directory. A repo_url file
    // triggers the one-time clone when network use is allowed; a failed or
    // skipped clone is recorded and extraction proceeds on the paper text.
    Sandbox create(const PaperBundle& bundle, std::vector<std::string>* notes = nullptr) const {
        if (!std::filesystem::is_regular_file(bundle.dir / "paper.md"))
            throw SandboxError("bundle " + bundle.paper_id + ": missing paper.md");
        auto root = work_root_ / ("sandbox_" + sanitize(bundle.paper_id));
        std::filesystem::remove_all(root);
        std::filesystem::create_directories(root);
        std::filesystem::copy(bundle.dir, root,
                              std::filesystem::copy_options::recursive |
                                  std::filesystem::copy_options::overwrite_existing);

        auto url_file = bundle.dir / "repo_url";
        if (std::filesystem::is_regular_file(url_file)) {
            const std::string url = trim(read_text_file(url_file));
            if (!allow_clone_) {
                if (notes) notes->push_back("repo clone skipped (network disabled): " + url);
            } else {
                std::string cmd = "git clone --depth 1 " + url + " repo";
                int rc = std::system(("cd " + root.string() + " && " + cmd + " >/dev/null 2>&1").c_str());
                if (notes)
                    notes->push_back(rc == 0 ? "repo cloned: " + url
                                             : "repo clone failed (continuing): " + url);
            }
        }
        return Sandbox(root, backend_, limits_);
    }

private:
    static std::string sanitize(const std::string& s) {
        std::string out;
        for (char c : s)
            out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
        return out;
    }

    std::filesystem::path work_root_;
    IsolationBackend backend_;
    bool allow_clone_;
    SandboxLimits limits_;
};

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

struct ToolCall {
    std::string tool;  // "read" | "grep" | "bash"
    json arguments;
    std::string output;
    int step_index = 0;
    bool refused = false;
    bool timed_out = false;
};

inline void to_json(json& j, const ToolCall& t) {
    j = json{{"tool", t.tool},        {"arguments", t.arguments}, {"output", t.output},
             {"step_index", t.step_index}};
    if (t.refused) j["refused"] = true;
    if (t.timed_out) j["timed_out"] = true;
}

namespace extraction_detail {

inline std::string truncate_output(std::string text, size_t cap) {
    if (text.size() <= cap) return text;
    text.resize(cap);
    return text + "\n...[truncated]";
}

// Lexical guard for bash commands in the restricted backend: no absolute
// paths, no parent-directory segments, no network utilities.
inline std::optional<std::string> bash_violation(const std::string& command) {
    static const std::vector<std::string> net_cmds = {"curl", "wget", "nc",  "netcat", "ssh",
                                                      "scp",  "ping", "git", "ftp"};
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : command) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ';' || c == '|' || c == '&' ||
            c == '(' || c == ')' || c == '<' || c == '>' || c == '\'' || c == '"' || c == '`') {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);

    for (const auto& tok : tokens) {
        if (tok.front() == '/' || tok.front() == '~') return "absolute path: " + tok;
        if (tok == ".." || tok.rfind("../", 0) == 0 || contains(tok, "/../") ||
            (tok.size() >= 3 && tok.compare(tok.size() - 3, 3, "/..") == 0))
            return "parent-directory path: " + tok;
        if (contains(tok, "=/")) return "absolute path: " + tok;
        for (const auto& net : net_cmds)
            if (tok == net) return "network command: " + tok;
    }
    return std::nullopt;
}

struct BashOutcome {
    std::string output;
    bool timed_out = false;
    int exit_code = 0;
};

// Runs `/bin/sh -c command` confined to the sandbox root: fresh process
// group, minimal environment, CPU/file-size rlimits, wall-clock kill.
inline BashOutcome run_restricted(const std::filesystem::path& root, const std::string& command,
                                  int64_t timeout_ms) {
    int fds[2];
    if (pipe(fds) != 0) throw SandboxError("pipe() failed");
    pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw SandboxError("fork() failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        close(fds[0]);
        dup2(fds[1], STDOUT_FILENO);
        dup2(fds[1], STDERR_FILENO);
        close(fds[1]);
        if (chdir(root.c_str()) != 0) _exit(127);

        struct rlimit cpu{static_cast<rlim_t>(timeout_ms / 1000 + 2),
                          static_cast<rlim_t>(timeout_ms / 1000 + 2)};
        setrlimit(RLIMIT_CPU, &cpu);
        struct rlimit fsize{16 * 1024 * 1024, 16 * 1024 * 1024};
        setrlimit(RLIMIT_FSIZE, &fsize);
        struct rlimit nproc{64, 64};
        setrlimit(RLIMIT_NPROC, &nproc);

        const char* sh = "/bin/sh";
        char* const argv[] = {const_cast<char*>("sh"), const_cast<char*>("-c"),
                              const_cast<char*>(command.c_str()), nullptr};
        char* const envp[] = {const_cast<char*>("PATH=/usr/bin:/bin"),
                              const_cast<char*>("LC_ALL=C"), nullptr};
        execve(sh, argv, envp);
        _exit(127);
    }

    close(fds[1]);
    BashOutcome out;
    std::string buffer;
    const int64_t deadline = now_unix_ms() + timeout_ms;
    char chunk[4096];
    for (;;) {
        int64_t remain = deadline - now_unix_ms();
        if (remain <= 0) {
            out.timed_out = true;
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
        }
        struct pollfd pfd{fds[0], POLLIN, 0};
        int pr = poll(&pfd, 1, out.timed_out ? 100 : static_cast<int>(std::min<int64_t>(remain, 250)));
        if (pr > 0) {
            ssize_t n = ::read(fds[0], chunk, sizeof(chunk));
            if (n > 0) {
                buffer.append(chunk, static_cast<size_t>(n));
                continue;
            }
            break;  // EOF
        }
        if (out.timed_out) break;
    }
    close(fds[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    out.output = std::move(buffer);
    return out;
}

inline std::vector<std::filesystem::path> matching_files(const std::filesystem::path& root,
                                                         const std::string& pattern) {
    std::vector<std::filesystem::path> files;
    for (auto it = std::filesystem::recursive_directory_iterator(root);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        auto rel = std::filesystem::relative(it->path(), root).string();
        if (pattern.empty() || fnmatch(pattern.c_str(), rel.c_str(), 0) == 0 ||
            fnmatch(pattern.c_str(), it->path().filename().c_str(), 0) == 0)
            files.push_back(it->path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace extraction_detail

// Executes one validated tool call inside the sandbox. Escape attempts come
// back refused (with a violation recorded); missing files and empty grep
// results are ordinary outputs so the agent loop can continue.
inline ToolCall tool_exec(Sandbox& sandbox, const std::string& tool, const json& arguments,
                          int step_index) {
    using extraction_detail::truncate_output;
    ToolCall call;
    call.tool = tool;
    call.arguments = arguments;
    call.step_index = step_index;
    const auto& limits = sandbox.limits();

    if (tool == "read") {
        const std::string rel = arguments.value("path", "");
        auto path = sandbox.resolve(rel);
        if (!path) {
            call.refused = true;
            call.output = "(refused: path escapes sandbox: " + rel + ")";
            return call;
        }
        if (!std::filesystem::is_regular_file(*path)) {
            call.output = "(error: no such file: " + rel + ")";
            return call;
        }
        auto lines = split_lines(read_text_file(*path));
        size_t start = arguments.contains("start") ? arguments["start"].get<size_t>() : 1;
        size_t end = arguments.contains("end") ? arguments["end"].get<size_t>() : lines.size();
        if (start < 1) start = 1;
        if (end > lines.size()) end = lines.size();
        std::string out;
        for (size_t i = start; i <= end && i <= lines.size(); ++i) out += lines[i - 1] + "\n";
        call.output = truncate_output(out, limits.output_cap);
        return call;
    }

    if (tool == "grep") {
        const std::string pattern = arguments.value("pattern", "");
        const std::string where = arguments.value("path", "");
        if (pattern.empty()) {
            call.output = "(error: empty pattern)";
            return call;
        }
        std::vector<std::filesystem::path> files;
        if (!where.empty() && where.find('*') == std::string::npos) {
            auto path = sandbox.resolve(where);
            if (!path) {
                call.refused = true;
                call.output = "(refused: path escapes sandbox: " + where + ")";
                return call;
            }
            if (std::filesystem::is_regular_file(*path)) files.push_back(*path);
        } else {
            if (contains(where, "..") || (!where.empty() && where.front() == '/')) {
                sandbox.record_violation("path escape refused: " + where);
                call.refused = true;
                call.output = "(refused: path escapes sandbox: " + where + ")";
                return call;
            }
            files = extraction_detail::matching_files(sandbox.root(), where);
        }

        // Regex when the pattern compiles, literal substring otherwise.
        std::optional<std::regex> re;
        try {
            re.emplace(pattern);
        } catch (const std::regex_error&) {
            re.reset();
        }
        std::string out;
        size_t matched = 0;
        for (const auto& file : files) {
            auto rel = std::filesystem::relative(file, sandbox.root()).string();
            auto lines = split_lines(read_text_file(file));
            for (size_t i = 0; i < lines.size() && matched < limits.grep_max_lines; ++i) {
                bool hit = re ? std::regex_search(lines[i], *re)
                              : contains(lines[i], pattern);
                if (hit) {
                    out += rel + ":" + std::to_string(i + 1) + ":" + lines[i] + "\n";
                    ++matched;
                }
            }
        }
        call.output = truncate_output(out, limits.output_cap);  // empty when nothing matched
        return call;
    }

    if (tool == "bash") {
        const std::string command = arguments.value("command", "");
        if (auto violation = extraction_detail::bash_violation(command)) {
            sandbox.record_violation("bash refused (" + *violation + "): " + command);
            call.refused = true;
            call.output = "(refused: " + *violation + ")";
            return call;
        }
        auto outcome = extraction_detail::run_restricted(sandbox.root(), command,
                                                         limits.bash_timeout_ms);
        call.timed_out = outcome.timed_out;
        call.output = truncate_output(outcome.output, limits.output_cap);
        if (outcome.timed_out) call.output += "\n[timeout after " +
                                              std::to_string(limits.bash_timeout_ms) + " ms]";
        return call;
    }

    call.output = "(error: unknown tool " + tool + ")";
    return call;
}

// ---------------------------------------------------------------------------
// Extraction traces
// ---------------------------------------------------------------------------

struct DroppedDraft {
    json draft;
    std::string reason;
};

inline void to_json(json& j, const DroppedDraft& d) {
    j = json{{"draft", d.draft}, {"reason", d.reason}};
}

// Tooled and direct traces share this schema; they differ only in the
// cardinality of tool_calls.
struct ExtractionTrace {
    std::string paper_id;
    std::string mode;  // "tooled" | "direct"
    std::vector<ToolCall> tool_calls;
    std::vector<json> drafts;
    std::vector<Seed> verified_seeds;
    std::vector<DroppedDraft> dropped;
    std::vector<std::string> violations;
    std::vector<std::string> notes;
    bool incomplete = false;
    bool truncated_input = false;
    bool non_library = false;  // direct-extraction seeds never enter the library
};

inline void to_json(json& j, const ExtractionTrace& t) {
    j = json{{"paper_id", t.paper_id},
             {"mode", t.mode},
             {"tool_calls", t.tool_calls},
             {"drafts", t.drafts},
             {"verified_seeds", t.verified_seeds},
             {"dropped", t.dropped},
             {"violations", t.violations},
             {"notes", t.notes},
             {"incomplete", t.incomplete},
             {"truncated_input", t.truncated_input},
             {"non_library", t.non_library}};
}

struct ExtractionOptions {
    int step_budget = 40;        // tool calls per paper
    size_t max_seeds = 3;        // contributions per paper
    size_t direct_max_chars = 120000;
};

namespace extraction_detail {

struct DraftState {
    json fields;
    int drafted_after_step = 0;  // tool calls executed when (re)drafted
};

inline std::optional<Seed> validate_draft(const json& draft, const std::string& paper_id,
                                          size_t ordinal, std::string& why) {
    Seed s;
    s.seed_id = paper_id + ":s" + std::to_string(ordinal);
    s.paper_id = paper_id;
    s.problem = draft.value("problem", "");
    s.method = draft.value("method", "");
    s.venue = draft.value("venue", "");
    s.year = draft.value("year", 0);
    if (trim(s.problem).empty()) {
        why = "empty problem";
        return std::nullopt;
    }
    if (trim(s.method).empty()) {
        why = "empty method";
        return std::nullopt;
    }
    auto domain = try_parse_domain(draft.value("domain", ""));
    if (!domain) {
        why = "unknown domain \"" + draft.value("domain", "") + "\"";
        return std::nullopt;
    }
    s.domain = *domain;
    return s;
}

// Finalization shared by both modes: verification demotion (tooled only,
// via drafted_after_step), field validation, and the contribution cap.
inline void finalize_drafts(ExtractionTrace& trace, const std::vector<DraftState>& drafts,
                            int steps_executed, size_t max_seeds, bool enforce_verification) {
    size_t ordinal = 1;
    for (const auto& d : drafts) {
        if (enforce_verification && d.drafted_after_step >= steps_executed) {
            trace.dropped.push_back({d.fields, "unverified"});
            continue;
        }
        if (trace.verified_seeds.size() >= max_seeds) {
            trace.dropped.push_back({d.fields, "over contribution cap"});
            continue;
        }
        std::string why;
        auto seed = validate_draft(d.fields, trace.paper_id, ordinal, why);
        if (!seed) {
            trace.dropped.push_back({d.fields, "invalid seed: " + why});
            continue;
        }
        ++ordinal;
        trace.verified_seeds.push_back(std::move(*seed));
    }
}

}  // namespace extraction_detail

// ---------------------------------------------------------------------------
// Tool-augmented extraction
// ---------------------------------------------------------------------------

// Agent loop: prompt -> action -> tool result -> ... until finalize. A draft
// with zero tool calls after it is auto-demoted to dropped; surviving drafts
// are capped at `max_seeds` contributions per paper.
inline ExtractionTrace extract_tooled(const PaperBundle& bundle, ChatProvider& agent,
                                      const SandboxFactory& factory,
                                      const TemplateStore& templates,
                                      const ExtractionOptions& options = {}) {
    ExtractionTrace trace;
    trace.paper_id = bundle.paper_id;
    trace.mode = "tooled";

    Sandbox sandbox = factory.create(bundle, &trace.notes);
    const bool has_repo = std::filesystem::is_directory(sandbox.root() / "repo");
    const std::string system_prompt = templates.render(
        "extract_tooled",
        {{"paper_id", bundle.paper_id},
         {"repo_note", has_repo ? " and the paper's code repository under `repo/`" : ""}});

    std::vector<ChatMessage> messages = {{"user", system_prompt}};
    std::vector<extraction_detail::DraftState> drafts;
    int steps = 0;
    int turn = 0;
    int parse_retries = 0;
    bool finalized = false;

    // Non-tool turns (drafts, revisions) are bounded too, so an agent that
    // never finalizes cannot spin without consuming budget.
    const int max_turns = options.step_budget * 2 + 16;

    while (steps < options.step_budget && turn < max_turns) {
        ChatRequest req;
        req.purpose = "extract_tooled";
        req.template_version = templates.get("extract_tooled").version;
        req.params = {{"paper_id", bundle.paper_id}, {"turn", std::to_string(turn)}};
        req.messages = messages;
        ++turn;

        ChatResponse resp = agent.chat(req);
        messages.push_back({"assistant", resp.content});
        auto action = judge_detail::extract_json_object(resp.content);
        if (!action || !action->contains("action")) {
            if (++parse_retries > 1) {
                trace.incomplete = true;
                trace.notes.push_back("agent reply unparseable after reprompt");
                break;
            }
            messages.push_back({"user", "Reply with a single JSON action object."});
            continue;
        }

        const std::string kind = action->value("action", "");
        if (kind == "read" || kind == "grep" || kind == "bash") {
            ToolCall call = tool_exec(sandbox, kind, *action, steps);
            ++steps;
            trace.tool_calls.push_back(call);
            messages.push_back({"user", "TOOL RESULT (step " + std::to_string(call.step_index) +
                                            "):\n" + (call.output.empty() ? "(no matches)" :
                                                      call.output)});
            continue;
        }
        if (kind == "draft") {
            for (const auto& seed : action->value("seeds", json::array())) {
                trace.drafts.push_back(seed);
                drafts.push_back({seed, steps});
            }
            messages.push_back({"user", "Drafts registered: " + std::to_string(drafts.size()) +
                                            ". Verify each via grep or additional reading, then "
                                            "finalize."});
            continue;
        }
        if (kind == "revise") {
            size_t index = action->value("index", size_t{0});
            if (index >= drafts.size()) {
                messages.push_back({"user", "No draft at index " + std::to_string(index) + "."});
                continue;
            }
            drafts[index] = {action->value("seed", json::object()), steps};
            trace.drafts.push_back(drafts[index].fields);
            messages.push_back({"user", "Draft " + std::to_string(index) + " revised."});
            continue;
        }
        if (kind == "finalize") {
            finalized = true;
            break;
        }
        if (++parse_retries > 1) {
            trace.incomplete = true;
            trace.notes.push_back("agent emitted unknown action \"" + kind + "\"");
            break;
        }
        messages.push_back({"user", "Unknown action \"" + kind + "\"."});
    }

    if (!finalized && !trace.incomplete) {
        trace.incomplete = true;
        trace.notes.push_back(steps >= options.step_budget
                                  ? "step budget exhausted (" +
                                        std::to_string(options.step_budget) + " tool calls)"
                                  : "turn bound exhausted without finalize");
    }
    extraction_detail::finalize_drafts(trace, drafts, steps, options.max_seeds,
                                       /*enforce_verification=*/true);
    if (finalized && trace.verified_seeds.empty()) {
        trace.incomplete = true;
        trace.notes.push_back("no draft survived verification");
    }
    trace.violations = sandbox.violations();
    return trace;
}

// ---------------------------------------------------------------------------
// Direct extraction baseline
// ---------------------------------------------------------------------------

// Single-pass extraction: the whole paper as prompt context, zero tool calls.
// The resulting seeds are scorable but never enter the retrieval library.
inline ExtractionTrace extract_direct(const PaperBundle& bundle, ChatProvider& agent,
                                      const TemplateStore& templates,
                                      const ExtractionOptions& options = {}) {
    ExtractionTrace trace;
    trace.paper_id = bundle.paper_id;
    trace.mode = "direct";
    trace.non_library = true;

    std::string paper_text = read_text_file(bundle.dir / "paper.md");
    if (paper_text.size() > options.direct_max_chars) {
        paper_text.resize(options.direct_max_chars);
        trace.truncated_input = true;
    }

    ChatRequest req;
    req.purpose = "extract_direct";
    req.template_version = templates.get("extract_direct").version;
    req.params = {{"paper_id", bundle.paper_id}};
    req.messages = {{"user", templates.render("extract_direct",
                                              {{"paper_id", bundle.paper_id},
                                               {"paper_text", paper_text}})}};

    auto parse_seeds = [](const std::string& content) -> std::optional<json> {
        auto obj = judge_detail::extract_json_object(content);
        if (!obj || !obj->contains("seeds") || !(*obj)["seeds"].is_array()) return std::nullopt;
        return (*obj)["seeds"];
    };

    auto seeds = parse_seeds(agent.chat(req).content);
    if (!seeds) {
        ChatRequest repair = req;
        repair.messages.push_back(
            {"user", "Respond with one fenced JSON object {\"seeds\": [...]} only."});
        seeds = parse_seeds(agent.chat(repair).content);
        if (!seeds) {
            trace.incomplete = true;
            trace.notes.push_back("unparseable direct-extraction output after reprompt; paper skipped");
            return trace;
        }
    }

    std::vector<extraction_detail::DraftState> drafts;
    for (const auto& seed : *seeds) {
        trace.drafts.push_back(seed);
        drafts.push_back({seed, 0});
    }
    extraction_detail::finalize_drafts(trace, drafts, /*steps_executed=*/0, options.max_seeds,
                                       /*enforce_verification=*/false);
    return trace;
}

}  // namespace papergym
