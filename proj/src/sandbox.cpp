#include "codeforge/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "codeforge/errors.hpp"

namespace codeforge {
namespace fs = std::filesystem;

namespace {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Fd& operator=(Fd&& other) noexcept {
        reset();
        fd_ = std::exchange(other.fd_, -1);
        return *this;
    }
    ~Fd() { reset(); }
    int get() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

struct Pipe {
    Fd read;
    Fd write;
};

Pipe make_pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw InfrastructureError(std::string("pipe2: ") + std::strerror(errno));
    return Pipe{Fd(fds[0]), Fd(fds[1])};
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

std::string resolve_executable(const std::string& name) {
    if (name.find('/') != std::string::npos) return name;
    const char* path = std::getenv("PATH");
    std::stringstream dirs(path != nullptr ? path : "/usr/local/bin:/usr/bin:/bin");
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
        if (dir.empty()) continue;
        const fs::path candidate = fs::path(dir) / name;
        if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
    }
    return {};
}

// Minimal environment: no display variables, headless plotting backend,
// fixed hash seed so set/dict ordering of str keys is reproducible.
std::vector<std::string> scrubbed_environment(const fs::path& home) {
    std::vector<std::string> env;
    const char* path = std::getenv("PATH");
    env.push_back(std::string("PATH=") + (path != nullptr ? path : "/usr/local/bin:/usr/bin:/bin"));
    env.push_back("HOME=" + home.string());
    env.push_back("LANG=C.UTF-8");
    env.push_back("LC_ALL=C.UTF-8");
    env.push_back("PYTHONIOENCODING=utf-8");
    env.push_back("PYTHONHASHSEED=0");
    env.push_back("PYTHONDONTWRITEBYTECODE=1");
    env.push_back("MPLBACKEND=Agg");
    env.push_back("QT_QPA_PLATFORM=offscreen");
    env.push_back("SDL_VIDEODRIVER=dummy");
    return env;
}

std::vector<char*> c_strings(std::vector<std::string>& items) {
    std::vector<char*> out;
    out.reserve(items.size() + 1);
    for (std::string& s : items) out.push_back(s.data());
    out.push_back(nullptr);
    return out;
}

// Reads what is available. Returns false at EOF.
bool drain(int fd, std::string& buffer, std::size_t cap, bool& overflow) {
    std::array<char, 65536> chunk;
    while (true) {
        const ssize_t n = ::read(fd, chunk.data(), chunk.size());
        if (n > 0) {
            const std::size_t room = cap > buffer.size() ? cap - buffer.size() : 0;
            buffer.append(chunk.data(), std::min<std::size_t>(room, static_cast<std::size_t>(n)));
            if (static_cast<std::size_t>(n) > room) overflow = true;
            continue;
        }
        if (n == 0) return false;
        if (errno == EINTR) continue;
        return true;  // EAGAIN
    }
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

ExecutionOutcome spawn_failed(std::string message) {
    ExecutionOutcome out;
    out.status = ExecutionStatus::SpawnFailed;
    out.stderr_text = std::move(message);
    return out;
}

}  // namespace

std::string final_error_name(std::string_view stderr_text) {
    std::size_t end = stderr_text.size();
    while (end > 0) {
        std::size_t start = stderr_text.rfind('\n', end - 1);
        start = start == std::string_view::npos ? 0 : start + 1;
        std::string_view line = stderr_text.substr(start, end - start);
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string_view::npos) {
            line = line.substr(0, line.find(':'));
            const std::size_t first = line.find_first_not_of(" \t");
            const std::size_t last = line.find_last_not_of(" \t\r");
            return first == std::string_view::npos ? std::string() : std::string(line.substr(first, last - first + 1));
        }
        if (start == 0) break;
        end = start - 1;
    }
    return {};
}

ResourceLimits ResourceLimits::from_environment() {
    ResourceLimits limits;
    if (const char* t = std::getenv("CODEFORGE_TIMEOUT_SECS"); t != nullptr && *t != '\0') {
        limits.timeout = std::chrono::milliseconds(static_cast<long long>(std::strtod(t, nullptr) * 1000.0));
    }
    if (const char* m = std::getenv("CODEFORGE_MEM_BYTES"); m != nullptr && *m != '\0') {
        limits.memory_cap = std::strtoull(m, nullptr, 10);
    }
    limits.validate();
    return limits;
}

void ResourceLimits::validate() const {
    if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
    if (memory_cap == 0) throw ConfigError("memory cap must be positive");
    if (max_output_bytes == 0) throw ConfigError("max_output_bytes must be positive");
}

std::string_view to_string(ExecutionStatus status) {
    switch (status) {
        case ExecutionStatus::Clean: return "clean";
        case ExecutionStatus::NonzeroExit: return "nonzero_exit";
        case ExecutionStatus::Timeout: return "timeout";
        case ExecutionStatus::MemoryKilled: return "memory_killed";
        case ExecutionStatus::OutputTruncated: return "output_truncated";
        case ExecutionStatus::SpawnFailed: return "spawn_failed";
    }
    return "spawn_failed";
}

ExecutionStatus execution_status_from_string(std::string_view text) {
    for (ExecutionStatus s : {ExecutionStatus::Clean, ExecutionStatus::NonzeroExit, ExecutionStatus::Timeout,
                              ExecutionStatus::MemoryKilled, ExecutionStatus::OutputTruncated,
                              ExecutionStatus::SpawnFailed}) {
        if (to_string(s) == text) return s;
    }
    throw ConfigError("unknown execution status '" + std::string(text) + "'");
}

InterpreterProfile InterpreterProfile::from_environment() {
    InterpreterProfile profile;
    if (const char* cmd = std::getenv("CODEFORGE_INTERP"); cmd != nullptr && *cmd != '\0') {
        std::istringstream words(cmd);
        std::vector<std::string> parts;
        for (std::string w; words >> w;) parts.push_back(w);
        if (!parts.empty()) profile.command = std::move(parts);
    }
    return profile;
}

std::string InterpreterProfile::run_command() const {
    std::string cmd = "cd project &&";
    for (const std::string& part : command) cmd += " " + part;
    return cmd + " " + file_name();
}

Clock system_clock() {
    return [] { return std::chrono::system_clock::now(); };
}

Clock fixed_clock(std::chrono::system_clock::time_point instant) {
    return [instant] { return instant; };
}

std::string format_timestamp(std::chrono::system_clock::time_point instant) {
    const std::time_t t = std::chrono::system_clock::to_time_t(instant);
    std::tm utc{};
    ::gmtime_r(&t, &utc);
    std::ostringstream out;
    out << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

std::chrono::system_clock::time_point parse_timestamp(std::string_view text) {
    std::tm utc{};
    std::istringstream in{std::string(text)};
    in >> std::get_time(&utc, "%Y-%m-%dT%H:%M:%S");
    if (in.fail()) throw ConfigError("invalid timestamp '" + std::string(text) + "'");
    return std::chrono::system_clock::from_time_t(::timegm(&utc));
}

ExecutionOutcome execute(std::string_view source, std::string_view stdin_text, const ResourceLimits& limits,
                         const fs::path& workdir, const InterpreterProfile& interpreter) {
    limits.validate();
    static std::once_flag ignore_sigpipe;
    std::call_once(ignore_sigpipe, [] { ::signal(SIGPIPE, SIG_IGN); });
    const fs::path project = workdir / "project";
    const fs::path file = project / interpreter.file_name();
    {
        std::error_code ec;
        fs::create_directories(project, ec);
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) return spawn_failed("cannot write " + file.string());
        out.write(source.data(), static_cast<std::streamsize>(source.size()));
        if (!out) return spawn_failed("cannot write " + file.string());
    }

    const std::string exe = resolve_executable(interpreter.command.front());
    if (exe.empty()) return spawn_failed("interpreter not found: " + interpreter.command.front());

    std::vector<std::string> args = interpreter.command;
    args.push_back(interpreter.file_name());
    std::vector<std::string> env = scrubbed_environment(workdir);
    std::vector<char*> argv = c_strings(args);
    std::vector<char*> envp = c_strings(env);
    const std::string project_dir = project.string();

    Pipe in = make_pipe();
    Pipe out = make_pipe();
    Pipe err = make_pipe();
    Pipe exec_status = make_pipe();

    const rlim_t cap = static_cast<rlim_t>(limits.memory_cap);
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) return spawn_failed(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        // Child: async-signal-safe calls only until exec.
        ::signal(SIGPIPE, SIG_DFL);
        ::setsid();
        struct rlimit mem{cap, cap};
        ::setrlimit(RLIMIT_AS, &mem);
        struct rlimit core{0, 0};
        ::setrlimit(RLIMIT_CORE, &core);
        if (::chdir(project_dir.c_str()) != 0 || ::dup2(in.read.get(), 0) < 0 || ::dup2(out.write.get(), 1) < 0 ||
            ::dup2(err.write.get(), 2) < 0) {
            const int e = errno;
            [[maybe_unused]] auto w = ::write(exec_status.write.get(), &e, sizeof e);
            ::_exit(127);
        }
        ::execve(exe.c_str(), argv.data(), envp.data());
        const int e = errno;
        [[maybe_unused]] auto w = ::write(exec_status.write.get(), &e, sizeof e);
        ::_exit(127);
    }

    in.read.reset();
    out.write.reset();
    err.write.reset();
    exec_status.write.reset();
    {
        int child_errno = 0;
        ssize_t n;
        do {
            n = ::read(exec_status.read.get(), &child_errno, sizeof child_errno);
        } while (n < 0 && errno == EINTR);
        if (n == static_cast<ssize_t>(sizeof child_errno)) {
            ::waitpid(pid, nullptr, 0);
            return spawn_failed(std::string("exec: ") + std::strerror(child_errno));
        }
    }

    set_nonblocking(out.read.get());
    set_nonblocking(err.read.get());
    std::size_t stdin_written = 0;
    if (stdin_text.empty()) {
        in.write.reset();
    } else {
        set_nonblocking(in.write.get());
    }

    ExecutionOutcome outcome;
    const auto deadline = start + limits.timeout;
    bool overflow = false;
    bool timed_out = false;
    bool out_open = true;
    bool err_open = true;
    int wait_status = 0;
    bool exited = false;

    while (!exited) {
        // WNOWAIT keeps the child unreaped so its pid (and process group id)
        // cannot be recycled before the group kill below.
        siginfo_t info{};
        if (::waitid(P_PID, static_cast<id_t>(pid), &info, WEXITED | WNOHANG | WNOWAIT) == 0 && info.si_pid == pid) {
            exited = true;
            break;
        }
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        if (overflow) break;

        std::array<pollfd, 3> fds{};
        nfds_t count = 0;
        if (out_open) fds[count++] = pollfd{out.read.get(), POLLIN, 0};
        if (err_open) fds[count++] = pollfd{err.read.get(), POLLIN, 0};
        if (in.write.valid()) fds[count++] = pollfd{in.write.get(), POLLOUT, 0};
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        const int wait_ms = static_cast<int>(std::clamp<long long>(remaining, 1, 20));
        if (count == 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(std::min(wait_ms, 5)));
            continue;
        }
        ::poll(fds.data(), count, wait_ms);
        if (out_open) out_open = drain(out.read.get(), outcome.stdout_text, limits.max_output_bytes, overflow);
        if (err_open) err_open = drain(err.read.get(), outcome.stderr_text, limits.max_output_bytes, overflow);
        if (in.write.valid()) {
            while (stdin_written < stdin_text.size()) {
                const ssize_t n = ::write(in.write.get(), stdin_text.data() + stdin_written,
                                          stdin_text.size() - stdin_written);
                if (n > 0) {
                    stdin_written += static_cast<std::size_t>(n);
                } else {
                    if (n < 0 && errno == EINTR) continue;
                    if (n < 0 && errno == EPIPE) stdin_written = stdin_text.size();
                    break;
                }
            }
            if (stdin_written >= stdin_text.size()) in.write.reset();
        }
    }

    // Take down the whole process group: stragglers the snippet spawned and,
    // on timeout or overflow, the snippet itself.
    ::kill(-pid, SIGKILL);
    while (::waitpid(pid, &wait_status, 0) < 0 && errno == EINTR) {
    }
    if (out_open) drain(out.read.get(), outcome.stdout_text, limits.max_output_bytes, overflow);
    if (err_open) drain(err.read.get(), outcome.stderr_text, limits.max_output_bytes, overflow);
    outcome.wall_time = std::chrono::steady_clock::now() - start;

    if (timed_out) {
        outcome.status = ExecutionStatus::Timeout;
    } else if (overflow) {
        outcome.status = ExecutionStatus::OutputTruncated;
    } else if (WIFSIGNALED(wait_status)) {
        const int sig = WTERMSIG(wait_status);
        outcome.status = (sig == SIGKILL || sig == SIGSEGV) ? ExecutionStatus::MemoryKilled
                                                            : ExecutionStatus::NonzeroExit;
    } else {
        outcome.exit_code = WEXITSTATUS(wait_status);
        if (*outcome.exit_code == 0) {
            outcome.status = ExecutionStatus::Clean;
        } else if (final_error_name(outcome.stderr_text) == "MemoryError") {
            outcome.status = ExecutionStatus::MemoryKilled;
        } else {
            outcome.status = ExecutionStatus::NonzeroExit;
        }
    }

    // Host paths never reach ground truth: tracebacks name the designated
    // relative path instead.
    const std::string designated = interpreter.snippet_path();
    std::error_code ec;
    const fs::path canonical = fs::weakly_canonical(file, ec);
    if (!ec) replace_all(outcome.stderr_text, canonical.string(), designated);
    replace_all(outcome.stderr_text, file.string(), designated);
    replace_all(outcome.stderr_text, fs::absolute(file, ec).string(), designated);
    return outcome;
}

EnvironmentInfo snapshot_environment(const fs::path& workdir, std::string_view snippet_path, const Clock& clock,
                                     const InterpreterProfile& interpreter) {
    std::error_code ec;
    if (!fs::is_directory(workdir, ec)) throw IoError("cannot read workdir " + workdir.string());
    std::vector<std::string> entries;
    fs::recursive_directory_iterator it(workdir, fs::directory_options::none, ec);
    if (ec) throw IoError("cannot read workdir " + workdir.string() + ": " + ec.message());
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) throw IoError("cannot read workdir " + workdir.string() + ": " + ec.message());
        std::string rel = fs::relative(it->path(), workdir).generic_string();
        if (it->is_directory()) rel += "/";
        entries.push_back(std::move(rel));
    }
    std::sort(entries.begin(), entries.end());
    std::string tree;
    for (const std::string& e : entries) tree += e + "\n";
    return EnvironmentInfo{tree, std::string(snippet_path), interpreter.run_command(), format_timestamp(clock())};
}

SandboxPool::SandboxPool(SandboxOptions options) : options_(std::move(options)) {
    options_.limits.validate();
    if (options_.slots == 0) options_.slots = std::max(1U, std::thread::hardware_concurrency());
    if (options_.max_waiting == 0) options_.max_waiting = 8 * options_.slots;
    if (options_.root.empty()) {
        std::string pattern = (fs::temp_directory_path() / "codeforge-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) {
            throw InfrastructureError(std::string("mkdtemp: ") + std::strerror(errno));
        }
        options_.root = pattern;
        owns_root_ = true;
    }
    std::error_code ec;
    fs::create_directories(options_.root, ec);
    if (ec) throw InfrastructureError("cannot create sandbox root " + options_.root.string());
    busy_.assign(options_.slots, false);
}

SandboxPool::~SandboxPool() {
    std::error_code ec;
    if (owns_root_) {
        fs::remove_all(options_.root, ec);
    } else {
        for (std::size_t i = 0; i < busy_.size(); ++i) fs::remove_all(options_.root / ("slot-" + std::to_string(i)), ec);
    }
}

std::optional<std::size_t> SandboxPool::acquire(bool bounded) {
    std::unique_lock lock(mutex_);
    auto free_slot = [&] { return std::find(busy_.begin(), busy_.end(), false) != busy_.end(); };
    if (bounded && !free_slot() && waiting_ >= options_.max_waiting) return std::nullopt;
    ++waiting_;
    cv_.wait(lock, free_slot);
    --waiting_;
    const auto slot = static_cast<std::size_t>(std::find(busy_.begin(), busy_.end(), false) - busy_.begin());
    busy_[slot] = true;
    return slot;
}

void SandboxPool::release(std::size_t slot) {
    {
        std::lock_guard lock(mutex_);
        busy_[slot] = false;
    }
    cv_.notify_one();
}

ExecutionRun SandboxPool::run_acquired(std::size_t slot, const ExecutableUnit& unit) {
    try {
        ExecutionRun result = run_in_slot(slot, unit);
        release(slot);
        return result;
    } catch (...) {
        release(slot);
        throw;
    }
}

ExecutionRun SandboxPool::run(const ExecutableUnit& unit) { return run_acquired(*acquire(false), unit); }

std::optional<ExecutionRun> SandboxPool::try_run(const ExecutableUnit& unit) {
    const std::optional<std::size_t> slot = acquire(true);
    if (!slot) return std::nullopt;
    return run_acquired(*slot, unit);
}

ExecutionRun SandboxPool::run_in_slot(std::size_t slot, const ExecutableUnit& unit) {
    const fs::path workdir = options_.root / ("slot-" + std::to_string(slot));
    std::error_code ec;
    fs::remove_all(workdir, ec);
    fs::create_directories(workdir / "project", ec);
    if (ec) {
        ExecutionRun failed;
        failed.outcome = spawn_failed("cannot prepare workdir " + workdir.string());
        return failed;
    }
    {
        std::ofstream out(workdir / options_.interpreter.snippet_path(), std::ios::binary | std::ios::trunc);
        out << unit.source_text;
    }
    ExecutionRun result;
    result.env = snapshot_environment(workdir, options_.interpreter.snippet_path(), options_.clock,
                                      options_.interpreter);
    result.outcome = execute(unit.source_text, unit.stdin_text, options_.limits, workdir, options_.interpreter);
    return result;
}

}  // namespace codeforge
