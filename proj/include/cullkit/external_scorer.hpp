#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <string>

#include "cullkit/culling.hpp"
#include "cullkit/image_io.hpp"

namespace cullkit {

namespace detail {

inline std::string shell_quote(const std::string& s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

inline std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

} // namespace detail

/// Parses a scorer's first output line: a single decimal in [0,1].
inline double parse_scorer_output(std::string_view first_line)
{
    const std::string t = detail::trim(first_line);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw Error(ErrorCode::ScorerProcessFailed, "unparseable scorer output '" + t + "'");
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw Error(ErrorCode::ScorerProcessFailed, "scorer output " + t + " outside [0,1]");
    return v;
}

/// Runs `<command> <patch.png>` once per proposal. A "{}" in the template is
/// replaced by the quoted patch path; otherwise the path is appended.
class ExternalScorer final : public ProposalScorer {
public:
    explicit ExternalScorer(std::string command_template) : template_(std::move(command_template))
    {
        if (detail::trim(template_).empty()) throw Error(ErrorCode::InvalidArgument, "empty scorer command");
    }

    double score(const ScoringInput& in) const override
    {
        if (!in.patch) throw Error(ErrorCode::ScorerProcessFailed, "external scorer needs a patch");
        static std::atomic<unsigned long> counter{0};
        const auto path = std::filesystem::temp_directory_path() /
                          ("cullkit-patch-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".png");
        write_patch_png(*in.patch, path.string());
        std::string cmd = template_;
        const std::string quoted = detail::shell_quote(path.string());
        if (const auto pos = cmd.find("{}"); pos != std::string::npos)
            cmd.replace(pos, 2, quoted);
        else
            cmd += " " + quoted;

        std::string output;
        int status = -1;
        if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
            char buf[512];
            std::size_t got = 0;
            while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
            status = ::pclose(pipe);
        }
        std::error_code ec;
        std::filesystem::remove(path, ec);
        if (status == -1) throw Error(ErrorCode::ScorerProcessFailed, "cannot run scorer: " + cmd);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
            throw Error(ErrorCode::ScorerProcessFailed, "scorer exited with status " + std::to_string(WEXITSTATUS(status)));
        return parse_scorer_output(std::string_view(output).substr(0, output.find('\n')));
    }

    std::string name() const override { return "exec:" + template_; }
    bool concurrent_safe() const override { return false; }
    bool needs_patch() const override { return true; }

private:
    std::string template_;
};

inline std::unique_ptr<ProposalScorer> external_scorer(std::string command_template)
{
    return std::make_unique<ExternalScorer>(std::move(command_template));
}

} // namespace cullkit
