#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rfio {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitMissingArtifacts = 4;

const std::vector<std::string>& experiment_kinds();

// "section.key" -> raw value. Lines are `key = value`, `[section]` headers,
// and `#` or `;` comments. Keys before any header land in section "run".
using RawConfig = std::map<std::string, std::string>;
RawConfig parse_config(std::istream& in, const std::string& origin = "<config>");
RawConfig read_config_file(const std::string& path);

// Environment lookup, injectable for tests. Returns nullopt when unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_environment();

struct ExperimentConfig {
    std::string kind;
    RawConfig values;          // every key of the kind, defaults filled in
    std::string out_dir;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    double real(const std::string& key) const;
    std::optional<double> real_or_auto(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;
    std::vector<long long> integers(const std::string& key) const;
    const std::string& text(const std::string& key) const;
};

struct CommandLine {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

// Applies RFIO_<SECTION>_<KEY> overrides, then command-line overrides, and
// checks every key against the schema of the kind. Unknown keys and all
// missing required keys are reported together in one ConfigError.
ExperimentConfig resolve_config(const std::string& kind, const RawConfig& raw, const CommandLine& cli,
                                const EnvLookup& env);

// Validates the derived inputs (scales, parameters), then computes and writes
// artifacts plus manifest.json into config.out_dir. Returns an exit code;
// diagnostics go to `log`.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

// Reads a finished run directory and writes summary.json next to the
// manifest (also echoed to `out`). Missing artifacts give kExitMissingArtifacts.
int report(const std::string& dir, std::ostream& out, std::ostream& log);

// Entry point shared by the rfio tool and the tests.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& log,
             const EnvLookup& env);

}  // namespace rfio
