#pragma once

#include "bdverify/verifier.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bdverify {

enum class Command { Verify, VerifySet, Attack, Eval };

std::string to_string(Command command);
Command command_from_string(const std::string& text);

struct RunConfig {
    Command command = Command::Verify;
    std::string network;
    std::string dataset_images;
    std::string dataset_labels;     // empty with a .csv dataset
    std::string validation_images;  // empty: use the dataset
    std::string validation_labels;
    TriggerShape trigger{1, 3, 3};
    std::optional<int> target;  // nullopt: every label
    SprtParams sprt;
    int workers = 1;
    std::uint64_t seed = 0;
    double verifyx_budget_secs = 600.0;
    double global_budget_secs = 7200.0;
    double solver_budget_secs = 20.0;
    double opt_budget_secs = 30.0;
    // verify-set / attack: dataset indices of X; empty means the first K
    // filtered images.
    std::vector<std::size_t> indices;
    std::string report_path;
    std::string dump_bounds_dir;
    std::string dump_lp_dir;
    bool include_timing = false;
    int verbosity = 1;

    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& doc);

struct TargetReport {
    int target = 0;
    Verdict verdict = Verdict::Unknown;
    std::size_t rounds = 0;
    std::size_t safe_rounds = 0;
    std::optional<double> success_rate;
    std::optional<Trigger> trigger;
    PositionDiagnostics diagnostics;
    bool budget_exhausted = false;
    std::optional<double> wall_time_secs;

    bool operator==(const TargetReport&) const;
};

struct EvalSummary {
    std::size_t images = 0;
    std::size_t correct = 0;
    std::vector<int> predictions;
    bool operator==(const EvalSummary&) const = default;
};

struct Report {
    RunConfig config;
    bool nondeterministic = false;
    std::vector<TargetReport> targets;
    std::optional<EvalSummary> eval;

    nlohmann::json to_json() const;
    static Report from_json(const nlohmann::json& doc);
};

// Safe=0, Unknown=2, Unsafe=3; the worst verdict over all targets wins.
int exit_status(const Report& report);

// Runs the configured command. Throws bdverify::Error for unreadable or
// malformed inputs.
Report run(const RunConfig& config);

std::string human_summary(const Report& report);

}  // namespace bdverify
