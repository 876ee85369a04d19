#include "bdverify/cli.hpp"
#include "bdverify/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

bdverify::TriggerShape parse_shape(const std::string& text)
{
    bdverify::TriggerShape s;
    char comma1 = 0;
    char comma2 = 0;
    std::istringstream in(text);
    if (!(in >> s.channels >> comma1 >> s.height >> comma2 >> s.width) || comma1 != ',' ||
        comma2 != ',' || !in.eof())
        throw CLI::ValidationError("--trigger-shape", "expected c,h,w");
    return s;
}

void add_common(CLI::App* cmd, bdverify::RunConfig& c, std::string& shape, std::string& target)
{
    cmd->add_option("--network", c.network, "Network file (JSON)")->required();
    cmd->add_option("--dataset-images", c.dataset_images, "IDX images or CSV dataset")->required();
    cmd->add_option("--dataset-labels", c.dataset_labels, "IDX labels");
    cmd->add_option("--validation-images", c.validation_images, "Validation images (default: dataset)");
    cmd->add_option("--validation-labels", c.validation_labels, "Validation labels");
    cmd->add_option("--trigger-shape", shape, "Trigger shape c,h,w")->capture_default_str();
    cmd->add_option("--target", target, "Target label or 'all'")->capture_default_str();
    cmd->add_option("--theta", c.sprt.theta)->capture_default_str();
    cmd->add_option("--k", c.sprt.k)->capture_default_str();
    cmd->add_option("--alpha", c.sprt.alpha)->capture_default_str();
    cmd->add_option("--beta", c.sprt.beta)->capture_default_str();
    cmd->add_option("--delta", c.sprt.delta)->capture_default_str();
    cmd->add_option("--workers", c.workers)->capture_default_str();
    cmd->add_option("--seed", c.seed)->capture_default_str();
    cmd->add_option("--verifyx-budget-secs", c.verifyx_budget_secs)->capture_default_str();
    cmd->add_option("--global-budget-secs", c.global_budget_secs)->capture_default_str();
    cmd->add_option("--solver-budget-secs", c.solver_budget_secs)->capture_default_str();
    cmd->add_option("--opt-budget-secs", c.opt_budget_secs)->capture_default_str();
    cmd->add_option("--report", c.report_path, "Write the JSON report here");
    cmd->add_option("--dump-bounds", c.dump_bounds_dir, "Directory for per-layer bound dumps");
    cmd->add_option("--dump-lp", c.dump_lp_dir, "Directory for LP dumps");
    cmd->add_flag("--timing", c.include_timing, "Include wall times in the report");
    cmd->add_flag("-q,--quiet", [&c](std::int64_t) { c.verbosity = 0; }, "No summary on stdout");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Statistical backdoor verifier for feed-forward image classifiers"};
    app.require_subcommand(1);

    bdverify::RunConfig config;
    std::string shape = "1,3,3";
    std::string target = "0";

    auto* verify = app.add_subcommand("verify", "SPRT verification over random image sets");
    auto* verify_set = app.add_subcommand("verify-set", "Verify one explicit image set");
    auto* attack = app.add_subcommand("attack", "Search for a trigger by optimization only");
    auto* eval = app.add_subcommand("eval", "Classify a dataset");
    for (auto* cmd : {verify, verify_set, attack, eval})
        add_common(cmd, config, shape, target);
    for (auto* cmd : {verify_set, attack})
        cmd->add_option("--indices", config.indices, "Dataset indices forming X (default: first K)")
            ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(verify))
            config.command = bdverify::Command::Verify;
        else if (app.got_subcommand(verify_set))
            config.command = bdverify::Command::VerifySet;
        else if (app.got_subcommand(attack))
            config.command = bdverify::Command::Attack;
        else
            config.command = bdverify::Command::Eval;
        config.trigger = parse_shape(shape);
        if (target == "all")
            config.target.reset();
        else
            config.target = std::stoi(target);

        const auto report = bdverify::run(config);
        if (!config.report_path.empty()) {
            std::ofstream out(config.report_path);
            if (!out)
                throw bdverify::Error("cannot write report " + config.report_path);
            out << report.to_json().dump(2) << '\n';
        }
        if (config.verbosity > 0)
            std::cout << bdverify::human_summary(report);
        return bdverify::exit_status(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
