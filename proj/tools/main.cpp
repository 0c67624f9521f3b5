#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tlbench/campaign.hpp"
#include "tlbench/cli.hpp"
#include "tlbench/errors.hpp"

int main(int argc, char** argv) {
    using namespace tlbench;

    CLI::App app{"Transfer-learning benchmark for building load forecasters"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "tlbench 0.1.0");

    CleanCommand clean_cmd;
    auto* clean = app.add_subcommand("clean", "Clean a raw CSV into CSV + JSON sidecar");
    clean->add_option("input", clean_cmd.input, "Raw CSV (timestamp column, then buildings)")->required();
    clean->add_option("-o,--out", clean_cmd.out_dir, "Output directory")->required();
    clean->add_option("--id", clean_cmd.id, "Dataset id (default: input file stem)");
    clean->add_option("--sparse-threshold", clean_cmd.pipeline.sparse_threshold,
                      "Drop buildings with at least this fraction missing")
        ->capture_default_str();
    clean->add_option("--max-zeros", clean_cmd.pipeline.max_zeros, "Drop columns with more zeros than this")
        ->capture_default_str();

    RunCommand run_cmd;
    std::string run_root;
    auto* run = app.add_subcommand("run", "Run the plans of a campaign config");
    run->add_option("config", run_cmd.config, "Campaign YAML")->required();
    run->add_option("--filter", run_cmd.filter, "Regex over plan descriptors");
    run->add_option("--parallel", run_cmd.parallel, "Concurrent (plan, seed) runs")->capture_default_str();
    run->add_option("--output-root", run_root, std::string("Output root (overrides ") + kOutputRootEnv + ")");
    run->add_flag("--dry-run", run_cmd.dry_run, "Validate and list the selected plans");

    std::string report_root;
    auto* report = app.add_subcommand("report", "Aggregate finished runs into tables");
    report->add_option("output_root", report_root, std::string("Output root (default: $") + kOutputRootEnv + ")");

    GradcheckCommand grad_cmd;
    std::vector<std::string> arch_names;
    std::string fault = "none";
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check of the toy models");
    grad->add_option("--arch", arch_names, "vanilla, informer or patchtst (repeatable; default all)");
    grad->add_option("--inject-fault", fault, "Corrupt one backward rule: gelu, softmax or matmul");
    grad->add_option("--tolerance", grad_cmd.tolerance, "Maximum relative error")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    if (*clean) return cmd_clean(clean_cmd, std::cout, std::cerr);
    if (*run) {
        if (!run_root.empty()) run_cmd.output_root = run_root;
        return cmd_run(run_cmd, std::cout, std::cerr);
    }
    if (*report) {
        if (report_root.empty()) report_root = resolve_output_root("tlbench-out").string();
        return cmd_report(report_root, std::cout, std::cerr);
    }
    try {
        for (const auto& name : arch_names) grad_cmd.archs.push_back(parse_architecture(name));
        grad_cmd.fault = parse_fault(fault);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return cmd_gradcheck(grad_cmd, std::cout, std::cerr);
}
