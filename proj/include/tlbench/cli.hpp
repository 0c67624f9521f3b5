#pragma once

#include <cstddef>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tlbench/data.hpp"
#include "tlbench/models.hpp"
#include "tlbench/tensor.hpp"

namespace tlbench {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Config, plan, format and data errors are validation failures (1);
/// everything else is a runtime failure (2).
int exit_code_for(const std::exception& error);

struct CleanCommand {
    std::filesystem::path input;
    std::filesystem::path out_dir;
    std::string id;  // defaults to the input file stem
    PipelineOptions pipeline;
};

struct RunCommand {
    std::filesystem::path config;
    std::string filter;
    std::size_t parallel = 1;
    std::optional<std::filesystem::path> output_root;
    bool dry_run = false;
};

struct GradcheckCommand {
    std::vector<Architecture> archs;  // empty: all three
    GradientFault fault = GradientFault::None;
    double tolerance = 1e-4;
};

/// The subcommands. Each returns an exit code; messages go to `out` and
/// `err`, and exceptions are mapped through exit_code_for.
int cmd_clean(const CleanCommand& command, std::ostream& out, std::ostream& err);
int cmd_run(const RunCommand& command, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& output_root, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckCommand& command, std::ostream& out, std::ostream& err);

GradientFault parse_fault(const std::string& name);

} // namespace tlbench
