#include "tlbench/cli.hpp"

#include <cstdio>
#include <ostream>
#include <regex>

#include "tlbench/campaign.hpp"
#include "tlbench/dataset_io.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/gradcheck.hpp"

namespace tlbench {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& error) {
    if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const PlanError*>(&error) ||
        dynamic_cast<const FormatError*>(&error) || dynamic_cast<const DataError*>(&error)) {
        return kExitValidation;
    }
    return kExitRuntime;
}

namespace {

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        err << (code == kExitValidation ? "error: " : "runtime error: ") << e.what() << '\n';
        return code;
    }
}

} // namespace

GradientFault parse_fault(const std::string& name) {
    if (name.empty() || name == "none") return GradientFault::None;
    if (name == "gelu") return GradientFault::Gelu;
    if (name == "softmax") return GradientFault::Softmax;
    if (name == "matmul") return GradientFault::Matmul;
    throw ConfigError("unknown fault '" + name + "' (expected gelu, softmax or matmul)");
}

int cmd_clean(const CleanCommand& command, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const std::string id = command.id.empty() ? command.input.stem().string() : command.id;
        RawDataset raw;
        try {
            raw = load_csv(command.input);
        } catch (const FormatError& e) {
            throw FormatError(command.input.string() + ": " + e.what());
        }
        CleanDataset ds;
        try {
            ds = clean(raw, id, command.pipeline);
        } catch (const DataError& e) {
            throw DataError(command.input.string() + ": " + e.what());
        }
        const DatasetFiles files = save_dataset(ds, command.out_dir);
        const CleaningLog& log = ds.log;
        if (log.empty()) {
            out << id << ": already clean, nothing removed or imputed\n";
        } else {
            for (const auto& b : log.dropped_sparse) out << id << ": dropped " << b << " (missing values)\n";
            for (const auto& c : log.dropped_zero) out << id << ": dropped " << c << " (zero readings)\n";
            if (log.interpolated_cells) out << id << ": interpolated " << log.interpolated_cells << " cells\n";
        }
        out << id << ": " << ds.building_count() << " buildings, " << ds.length() << " rows -> " << files.csv.string()
            << ", " << files.sidecar.string() << '\n';
        return kExitOk;
    });
}

int cmd_run(const RunCommand& command, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const CampaignConfig config = load_campaign(command.config);
        if (command.parallel == 0) throw ConfigError("--parallel must be at least 1");
        const DatasetRegistry registry = build_registry(config);
        CampaignOptions options;
        options.output_root = command.output_root ? *command.output_root : resolve_output_root(config.output_root);
        options.filter = command.filter;
        options.parallel = command.parallel;
        if (command.dry_run) {
            std::regex re;
            try {
                re = std::regex(command.filter.empty() ? ".*" : command.filter);
            } catch (const std::regex_error& e) {
                throw ConfigError("--filter: invalid regex '" + command.filter + "': " + e.what());
            }
            for (const auto& plan : config.plans) {
                const std::string d = plan_descriptor(plan);
                if (std::regex_search(d, re)) out << d << '\n';
            }
            return kExitOk;
        }
        const CampaignSummary summary = run_campaign(config, registry, options);
        out << summary.plans_selected << " plans, " << summary.seeds_trained << " seeds trained, "
            << summary.seeds_reused << " reused, " << summary.failures << " failed; artifacts in "
            << options.output_root.string() << '\n';
        for (const auto& s : summary.statuses) {
            for (const auto& e : s.errors) err << s.descriptor << ": " << e << '\n';
        }
        return summary.failures ? kExitRuntime : kExitOk;
    });
}

int cmd_report(const fs::path& output_root, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::vector<std::string> warnings;
        const auto reports = collect_reports(output_root, &warnings);
        if (reports.empty()) throw ConfigError("no completed runs under " + (output_root / "runs").string());
        const auto tables = render_tables(reports);
        for (const auto& t : tables) {
            out << t.text << '\n';
            warnings.insert(warnings.end(), t.warnings.begin(), t.warnings.end());
        }
        const auto files = write_tables(output_root, tables);
        for (const auto& w : warnings) err << "warning: " << w << '\n';
        out << "wrote " << files.size() << " files to " << (output_root / "results" / "tables").string() << '\n';
        return kExitOk;
    });
}

int cmd_gradcheck(const GradcheckCommand& command, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        std::vector<Architecture> archs = command.archs;
        if (archs.empty()) archs = {Architecture::Vanilla, Architecture::Informer, Architecture::PatchTST};
        struct FaultScope {
            explicit FaultScope(GradientFault f) { set_gradient_fault(f); }
            ~FaultScope() { set_gradient_fault(GradientFault::None); }
        } scope(command.fault);
        bool ok = true;
        for (const Architecture arch : archs) {
            const ModelGradCheck check = check_model_gradients(arch);
            const bool pass = check.worst < command.tolerance;
            ok = ok && pass;
            char line[256];
            std::snprintf(line, sizeof(line), "%-8s %s  %zu entries, worst relative error %.3e (%s), tolerance %.0e",
                          std::string(architecture_name(arch)).c_str(), pass ? "PASS" : "FAIL", check.entries,
                          check.worst, check.worst_parameter.c_str(), command.tolerance);
            out << line << '\n';
        }
        return ok ? kExitOk : kExitValidation;
    });
}

} // namespace tlbench
