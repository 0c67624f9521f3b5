#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tlbench/campaign.hpp"
#include "tlbench/dataset_io.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/evaluation.hpp"
#include "tlbench/gradcheck.hpp"

namespace py = pybind11;
using namespace tlbench;

namespace {

py::dict report_dict(const EvaluationReport& r) {
    py::dict d;
    d["plan"] = r.plan_id;
    d["strategy"] = r.strategy;
    d["model"] = r.model;
    d["target"] = r.target;
    d["arch"] = r.arch;
    d["horizon"] = r.horizon;
    d["mae"] = r.mean.mae;
    d["mse"] = r.mean.mse;
    py::list seeds;
    for (const auto& s : r.seeds) seeds.append(py::make_tuple(s.seed, s.metrics.mae, s.metrics.mse));
    d["seeds"] = seeds;
    d["partial"] = r.partial();
    return d;
}

py::dict clean_csv(const std::filesystem::path& input, const std::filesystem::path& out_dir, std::string id,
                   double sparse_threshold, std::size_t max_zeros) {
    if (id.empty()) id = input.stem().string();
    PipelineOptions options;
    options.sparse_threshold = sparse_threshold;
    options.max_zeros = max_zeros;
    CleanDataset ds;
    {
        py::gil_scoped_release release;
        ds = clean(load_csv(input), id, options);
    }
    const DatasetFiles files = save_dataset(ds, out_dir);
    py::dict d;
    d["id"] = ds.id;
    d["buildings"] = ds.building_count();
    d["rows"] = ds.length();
    d["dropped_sparse"] = ds.log.dropped_sparse;
    d["dropped_zero"] = ds.log.dropped_zero;
    d["interpolated_cells"] = ds.log.interpolated_cells;
    d["csv"] = files.csv;
    d["sidecar"] = files.sidecar;
    return d;
}

py::dict gradcheck(const std::string& arch) {
    ModelGradCheck g;
    {
        py::gil_scoped_release release;
        g = check_model_gradients(parse_architecture(arch));
    }
    py::dict d;
    d["arch"] = arch;
    d["entries"] = g.entries;
    d["worst_relative_error"] = g.worst;
    d["worst_parameter"] = g.worst_parameter;
    return d;
}

py::list plan_descriptors(const std::filesystem::path& config) {
    py::list out;
    for (const auto& p : load_campaign(config).plans) out.append(plan_descriptor(p));
    return out;
}

py::dict run(const std::filesystem::path& config, std::optional<std::filesystem::path> output_root,
             const std::string& filter, std::size_t parallel) {
    CampaignSummary s;
    {
        py::gil_scoped_release release;
        const CampaignConfig c = load_campaign(config);
        const DatasetRegistry registry = build_registry(c);
        CampaignOptions options;
        options.output_root = output_root ? *output_root : resolve_output_root(c.output_root);
        options.filter = filter;
        options.parallel = parallel;
        s = run_campaign(c, registry, options);
    }
    py::dict d;
    d["plans"] = s.plans_selected;
    d["trained"] = s.seeds_trained;
    d["reused"] = s.seeds_reused;
    d["failures"] = s.failures;
    py::list reports;
    for (const auto& r : s.reports) reports.append(report_dict(r));
    d["reports"] = reports;
    return d;
}

py::tuple reports(const std::filesystem::path& root) {
    std::vector<std::string> warnings;
    const auto rs = collect_reports(root, &warnings);
    py::list out;
    for (const auto& r : rs) out.append(report_dict(r));
    return py::make_tuple(out, warnings);
}

} // namespace

PYBIND11_MODULE(_tlbench, m) {
    m.doc() = "Transfer-learning benchmark engine";
    m.attr("OUTPUT_ROOT_ENV") = kOutputRootEnv;

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<PlanError>(m, "PlanError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

    m.def("mae", [](const std::vector<double>& p, const std::vector<double>& a) { return mae(p, a); });
    m.def("mse", [](const std::vector<double>& p, const std::vector<double>& a) { return mse(p, a); });
    m.def("improvement_pct", &improvement_pct, py::arg("base"), py::arg("updated"));
    m.def("format_pct", &format_pct);
    m.def("patch_count", &patch_count, py::arg("length"), py::arg("patch_len"), py::arg("stride"));
    m.def("clean_csv", &clean_csv, py::arg("input"), py::arg("out_dir"), py::arg("id") = "",
          py::arg("sparse_threshold") = 0.10, py::arg("max_zeros") = 3000);
    m.def("gradcheck", &gradcheck, py::arg("arch"));
    m.def("plan_descriptors", &plan_descriptors, py::arg("config"));
    m.def("run_campaign", &run, py::arg("config"), py::arg("output_root") = py::none(), py::arg("filter") = "",
          py::arg("parallel") = 1);
    m.def("collect_reports", &reports, py::arg("output_root"),
          "Returns (reports, warnings) for the finished runs under output_root.");
}
