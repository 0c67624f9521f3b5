#include "tlbench/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "tlbench/csv.hpp"
#include "tlbench/errors.hpp"

namespace tlbench {

namespace {

constexpr const char* kMissing = "—";

void check_pair(std::span<const double> prediction, std::span<const double> actual, const char* what) {
    if (prediction.empty()) throw ContractError(std::string(what) + ": empty input");
    if (prediction.size() != actual.size()) {
        throw ContractError(std::string(what) + ": length mismatch (" + std::to_string(prediction.size()) + " vs " +
                            std::to_string(actual.size()) + ")");
    }
}

std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::string pad_left(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s : std::string(width - w, ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s : s + std::string(width - w, ' ');
}

/// Aligned plain text: first column left-aligned, the rest right-aligned.
std::string align(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) line += "  ";
            line += c == 0 ? pad_right(rows[r][c], widths[c]) : pad_left(rows[r][c], widths[c]);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + '\n';
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : widths) total += w;
            out += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
        }
    }
    return out;
}

std::string to_csv(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) out += csv::join_record(row) + '\n';
    return out;
}

bool is_baseline(const EvaluationReport& r) {
    return r.strategy == "baseline" || (r.strategy == "S1" && r.model == r.target);
}

bool is_zero_shot(const EvaluationReport& r) {
    return r.strategy == "S1" || r.strategy == "S2" || r.strategy == "baseline";
}

std::string metric(double v) {
    return format_fixed(v, 3);
}

std::string horizon_label(std::size_t h) {
    return std::to_string(h) + "hr";
}

} // namespace

double mae(std::span<const double> prediction, std::span<const double> actual) {
    check_pair(prediction, actual, "mae");
    double total = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) total += std::abs(prediction[i] - actual[i]);
    return total / static_cast<double>(prediction.size());
}

double mse(std::span<const double> prediction, std::span<const double> actual) {
    check_pair(prediction, actual, "mse");
    double total = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = prediction[i] - actual[i];
        total += d * d;
    }
    return total / static_cast<double>(prediction.size());
}

MetricSet evaluate(std::span<const double> prediction, std::span<const double> actual, std::size_t horizon) {
    return {mae(prediction, actual), mse(prediction, actual), horizon, prediction.size()};
}

MetricSet mean_metrics(std::span<const MetricSet> runs) {
    if (runs.empty()) throw ContractError("mean_metrics: no runs");
    MetricSet out;
    out.horizon = runs.front().horizon;
    for (const auto& r : runs) {
        out.mae += r.mae;
        out.mse += r.mse;
        out.n_predictions += r.n_predictions;
    }
    out.mae /= static_cast<double>(runs.size());
    out.mse /= static_cast<double>(runs.size());
    return out;
}

double improvement_pct(double base, double updated) {
    if (!(base > 0.0)) throw ContractError("improvement_pct: base must be positive");
    return 100.0 * (base - updated) / base;
}

double round_half_away(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    // Nudge by a few ulps so values printed as ...5 in decimal, but stored just
    // below it in binary, round away from zero.
    const double scaled = value * scale;
    const double nudged = scaled + std::copysign(std::abs(scaled) * 4.0 * 2.220446049250313e-16, scaled);
    return std::copysign(std::floor(std::abs(nudged) + 0.5), value) / scale;
}

std::string format_fixed(double value, int decimals) {
    double r = round_half_away(value, decimals);
    if (r == 0.0) r = 0.0;  // no "-0.0"
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, r);
    return buf;
}

std::string format_pct(double value) {
    const std::string body = format_fixed(value, 1);
    if (round_half_away(value, 1) > 0.0) return "+" + body + "%";
    return body + "%";
}

void finalize(EvaluationReport& report) {
    std::vector<MetricSet> sets;
    for (const auto& s : report.seeds) sets.push_back(s.metrics);
    report.mean = sets.empty() ? MetricSet{} : mean_metrics(sets);
    if (report.mean.horizon == 0) report.mean.horizon = report.horizon;
}

RenderedTable render_zero_shot_matrix(const std::vector<EvaluationReport>& reports, const std::string& arch,
                                      std::size_t horizon) {
    RenderedTable table;
    table.name = "zero_shot_" + arch + "_" + horizon_label(horizon);
    std::vector<std::string> models, targets;
    std::map<std::pair<std::string, std::string>, const EvaluationReport*> cells;
    for (const auto& r : reports) {
        if (r.arch != arch || r.horizon != horizon || !is_zero_shot(r)) continue;
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        if (std::find(targets.begin(), targets.end(), r.target) == targets.end()) targets.push_back(r.target);
        cells[{r.model, r.target}] = &r;
    }
    std::vector<std::vector<std::string>> text_rows, csv_rows;
    std::vector<std::string> header{"trained \\ tested"};
    header.insert(header.end(), targets.begin(), targets.end());
    text_rows.push_back(header);
    csv_rows.push_back({"model", "target", "mae", "mse", "seeds", "baseline", "partial"});
    for (const auto& m : models) {
        std::vector<std::string> row{m};
        for (const auto& t : targets) {
            const auto it = cells.find({m, t});
            if (it == cells.end()) {
                row.push_back(kMissing);
                table.warnings.push_back("missing zero-shot cell " + m + " -> " + t + " (" + arch + ", " +
                                         horizon_label(horizon) + ")");
                csv_rows.push_back({m, t, "", "", "0", m == t ? "1" : "0", "0"});
                continue;
            }
            const EvaluationReport& r = *it->second;
            std::string cell = metric(r.mean.mae);
            if (is_baseline(r)) cell += "*";
            if (r.partial()) {
                cell += "!";
                table.warnings.push_back("partial mean for " + m + " -> " + t + ": " + std::to_string(r.seeds.size()) +
                                         " of " + std::to_string(r.expected_seeds) + " seeds");
            }
            row.push_back(cell);
            csv_rows.push_back({m, t, metric(r.mean.mae), metric(r.mean.mse), std::to_string(r.seeds.size()),
                                is_baseline(r) ? "1" : "0", r.partial() ? "1" : "0"});
        }
        text_rows.push_back(row);
    }
    table.text = "Average MAE, zero-shot, " + arch + ", " + horizon_label(horizon) + " horizon\n" + align(text_rows) +
                 "* baseline (trained and tested on the same dataset)  ! partial seed mean\n";
    table.csv = to_csv(csv_rows);
    return table;
}

RenderedTable render_strategy_summary(const std::vector<EvaluationReport>& reports, const std::string& arch) {
    RenderedTable table;
    table.name = "strategy_summary_" + arch;
    std::map<std::pair<std::string, std::size_t>, const EvaluationReport*> baselines;
    for (const auto& r : reports) {
        if (r.arch == arch && is_baseline(r)) baselines[{r.target, r.horizon}] = &r;
    }
    const std::vector<std::string> header{"model",   "target",   "horizon",  "strategy", "base_mae",
                                          "mae",     "mae_imp",  "base_mse", "mse",      "mse_imp",
                                          "seeds",   "note"};
    std::vector<std::vector<std::string>> rows{header};
    for (const auto& r : reports) {
        if (r.arch != arch || is_baseline(r)) continue;
        std::vector<std::string> row{r.model, r.target, horizon_label(r.horizon), r.strategy};
        const auto it = baselines.find({r.target, r.horizon});
        const EvaluationReport* base = it == baselines.end() ? nullptr : it->second;
        if (!base) {
            table.warnings.push_back("no baseline for " + r.target + " (" + arch + ", " + horizon_label(r.horizon) + ")");
        }
        auto imp = [&](double b, double v) { return b > 0.0 ? format_pct(improvement_pct(b, v)) : std::string(kMissing); };
        row.push_back(base ? metric(base->mean.mae) : kMissing);
        row.push_back(metric(r.mean.mae));
        row.push_back(base ? imp(base->mean.mae, r.mean.mae) : kMissing);
        row.push_back(base ? metric(base->mean.mse) : kMissing);
        row.push_back(metric(r.mean.mse));
        row.push_back(base ? imp(base->mean.mse, r.mean.mse) : kMissing);
        row.push_back(std::to_string(r.seeds.size()) + "/" + std::to_string(std::max(r.expected_seeds, r.seeds.size())));
        std::string note;
        if (r.partial()) note = "partial";
        if (!r.core_strategy) note += note.empty() ? "extension" : ",extension";
        row.push_back(note);
        if (r.partial()) {
            table.warnings.push_back("partial mean for " + r.plan_id + ": " + std::to_string(r.seeds.size()) + " of " +
                                     std::to_string(r.expected_seeds) + " seeds");
        }
        rows.push_back(row);
    }
    table.text = "Strategy summary, " + arch + "\n" + align(rows);
    table.csv = to_csv(rows);
    return table;
}

std::vector<RenderedTable> render_tables(const std::vector<EvaluationReport>& reports) {
    std::set<std::string> arches;
    std::set<std::pair<std::string, std::size_t>> zero_shot;
    for (const auto& r : reports) {
        arches.insert(r.arch);
        if (is_zero_shot(r)) zero_shot.insert({r.arch, r.horizon});
    }
    std::vector<RenderedTable> out;
    for (const auto& [arch, h] : zero_shot) out.push_back(render_zero_shot_matrix(reports, arch, h));
    for (const auto& arch : arches) out.push_back(render_strategy_summary(reports, arch));
    return out;
}

} // namespace tlbench
