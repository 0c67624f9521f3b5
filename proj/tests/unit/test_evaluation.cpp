#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "tlbench/csv.hpp"
#include "tlbench/errors.hpp"
#include "tlbench/evaluation.hpp"
#include "tlbench/rng.hpp"

using namespace tlbench;

namespace {

struct ReferenceRow {
    std::string dataset, horizon;
    double base_mae, base_mse;
    double values[4];    // S6 MAE, S6 MSE, S8 MAE, S8 MSE
    double printed[4];   // printed Imp (%) for each
};

std::vector<ReferenceRow> reference_rows() {
    std::ifstream in(std::string(TLBENCH_FIXTURES) + "/vanilla_large_scale_summary.csv");
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    std::vector<ReferenceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split_record(line);
        REQUIRE(f.size() == 12);
        ReferenceRow r{f[0], f[1], std::stod(f[2]), std::stod(f[3]), {}, {}};
        for (int k = 0; k < 4; ++k) {
            r.values[k] = std::stod(f[4 + 2 * k]);
            r.printed[k] = std::stod(f[5 + 2 * k]);
        }
        rows.push_back(r);
    }
    return rows;
}

EvaluationReport report(std::string strategy, std::string model, std::string target, double mae, double mse,
                        std::size_t seeds = 3, std::size_t expected = 3) {
    EvaluationReport r;
    r.plan_id = model + ">" + target + ":" + strategy;
    r.strategy = std::move(strategy);
    r.model = std::move(model);
    r.target = std::move(target);
    r.arch = "vanilla";
    r.horizon = 24;
    r.expected_seeds = expected;
    r.core_strategy = r.strategy != "S3" && r.strategy != "S4";
    for (std::size_t s = 0; s < seeds; ++s) r.seeds.push_back({s + 1, {mae, mse, 24, 10}});
    finalize(r);
    return r;
}

} // namespace

TEST_CASE("mae and mse agree with loop oracles") {
    Rng rng(2024, RngStream::Synthetic);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(64);
        std::vector<double> p(n), a(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(-10, 10);
            a[i] = rng.uniform(-10, 10);
        }
        double abs_sum = 0.0, sq_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            abs_sum += std::fabs(p[i] - a[i]);
            sq_sum += (p[i] - a[i]) * (p[i] - a[i]);
        }
        CHECK(std::fabs(mae(p, a) - abs_sum / n) <= 1e-12);
        CHECK(std::fabs(mse(p, a) - sq_sum / n) <= 1e-12);
    }
    const std::vector<double> empty, one{1.0}, two{1.0, 2.0};
    CHECK_THROWS_AS(mae(empty, empty), ContractError);
    CHECK_THROWS_AS(mse(one, two), ContractError);
}

TEST_CASE("improvement percentages and rounding") {
    CHECK(format_pct(improvement_pct(0.305, 0.291)) == "+4.6%");
    CHECK(format_pct(improvement_pct(0.305, 0.283)) == "+7.2%");
    CHECK(format_pct(improvement_pct(0.377, 0.378)) == "-0.3%");
    CHECK(format_pct(improvement_pct(0.270, 0.270)) == "0.0%");
    CHECK_THROWS_AS(improvement_pct(0.0, 1.0), ContractError);
    CHECK(round_half_away(0.125, 2) == doctest::Approx(0.13));
    CHECK(round_half_away(-0.125, 2) == doctest::Approx(-0.13));
    CHECK(round_half_away(2.5, 0) == 3.0);
    CHECK(format_fixed(-0.0004, 3) == "0.000");
    CHECK(format_fixed(0.2905, 3) == "0.291");
}

TEST_CASE("reference table: recomputed Imp within 0.1 pp of every printed value") {
    const auto rows = reference_rows();
    REQUIRE(rows.size() == 32);
    std::size_t checked = 0;
    for (const auto& r : rows) {
        CAPTURE(r.dataset);
        CAPTURE(r.horizon);
        for (int k = 0; k < 4; ++k) {
            const double base = k % 2 == 0 ? r.base_mae : r.base_mse;
            CHECK(std::fabs(improvement_pct(base, r.values[k]) - r.printed[k]) <= 0.1 + 1e-9);
            ++checked;
        }
    }
    CHECK(checked == 128);
}

TEST_CASE("seed means") {
    std::vector<MetricSet> runs{{0.3, 0.2, 24, 10}, {0.5, 0.1, 24, 10}, {0.4, 0.3, 24, 10}};
    const MetricSet m = mean_metrics(runs);
    CHECK(m.mae == doctest::Approx((0.3 + 0.5 + 0.4) / 3));
    CHECK(m.mse == doctest::Approx((0.2 + 0.1 + 0.3) / 3));
    CHECK(m.n_predictions == 30);
    CHECK_THROWS_AS(mean_metrics(std::vector<MetricSet>{}), ContractError);
}

TEST_CASE("zero-shot matrix marks baselines, partial means and gaps") {
    const std::vector<EvaluationReport> reports{
        report("baseline", "Bear", "Bear", 0.305, 0.219),
        report("S1", "Fox", "Bear", 0.350, 0.260, 2, 3),
        report("baseline", "Fox", "Fox", 0.268, 0.181),
    };
    const RenderedTable t = render_zero_shot_matrix(reports, "vanilla", 24);
    CHECK(t.text.find("0.305*") != std::string::npos);
    CHECK(t.text.find("0.350!") != std::string::npos);
    CHECK(t.text.find("—") != std::string::npos);  // Bear model never tested on Fox
    bool partial = false, missing = false;
    for (const auto& w : t.warnings) {
        partial = partial || w.find("partial") != std::string::npos;
        missing = missing || w.find("missing") != std::string::npos;
    }
    CHECK(partial);
    CHECK(missing);
    CHECK(t.csv.find("model,target,mae,mse,seeds,baseline,partial") == 0);
}

TEST_CASE("strategy summary reproduces the reference Imp columns") {
    const std::vector<EvaluationReport> reports{
        report("baseline", "Bear", "Bear", 0.305, 0.219),
        report("S6", "FullEnsemble", "Bear", 0.291, 0.211),
        report("S8", "FullEnsemble", "Bear", 0.283, 0.201),
        report("S4", "Fox+Crow", "Bear", 0.300, 0.215),
        report("S6", "FullEnsemble", "Fox", 0.263, 0.178),
    };
    const RenderedTable t = render_strategy_summary(reports, "vanilla");
    CHECK(t.text.find("+4.6%") != std::string::npos);
    CHECK(t.text.find("+3.7%") != std::string::npos);
    CHECK(t.text.find("+7.2%") != std::string::npos);
    CHECK(t.text.find("+8.2%") != std::string::npos);
    CHECK(t.text.find("extension") != std::string::npos);
    REQUIRE(t.warnings.size() == 1);
    CHECK(t.warnings[0].find("no baseline for Fox") != std::string::npos);

    const auto all = render_tables(reports);
    CHECK(all.size() == 2);
}

TEST_CASE("single run renders a single-row summary") {
    const std::vector<EvaluationReport> reports{report("baseline", "A", "A", 0.5, 0.4),
                                                report("S5", "B+A", "A", 0.4, 0.3, 1, 1)};
    const RenderedTable t = render_strategy_summary(reports, "vanilla");
    std::istringstream lines(t.csv);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 2);  // header + one row
    CHECK(t.csv.find("+20.0%") != std::string::npos);
}
