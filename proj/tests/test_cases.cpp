#include <catch2/catch_amalgamated.hpp>

#include "agecal/cases.hpp"
#include "agecal/synth.hpp"
#include "test_support.hpp"

using namespace agecal;

namespace {

/// Small fast campaign shared by the harness tests.
Dataset small_dataset(double noise_std, std::uint64_t seed = 42) {
    SynthConfig cfg;
    cfg.noise_std = noise_std;
    cfg.seed = seed;
    const auto data = generate_cells(default_static_conditions(450.0, 30.0), cfg, 1);
    return Dataset{data.cells, data.profiles};
}

FitConfig quick_fit() {
    FitConfig cfg;
    cfg.restarts = 3;
    cfg.max_iters = 60;
    cfg.seed = 1;
    return cfg;
}

} // namespace

TEST_CASE("builtin cases follow the published progression") {
    const auto cases = builtin_cases();
    REQUIRE(cases.size() == 7);

    CHECK(cases[0].conditions ==
          std::vector<Condition>{{25.0, 80.0}, {45.0, 80.0}});
    CHECK(cases[1].conditions.size() == 3);
    CHECK(cases[2].conditions.size() == 6);
    CHECK(cases[3].contains({35.0, 100.0}));
    CHECK(cases[4].contains({35.0, 20.0}));
    CHECK(cases[5].contains({35.0, 65.0}));
    CHECK(cases[6].contains({35.0, 35.0}));
    CHECK(cases[6].conditions.size() == 10);

    // the single-SOC property of case 1
    for (const auto& c : cases[0].conditions) CHECK(c.soc == 80.0);

    // nesting
    for (std::size_t k = 1; k < cases.size(); ++k)
        for (const auto& c : cases[k - 1].conditions) CHECK(cases[k].contains(c));
}

TEST_CASE("run_case pins theta_soc exactly for the single-SOC cases") {
    const Dataset data = small_dataset(0.0);
    const auto cases = builtin_cases();
    const FitConfig cfg = quick_fit();

    const CaseRun c1 = run_case(cases[0], data, cfg);
    CHECK(c1.report.pinned_soc);
    CHECK(c1.model.h.theta_soc == 1e6);
    CHECK(c1.model.h.pinned.count("theta_soc") == 1);

    const CaseRun c2 = run_case(cases[1], data, cfg);
    CHECK(c2.report.pinned_soc);

    for (std::size_t k = 2; k < cases.size(); ++k) {
        const CaseRun run = run_case(cases[k], data, cfg);
        CHECK_FALSE(run.report.pinned_soc);
        CHECK(run.model.h.pinned.empty());
    }
}

TEST_CASE("case reports are internally consistent") {
    const Dataset data = small_dataset(0.02);
    const auto cases = builtin_cases();
    const CaseRun run = run_case(cases[2], data, quick_fit());
    const CaseReport& rep = run.report;

    CHECK(rep.case_id == 3);
    // noise can truncate an occasional curve below the evaluation span
    CHECK(rep.training.cells_q >= 4);
    CHECK(rep.training.cells_q <= 6);
    CHECK(rep.validation.cells_q >= 3);
    CHECK(rep.validation.cells_q <= 4);
    CHECK(rep.all.cells_q == rep.training.cells_q + rep.validation.cells_q);

    for (const auto& c : rep.cells) {
        if (c.has_dq) {
            CHECK(c.mae_dq <= c.rmse_dq + 1e-15);
            CHECK(c.cs_dq >= 0.0);
            CHECK(c.cs_dq <= 100.0);
        }
        if (c.has_q) {
            CHECK(c.mae_q <= c.rmse_q + 1e-15);
            CHECK(c.cs_q >= 0.0);
            CHECK(c.cs_q <= 100.0);
        }
    }

    // aggregate = unweighted mean of the contributing cells
    double sum = 0.0;
    int n = 0;
    for (const auto& c : rep.cells)
        if (c.split == "validation" && c.has_q) {
            sum += c.mae_q;
            ++n;
        }
    REQUIRE(n == rep.validation.cells_q);
    CHECK(rep.validation.mae_q == Catch::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("case 7 has an empty validation split") {
    const Dataset data = small_dataset(0.0);
    const CaseRun run = run_case(builtin_cases()[6], data, quick_fit());
    CHECK(run.report.validation.cells_q == 0);
    CHECK(run.report.validation.cells_dq == 0);

    const std::string csv = case_summaries_to_csv({run.report});
    CHECK(csv.find("7,validation,dq,,,\n") != std::string::npos);
    CHECK(csv.find("7,validation,q,,,\n") != std::string::npos);
}

TEST_CASE("run_case reports missing conditions as a coverage error") {
    Dataset data = small_dataset(0.0);
    // drop every 45 C cell
    Dataset reduced;
    for (std::size_t i = 0; i < data.cells.size(); ++i) {
        const auto cond = static_condition_of(data.profiles[i]);
        if (cond && cond->temp_c == 45.0) continue;
        reduced.cells.push_back(data.cells[i]);
        reduced.profiles.push_back(data.profiles[i]);
    }
    CHECK_THROWS_AS(run_case(builtin_cases()[0], reduced, quick_fit()), CoverageError);
}

TEST_CASE("run_case is deterministic") {
    const Dataset data = small_dataset(0.05);
    const CaseRun a = run_case(builtin_cases()[2], data, quick_fit());
    const CaseRun b = run_case(builtin_cases()[2], data, quick_fit());
    CHECK(a.model.h.theta_t == b.model.h.theta_t);
    CHECK(a.model.h.sigma_n2 == b.model.h.sigma_n2);
    CHECK(a.report.all.mae_q == b.report.all.mae_q);
    CHECK(case_summaries_to_csv({a.report}) == case_summaries_to_csv({b.report}));
}

TEST_CASE("dynamic update with zero new rows is the identity") {
    const Dataset data = small_dataset(0.0);
    const CaseRun base = run_case(builtin_cases()[2], data, quick_fit());

    SynthConfig cfg;
    cfg.noise_std = 0.0;
    const auto dyn = generate_dynamic_cells(default_dynamic_profiles(), 28.0, cfg);
    const Dataset dyn_data{dyn.cells, dyn.profiles};

    // an update day before the first full window produces no rows
    const DynamicUpdateReport rep =
        run_dynamic_update(base.model, dyn_data, 20.0, false, quick_fit());
    CHECK(rep.new_rows == 0);
    REQUIRE(rep.before.size() == rep.after.size());
    for (std::size_t i = 0; i < rep.before.size(); ++i) {
        CHECK(rep.before[i].mae_q == rep.after[i].mae_q);
        CHECK(rep.before[i].cs_dq == rep.after[i].cs_dq);
    }
    for (std::size_t i = 0; i < rep.sweeps_before.temperature.size(); ++i)
        CHECK(rep.sweeps_before.temperature[i].posterior_std ==
              rep.sweeps_after.temperature[i].posterior_std);
}

TEST_CASE("dynamic update gains confidence at the coldest observed temperature") {
    const Dataset data = small_dataset(0.0);
    const CaseRun base = run_case(builtin_cases()[2], data, quick_fit());

    SynthConfig cfg;
    cfg.noise_std = 0.0;
    const auto dyn = generate_dynamic_cells(default_dynamic_profiles(), 28.0, cfg);
    const Dataset dyn_data{dyn.cells, dyn.profiles};

    const DynamicUpdateReport rep =
        run_dynamic_update(base.model, dyn_data, 368.0, false, quick_fit());
    CHECK(rep.new_rows > 0);

    // the dynamic legs visit 15 C; training case 3 never did
    const auto& before = rep.sweeps_before.temperature;
    const auto& after = rep.sweeps_after.temperature;
    REQUIRE(before.size() == after.size());
    double at15_before = -1.0, at15_after = -1.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(after[i].posterior_std <= before[i].posterior_std + 1e-12);
        if (before[i].axis_value == 15.0) {
            at15_before = before[i].posterior_std;
            at15_after = after[i].posterior_std;
        }
    }
    REQUIRE(at15_before > 0.0);
    CHECK(at15_after < at15_before);

    // fresh consistent data must not hurt the held-out tail
    for (std::size_t i = 0; i < rep.before.size(); ++i)
        CHECK(rep.after[i].mae_q <= rep.before[i].mae_q + 1e-9);
}

TEST_CASE("update beyond the observed span is a range error") {
    const Dataset data = small_dataset(0.0);
    const CaseRun base = run_case(builtin_cases()[0], data, quick_fit());
    SynthConfig cfg;
    cfg.noise_std = 0.0;
    const auto dyn = generate_dynamic_cells(default_dynamic_profiles(), 28.0, cfg);
    const Dataset dyn_data{dyn.cells, dyn.profiles};
    CHECK_THROWS_AS(run_dynamic_update(base.model, dyn_data, 5000.0, false, quick_fit()),
                    RangeError);
}

TEST_CASE("report CSVs carry the documented schemas") {
    const Dataset data = small_dataset(0.0);
    const CaseRun run = run_case(builtin_cases()[0], data, quick_fit());
    const std::string report = cell_metrics_to_csv(run.report.cells);
    CHECK(report.rfind("cell_id,metric,quantity,value\n", 0) == 0);
    CHECK(report.find(",mae,dq,") != std::string::npos);
    CHECK(report.find(",cs2sigma,q,") != std::string::npos);

    const std::string splits = splits_to_csv(run.report.cells);
    CHECK(splits.rfind("cell_id,split\n", 0) == 0);
    CHECK(splits.find(",training\n") != std::string::npos);
    CHECK(splits.find(",validation\n") != std::string::npos);

    const std::string rel = relevance_to_csv(run.report.relevance_shares);
    CHECK(rel.rfind("factor,share\ntemperature,", 0) == 0);
}
