#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "grdsr/errors.hpp"
#include "grdsr/experiment.hpp"
#include "grdsr/log.hpp"

using namespace grdsr;

namespace {

// Small enough that a full matrix trains in well under a second.
ExperimentConfig tiny(std::vector<std::string> methods) {
    ExperimentConfig c;
    c.methods = std::move(methods);
    c.seeds = {1, 2};
    c.phantom.width = 48;
    c.phantom.height = 48;
    c.phantom.depth = 4;
    c.external_subjects = 1;
    c.train_slices = {1};
    c.test_slices = {2, 3};
    c.network = {1, 2, 4, 4, 4};
    c.train.max_steps = 3;
    c.train.patch_size = 16;
    c.train.batch_size = 2;
    c.internal_train = c.train;
    return c;
}

struct QuietLog {
    QuietLog() { set_log_sink([](LogLevel, const std::string&) {}); }
    ~QuietLog() { set_log_sink(nullptr); }
};

std::vector<ExperimentRow> rows_for(const ExperimentResult& r, const std::string& method) {
    std::vector<ExperimentRow> out;
    std::copy_if(r.rows.begin(), r.rows.end(), std::back_inserter(out),
                 [&](const ExperimentRow& row) { return row.method == method; });
    return out;
}

} // namespace

TEST_CASE("method labels follow the comparison tables") {
    CHECK(method_label("supervised_guided") == "ours1");
    CHECK(method_label("external_unguided") == "ours2");
    CHECK(method_label("internal_guided") == "ours3");
    CHECK(method_label("external_guided") == "ours4");
    CHECK(method_label("internal") == "ZSSR");
    CHECK(method_label("bicubic") == "bicubic");
}

TEST_CASE("training degradation picks the rule by stage count") {
    CHECK(training_degradation(2.0, 1, 2.0).sigma == DegradationSpec::for_test(2.0).sigma);
    CHECK(training_degradation(2.0, 3, 2.0).sigma == DegradationSpec::for_cascade_stage(std::cbrt(2.0), 2.0).sigma);
    CHECK_THROWS_AS(training_degradation(2.0, 0, 2.0), ConfigError);
}

TEST_CASE("bicubic-only matrix trains nothing") {
    QuietLog quiet;
    const ExperimentResult r = run_experiment(tiny({"bicubic"}));
    CHECK(r.training.empty());
    REQUIRE(r.summaries.size() == 1);
    CHECK(r.summaries[0].method == "bicubic");
    CHECK(r.rows.size() == 4);
    CHECK(r.checks.empty()); // every default check names a method that did not run
    const std::string report = experiment_report(r, tiny({"bicubic"}));
    CHECK(report.find("training runs") == std::string::npos);
}

TEST_CASE("each method sees the same data regardless of the matrix around it") {
    QuietLog quiet;
    const ExperimentResult alone = run_experiment(tiny({"external_unguided"}));
    const ExperimentResult mixed = run_experiment(tiny({"external_guided", "bicubic", "external_unguided"}));
    const auto a = rows_for(alone, "external_unguided"), b = rows_for(mixed, "external_unguided");
    REQUIRE(a.size() == 4);
    REQUIRE(b.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].seed == b[i].seed);
        CHECK(a[i].slice == b[i].slice);
        CHECK(a[i].psnr_db == b[i].psnr_db);
        CHECK(a[i].ssim == b[i].ssim);
    }
    CHECK(subject_seed(1, 0) != subject_seed(1, 1));
    CHECK(subject_seed(1, 1) != subject_seed(2, 1));
}

TEST_CASE("ordering violations are reported explicitly") {
    QuietLog quiet;
    ExperimentConfig c = tiny({"bicubic", "internal"});
    c.checks = {{"bicubic", "internal", 100.0}};
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.checks.size() == 1);
    CHECK_FALSE(r.checks[0].passed);
    CHECK(r.checks[0].seed_violations == std::vector<std::uint64_t>{1, 2});
    CHECK_FALSE(r.all_checks_passed());
    const std::string report = experiment_report(r, c);
    CHECK(report.find("FAIL bicubic > internal") != std::string::npos);
    CHECK(report.find("violated on seed 1 2") != std::string::npos);
    // One training run per seed and test slice for internal learning.
    CHECK(r.training.size() == 4);
}

TEST_CASE("summaries are ranked and averaged per seed") {
    QuietLog quiet;
    const ExperimentConfig c = tiny({"bicubic", "external_guided"});
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.summaries.size() == 2);
    CHECK(r.summaries[0].mean_psnr >= r.summaries[1].mean_psnr);
    for (const auto& s : r.summaries) {
        const auto rows = rows_for(r, s.method);
        double total = 0.0;
        for (const auto& row : rows) total += row.psnr_db;
        CHECK(s.mean_psnr == doctest::Approx(total / static_cast<double>(rows.size())).epsilon(1e-12));
        REQUIRE(s.seed_psnr.size() == 2);
    }
}

TEST_CASE("identical configs give identical metrics") {
    QuietLog quiet;
    const ExperimentConfig c = tiny({"bicubic", "external_guided", "internal"});
    CHECK(experiment_metrics_csv(run_experiment(c)) == experiment_metrics_csv(run_experiment(c)));
}

TEST_CASE("experiment config") {
    ExperimentConfig c = tiny({"bicubic", "internal_guided"});
    c.dynamic_range = 200.0;
    c.ibp_mode = IbpMode::FinalOnly;
    nlohmann::json j = c;
    const auto back = j.get<ExperimentConfig>();
    CHECK(nlohmann::json(back) == j);

    SUBCASE("validation") {
        ExperimentConfig bad = c;
        bad.methods = {"telepathy"};
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.test_slices = {99};
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = c;
        bad.scale = 1.0;
        CHECK_THROWS_AS(bad.validate(), DomainError);
        bad = tiny({"external_guided"});
        bad.external_subjects = 0;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = tiny({"bicubic"});
        bad.train_slices = {99}; // unused without external regimes
        CHECK_NOTHROW(bad.validate());
    }
}
