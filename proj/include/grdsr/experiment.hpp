#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdsr/cascade.hpp"
#include "grdsr/data_io.hpp"
#include "grdsr/grd_model.hpp"
#include "grdsr/training.hpp"

namespace grdsr {

// "method" is a regime name or "bicubic". Table labels: supervised_guided
// ours1, external_unguided ours2, internal_guided ours3, external_guided
// ours4, internal ZSSR.
std::string method_label(const std::string& method);

struct OrderingCheck {
    std::string better;
    std::string worse;
    double margin_db = 0.0; // mean PSNR(better) - mean PSNR(worse) must exceed this
};

// Batch 4 of 32x32 patches, 300 steps: the phantom-scale budget.
TrainConfig desk_train_config();

struct ExperimentConfig {
    std::vector<std::string> methods{"bicubic", "external_guided", "external_unguided", "internal"};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double scale = 2.0;
    double lambda = 2.0;
    std::size_t supervised_stages = 1;
    std::size_t unsupervised_stages = 3;
    PhantomSpec phantom;                    // seed field is replaced per subject
    std::size_t external_subjects = 2;
    std::vector<std::size_t> train_slices{8, 12, 16, 20};
    std::vector<std::size_t> test_slices{14, 18};
    GrdConfig network;
    TrainConfig train = desk_train_config();          // external and supervised regimes
    TrainConfig internal_train = desk_train_config(); // one run per test slice
    AugmentationSpec supervised_augmentation = AugmentationSpec::right_angles_and_flip();
    AugmentationSpec unsupervised_augmentation; // internal and external LR regimes alike
    IbpConfig ibp;
    IbpMode ibp_mode = IbpMode::EveryStage;
    std::optional<double> dynamic_range;    // default: max of each ground-truth slice
    std::size_t border = 0;
    std::vector<OrderingCheck> checks{{"external_guided", "bicubic", 1.0},
                                      {"external_guided", "external_unguided", 0.0},
                                      {"external_unguided", "internal", 0.0}};

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Degradation used to simulate training inputs: the test rule for one-shot
// networks, the sharper per-stage rule for cascades.
DegradationSpec training_degradation(double scale, std::size_t stages, double lambda);

// Derived seeds: subject 0 is the test subject, 1.. the external subjects.
std::uint64_t subject_seed(std::uint64_t run_seed, std::size_t subject);
std::uint64_t training_seed(std::uint64_t run_seed);

struct ExperimentRow {
    std::uint64_t seed = 0;
    std::string method;
    std::size_t slice = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct TrainingSummary {
    std::uint64_t seed = 0;
    std::string method;
    std::size_t slice = 0; // test slice for internal regimes, 0 otherwise
    std::size_t steps = 0;
    double final_loss = 0.0;
    StopReason stop_reason = StopReason::MaxSteps;
};

struct MethodSummary {
    std::string method;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::vector<double> seed_psnr; // per-seed mean, in seed order
};

struct CheckOutcome {
    OrderingCheck check;
    double better_psnr = 0.0;
    double worse_psnr = 0.0;
    bool passed = false;
    std::vector<std::uint64_t> seed_violations;
};

struct ExperimentResult {
    std::vector<ExperimentRow> rows;
    std::vector<TrainingSummary> training;
    std::vector<MethodSummary> summaries; // ranked by mean PSNR, best first
    std::vector<CheckOutcome> checks;

    bool all_checks_passed() const;
    const MethodSummary* summary(const std::string& method) const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

std::string experiment_metrics_csv(const ExperimentResult& r);
std::string experiment_report(const ExperimentResult& r, const ExperimentConfig& config);

} // namespace grdsr
