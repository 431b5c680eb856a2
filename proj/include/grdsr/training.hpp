#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdsr/degradation.hpp"
#include "grdsr/grd_model.hpp"

namespace grdsr {

// Training regimes. Supervised* use true HR targets; Internal* learn from the
// test LR image alone; External* learn from other subjects' LR images.
enum class Regime { Supervised, SupervisedGuided, Internal, InternalGuided, ExternalUnguided, ExternalGuided };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);
bool regime_is_guided(Regime r);
bool regime_uses_true_hr(Regime r);

// Which image played the role of the training target.
enum class TargetSource { TrueHighRes, ObservedLowRes };

struct AugmentTransform {
    double rescale = 1.0;
    double rotation_degrees = 0.0;
    bool flip = false;

    bool is_identity() const { return rescale == 1.0 && rotation_degrees == 0.0 && !flip; }
    bool is_right_angle() const;
    friend bool operator==(const AugmentTransform&, const AugmentTransform&) = default;
};

struct AugmentationSpec {
    std::vector<double> right_angle_rotations{0.0, 90.0, 180.0, 270.0};
    bool horizontal_flip = true;
    std::vector<double> extra_rotation_degrees{15.0, 30.0};
    std::vector<double> rescale_factors{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t min_extent = 16; // variants smaller than this are skipped

    static AugmentationSpec none();
    static AugmentationSpec right_angles_and_flip();

    void validate() const;
};

void to_json(nlohmann::json& j, const AugmentationSpec& a);
void from_json(const nlohmann::json& j, AugmentationSpec& a);

// Deterministic order: rescale (descending), rotation (right angles then
// extras, duplicates dropped), flip (off, on). Identity comes first when present.
std::vector<AugmentTransform> enumerate_transforms(const AugmentationSpec& spec);

// Rescale (FWHM-matched blur + bicubic), rotate (exact for right angles,
// bilinear with largest interior crop otherwise), then flip horizontally.
// nullopt when the result would fall below `min_extent`.
std::optional<ImagePlane> apply_transform(const ImagePlane& image, const AugmentTransform& t,
                                          std::size_t min_extent = 16);

// Inverse of a right-angle transform with rescale 1.
ImagePlane invert_right_angle_transform(const ImagePlane& image, const AugmentTransform& t);

std::vector<ImagePlane> augment(const ImagePlane& image, const AugmentationSpec& spec);

struct TrainingPair {
    ImagePlane input_lr_interp;
    ImagePlane input_guide; // width 0 when the regime has no guidance
    ImagePlane target;
    Regime regime = Regime::Supervised;
    TargetSource target_source = TargetSource::TrueHighRes;
    std::size_t source_index = 0;
    AugmentTransform transform;

    bool has_guide() const noexcept { return input_guide.width > 0; }
};

// Supervised pairs: input = interp(D B X), guide = X_G, target = X.
std::vector<TrainingPair> make_supervised_pairs(const std::vector<ImagePlane>& hr_targets,
                                                const std::vector<ImagePlane>* guides, const DegradationSpec& spec,
                                                const AugmentationSpec& augmentation = AugmentationSpec::none());

// External unsupervised pairs: the external LR images are the targets,
// input = interp(D B Y), guide = the HR guide brought to Y's grid (D B X_G).
std::vector<TrainingPair> make_external_unsupervised_pairs(const std::vector<ImagePlane>& external_lr,
                                                           const std::vector<ImagePlane>* guides,
                                                           const DegradationSpec& spec,
                                                           const AugmentationSpec& augmentation);

// Internal pairs drawn from the single test LR image (and optional guide).
std::vector<TrainingPair> make_internal_pairs(const ImagePlane& test_lr, const ImagePlane* guide,
                                              const DegradationSpec& spec, const AugmentationSpec& augmentation);

// mean(|pred - target|^p), p in {1, 2}; the L1 subgradient at 0 is 0.
Var lp_loss(const Var& pred, const Tensor& target, int p);

// Divides the learning rate when the smoothed loss has not set a new best
// for `patience` consecutive observations; stops once lr < stop_lr.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, double divisor, std::size_t patience, double stop_lr,
                     std::size_t smoothing_window = 5);

    double lr() const noexcept { return lr_; }
    bool should_stop() const noexcept;
    std::size_t reductions() const noexcept { return reductions_; }
    void observe(double loss);

private:
    double initial_lr_, divisor_, stop_lr_;
    std::size_t patience_, window_;
    double lr_;
    double best_;
    std::size_t since_best_ = 0;
    std::size_t reductions_ = 0;
    std::deque<double> recent_;
};

struct TrainConfig {
    int loss_norm = 1;
    double initial_lr = 1e-3;
    double lr_divisor = 10.0;
    std::size_t plateau_patience = 10;
    double stop_lr = 1e-6;
    std::size_t smoothing_window = 5;
    std::size_t batch_size = 8;
    std::size_t max_steps = 20000;
    std::size_t patch_size = 64;
    std::uint64_t seed = 1;
    std::size_t checkpoint_interval = 0; // 0 disables periodic checkpoints

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

enum class StopReason { LearningRateFloor, MaxSteps, NonFinite };
std::string to_string(StopReason r);

struct TrainResult {
    std::vector<LossRecord> history;
    StopReason stop_reason = StopReason::MaxSteps;
    std::string message;
};

struct TrainHooks {
    // Replaces the loss value fed to the scheduler and recorded in history.
    std::function<double(std::size_t step, double loss)> observed_loss;
    std::function<void(const GrdNetwork&, std::size_t step)> on_checkpoint;
};

// Adam on mean lp_loss over random patch batches with the plateau schedule.
// On a non-finite loss or gradient the network is restored to its last
// good parameters and training stops with StopReason::NonFinite.
TrainResult train(GrdNetwork& net, const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                  const TrainHooks& hooks = {});

std::string loss_history_csv(const std::vector<LossRecord>& history);

} // namespace grdsr
