#include "grdsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "grdsr/errors.hpp"
#include "grdsr/data_io.hpp"
#include "grdsr/log.hpp"

namespace grdsr {

std::string to_string(Regime r) {
    switch (r) {
    case Regime::Supervised: return "supervised";
    case Regime::SupervisedGuided: return "supervised_guided";
    case Regime::Internal: return "internal";
    case Regime::InternalGuided: return "internal_guided";
    case Regime::ExternalUnguided: return "external_unguided";
    case Regime::ExternalGuided: return "external_guided";
    }
    return "unknown";
}

Regime regime_from_string(const std::string& s) {
    for (Regime r : {Regime::Supervised, Regime::SupervisedGuided, Regime::Internal, Regime::InternalGuided,
                     Regime::ExternalUnguided, Regime::ExternalGuided}) {
        if (to_string(r) == s) return r;
    }
    throw ConfigError("unknown regime '" + s + "'");
}

bool regime_is_guided(Regime r) {
    return r == Regime::SupervisedGuided || r == Regime::InternalGuided || r == Regime::ExternalGuided;
}

bool regime_uses_true_hr(Regime r) { return r == Regime::Supervised || r == Regime::SupervisedGuided; }

// ---------------------------------------------------------------------------
// Augmentation

bool AugmentTransform::is_right_angle() const { return std::fmod(rotation_degrees, 90.0) == 0.0; }

AugmentationSpec AugmentationSpec::none() {
    AugmentationSpec s;
    s.right_angle_rotations = {0.0};
    s.horizontal_flip = false;
    s.extra_rotation_degrees.clear();
    s.rescale_factors = {1.0};
    return s;
}

AugmentationSpec AugmentationSpec::right_angles_and_flip() {
    AugmentationSpec s;
    s.extra_rotation_degrees.clear();
    s.rescale_factors = {1.0};
    return s;
}

void AugmentationSpec::validate() const {
    for (double a : right_angle_rotations) {
        if (a < 0.0 || a >= 360.0 || std::fmod(a, 90.0) != 0.0) {
            throw ConfigError("right-angle rotations must be multiples of 90 in [0, 360)");
        }
    }
    for (double a : extra_rotation_degrees) {
        if (a < 0.0 || a >= 360.0) throw ConfigError("rotations must lie in [0, 360)");
    }
    for (double f : rescale_factors) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("rescale factors must lie in (0, 1]");
    }
    if (right_angle_rotations.empty() && extra_rotation_degrees.empty()) throw ConfigError("no rotations configured");
    if (rescale_factors.empty()) throw ConfigError("no rescale factors configured");
}

void to_json(nlohmann::json& j, const AugmentationSpec& a) {
    j = {{"right_angle_rotations", a.right_angle_rotations},
         {"horizontal_flip", a.horizontal_flip},
         {"extra_rotation_degrees", a.extra_rotation_degrees},
         {"rescale_factors", a.rescale_factors},
         {"min_extent", a.min_extent}};
}

void from_json(const nlohmann::json& j, AugmentationSpec& a) {
    a.right_angle_rotations = j.value("right_angle_rotations", a.right_angle_rotations);
    a.horizontal_flip = j.value("horizontal_flip", a.horizontal_flip);
    a.extra_rotation_degrees = j.value("extra_rotation_degrees", a.extra_rotation_degrees);
    a.rescale_factors = j.value("rescale_factors", a.rescale_factors);
    a.min_extent = j.value("min_extent", a.min_extent);
}

std::vector<AugmentTransform> enumerate_transforms(const AugmentationSpec& spec) {
    spec.validate();
    std::vector<double> scales = spec.rescale_factors;
    std::sort(scales.begin(), scales.end(), std::greater<>());
    scales.erase(std::unique(scales.begin(), scales.end()), scales.end());
    std::vector<double> angles;
    for (double a : spec.right_angle_rotations) {
        if (std::find(angles.begin(), angles.end(), a) == angles.end()) angles.push_back(a);
    }
    for (double a : spec.extra_rotation_degrees) {
        if (std::find(angles.begin(), angles.end(), a) == angles.end()) angles.push_back(a);
    }
    std::vector<AugmentTransform> out;
    for (double s : scales) {
        for (double a : angles) {
            out.push_back({s, a, false});
            if (spec.horizontal_flip) out.push_back({s, a, true});
        }
    }
    return out;
}

namespace {

ImagePlane rotate_right_angle(const ImagePlane& in, int quarter_turns) {
    quarter_turns = ((quarter_turns % 4) + 4) % 4;
    if (quarter_turns == 0) return in;
    const std::size_t W = in.width, H = in.height;
    const bool swap = quarter_turns % 2 == 1;
    ImagePlane out(swap ? H : W, swap ? W : H, 0.0f, swap ? in.dy : in.dx, swap ? in.dx : in.dy);
    for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) {
            float v = 0.0f;
            if (quarter_turns == 1) v = in.at(W - 1 - y, x);
            else if (quarter_turns == 2) v = in.at(W - 1 - x, H - 1 - y);
            else v = in.at(y, H - 1 - x);
            out.at(x, y) = v;
        }
    }
    return out;
}

ImagePlane flip_horizontal(const ImagePlane& in) {
    ImagePlane out = in;
    for (std::size_t y = 0; y < in.height; ++y) {
        for (std::size_t x = 0; x < in.width; ++x) out.at(x, y) = in.at(in.width - 1 - x, y);
    }
    return out;
}

// Largest axis-aligned rectangle inside a w x h rectangle rotated by `radians`.
std::pair<double, double> inscribed_rect(double w, double h, double radians) {
    const double s = std::abs(std::sin(radians)), c = std::abs(std::cos(radians));
    const bool wide = w >= h;
    const double long_side = wide ? w : h, short_side = wide ? h : w;
    if (short_side <= 2.0 * s * c * long_side || std::abs(s - c) < 1e-10) {
        const double x = 0.5 * short_side;
        return wide ? std::pair{x / s, x / c} : std::pair{x / c, x / s};
    }
    const double cos2 = c * c - s * s;
    return {(w * c - h * s) / cos2, (h * c - w * s) / cos2};
}

float bilinear(const ImagePlane& in, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(in.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(in.height - 1));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, in.width - 1), y1 = std::min(y0 + 1, in.height - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    const double top = (1.0 - fx) * in.at(x0, y0) + fx * in.at(x1, y0);
    const double bottom = (1.0 - fx) * in.at(x0, y1) + fx * in.at(x1, y1);
    return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

std::optional<ImagePlane> rotate_cropped(const ImagePlane& in, double degrees, std::size_t min_extent) {
    const double rad = degrees * std::numbers::pi / 180.0;
    const auto [rw, rh] = inscribed_rect(static_cast<double>(in.width), static_cast<double>(in.height), rad);
    const auto cw = static_cast<std::size_t>(std::floor(rw + 1e-9));
    const auto ch = static_cast<std::size_t>(std::floor(rh + 1e-9));
    if (cw < min_extent || ch < min_extent) return std::nullopt;
    ImagePlane out(cw, ch, 0.0f, in.dx, in.dy);
    const double c = std::cos(rad), s = std::sin(rad);
    const double icx = (static_cast<double>(in.width) - 1.0) / 2.0, icy = (static_cast<double>(in.height) - 1.0) / 2.0;
    const double ocx = (static_cast<double>(cw) - 1.0) / 2.0, ocy = (static_cast<double>(ch) - 1.0) / 2.0;
    for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) {
            const double u = static_cast<double>(x) - ocx, v = static_cast<double>(y) - ocy;
            out.at(x, y) = bilinear(in, c * u + s * v + icx, -s * u + c * v + icy);
        }
    }
    return out;
}

} // namespace

std::optional<ImagePlane> apply_transform(const ImagePlane& image, const AugmentTransform& t, std::size_t min_extent) {
    ImagePlane cur = image;
    if (t.rescale != 1.0) {
        if (!(t.rescale > 0.0 && t.rescale < 1.0)) throw ConfigError("rescale factor must lie in (0, 1]");
        const auto w = static_cast<std::size_t>(std::llround(static_cast<double>(image.width) * t.rescale));
        const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(image.height) * t.rescale));
        if (w < min_extent || h < min_extent) return std::nullopt;
        const double sigma = sigma_for_test_degradation(1.0 / t.rescale);
        cur = resample_bicubic(blur(image, gaussian_kernel(sigma, kernel_radius_for(sigma))), w, h);
    }
    if (t.is_right_angle()) {
        cur = rotate_right_angle(cur, static_cast<int>(std::lround(t.rotation_degrees / 90.0)));
    } else {
        auto rotated = rotate_cropped(cur, t.rotation_degrees, min_extent);
        if (!rotated) return std::nullopt;
        cur = std::move(*rotated);
    }
    if (t.flip) cur = flip_horizontal(cur);
    if (cur.width < min_extent || cur.height < min_extent) return std::nullopt;
    return cur;
}

ImagePlane invert_right_angle_transform(const ImagePlane& image, const AugmentTransform& t) {
    if (!t.is_right_angle() || t.rescale != 1.0) throw ConfigError("only right-angle transforms are invertible");
    ImagePlane cur = t.flip ? flip_horizontal(image) : image;
    return rotate_right_angle(cur, -static_cast<int>(std::lround(t.rotation_degrees / 90.0)));
}

std::vector<ImagePlane> augment(const ImagePlane& image, const AugmentationSpec& spec) {
    std::vector<ImagePlane> out;
    for (const auto& t : enumerate_transforms(spec)) {
        auto v = apply_transform(image, t, spec.min_extent);
        if (v) {
            out.push_back(std::move(*v));
        } else {
            log_warning("augmentation variant (rescale " + std::to_string(t.rescale) + ", rotation " +
                        std::to_string(t.rotation_degrees) + ") smaller than " + std::to_string(spec.min_extent) +
                        " pixels; skipped");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pair construction

namespace {

void require_registered(const ImagePlane& target, const ImagePlane& guide, bool same_grid) {
    if (same_grid) {
        if (!guide.same_extents(target)) {
            throw DataError("guide extents " + std::to_string(guide.width) + "x" + std::to_string(guide.height) +
                            " do not match target " + std::to_string(target.width) + "x" +
                            std::to_string(target.height));
        }
        return;
    }
    const double rx = static_cast<double>(guide.width) / static_cast<double>(target.width);
    const double ry = static_cast<double>(guide.height) / static_cast<double>(target.height);
    if (rx < 1.0 || ry < 1.0 || std::abs(rx - ry) > 0.02 * std::max(rx, ry)) {
        throw DataError("guide " + std::to_string(guide.width) + "x" + std::to_string(guide.height) +
                        " is not registered to target " + std::to_string(target.width) + "x" +
                        std::to_string(target.height));
    }
}

ImagePlane degraded_input(const ImagePlane& target, const DegradationSpec& spec) {
    ImagePlane low;
    try {
        low = degrade(target, spec);
    } catch (const DomainError& e) {
        throw DataError(std::string("image too small to degrade: ") + e.what());
    }
    return resample_bicubic(low, target.width, target.height);
}

std::vector<TrainingPair> build_pairs(const std::vector<ImagePlane>& targets, const std::vector<ImagePlane>* guides,
                                      const DegradationSpec& spec, const AugmentationSpec& augmentation,
                                      Regime regime, TargetSource source, bool guide_same_grid) {
    spec.validate();
    if (guides && guides->size() != targets.size()) {
        throw DataError("got " + std::to_string(guides->size()) + " guides for " + std::to_string(targets.size()) +
                        " targets");
    }
    const auto transforms = enumerate_transforms(augmentation);
    std::vector<TrainingPair> out;
    std::size_t too_small = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const ImagePlane& target = targets[i];
        try {
            downsampled_extent(target.width, spec.scale_factor);
            downsampled_extent(target.height, spec.scale_factor);
        } catch (const DomainError& e) {
            throw DataError("image " + std::to_string(i) + " too small to degrade: " + e.what());
        }
        ImagePlane guide;
        if (guides) {
            require_registered(target, (*guides)[i], guide_same_grid);
            guide = resample_guide((*guides)[i], target.width, target.height);
        }
        for (const auto& t : transforms) {
            auto tv = apply_transform(target, t, augmentation.min_extent);
            if (!tv) {
                ++too_small;
                continue;
            }
            TrainingPair pair;
            pair.input_lr_interp = degraded_input(*tv, spec);
            if (guides) pair.input_guide = *apply_transform(guide, t, augmentation.min_extent);
            pair.target = std::move(*tv);
            pair.regime = regime;
            pair.target_source = source;
            pair.source_index = i;
            pair.transform = t;
            out.push_back(std::move(pair));
        }
    }
    if (too_small > 0) {
        log_warning(std::to_string(too_small) + " augmentation variants fell below the minimum extent and were skipped");
    }
    return out;
}

} // namespace

std::vector<TrainingPair> make_supervised_pairs(const std::vector<ImagePlane>& hr_targets,
                                                const std::vector<ImagePlane>* guides, const DegradationSpec& spec,
                                                const AugmentationSpec& augmentation) {
    return build_pairs(hr_targets, guides, spec, augmentation,
                       guides ? Regime::SupervisedGuided : Regime::Supervised, TargetSource::TrueHighRes, true);
}

std::vector<TrainingPair> make_external_unsupervised_pairs(const std::vector<ImagePlane>& external_lr,
                                                           const std::vector<ImagePlane>* guides,
                                                           const DegradationSpec& spec,
                                                           const AugmentationSpec& augmentation) {
    return build_pairs(external_lr, guides, spec, augmentation,
                       guides ? Regime::ExternalGuided : Regime::ExternalUnguided, TargetSource::ObservedLowRes, false);
}

std::vector<TrainingPair> make_internal_pairs(const ImagePlane& test_lr, const ImagePlane* guide,
                                              const DegradationSpec& spec, const AugmentationSpec& augmentation) {
    std::vector<ImagePlane> targets{test_lr};
    std::vector<ImagePlane> guides;
    if (guide) guides.push_back(*guide);
    return build_pairs(targets, guide ? &guides : nullptr, spec, augmentation,
                       guide ? Regime::InternalGuided : Regime::Internal, TargetSource::ObservedLowRes, false);
}

// ---------------------------------------------------------------------------
// Loss and schedule

Var lp_loss(const Var& pred, const Tensor& target, int p) {
    if (p != 1 && p != 2) throw ConfigError("lp_loss: p must be 1 or 2");
    if (!pred.value().same_shape(target)) {
        throw ConfigError("lp_loss: prediction " + shape_to_string(pred.shape()) + " vs target " +
                          shape_to_string(target.shape()));
    }
    const Tensor& x = pred.value();
    const double n = static_cast<double>(x.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = static_cast<double>(x[i]) - target[i];
        acc += p == 1 ? std::abs(d) : d * d;
    }
    Tensor out({1}, static_cast<float>(acc / n));
    Tensor tgt = target;
    return Var::make_result(std::move(out), {pred}, [tgt = std::move(tgt), p, n](Node& self) {
        Node& in = *self.inputs[0];
        Tensor& g = in.grad_buffer();
        const double up = self.grad[0];
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double d = static_cast<double>(in.value[i]) - tgt[i];
            const double local = p == 1 ? (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) : 2.0 * d;
            g[i] += static_cast<float>(up * local / n);
        }
    });
}

PlateauScheduler::PlateauScheduler(double initial_lr, double divisor, std::size_t patience, double stop_lr,
                                   std::size_t smoothing_window)
    : initial_lr_(initial_lr), divisor_(divisor), stop_lr_(stop_lr), patience_(patience),
      window_(std::max<std::size_t>(1, smoothing_window)), lr_(initial_lr),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::should_stop() const noexcept { return lr_ < stop_lr_ * (1.0 - 1e-9); }

void PlateauScheduler::observe(double loss) {
    recent_.push_back(loss);
    if (recent_.size() > window_) recent_.pop_front();
    double smoothed = 0.0;
    for (double v : recent_) smoothed += v;
    smoothed /= static_cast<double>(recent_.size());
    if (smoothed < best_) {
        best_ = smoothed;
        since_best_ = 0;
        return;
    }
    if (++since_best_ >= patience_) {
        ++reductions_;
        lr_ = initial_lr_ / std::pow(divisor_, static_cast<double>(reductions_));
        since_best_ = 0;
    }
}

void TrainConfig::validate() const {
    if (loss_norm != 1 && loss_norm != 2) throw ConfigError("loss_norm must be 1 or 2");
    if (!(initial_lr > stop_lr && stop_lr > 0.0)) throw ConfigError("require initial_lr > stop_lr > 0");
    if (!(lr_divisor > 1.0)) throw ConfigError("lr_divisor must exceed 1");
    if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
    if (batch_size < 1 || max_steps < 1 || patch_size < 4) throw ConfigError("batch_size, max_steps, patch_size invalid");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"loss_norm", c.loss_norm},         {"initial_lr", c.initial_lr},
         {"lr_divisor", c.lr_divisor},       {"plateau_patience", c.plateau_patience},
         {"stop_lr", c.stop_lr},             {"smoothing_window", c.smoothing_window},
         {"batch_size", c.batch_size},       {"max_steps", c.max_steps},
         {"patch_size", c.patch_size},       {"seed", c.seed},
         {"checkpoint_interval", c.checkpoint_interval}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.loss_norm = j.value("loss_norm", c.loss_norm);
    c.initial_lr = j.value("initial_lr", c.initial_lr);
    c.lr_divisor = j.value("lr_divisor", c.lr_divisor);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.stop_lr = j.value("stop_lr", c.stop_lr);
    c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
}

std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::LearningRateFloor: return "lr_below_stop";
    case StopReason::MaxSteps: return "max_steps";
    case StopReason::NonFinite: return "non_finite";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Batch {
    Tensor input, guide, target;
};

Batch sample_batch(const std::vector<const TrainingPair*>& pairs, std::size_t batch, std::size_t patch, bool guided,
                   float inv_scale, std::mt19937_64& rng) {
    Batch b{Tensor({batch, 1, patch, patch}), guided ? Tensor({batch, 1, patch, patch}) : Tensor(),
            Tensor({batch, 1, patch, patch})};
    const std::size_t plane = patch * patch;
    for (std::size_t i = 0; i < batch; ++i) {
        const TrainingPair& p = *pairs[static_cast<std::size_t>(rng() % pairs.size())];
        const PatchCoord at = random_patch_coords(p.target.width, p.target.height, patch, 1, rng)[0];
        auto copy = [&](const ImagePlane& src, Tensor& dst) {
            for (std::size_t y = 0; y < patch; ++y) {
                const float* row = src.pixels.data() + (at.y + y) * src.width + at.x;
                float* out = dst.ptr() + i * plane + y * patch;
                for (std::size_t x = 0; x < patch; ++x) out[x] = row[x] * inv_scale;
            }
        };
        copy(p.input_lr_interp, b.input);
        if (guided) copy(p.input_guide, b.guide);
        copy(p.target, b.target);
    }
    return b;
}

} // namespace

TrainResult train(GrdNetwork& net, const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    if (pairs.empty()) throw DataError("train: no training pairs");
    const bool guided = net.guided();
    std::size_t largest = 0;
    for (const auto& p : pairs) {
        if (guided && !p.has_guide()) throw ConfigError("train: guided network given pairs without guidance");
        if (!p.input_lr_interp.same_extents(p.target) || (p.has_guide() && !p.input_guide.same_extents(p.target))) {
            throw DataError("train: pair planes are not on a common grid");
        }
        largest = std::max(largest, std::min(p.target.width, p.target.height));
    }
    // Pairs smaller than the patch are left out of sampling.
    const std::size_t patch = std::min(config.patch_size, largest);
    std::vector<const TrainingPair*> usable;
    for (const auto& p : pairs) {
        if (p.target.width >= patch && p.target.height >= patch) usable.push_back(&p);
    }
    if (usable.size() < pairs.size()) {
        log_info("train: " + std::to_string(pairs.size() - usable.size()) + " pairs smaller than the " +
                 std::to_string(patch) + "-pixel patch are not sampled");
    }

    std::mt19937_64 rng(config.seed);
    ModelParams params = net.parameters();
    AdamState adam = AdamState::for_params(params);
    PlateauScheduler schedule(config.initial_lr, config.lr_divisor, config.plateau_patience, config.stop_lr,
                              config.smoothing_window);
    const float inv = 1.0f / net.intensity_scale;

    TrainResult result;
    std::vector<NamedTensor> last_good = net.named_tensors();
    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        const double lr = schedule.lr();
        Batch batch = sample_batch(usable, config.batch_size, patch, guided, inv, rng);
        zero_grads(params);
        Var pred = guided ? forward(net, Var(batch.input), Var(batch.guide), BnMode::Train)
                          : forward_unguided(net, Var(batch.input), BnMode::Train);
        Var loss = lp_loss(pred, batch.target, config.loss_norm);
        double value = loss.value()[0];
        bool finite = std::isfinite(value);
        if (finite) {
            loss.backward();
            try {
                adam_step(params, adam, lr);
            } catch (const NumericalError& e) {
                finite = false;
                result.message = e.what();
            }
        } else {
            result.message = "non-finite loss at step " + std::to_string(step);
        }
        if (finite) {
            for (const auto& p : net.parameters()) {
                if (!p.var.value().all_finite()) {
                    finite = false;
                    result.message = "non-finite parameter '" + p.name + "' after step " + std::to_string(step);
                    break;
                }
            }
        }
        if (!finite) {
            assign_tensors(net, last_good);
            result.stop_reason = StopReason::NonFinite;
            log_warning("training aborted: " + result.message + "; parameters restored to step " +
                        std::to_string(step - 1));
            return result;
        }
        if (hooks.observed_loss) value = hooks.observed_loss(step, value);
        result.history.push_back({step, lr, value});
        last_good = net.named_tensors();
        if (hooks.on_checkpoint && config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) {
            hooks.on_checkpoint(net, step);
        }
        schedule.observe(value);
        if (schedule.should_stop()) {
            result.stop_reason = StopReason::LearningRateFloor;
            return result;
        }
    }
    result.stop_reason = StopReason::MaxSteps;
    return result;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
    std::ostringstream os;
    os.precision(9);
    os << "step,lr,loss\n";
    for (const auto& r : history) os << r.step << ',' << r.lr << ',' << r.loss << '\n';
    return os.str();
}

} // namespace grdsr
