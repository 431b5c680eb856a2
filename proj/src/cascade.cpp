#include "grdsr/cascade.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "grdsr/errors.hpp"
#include "grdsr/log.hpp"

namespace grdsr {

double CascadePlan::stage_factor() const { return std::pow(total_scale, 1.0 / static_cast<double>(num_stages)); }

double CascadePlan::cumulative_scale(std::size_t stage) const {
    if (stage + 1 == num_stages) return total_scale;
    return std::pow(total_scale, static_cast<double>(stage + 1) / static_cast<double>(num_stages));
}

std::string CascadePlan::symbolic_scale(std::size_t stage) const {
    std::size_t num = stage + 1, den = num_stages;
    const std::size_t g = std::gcd(num, den);
    num /= g;
    den /= g;
    std::ostringstream os;
    os << total_scale;
    if (den == 1) {
        if (num != 1) os << '^' << num;
    } else {
        os << "^(" << num << '/' << den << ')';
    }
    return os.str();
}

CascadePlan plan_stages(double s, std::size_t r, std::size_t width, std::size_t height, double lambda) {
    if (!(s > 1.0) || !std::isfinite(s)) throw DomainError("cascade scale must exceed 1");
    if (r < 1) throw ConfigError("cascade needs at least one stage");
    if (width == 0 || height == 0) throw ConfigError("cascade input has zero extent");
    CascadePlan plan;
    plan.total_scale = s;
    plan.num_stages = r;
    plan.input_width = width;
    plan.input_height = height;
    std::size_t prev_w = width, prev_h = height;
    for (std::size_t k = 0; k < r; ++k) {
        const double f = plan.cumulative_scale(k);
        const auto w = static_cast<std::size_t>(std::llround(static_cast<double>(width) * f));
        const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(height) * f));
        if (w <= prev_w || h <= prev_h) {
            throw ConfigError("cascade stage " + std::to_string(k + 1) + " (" + std::to_string(w) + "x" +
                              std::to_string(h) + ") does not grow past " + std::to_string(prev_w) + "x" +
                              std::to_string(prev_h) + "; use fewer stages");
        }
        plan.stage_widths.push_back(w);
        plan.stage_heights.push_back(h);
        plan.stage_sigma.push_back(sigma_for_cascade_stage(plan.stage_factor(), lambda));
        prev_w = w;
        prev_h = h;
    }
    return plan;
}

void IbpConfig::validate() const {
    if (!(residual_tolerance >= 0.0)) throw ConfigError("ibp residual_tolerance must be >= 0");
    if (divergence_patience < 1) throw ConfigError("ibp divergence_patience must be >= 1");
}

void to_json(nlohmann::json& j, const IbpConfig& c) {
    j = {{"max_iterations", c.max_iterations},
         {"residual_tolerance", c.residual_tolerance},
         {"divergence_patience", c.divergence_patience}};
}

void from_json(const nlohmann::json& j, IbpConfig& c) {
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.residual_tolerance = j.value("residual_tolerance", c.residual_tolerance);
    c.divergence_patience = j.value("divergence_patience", c.divergence_patience);
}

IbpResult ibp_iterate(const ImagePlane& x0, const ImagePlane& y, const PlaneOp& project, const PlaneOp& back,
                      const IbpConfig& config) {
    config.validate();
    const double y_norm = l2_norm(y);
    const double denom = y_norm > 0.0 ? y_norm : 1.0;

    IbpResult result;
    ImagePlane x = x0;
    ImagePlane residual = difference(y, project(x));
    double r = l2_norm(residual) / denom;
    result.residuals.push_back(r);
    result.best_residuals.push_back(r);
    result.image = x;
    double best = r;
    std::size_t rising = 0;
    for (std::size_t t = 1; t <= config.max_iterations && best > config.residual_tolerance; ++t) {
        const ImagePlane step = back(residual);
        for (std::size_t i = 0; i < x.pixels.size(); ++i) x.pixels[i] += step.pixels[i];
        residual = difference(y, project(x));
        const double prev = r;
        r = l2_norm(residual) / denom;
        if (!std::isfinite(r)) throw NumericalError("ibp: residual became non-finite");
        result.residuals.push_back(r);
        if (r < best) {
            best = r;
            result.image = x;
            result.best_iteration = t;
        }
        result.best_residuals.push_back(best);
        rising = r > prev ? rising + 1 : 0;
        if (rising >= config.divergence_patience) {
            result.diverged = true;
            log_warning("ibp: residual rose for " + std::to_string(rising) +
                        " consecutive iterations; returning iterate " + std::to_string(result.best_iteration));
            break;
        }
    }
    return result;
}

IbpResult ibp_refine_traced(const ImagePlane& x0, const ImagePlane& y, const DegradationSpec& spec,
                            const IbpConfig& config) {
    spec.validate();
    const std::size_t ew = downsampled_extent(x0.width, spec.scale_factor);
    const std::size_t eh = downsampled_extent(x0.height, spec.scale_factor);
    if (y.width + 1 < ew || y.width > ew + 1 || y.height + 1 < eh || y.height > eh + 1) {
        throw DataError("ibp: observation " + std::to_string(y.width) + "x" + std::to_string(y.height) +
                        " does not match " + std::to_string(x0.width) + "x" + std::to_string(x0.height) +
                        " degraded by " + std::to_string(spec.scale_factor));
    }
    const BlurKernel kernel = spec.kernel();
    return ibp_iterate(
        x0, y, [&](const ImagePlane& x) { return degrade_to(x, spec, y.width, y.height); },
        [&](const ImagePlane& r) { return blur_adjoint(resample_bicubic(r, x0.width, x0.height), kernel); }, config);
}

ImagePlane ibp_refine(const ImagePlane& x0, const ImagePlane& y, const DegradationSpec& spec,
                      const IbpConfig& config) {
    return ibp_refine_traced(x0, y, spec, config).image;
}

std::string ibp_trace_csv(const std::vector<IbpResult>& traces) {
    std::ostringstream os;
    os.precision(10);
    os << "refinement,iteration,residual,best_residual\n";
    for (std::size_t k = 0; k < traces.size(); ++k) {
        for (std::size_t t = 0; t < traces[k].residuals.size(); ++t) {
            os << k << ',' << t << ',' << traces[k].residuals[t] << ',' << traces[k].best_residuals[t] << '\n';
        }
    }
    return os.str();
}

std::string to_string(IbpMode m) {
    switch (m) {
    case IbpMode::EveryStage: return "every_stage";
    case IbpMode::FinalOnly: return "final_only";
    case IbpMode::Off: return "off";
    }
    return "unknown";
}

IbpMode ibp_mode_from_string(const std::string& s) {
    for (IbpMode m : {IbpMode::EveryStage, IbpMode::FinalOnly, IbpMode::Off}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown ibp mode '" + s + "'");
}

ImagePlane super_resolve_stage(GrdNetwork& net, const ImagePlane& y_current, const ImagePlane* guide_hr,
                               std::size_t stage, const CascadePlan& plan) {
    if (stage >= plan.num_stages) throw ConfigError("stage index beyond the plan");
    const double f = plan.stage_factor();
    if (std::abs(net.stage_factor - f) > 1e-6 * f) {
        std::ostringstream os;
        os << "network was trained for per-stage factor " << net.stage_factor << " but the plan needs " << f;
        throw ConfigError(os.str());
    }
    const std::size_t w = plan.stage_widths[stage], h = plan.stage_heights[stage];
    const ImagePlane interp = resample_bicubic(y_current, w, h);
    if (!net.guided()) return predict(net, interp, nullptr);
    if (!guide_hr) throw ConfigError("guided network requires a guide image");
    const ImagePlane guide = resample_guide(*guide_hr, w, h);
    return predict(net, interp, &guide);
}

CascadeOutput cascade_super_resolve(std::vector<GrdNetwork>& nets, const ImagePlane& y_lr, const ImagePlane* guide_hr,
                                    const CascadePlan& plan, const IbpConfig& ibp, IbpMode mode) {
    if (nets.empty()) throw ConfigError("cascade needs at least one network");
    if (nets.size() != 1 && nets.size() != plan.num_stages) {
        throw ConfigError("cascade needs 1 shared network or " + std::to_string(plan.num_stages) + ", got " +
                          std::to_string(nets.size()));
    }
    if (y_lr.width != plan.input_width || y_lr.height != plan.input_height) {
        throw DataError("cascade input extents differ from the plan");
    }
    CascadeOutput out;
    ImagePlane current = y_lr;
    for (std::size_t k = 0; k < plan.num_stages; ++k) {
        GrdNetwork& net = nets.size() == 1 ? nets[0] : nets[k];
        ImagePlane x = super_resolve_stage(net, current, guide_hr, k, plan);
        const bool last = k + 1 == plan.num_stages;
        if (mode == IbpMode::EveryStage || (mode == IbpMode::FinalOnly && last)) {
            IbpResult r = ibp_refine_traced(x, y_lr, DegradationSpec::for_test(plan.cumulative_scale(k)), ibp);
            x = r.image;
            out.ibp.push_back(std::move(r));
        }
        out.stages.push_back(x);
        current = std::move(x);
    }
    out.image = current;
    return out;
}

CascadeOutput cascade_super_resolve(GrdNetwork& net, const ImagePlane& y_lr, const ImagePlane* guide_hr,
                                    const CascadePlan& plan, const IbpConfig& ibp, IbpMode mode) {
    std::vector<GrdNetwork> nets{net};
    return cascade_super_resolve(nets, y_lr, guide_hr, plan, ibp, mode);
}

} // namespace grdsr
