#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdsr/degradation.hpp"
#include "grdsr/grd_model.hpp"

namespace grdsr {

// Stage k (1-based) targets round(H * s^(k/r)); the last stage is exactly
// round(H * s).
struct CascadePlan {
    double total_scale = 2.0;
    std::size_t num_stages = 3;
    std::size_t input_width = 0;
    std::size_t input_height = 0;
    std::vector<std::size_t> stage_widths;
    std::vector<std::size_t> stage_heights;
    std::vector<double> stage_sigma; // blur used to train the per-stage network

    double stage_factor() const; // s^(1/r)
    double cumulative_scale(std::size_t stage) const; // s^((stage+1)/r), stage 0-based
    // "s^(k/r)" in reduced form, e.g. "2^(1/3)", "2^(2/3)", "2".
    std::string symbolic_scale(std::size_t stage) const;
};

CascadePlan plan_stages(double s, std::size_t r, std::size_t width, std::size_t height, double lambda = 2.0);

struct IbpConfig {
    std::size_t max_iterations = 10;
    double residual_tolerance = 1e-4; // relative to ||y||
    std::size_t divergence_patience = 3;

    void validate() const;
};

void to_json(nlohmann::json& j, const IbpConfig& c);
void from_json(const nlohmann::json& j, IbpConfig& c);

struct IbpResult {
    ImagePlane image;
    std::vector<double> residuals;      // ||y - DBx_t|| / ||y|| for t = 0..T
    std::vector<double> best_residuals; // running minimum, the audited path
    std::size_t best_iteration = 0;
    bool diverged = false;
};

// The recurrence with explicit operators: x_{t+1} = x_t + back(y - project(x_t)).
// `project` maps x onto y's grid; `back` maps a residual onto x's grid.
using PlaneOp = std::function<ImagePlane(const ImagePlane&)>;
IbpResult ibp_iterate(const ImagePlane& x0, const ImagePlane& y, const PlaneOp& project, const PlaneOp& back,
                      const IbpConfig& config);

// x_{t+1} = x_t + B^T U (y - D B x_t), where D B is the test degradation for
// the scale between x and y and U is bicubic interpolation back to x's grid.
IbpResult ibp_refine_traced(const ImagePlane& x0, const ImagePlane& y, const DegradationSpec& spec,
                            const IbpConfig& config);
ImagePlane ibp_refine(const ImagePlane& x0, const ImagePlane& y, const DegradationSpec& spec,
                      const IbpConfig& config);

std::string ibp_trace_csv(const std::vector<IbpResult>& traces);

enum class IbpMode { EveryStage, FinalOnly, Off };
std::string to_string(IbpMode m);
IbpMode ibp_mode_from_string(const std::string& s);

// One cascade stage: bicubic to the stage grid, guide brought down to the
// same grid, then the network. `guide_hr` may be null for unguided networks.
ImagePlane super_resolve_stage(GrdNetwork& net, const ImagePlane& y_current, const ImagePlane* guide_hr,
                               std::size_t stage, const CascadePlan& plan);

struct CascadeOutput {
    ImagePlane image;
    std::vector<ImagePlane> stages; // post-IBP estimate of every stage
    std::vector<IbpResult> ibp;     // one entry per refinement that ran
};

// `nets` holds one shared network or one per stage.
CascadeOutput cascade_super_resolve(std::vector<GrdNetwork>& nets, const ImagePlane& y_lr, const ImagePlane* guide_hr,
                                    const CascadePlan& plan, const IbpConfig& ibp, IbpMode mode = IbpMode::EveryStage);
CascadeOutput cascade_super_resolve(GrdNetwork& net, const ImagePlane& y_lr, const ImagePlane* guide_hr,
                                    const CascadePlan& plan, const IbpConfig& ibp, IbpMode mode = IbpMode::EveryStage);

} // namespace grdsr
