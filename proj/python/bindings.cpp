#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "grdsr/cascade.hpp"
#include "grdsr/data_io.hpp"
#include "grdsr/degradation.hpp"
#include "grdsr/errors.hpp"
#include "grdsr/experiment.hpp"
#include "grdsr/grd_model.hpp"
#include "grdsr/metrics.hpp"

namespace py = pybind11;
using namespace grdsr;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImagePlane to_plane(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    ImagePlane p(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
    std::memcpy(p.pixels.data(), a.data(), p.pixels.size() * sizeof(float));
    return p;
}

Array to_array(const ImagePlane& p) {
    Array a({p.height, p.width});
    std::memcpy(a.mutable_data(), p.pixels.data(), p.pixels.size() * sizeof(float));
    return a;
}

Array volume_to_array(const Volume& v) {
    Array a({v.depth, v.height, v.width});
    std::memcpy(a.mutable_data(), v.voxels.data(), v.voxels.size() * sizeof(float));
    return a;
}

Volume array_to_volume(const Array& a) {
    if (a.ndim() != 3) throw py::value_error("expected a 3-D array (depth, height, width)");
    Volume v(static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)),
             static_cast<std::size_t>(a.shape(0)));
    std::memcpy(v.voxels.data(), a.data(), v.voxels.size() * sizeof(float));
    return v;
}

// Config structs cross the boundary as dicts through their JSON form.
template <class T>
T from_dict(const py::dict& d) {
    const auto text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
    T value{};
    from_json(nlohmann::json::parse(text), value);
    return value;
}

template <class T>
py::dict to_dict(const T& value) {
    nlohmann::json j;
    to_json(j, value);
    return py::module_::import("json").attr("loads")(j.dump()).cast<py::dict>();
}

} // namespace

PYBIND11_MODULE(_grdsr, m) {
    m.doc() = "Guided unsupervised super-resolution core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_IOError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def("sigma_for_test_degradation", &sigma_for_test_degradation, py::arg("scale"));
    m.def("sigma_for_cascade_stage", &sigma_for_cascade_stage, py::arg("stage_scale"), py::arg("lambda_") = 2.0);
    m.def(
        "gaussian_kernel",
        [](double sigma) {
            const BlurKernel k = gaussian_kernel(sigma, kernel_radius_for(sigma));
            Array a({k.side(), k.side()});
            std::memcpy(a.mutable_data(), k.taps.data(), k.taps.size() * sizeof(float));
            return a;
        },
        py::arg("sigma"));
    m.def(
        "degrade", [](const Array& x, double s) { return to_array(degrade(to_plane(x), DegradationSpec::for_test(s))); },
        py::arg("image"), py::arg("scale"), "Gaussian blur (FWHM = scale) followed by downsampling.");
    m.def(
        "blur",
        [](const Array& x, double sigma) {
            return to_array(blur(to_plane(x), gaussian_kernel(sigma, kernel_radius_for(sigma))));
        },
        py::arg("image"), py::arg("sigma"));
    m.def(
        "blur_adjoint",
        [](const Array& x, double sigma) {
            return to_array(blur_adjoint(to_plane(x), gaussian_kernel(sigma, kernel_radius_for(sigma))));
        },
        py::arg("image"), py::arg("sigma"));
    m.def(
        "resize_bicubic",
        [](const Array& x, std::size_t width, std::size_t height) {
            return to_array(resample_bicubic(to_plane(x), width, height));
        },
        py::arg("image"), py::arg("width"), py::arg("height"));

    m.def(
        "psnr", [](const Array& a, const Array& b, double range) { return psnr(to_plane(a), to_plane(b), range); },
        py::arg("a"), py::arg("b"), py::arg("dynamic_range"));
    m.def(
        "ssim", [](const Array& a, const Array& b, double range) { return ssim(to_plane(a), to_plane(b), range); },
        py::arg("a"), py::arg("b"), py::arg("dynamic_range"));

    py::class_<CascadePlan>(m, "CascadePlan")
        .def_readonly("total_scale", &CascadePlan::total_scale)
        .def_readonly("num_stages", &CascadePlan::num_stages)
        .def_readonly("stage_widths", &CascadePlan::stage_widths)
        .def_readonly("stage_heights", &CascadePlan::stage_heights)
        .def_readonly("stage_sigma", &CascadePlan::stage_sigma)
        .def_property_readonly("stage_factor", &CascadePlan::stage_factor)
        .def("symbolic_scale", &CascadePlan::symbolic_scale, py::arg("stage"));
    m.def("plan_stages", &plan_stages, py::arg("scale"), py::arg("stages"), py::arg("width"), py::arg("height"),
          py::arg("lambda_") = 2.0);

    m.def(
        "ibp_refine",
        [](const Array& x0, const Array& y, double s, const py::dict& config) {
            const IbpResult r =
                ibp_refine_traced(to_plane(x0), to_plane(y), DegradationSpec::for_test(s), from_dict<IbpConfig>(config));
            return py::make_tuple(to_array(r.image), r.residuals);
        },
        py::arg("x0"), py::arg("y"), py::arg("scale"), py::arg("config") = py::dict(),
        "Back-projection refinement; returns (image, residual trace).");

    m.def(
        "generate_phantom",
        [](const py::dict& spec) {
            const PhantomPair p = generate_phantom_pair(from_dict<PhantomSpec>(spec));
            return py::make_tuple(volume_to_array(p.modality_a), volume_to_array(p.modality_b));
        },
        py::arg("spec") = py::dict(), "Returns (target, guide) arrays shaped (depth, height, width).");
    m.def(
        "read_volume", [](const std::filesystem::path& p) { return volume_to_array(read_volume(p)); }, py::arg("path"));
    m.def(
        "write_volume", [](const std::filesystem::path& p, const Array& a) { write_volume(p, array_to_volume(a)); },
        py::arg("path"), py::arg("volume"));

    py::class_<GrdNetwork>(m, "Network")
        .def_property_readonly("guided", &GrdNetwork::guided)
        .def_property_readonly("config", [](const GrdNetwork& n) { return to_dict(n.config); })
        .def_readwrite("stage_factor", &GrdNetwork::stage_factor)
        .def_readonly("regime", &GrdNetwork::regime)
        .def("parameter_count", &GrdNetwork::parameter_count)
        .def(
            "predict",
            [](GrdNetwork& n, const Array& lr_interp, std::optional<Array> guide) {
                const ImagePlane x = to_plane(lr_interp);
                if (!guide) return to_array(predict(n, x, nullptr));
                const ImagePlane g = to_plane(*guide);
                return to_array(predict(n, x, &g));
            },
            py::arg("lr_interp"), py::arg("guide") = py::none())
        .def(
            "super_resolve",
            [](GrdNetwork& n, const Array& lr, std::optional<Array> guide, double scale, std::size_t stages,
               bool ibp) {
                const ImagePlane y = to_plane(lr);
                const CascadePlan plan = plan_stages(scale, stages, y.width, y.height);
                const ImagePlane g = guide ? to_plane(*guide) : ImagePlane{};
                const auto out = cascade_super_resolve(n, y, guide ? &g : nullptr, plan, IbpConfig{},
                                                       ibp ? IbpMode::EveryStage : IbpMode::Off);
                return to_array(out.image);
            },
            py::arg("lr"), py::arg("guide") = py::none(), py::arg("scale") = 2.0, py::arg("stages") = 3,
            py::arg("ibp") = true)
        .def("save", [](const GrdNetwork& n, const std::filesystem::path& p) { save_network(p, n); }, py::arg("path"));
    m.def(
        "build_network", [](const py::dict& config, std::uint64_t seed) { return build_network(from_dict<GrdConfig>(config), seed); },
        py::arg("config") = py::dict(), py::arg("seed") = 1);
    m.def("load_network", &load_network, py::arg("path"));

    m.def(
        "run_experiment",
        [](const py::dict& config) {
            const ExperimentConfig c = from_dict<ExperimentConfig>(config);
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c);
            }
            py::dict out;
            out["metrics_csv"] = experiment_metrics_csv(r);
            out["report"] = experiment_report(r, c);
            py::dict means;
            for (const auto& s : r.summaries) means[py::str(s.method)] = py::make_tuple(s.mean_psnr, s.mean_ssim);
            out["means"] = means;
            out["checks_passed"] = r.all_checks_passed();
            return out;
        },
        py::arg("config") = py::dict());
    m.def("method_label", &method_label, py::arg("method"));
}
