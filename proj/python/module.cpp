#include "cli.hpp"

#include "gs4d/checkpoint.hpp"
#include "gs4d/dataset.hpp"
#include "gs4d/error.hpp"
#include "gs4d/gaussian.hpp"
#include "gs4d/metrics.hpp"
#include "gs4d/trainer.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace gs4d;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an H x W x 3 array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

Array to_array(const Image& img) {
    Array a({img.height, img.width, 3});
    std::copy(img.data.begin(), img.data.end(), a.mutable_data());
    return a;
}

Array rows(const std::vector<double>& v, std::size_t width) {
    Array a({static_cast<py::ssize_t>(v.size() / width), static_cast<py::ssize_t>(width)});
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

const FrameInfo& pick(const Dataset& ds, const std::string& split, std::size_t view) {
    const auto& idx = split == "train" ? ds.train : split == "test" ? ds.test : throw InvalidInput("split must be train or test");
    if (view >= idx.size()) throw InvalidInput("view out of range");
    return ds.frames[idx[view]];
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deformable Gaussian splatting for dynamic scenes";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<UnsupportedVersion>(m, "UnsupportedVersion", base.ptr());

    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a gs4d command line; returns (exit code, stdout, stderr).");

    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_image(a), to_image(b)); });

    m.def(
        "covariance",
        [](const std::array<double, 3>& scale, const std::array<double, 4>& quat) {
            const Mat3 c = build_covariance(Vec3(scale[0], scale[1], scale[2]), Vec4(quat[0], quat[1], quat[2], quat[3]))
                               .matrix();
            Array a({3, 3});
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) a.mutable_at(i, j) = c(i, j);
            return a;
        },
        py::arg("scale"), py::arg("quaternion"), "R diag(s^2) R^T for axis scales and a unit (w, x, y, z) quaternion.");

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); })
        .def_property_readonly("iteration", [](const Checkpoint& c) { return c.state.iter; })
        .def_property_readonly("num_gaussians", [](const Checkpoint& c) { return c.model.gaussians.size(); })
        .def_property_readonly("config", [](const Checkpoint& c) { return to_config_text(c.config); })
        .def(
            "gaussians",
            [](const Checkpoint& c, std::optional<double> t) {
                const GaussianSet s = t ? model_at(c.model, *t) : c.model.gaussians;
                py::dict d;
                d["positions"] = rows(s.positions, 3);
                d["log_scales"] = rows(s.scales, 3);
                d["rotations"] = rows(s.rotations, 4);
                d["opacity_logits"] = rows(s.opacities, 1);
                d["sh_dc"] = rows(s.sh_dc, 3);
                return d;
            },
            py::arg("time") = py::none(), "Canonical Gaussians, or the deformed set at `time`.")
        .def(
            "render",
            [](const Checkpoint& c, const std::filesystem::path& data, const std::string& split, std::size_t view,
               std::optional<double> time, bool deformed) {
                const Dataset ds = load_dnerf_dataset(data);
                const FrameInfo& f = pick(ds, split, view);
                Image img;
                {
                    py::gil_scoped_release release;
                    img = render_model(c.model, f.camera, time.value_or(f.time), c.config.background, deformed).rgb;
                }
                return to_array(img);
            },
            py::arg("data"), py::arg("split") = "test", py::arg("view") = 0, py::arg("time") = py::none(),
            py::arg("deformed") = true, "Renders one dataset view as an H x W x 3 float array.");
}
