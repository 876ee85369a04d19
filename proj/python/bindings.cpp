#include "bdverify/abstract_domain.hpp"
#include "bdverify/cli.hpp"
#include "bdverify/error.hpp"
#include "bdverify/io.hpp"
#include "bdverify/network.hpp"
#include "bdverify/trigger_gen.hpp"
#include "bdverify/verifier.hpp"

#include <json.hpp>

#include <pybind11/chrono.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace bdverify;

namespace {

Image make_image(std::vector<double> pixels, const ImageShape& shape, std::optional<int> label)
{
    BDV_REQUIRE(pixels.size() == shape.size(), "image: pixel count does not match shape");
    return Image{shape, std::move(pixels), label};
}

// Per expanded layer, a list of (lower, upper) concrete bounds with the
// trigger footprint free and every other pixel fixed to `image`.
std::vector<std::vector<std::pair<double, double>>> bounds_under_trigger(const Network& net,
                                                                         const Image& image,
                                                                         const TriggerSpec& spec)
{
    const auto free = trigger_pixel_indices(net.input_shape(), spec);
    const auto state = analyze(net, init_input_state(net, region_with_free_pixels(net, image, free)));
    std::vector<std::vector<std::pair<double, double>>> out;
    for (std::size_t l = 0; l < state.layer_count(); ++l) {
        auto& layer = out.emplace_back();
        for (const auto& n : state.layer(l))
            layer.emplace_back(n.lower, n.upper);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_bdverify, m)
{
    m.doc() = "Statistical verification of input-agnostic backdoors in feed-forward classifiers";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<PreconditionError>(m, "PreconditionError", error.ptr());
    py::register_exception<FormatError>(m, "FormatError", error.ptr());
    py::register_exception<MalformedSystemError>(m, "MalformedSystemError", error.ptr());

    py::class_<ImageShape>(m, "ImageShape")
        .def(py::init([](int c, int h, int w) { return ImageShape{c, h, w}; }), py::arg("channels"),
             py::arg("height"), py::arg("width"))
        .def_readwrite("channels", &ImageShape::channels)
        .def_readwrite("height", &ImageShape::height)
        .def_readwrite("width", &ImageShape::width)
        .def("size", &ImageShape::size)
        .def(py::self == py::self)
        .def("__repr__", [](const ImageShape& s) {
            return "ImageShape(" + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " +
                   std::to_string(s.width) + ")";
        });

    py::class_<TriggerShape>(m, "TriggerShape")
        .def(py::init([](int c, int h, int w) { return TriggerShape{c, h, w}; }), py::arg("channels"),
             py::arg("height"), py::arg("width"))
        .def_readwrite("channels", &TriggerShape::channels)
        .def_readwrite("height", &TriggerShape::height)
        .def_readwrite("width", &TriggerShape::width)
        .def("size", &TriggerShape::size)
        .def(py::self == py::self);

    py::class_<TriggerSpec>(m, "TriggerSpec")
        .def(py::init([](TriggerShape shape, int row, int col) { return TriggerSpec{shape, row, col}; }),
             py::arg("shape"), py::arg("row"), py::arg("col"))
        .def_readwrite("shape", &TriggerSpec::shape)
        .def_readwrite("row", &TriggerSpec::row)
        .def_readwrite("col", &TriggerSpec::col)
        .def(py::self == py::self);

    py::class_<Trigger>(m, "Trigger")
        .def(py::init([](TriggerSpec spec, std::vector<double> values) {
                 return Trigger{spec, std::move(values)};
             }),
             py::arg("spec"), py::arg("values"))
        .def_readwrite("spec", &Trigger::spec)
        .def_readwrite("values", &Trigger::values)
        .def("to_json", [](const Trigger& t) { return trigger_to_json(t).dump(); })
        .def_static("from_json", [](const std::string& s) { return trigger_from_json(nlohmann::json::parse(s)); });

    py::class_<Image>(m, "Image")
        .def(py::init(&make_image), py::arg("pixels"), py::arg("shape"), py::arg("label") = py::none())
        .def_readwrite("shape", &Image::shape)
        .def_readwrite("pixels", &Image::pixels)
        .def_readwrite("label", &Image::label);

    py::class_<Network>(m, "Network")
        .def_static("from_json", [](const std::string& s) { return network_from_json(nlohmann::json::parse(s)); })
        .def("to_json", [](const Network& n) { return network_to_json(n).dump(); })
        .def_property_readonly("input_shape", &Network::input_shape)
        .def_property_readonly("label_count", &Network::label_count)
        .def_property_readonly("layer_sizes", &Network::layer_sizes);

    m.def("load_network", &load_network, py::arg("path"));
    m.def("save_network", &save_network, py::arg("network"), py::arg("path"));
    m.def("load_mnist_idx", &load_mnist_idx, py::arg("images"), py::arg("labels") = std::filesystem::path{});
    m.def("load_dataset_csv", &load_dataset_csv, py::arg("path"), py::arg("shape") = py::none());

    m.def("index_flatten", &index_flatten, py::arg("shape"), py::arg("channel"), py::arg("row"), py::arg("col"));
    m.def("position_count", &position_count, py::arg("image_shape"), py::arg("trigger_shape"));
    m.def("all_positions", &all_positions, py::arg("image_shape"), py::arg("trigger_shape"));
    m.def("stamp", &stamp, py::arg("image"), py::arg("trigger"));
    m.def("forward", py::overload_cast<const Network&, const Image&>(&forward), py::arg("network"),
          py::arg("image"));
    m.def("classify", [](const Network& net, const Image& image) { return classify(forward(net, image)); },
          py::arg("network"), py::arg("image"));
    m.def("bounds_under_trigger", &bounds_under_trigger, py::arg("network"), py::arg("image"), py::arg("spec"));

    py::enum_<Verdict>(m, "Verdict")
        .value("SAFE", Verdict::Safe)
        .value("UNSAFE", Verdict::Unsafe)
        .value("UNKNOWN", Verdict::Unknown);

    py::class_<PositionDiagnostics>(m, "PositionDiagnostics")
        .def_readonly("positions_total", &PositionDiagnostics::positions_total)
        .def_readonly("positions_explored", &PositionDiagnostics::positions_explored)
        .def_readonly("quick_unsat", &PositionDiagnostics::quick_unsat)
        .def_readonly("image_unsat", &PositionDiagnostics::image_unsat)
        .def_readonly("conjunction_unsat", &PositionDiagnostics::conjunction_unsat)
        .def_readonly("solver_sat", &PositionDiagnostics::solver_sat)
        .def_readonly("solver_unknown", &PositionDiagnostics::solver_unknown)
        .def_readonly("spurious", &PositionDiagnostics::spurious);

    py::class_<VerifyXVerdict>(m, "VerifyXVerdict")
        .def_readonly("verdict", &VerifyXVerdict::verdict)
        .def_readonly("trigger", &VerifyXVerdict::trigger)
        .def_readonly("diagnostics", &VerifyXVerdict::diagnostics)
        .def_readonly("budget_exhausted", &VerifyXVerdict::budget_exhausted);

    m.def(
        "verify_x",
        [](const Network& net, const std::vector<Image>& images, const TriggerShape& shape, int target,
           int workers, double budget_secs, std::uint64_t seed) {
            VerifyXOptions o;
            o.workers = workers;
            o.budget = std::chrono::duration<double>(budget_secs);
            o.optimizer.seed = seed;
            py::gil_scoped_release release;
            return verify_x(net, images, shape, target, o);
        },
        py::arg("network"), py::arg("images"), py::arg("shape"), py::arg("target"), py::arg("workers") = 1,
        py::arg("budget_secs") = 600.0, py::arg("seed") = 0);

    py::class_<SprtParams>(m, "SprtParams")
        .def(py::init<>())
        .def_readwrite("theta", &SprtParams::theta)
        .def_readwrite("k", &SprtParams::k)
        .def_readwrite("alpha", &SprtParams::alpha)
        .def_readwrite("beta", &SprtParams::beta)
        .def_readwrite("delta", &SprtParams::delta)
        .def("p0", &SprtParams::p0)
        .def("p1", &SprtParams::p1)
        .def("validate", &SprtParams::validate);

    py::class_<VerifyPrVerdict>(m, "VerifyPrVerdict")
        .def_readonly("verdict", &VerifyPrVerdict::verdict)
        .def_readonly("trigger", &VerifyPrVerdict::trigger)
        .def_readonly("success_rate", &VerifyPrVerdict::success_rate)
        .def_property_readonly("rounds", [](const VerifyPrVerdict& v) { return v.sprt.n; })
        .def_property_readonly("safe_rounds", [](const VerifyPrVerdict& v) { return v.sprt.z; })
        .def_readonly("diagnostics", &VerifyPrVerdict::diagnostics)
        .def_readonly("budget_exhausted", &VerifyPrVerdict::budget_exhausted);

    m.def(
        "verify_pr",
        [](const Network& net, const std::vector<Image>& population, const SprtParams& params,
           const TriggerShape& shape, int target, const std::vector<Image>& validation, std::uint64_t seed,
           int workers, double global_budget_secs) {
            VerifyPrOptions o;
            o.seed = seed;
            o.verify_x.workers = workers;
            o.global_budget = std::chrono::duration<double>(global_budget_secs);
            py::gil_scoped_release release;
            return verify_pr(net, population, params, shape, target, validation, o);
        },
        py::arg("network"), py::arg("population"), py::arg("params"), py::arg("shape"), py::arg("target"),
        py::arg("validation"), py::arg("seed") = 0, py::arg("workers") = 1, py::arg("global_budget_secs") = 7200.0);

    m.def(
        "filter_population",
        [](const Network& net, const std::vector<Image>& images, int target) {
            return filter_population(net, images, target);
        },
        py::arg("network"), py::arg("images"), py::arg("target"));
    m.def(
        "validate_success_rate",
        [](const Network& net, const Trigger& trigger, const std::vector<Image>& validation, int target) {
            return validate_success_rate(net, trigger, validation, target);
        },
        py::arg("network"), py::arg("trigger"), py::arg("validation"), py::arg("target"));

    m.def(
        "op_trigger",
        [](const Network& net, const std::vector<Image>& images, const TriggerSpec& spec, int target,
           std::optional<std::vector<double>> candidate, std::uint64_t seed) {
            OptimizerOptions o;
            o.seed = seed;
            py::gil_scoped_release release;
            return op_trigger(net, images, candidate, spec, target, o);
        },
        py::arg("network"), py::arg("images"), py::arg("spec"), py::arg("target"),
        py::arg("candidate") = py::none(), py::arg("seed") = 0);
    m.def(
        "attacks_all",
        [](const Network& net, const std::vector<Image>& images, const Trigger& trigger, int target) {
            return attacks_all(net, images, trigger, target);
        },
        py::arg("network"), py::arg("images"), py::arg("trigger"), py::arg("target"));

    // Config and report travel as JSON text; the Python package wraps them
    // in dicts.
    m.def("run_json", [](const std::string& config) {
        const RunConfig c = config_from_json(nlohmann::json::parse(config));
        Report report;
        {
            py::gil_scoped_release release;
            report = run(c);
        }
        return py::make_tuple(report.to_json().dump(), exit_status(report));
    });
    m.def("default_config_json", [] { return config_to_json(RunConfig{}).dump(); });
}
