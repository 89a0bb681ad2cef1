#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "a2r2/attnloc.hpp"
#include "a2r2/backend.hpp"
#include "a2r2/config.hpp"
#include "a2r2/curation.hpp"
#include "a2r2/error.hpp"
#include "a2r2/latex.hpp"
#include "a2r2/loop.hpp"
#include "a2r2/metrics.hpp"
#include "a2r2/record.hpp"
#include "a2r2/render.hpp"

namespace py = pybind11;
using namespace a2r2;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

RasterImage to_image(const U8Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D uint8 array (height, width)");
    const auto h = static_cast<int>(a.shape(0));
    const auto w = static_cast<int>(a.shape(1));
    return RasterImage(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

U8Array from_image(const RasterImage& img) {
    U8Array out({img.height(), img.width()});
    std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
    return out;
}

py::dict rect_dict(const attnloc::BoundingBox& b) {
    py::dict d;
    d["x"] = b.x;
    d["y"] = b.y;
    d["w"] = b.w;
    d["h"] = b.h;
    return d;
}

py::object json_to_py(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

py::dict localize(const U8Array& input, const U8Array& rendered, const F32Array& stack, double percentile,
                  int kernel) {
    if (stack.ndim() != 5) throw std::invalid_argument("stack must be 5-D (tokens, layers, heads, rows, cols)");
    std::vector<int> layers(static_cast<std::size_t>(stack.shape(1)));
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i] = static_cast<int>(i);
    attnloc::AttentionStack s(static_cast<int>(stack.shape(0)), layers, static_cast<int>(stack.shape(2)),
                              static_cast<int>(stack.shape(3)), static_cast<int>(stack.shape(4)),
                              std::vector<float>(stack.data(), stack.data() + stack.size()));
    const auto loc = attnloc::localize(to_image(input), to_image(rendered), s, percentile, kernel);
    py::dict d;
    d["box"] = rect_dict(loc.box);
    d["input_rect"] = rect_dict(loc.regions.input_rect);
    d["rendered_rect"] = rect_dict(loc.regions.rendered_rect);
    d["region_a"] = from_image(loc.regions.input);
    d["region_b"] = from_image(loc.regions.rendered);
    return d;
}

py::dict run_scripted(const U8Array& image, const std::string& latex, const std::string& endpoint, int t_max,
                      const std::string& strategy, bool ablate, std::uint64_t seed) {
    Settings s;
    s.seed = seed;
    s.run.t_max = t_max;
    s.run.strategy = parse_strategy(strategy);
    s.run.ablate_al_fv = ablate;
    s.run.backend_endpoint = endpoint;
    s.run.validate();
    Instance inst{"instance", to_image(image), LatexDoc(latex)};
    py::gil_scoped_release release;
    render::Renderer renderer(s.render);
    auto ep = backend::make_endpoint(endpoint, s.backend, seed);
    backend::VisionClient client(ep->connect(inst), s.run.prompts, loop::retry_policy(s.backend));
    auto result = loop::run_instance(inst, s.run, client, renderer);
    py::gil_scoped_acquire acquire;
    py::dict d = json_to_py(result_to_json(result));
    py::list hyps;
    for (const auto& r : result.rounds) hyps.append(r.hypothesis.source());
    d["hypotheses"] = hyps;
    return d;
}

}  // namespace

PYBIND11_MODULE(_a2r2, m) {
    m.doc() = "Native core of the a2r2 image-to-LaTeX refinement toolkit";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ToolchainMissing>(m, "ToolchainMissing", PyExc_RuntimeError);
    py::register_exception<NoSalientRegion>(m, "NoSalientRegion", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("tokenize_latex", &tokenize_latex, py::arg("source"));
    m.def("strip_model_markup", &strip_model_markup, py::arg("text"));

    m.def("rouge_n", &metrics::rouge_n, py::arg("cand"), py::arg("ref"), py::arg("n"));
    m.def("rouge_l", &metrics::rouge_l, py::arg("cand"), py::arg("ref"));
    m.def("bleu4", &metrics::bleu4, py::arg("cand"), py::arg("ref"));
    m.def("edit_distance", &metrics::edit_distance, py::arg("cand"), py::arg("ref"));
    m.def("edit_distance_raw", &metrics::edit_distance_raw, py::arg("cand"), py::arg("ref"));
    m.def("pixel_match", [](const U8Array& a, const U8Array& b) { return metrics::pixel_match(to_image(a), to_image(b)); },
          py::arg("a"), py::arg("b"));
    m.def("cw_ssim", [](const U8Array& a, const U8Array& b) { return metrics::cw_ssim(to_image(a), to_image(b)); },
          py::arg("a"), py::arg("b"));

    m.def("central_eighth", [](int total) {
        const auto r = central_eighth(total);
        return std::make_pair(r.start, r.end);
    }, py::arg("total_layers"));
    m.def("localize", &localize, py::arg("input"), py::arg("rendered"), py::arg("stack"),
          py::arg("percentile") = 75.0, py::arg("kernel") = 3);

    m.def("composite_score", [](double r, double b, double d) {
        return curation::composite_score(r, b, d, curation::CurationWeights::from_settings(CurationSettings{}));
    }, py::arg("rouge_m"), py::arg("bleu"), py::arg("edit_norm"));
    m.def("select_subset", [](const std::map<std::string, double>& scores, std::size_t k, const std::string& dir) {
        return curation::select_subset(scores, k, curation::parse_direction(dir));
    }, py::arg("scores"), py::arg("k"), py::arg("direction") = "asc");

    m.def("render", [](const std::string& latex, int dpi) -> py::object {
        RenderSettings s;
        s.dpi = dpi;
        render::Renderer renderer(s);
        const auto r = renderer.render(LatexDoc(latex));
        if (!r.ok()) return py::none();
        return from_image(r.image());
    }, py::arg("latex"), py::arg("dpi") = 200, "Render a formula; None when it does not compile.");

    m.def("run_scripted", &run_scripted, py::arg("image"), py::arg("latex"), py::arg("endpoint") = "mock:",
          py::arg("t_max") = 2, py::arg("strategy") = "a2r2", py::arg("ablate") = false, py::arg("seed") = 0,
          "Run one instance against a mock: endpoint and return the run summary.");
}
