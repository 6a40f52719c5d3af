#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gittins/errors.hpp"
#include "gittins/experiment.hpp"

namespace py = pybind11;
using namespace gittins;

namespace {

py::dict estimate(const Estimate& e) {
    py::dict d;
    d["mean"] = e.mean;
    d["ci"] = e.ci;
    return d;
}

PointConfig prepared(const std::string& json_text) {
    PointConfig p = point_from_json(json_text);
    if (p.sim.r_grid.empty()) p.sim.r_grid = default_r_grid(make_rank_function(p.sim.job_model), p.r_points);
    return p;
}

py::dict simulate(const std::string& json_text) {
    PointConfig p = prepared(json_text);
    SimStats s;
    {
        py::gil_scoped_release nogil;
        s = run(p.sim, make_rank_function(p.sim.job_model));
    }
    py::dict d;
    d["config_hash"] = hash_hex(config_hash(p.sim));
    d["arrivals"] = s.arrivals;
    d["mean_n"] = estimate(s.mean_n());
    d["mean_w"] = estimate(s.mean_w());
    d["mean_busy"] = estimate(s.mean_busy());
    d["mean_j_setup"] = estimate(s.mean_j_setup());
    py::list wr;
    for (std::size_t j = 0; j < s.columns(); ++j) wr.append(s.mean_w_r(j).mean);
    d["r_grid"] = s.r_grid;
    d["mean_w_r"] = wr;
    return d;
}

py::dict loss(const std::string& json_text) {
    BoundsReport b = loss_terms(point_from_json(json_text).sim);
    py::dict d;
    d["loss_a"] = b.loss_a;
    d["loss_b"] = b.loss_b;
    d["loss_c"] = b.loss_c;
    d["c_const"] = b.c_const;
    d["a_min"] = b.a_min;
    d["a_max"] = b.a_max;
    d["setup_excess"] = b.setup_excess;
    return d;
}

py::list verify(const std::string& json_text, int workers, const std::string& out_dir) {
    ExperimentSpec spec = parse_experiment(json_text);
    std::vector<VerifyLine> lines;
    {
        py::gil_scoped_release nogil;
        lines = run_verify(spec, workers > 0 ? workers : default_workers(), out_dir);
    }
    py::list out;
    for (const auto& l : lines) out.append(py::make_tuple(l.check, l.pass, l.text));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gittins scheduling simulator core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<UnboundedResidual>(m, "UnboundedResidual", PyExc_ValueError);
    py::register_exception<NonConvergence>(m, "NonConvergence", PyExc_RuntimeError);
    py::register_exception<RecyclingStorm>(m, "RecyclingStorm", PyExc_RuntimeError);

    py::class_<Distribution>(m, "Distribution")
        .def_static("from_json", &distribution_from_json)
        .def_property_readonly("family", &Distribution::family_name)
        .def("mean", &Distribution::mean)
        .def("second_moment", &Distribution::second_moment)
        .def("cv2", &Distribution::cv2)
        .def("excess_mean", &Distribution::excess_mean)
        .def("tail", &Distribution::tail)
        .def("quantile", &Distribution::quantile)
        .def("residual_bounds", [](const Distribution& d) {
            ResidualBounds b = d.residual_bounds();
            return py::make_tuple(b.a_min, b.a_max);
        });

    py::class_<RankFunction>(m, "RankFunction")
        .def(py::init([](const Distribution& size, bool known) {
                 return make_rank_function({known ? JobKind::KnownSize : JobKind::UnknownSize, size});
             }),
             py::arg("size"), py::arg("known") = false)
        .def("rank", &RankFunction::rank)
        .def("expected_r_work", &RankFunction::expected_r_work)
        .def("single_job_wine", [](const RankFunction& rf, double x) {
            JobState s;
            s.value = x;
            return single_job_wine(rf, s);
        });

    m.def("gap_constant", &gap_constant);
    m.def("heavy_traffic_limit", &heavy_traffic_limit, py::arg("cv2_s"), py::arg("cv2_a"));
    m.def("config_hash", [](const std::string& j) { return hash_hex(config_hash(prepared(j).sim)); });
    m.def("simulate", &simulate, "run one configuration given as JSON text");
    m.def("loss_terms", &loss, "loss terms of the multiserver gap bound for a JSON configuration");
    m.def("verify", &verify, py::arg("experiment"), py::arg("workers") = 0, py::arg("out_dir") = "");
}
