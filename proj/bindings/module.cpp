// Python bindings for the core operations: lattice math, the transformer,
// training, decoding and corpus generation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "motr/corpus.hpp"
#include "motr/decoder.hpp"
#include "motr/lattice.hpp"
#include "motr/model.hpp"
#include "motr/trainer.hpp"

namespace py = pybind11;
using namespace motr;

namespace {

LogProbLattice lattice_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("lattice must have shape (T, U+1, vbar)");
    LogProbLattice lat(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)) - 1,
                       static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), lat.entries.begin());
    return lat;
}

py::array_t<double> grid_to_array(const Grid& g) {
    py::array_t<double> out({g.num_t, g.num_u});
    std::copy(g.v.begin(), g.v.end(), out.mutable_data());
    return out;
}

py::array_t<double> lattice_to_array(const LogProbLattice& lat) {
    py::array_t<double> out({lat.T, lat.U + 1, lat.vbar});
    std::copy(lat.entries.begin(), lat.entries.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "transducer lattice, decoder-only transformer and monotonic decoding";

    // ── lattice ──
    m.def("forward_variables", [](py::array_t<double> lat, const std::vector<int>& y) {
        return grid_to_array(forward_variables(lattice_from_array(lat), y));
    });
    m.def("backward_variables", [](py::array_t<double> lat, const std::vector<int>& y) {
        return grid_to_array(backward_variables(lattice_from_array(lat), y));
    });
    m.def("total_log_prob", [](py::array_t<double> lat, const std::vector<int>& y) {
        return total_log_prob(lattice_from_array(lat), y);
    });
    m.def("loss_and_grad", [](py::array_t<double> lat, const std::vector<int>& y) {
        LogProbLattice l = lattice_from_array(lat);
        LatticeLoss ll = loss_and_grad(l, y);
        py::array_t<double> grad({l.T, l.U + 1, l.vbar});
        std::copy(ll.grad.begin(), ll.grad.end(), grad.mutable_data());
        return py::make_tuple(ll.loss, grad);
    });
    m.def("posterior_map", [](py::array_t<double> lat, const std::vector<int>& y) {
        PosteriorMap pm = posterior_map(lattice_from_array(lat), y);
        return py::make_tuple(grid_to_array(pm.log_alpha), grid_to_array(pm.log_beta),
                              grid_to_array(pm.log_gamma), pm.log_total);
    });
    m.def("forced_align", [](py::array_t<double> lat, const std::vector<int>& y) {
        return forced_align(lattice_from_array(lat), y).steps;
    });

    // ── model ──
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("d_model", &ModelConfig::d_model)
        .def_readwrite("d_ff", &ModelConfig::d_ff)
        .def_readwrite("input_vocab", &ModelConfig::input_vocab)
        .def_readwrite("output_vocab", &ModelConfig::output_vocab)
        .def_readwrite("max_len", &ModelConfig::max_len)
        .def_readwrite("seed", &ModelConfig::seed)
        .def_property_readonly("vbar", &ModelConfig::vbar)
        .def_property_readonly("blank", &ModelConfig::blank);

    py::class_<ModelParams>(m, "ModelParams")
        .def_property_readonly("config", [](const ModelParams& p) { return p.config; });

    m.def("init_params", &init_params);
    m.def("build_lattice",
          [](const ModelParams& p, const std::vector<int>& x, const std::vector<int>& y) {
              return lattice_to_array(build_lattice(p, x, y));
          });
    m.def("example_loss",
          [](const ModelParams& p, const std::vector<int>& x, const std::vector<int>& y) {
              return example_loss(p, x, y);
          });
    m.def("save_checkpoint",
          [](const std::string& path, const ModelParams& p) { save_checkpoint(path, p); });
    m.def("load_checkpoint",
          [](const std::string& path) { return load_checkpoint(path).params; });

    // ── corpus ──
    py::class_<TaskSpec>(m, "TaskSpec")
        .def_static("defaults", &TaskSpec::defaults, py::arg("seed") = 1)
        .def_static("identity_map", &TaskSpec::identity_map, py::arg("vocab") = 20,
                    py::arg("seed") = 1)
        .def_readwrite("input_vocab", &TaskSpec::input_vocab)
        .def_readwrite("output_vocab", &TaskSpec::output_vocab)
        .def_readwrite("seed", &TaskSpec::seed);

    py::class_<SequencePair>(m, "SequencePair")
        .def_readonly("x", &SequencePair::x)
        .def_readonly("y", &SequencePair::y)
        .def_readonly("gt_durations", &SequencePair::gt_durations);

    m.def("generate", &generate, py::arg("spec"), py::arg("n_utts"), py::arg("len_lo"),
          py::arg("len_hi"));
    m.def("make_long_concat", &make_long_concat);
    m.def("save_corpus", &save_corpus);
    m.def("load_corpus", &load_corpus);

    // ── training ──
    py::class_<TrainOptions>(m, "TrainOptions")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainOptions::batch_size)
        .def_readwrite("lr", &TrainOptions::lr)
        .def_readwrite("warmup_steps", &TrainOptions::warmup_steps)
        .def_readwrite("clip_norm", &TrainOptions::clip_norm)
        .def_readwrite("threads", &TrainOptions::threads);

    py::class_<AdamState>(m, "AdamState").def_property_readonly(
        "step", [](const AdamState& s) { return s.step; });

    m.def("init_adam", &init_adam);
    m.def("train_step",
          [](ModelParams& params, const Corpus& batch, AdamState& opt,
             const TrainOptions& opts) {
              return train_step(params, std::span<const SequencePair>(batch), opt, opts);
          });
    m.def("train_loop",
          [](ModelParams& params, AdamState& opt, const Corpus& corpus, int epochs,
             const TrainOptions& opts, uint64_t shuffle_seed) {
              auto curve = train_loop(params, opt, corpus, epochs, opts, shuffle_seed);
              std::vector<std::tuple<int64_t, int, double>> out;
              for (const auto& p : curve) out.emplace_back(p.step, p.epoch, p.mean_loss);
              return out;
          });

    // ── decoding ──
    py::class_<DecodeOptions>(m, "DecodeOptions")
        .def(py::init<>())
        .def_readwrite("seed", &DecodeOptions::seed)
        .def_readwrite("max_steps_per_phoneme", &DecodeOptions::max_steps_per_phoneme)
        .def("set_window", [](DecodeOptions& o, int n, int mm) { o.window = ContextWindow{n, mm}; })
        .def("set_temperature", [](DecodeOptions& o, double t) {
            o.sampling.kind = SamplingKind::kTemperature;
            o.sampling.temperature = t;
        });

    m.def("decode",
          [](const ModelParams& p, const std::vector<int>& x_prompt,
             const std::vector<int>& y_prompt, const std::vector<int>& x_target,
             const DecodeOptions& opts) {
              DecodeResult r = decode(p, x_prompt, y_prompt, x_target, opts);
              return py::make_tuple(r.y_out, r.path.steps, r.durations);
          });
    m.def("decode_with_pseudo_prompt",
          [](const ModelParams& p, const std::vector<int>& y_prompt,
             const std::vector<int>& pseudo_x, const std::vector<int>& x_target,
             const DecodeOptions& opts) {
              DecodeResult r = decode_with_pseudo_prompt(p, y_prompt, pseudo_x, x_target, opts);
              return py::make_tuple(r.y_out, r.path.steps, r.durations);
          });
    m.def("token_error_rate", &token_error_rate);
}
