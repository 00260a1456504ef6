// Python surface for the intervention toolkit: the numeric kernel, the four
// intervention operations, the synthetic-scene generator, the statistical
// checks, and a one-call synthetic experiment driver.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lens/anchor.hpp"
#include "lens/ctp.hpp"
#include "lens/decoder.hpp"
#include "lens/kernel.hpp"
#include "lens/mars.hpp"
#include "lens/ofm.hpp"
#include "lens/pipeline.hpp"
#include "lens/reinject.hpp"
#include "lens/synth.hpp"
#include "lens/verify.hpp"

namespace py = pybind11;
using namespace lens;

namespace {

Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ContractViolation("matrix: needs at least one row");
    const int cols = static_cast<int>(rows.front().size());
    Matrix m(static_cast<int>(rows.size()), cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r].size()) != cols)
            throw ContractViolation("matrix: ragged rows");
        m.set_row(static_cast<int>(r), rows[r]);
    }
    return m;
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
    std::vector<std::vector<double>> rows(static_cast<size_t>(m.rows));
    for (int r = 0; r < m.rows; ++r) rows[static_cast<size_t>(r)] = m.row_vec(r);
    return rows;
}

py::dict basis_to_dict(const SubspaceBasis& b) {
    py::dict d;
    d["dim"] = b.dim;
    d["rank"] = b.rank;
    d["u1"] = b.u1;
    d["u2"] = b.u2;
    return d;
}

py::dict report_to_dict(const ModulationReport& r) {
    py::dict d;
    d["aligned_before"] = r.aligned_before;
    d["aligned_after"] = r.aligned_after;
    d["orthogonal_before"] = r.orthogonal_before;
    d["orthogonal_after"] = r.orthogonal_after;
    d["snr_before"] = r.snr_before;
    d["snr_after"] = r.snr_after;
    return d;
}

py::list reports_to_list(const std::vector<VerificationReport>& reports) {
    py::list out;
    for (const auto& r : reports) {
        py::dict d;
        d["check"] = r.check_name;
        d["trials"] = r.trials;
        d["statistic"] = r.statistic;
        d["relation"] = r.relation;
        d["bound"] = r.bound;
        d["tolerance"] = r.tolerance;
        d["passed"] = r.passed;
        for (const auto& [k, v] : r.details) d[py::str(k)] = v;
        out.append(d);
    }
    return out;
}

py::dict scene_to_dict(const PlantedScene& scene) {
    py::dict d;
    d["tokens"] = matrix_to_rows(scene.tokens);
    d["role_components"] = matrix_to_rows(scene.role_components);
    d["noise_components"] = matrix_to_rows(scene.noise_components);
    std::vector<int> sig(scene.is_signal.begin(), scene.is_signal.end());
    d["is_signal"] = sig;
    d["signal_count"] = scene.signal_count;
    d["delta"] = scene.delta;
    d["snr"] = scene.snr;
    return d;
}

py::dict run_synthetic_experiment(uint64_t seed, uint64_t index, bool ctp, bool ofm, bool mars,
                                  bool reinject, double q, double gamma, double eta, double lam,
                                  double tau_vis, int max_new_tokens) {
    RunConfig cfg = default_config();
    cfg.seed = seed;
    cfg.ctp = ctp;
    cfg.ofm = ofm;
    cfg.mars = mars;
    cfg.reinject = reinject;
    cfg.q = q;
    cfg.gamma = gamma;
    cfg.eta = eta;
    cfg.lambda = lam;
    cfg.tau_vis = tau_vis;
    cfg.max_new_tokens = max_new_tokens;
    validate_config(cfg);

    Decoder dec(cfg.decoder);
    SyntheticTask task = make_synthetic_task(dec, cfg.seed, index, TaskSpec{}, cfg.steer_layers);

    ExperimentInput input;
    input.scene = &task.scene;
    input.system_ids = task.profile.token_ids;
    input.query_ids = task.query_ids;
    input.bank = &task.bank;
    ExperimentResult res = run_experiment(dec, cfg, input);

    py::dict d;
    d["generated"] = res.generated;
    d["role_resonance"] = res.role_resonance;
    d["grounding_score"] = res.grounding_score;
    d["prune_total"] = res.trace.prune.total;
    d["prune_retained"] = res.trace.prune.retained;
    d["tau_q"] = res.trace.prune.tau_q;
    d["num_trace_records"] = static_cast<int>(res.trace.records.size());
    d["trace_jsonl"] = trace_to_jsonl(res.trace);
    return d;
}

}  // namespace

PYBIND11_MODULE(lenspy, m) {
    m.doc() = "character-anchored visual-token intervention toolkit";

    py::class_<SeededRng>(m, "SeededRng")
        .def(py::init<uint64_t, uint64_t>(), py::arg("seed"), py::arg("stream_id") = 0)
        .def("next_u64", &SeededRng::next_u64)
        .def("uniform", &SeededRng::uniform)
        .def("gaussian", &SeededRng::gaussian)
        .def("substream", &SeededRng::substream, py::arg("stream_id"));

    py::class_<Decoder>(m, "Decoder")
        .def(py::init([](int dim, int num_layers, int num_heads, int vocab_size, int ffn_mult,
                         uint64_t weight_seed) {
                 DecoderConfig cfg;
                 cfg.dim = dim;
                 cfg.num_layers = num_layers;
                 cfg.num_heads = num_heads;
                 cfg.vocab_size = vocab_size;
                 cfg.ffn_mult = ffn_mult;
                 cfg.weight_seed = weight_seed;
                 return Decoder(cfg);
             }),
             py::arg("dim") = 128, py::arg("num_layers") = 8, py::arg("num_heads") = 4,
             py::arg("vocab_size") = 512, py::arg("ffn_mult") = 4, py::arg("weight_seed") = 7)
        .def_property_readonly("dim", [](const Decoder& d) { return d.config().dim; })
        .def_property_readonly("num_layers",
                               [](const Decoder& d) { return d.config().num_layers; })
        .def_property_readonly("vocab_size",
                               [](const Decoder& d) { return d.config().vocab_size; })
        .def("embed_token", &Decoder::embed_token, py::arg("token_id"));

    m.def("build_anchor",
          [](const Decoder& dec, const std::vector<int>& token_ids) {
              CharacterProfile p;
              p.name = "py";
              p.token_ids = token_ids;
              return build_anchor(dec, p);
          },
          py::arg("decoder"), py::arg("token_ids"),
          "mean-pooled embedding rows of a character profile");

    m.def("cosine_similarity",
          [](const Vec& a, const Vec& b) { return cosine_similarity(a, b); }, py::arg("a"),
          py::arg("b"));

    m.def("orthonormalize_pair",
          [](const Vec& e, const Vec& h, double eps) {
              return basis_to_dict(orthonormalize_pair(e, h, eps));
          },
          py::arg("e"), py::arg("h"), py::arg("eps") = 1e-8);

    m.def("project_onto_span",
          [](const Vec& x, const Vec& e, const Vec& h, double eps) {
              return project_onto_span(x, orthonormalize_pair(e, h, eps));
          },
          py::arg("x"), py::arg("e"), py::arg("h"), py::arg("eps") = 1e-8);

    m.def("sample_isotropic",
          [](SeededRng& rng, int dim, double scale) { return sample_isotropic(rng, dim, scale); },
          py::arg("rng"), py::arg("dim"), py::arg("scale") = 1.0);

    m.def("softmax_row", [](const Vec& v) { return softmax_row(v); }, py::arg("logits"));

    m.def("resonance_scores",
          [](const std::vector<std::vector<double>>& tokens, const Vec& anchor) {
              return resonance_scores(matrix_from_rows(tokens), anchor);
          },
          py::arg("tokens"), py::arg("anchor"));

    m.def("select_top_q",
          [](const Vec& scores, double q) { return select_top_q(scores, q); }, py::arg("scores"),
          py::arg("q"));

    m.def("modulate_token",
          [](const Vec& z, const Vec& e, const Vec& h, double gamma, double eps) {
              auto [out, rep] = modulate_token(z, orthonormalize_pair(e, h, eps), gamma);
              return py::make_tuple(out, report_to_dict(rep));
          },
          py::arg("z"), py::arg("e"), py::arg("h"), py::arg("gamma"), py::arg("eps") = 1e-8);

    m.def("modulate_subset",
          [](const std::vector<std::vector<double>>& tokens, const Vec& h, const Vec& anchor,
             double gamma, double eps) {
              auto [out, reps] = modulate_subset(matrix_from_rows(tokens), h, anchor, gamma, eps);
              py::list rep_list;
              for (const auto& r : reps) rep_list.append(report_to_dict(r));
              return py::make_tuple(matrix_to_rows(out), rep_list);
          },
          py::arg("tokens"), py::arg("h"), py::arg("anchor"), py::arg("gamma"),
          py::arg("eps") = 1e-8);

    m.def("steering_intensity", &steering_intensity, py::arg("omega"), py::arg("lam"),
          py::arg("tau_vis"));

    m.def("apply_steering",
          [](const Vec& h, const Vec& v, double alpha) { return apply_steering(h, v, alpha); },
          py::arg("h"), py::arg("v"), py::arg("alpha"));

    m.def("risk_optimum_oracle", &risk_optimum_oracle, py::arg("lam"), py::arg("mu"),
          py::arg("omega"));

    m.def("injection_term",
          [](const Vec& gate, const std::vector<std::vector<double>>& purified, double eta) {
              return injection_term(gate, matrix_from_rows(purified), eta);
          },
          py::arg("gate_state"), py::arg("purified"), py::arg("eta"));

    m.def("generate_scene",
          [](SeededRng& rng, const Vec& anchor, const Vec& context, int k_tokens,
             int signal_count, double delta, double snr, double eps, const std::string& save_path) {
              PlantedScene scene =
                  generate_scene(rng, anchor, context, k_tokens, signal_count, delta, snr, eps);
              if (!save_path.empty()) save_scene(scene, save_path);
              return scene_to_dict(scene);
          },
          py::arg("rng"), py::arg("anchor"), py::arg("context"), py::arg("k_tokens"),
          py::arg("signal_count"), py::arg("delta"), py::arg("snr"), py::arg("eps") = 1e-8,
          py::arg("save_path") = "");

    m.def("verify_scale_invariance",
          [](uint64_t seed, long trials, int dim) {
              return reports_to_list(verify_prop1(SeededRng(seed, 1), trials, dim));
          },
          py::arg("seed") = 2026, py::arg("trials") = 2000, py::arg("dim") = 128);

    m.def("verify_projection",
          [](uint64_t seed, long trials, int dim, double delta) {
              return reports_to_list(verify_prop2(SeededRng(seed, 2), trials, dim, delta));
          },
          py::arg("seed") = 2026, py::arg("trials") = 2000, py::arg("dim") = 64,
          py::arg("delta") = 0.25);

    m.def("verify_schedule",
          [](uint64_t seed, long trials) {
              return reports_to_list(verify_mars_optimality(SeededRng(seed, 99), trials));
          },
          py::arg("seed") = 2026, py::arg("trials") = 200);

    m.def("run_synthetic_experiment", &run_synthetic_experiment, py::arg("seed") = 2026,
          py::arg("index") = 0, py::arg("ctp") = true, py::arg("ofm") = true,
          py::arg("mars") = true, py::arg("reinject") = true, py::arg("q") = 0.25,
          py::arg("gamma") = 0.8, py::arg("eta") = 0.06, py::arg("lam") = 0.15,
          py::arg("tau_vis") = 0.4, py::arg("max_new_tokens") = 4,
          "end-to-end instrumented decode on a seeded synthetic task");
}
