#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <latdim/dimension.hpp>
#include <latdim/experiment.hpp>
#include <latdim/learning.hpp>
#include <latdim/model.hpp>
#include <latdim/scoring.hpp>
#include <latdim/search.hpp>

#include <sstream>

namespace py = pybind11;
using namespace latdim;

namespace {

std::vector<std::vector<std::vector<double>>> tables_as_lists(const Parameters& p) {
    std::vector<std::vector<std::vector<double>>> out;
    for (const auto& tab : p.tables()) {
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < tab.rows(); ++i) {
            std::vector<double> row;
            for (int j = 0; j < tab.cols(); ++j) row.push_back(tab(i, j));
            rows.push_back(std::move(row));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

DimOptions::Direct direct_mode(const std::string& method) {
    if (method == "both") return DimOptions::Direct::force;
    if (method == "decomposed") return DimOptions::Direct::off;
    if (method == "auto") return DimOptions::Direct::automatic;
    throw std::invalid_argument("method must be decomposed, both, or auto");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dimensions and dimension-corrected scores for latent tree models";

    py::register_exception<unreliable_rank_error>(m, "UnreliableRankError");

    py::class_<ModelSpec>(m, "Model")
        .def_property_readonly("label", [](const ModelSpec& s) { return render_model(s); })
        .def("structure", [](const ModelSpec& s) { return structure_body(s); })
        .def("standard_dimension", &standard_dimension)
        .def("complete_dimension", &complete_dimension)
        .def("is_lc", &is_lc)
        .def("is_regular",
             [](const ModelSpec& s) {
                 const auto check = is_regular(s);
                 std::vector<std::string> names;
                 for (int v : check.violators) names.push_back(s.structure.var(v).name);
                 return py::make_tuple(check.regular, names);
             })
        .def("regularize", [](const ModelSpec& s) { return regularize(s); })
        .def("local_lc_models",
             [](const ModelSpec& s) {
                 std::vector<std::pair<std::string, ModelSpec>> out;
                 for (const auto& local : local_lc_models(s))
                     out.emplace_back(s.structure.var(local.hidden_node).name, local.model);
                 return out;
             })
        .def("observed_names",
             [](const ModelSpec& s) {
                 std::vector<std::string> names;
                 for (int v : s.structure.observed()) names.push_back(s.structure.var(v).name);
                 return names;
             })
        .def("observed_cards",
             [](const ModelSpec& s) {
                 std::vector<int> cards;
                 for (int v : s.structure.observed()) cards.push_back(s.structure.var(v).cardinality);
                 return cards;
             })
        .def("hidden_names",
             [](const ModelSpec& s) {
                 std::vector<std::string> names;
                 for (int v : s.structure.hidden()) names.push_back(s.structure.var(v).name);
                 return names;
             })
        .def("__repr__", [](const ModelSpec& s) { return "<latdim.Model " + render_model(s) + ">"; });

    m.def("parse_model", &parse_model, py::arg("text"),
          "Parse a spec string (e.g. '3:2,2,2' or '5,3,3:2,2,2,2,2') or a structure body");

    py::class_<Parameters>(m, "Parameters")
        .def("tables", &tables_as_lists,
             "Per-node conditional tables, rows = states, columns = parent states");

    m.def("random_parameters", &random_parameters, py::arg("model"), py::arg("seed"));
    m.def("deterministic_block_parameters", &deterministic_block_parameters, py::arg("model"),
          py::arg("block_vars"), py::arg("seed"));
    m.def("observed_marginal", &observed_marginal, py::arg("model"), py::arg("params"),
          "Joint observed distribution in canonical row-major order");

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("names", [](const Dataset& d) { return d.names; })
        .def_property_readonly("total", &Dataset::total)
        .def("to_csv",
             [](const Dataset& d) {
                 std::ostringstream os;
                 write_dataset_csv(d, os);
                 return os.str();
             })
        .def("__len__", [](const Dataset& d) { return d.rows.size(); });

    m.def("dataset_from_csv", [](const std::string& text) {
        std::istringstream in(text);
        return read_dataset_csv(in);
    });
    m.def("sample_dataset", &sample_dataset, py::arg("model"), py::arg("params"), py::arg("n"),
          py::arg("seed"));

    m.def(
        "em_fit",
        [](const ModelSpec& model, const Dataset& d, int restarts, int max_iters, double rel_tol,
           std::uint64_t seed) {
            const auto fit = em_fit(model, d, {restarts, max_iters, rel_tol, seed});
            py::dict out;
            out["loglik"] = fit.loglik;
            out["iterations"] = fit.iterations;
            out["restarts_used"] = fit.restarts_used;
            out["converged"] = fit.converged;
            out["params"] = fit.params;
            return out;
        },
        py::arg("model"), py::arg("dataset"), py::arg("restarts") = 16, py::arg("max_iters") = 500,
        py::arg("rel_tol") = 1e-7, py::arg("seed") = 0);

    m.def("loglik", &loglik, py::arg("model"), py::arg("params"), py::arg("dataset"));
    m.def(
        "kl_divergence_bits",
        [](const std::vector<double>& p, const std::vector<double>& q) {
            return kl_divergence_bits(p, q);
        },
        py::arg("p_true"), py::arg("q"));

    m.def("two_var_effective_dim", &two_var_effective_dim, py::arg("x_card"), py::arg("u1_card"),
          py::arg("u2_card"));
    m.def("standard_dim_bound_applies", &standard_dim_bound_applies, py::arg("model"));
    m.def("binary_tree_effective_dim", &binary_tree_effective_dim, py::arg("model"));

    m.def(
        "effective_dim_numeric",
        [](const ModelSpec& model, int draws, std::uint64_t seed) {
            const auto est = effective_dim_numeric(model, draws, seed);
            py::dict out;
            out["rank"] = est.rank;
            out["draws"] = est.draws;
            out["singular_gap"] = est.singular_gap;
            out["tolerance"] = est.tolerance;
            out["ranks_agree"] = est.ranks_agree;
            out["reliable"] = est.reliable;
            out["per_draw"] = est.per_draw;
            return out;
        },
        py::arg("model"), py::arg("draws") = 10, py::arg("seed") = 0);

    m.def(
        "bounds_json",
        [](const ModelSpec& model) { return bound_db(model).to_json().dump(); }, py::arg("model"));

    m.def(
        "dimension_report_json",
        [](const ModelSpec& model, int draws, std::uint64_t seed, const std::string& method) {
            return hlc_effective_dim(model, {draws, seed, direct_mode(method)}).to_json().dump();
        },
        py::arg("model"), py::arg("draws") = 10, py::arg("seed") = 0, py::arg("method") = "auto");

    m.def(
        "score_model_json",
        [](const ModelSpec& model, const Dataset& d, const std::string& score,
           const std::string& dim_source, int restarts, int max_iters, double rel_tol,
           std::uint64_t seed, int dim_draws) {
            std::optional<DimSource> source;
            if (dim_source == "numeric") source = DimSource::numeric;
            else if (dim_source == "decomposed") source = DimSource::decomposed;
            else if (dim_source == "bound") source = DimSource::bound;
            else if (dim_source != "auto")
                throw std::invalid_argument("dim_source must be numeric, decomposed, bound, or auto");
            ScoreConfig config;
            config.em = {restarts, max_iters, rel_tol, seed};
            config.dim_draws = dim_draws;
            config.dim_seed = seed;
            return score_model(model, d, score_from_string(score), source, config).to_json().dump();
        },
        py::arg("model"), py::arg("dataset"), py::arg("score"), py::arg("dim_source") = "auto",
        py::arg("restarts") = 16, py::arg("max_iters") = 500, py::arg("rel_tol") = 1e-7,
        py::arg("seed") = 0, py::arg("dim_draws") = 10);

    m.def(
        "select_lc_cardinality_json",
        [](const std::vector<int>& observed_cards, const Dataset& d, const std::string& score,
           int lo, int hi, std::uint64_t seed, int restarts, int max_iters, double rel_tol,
           int dim_draws) {
            SearchConfig cfg;
            cfg.em = {restarts, max_iters, rel_tol, 0};
            cfg.dim_draws = dim_draws;
            cfg.seed = seed;
            return select_lc_cardinality(observed_cards, d, score_from_string(score), lo, hi, cfg)
                .trace.to_json()
                .dump();
        },
        py::arg("observed_cards"), py::arg("dataset"), py::arg("score"), py::arg("lo"), py::arg("hi"),
        py::arg("seed") = 0, py::arg("restarts") = 16, py::arg("max_iters") = 500,
        py::arg("rel_tol") = 1e-7, py::arg("dim_draws") = 10);

    m.def(
        "hillclimb_hlc_cardinality_json",
        [](const ModelSpec& topology, const Dataset& d, const std::string& score, std::uint64_t seed,
           int restarts, int max_iters, double rel_tol, int dim_draws) {
            SearchConfig cfg;
            cfg.em = {restarts, max_iters, rel_tol, 0};
            cfg.dim_draws = dim_draws;
            cfg.seed = seed;
            return hillclimb_hlc_cardinality(topology, d, score_from_string(score), cfg)
                .trace.to_json()
                .dump();
        },
        py::arg("topology"), py::arg("dataset"), py::arg("score"), py::arg("seed") = 0,
        py::arg("restarts") = 16, py::arg("max_iters") = 500, py::arg("rel_tol") = 1e-7,
        py::arg("dim_draws") = 10);

    m.def(
        "run_experiment",
        [](const std::string& plan_json, bool timings) {
            const auto plan = plan_from_json(nlohmann::json::parse(plan_json));
            const auto records = run_plan(plan);
            const auto cells = summarize(plan, records);
            std::ostringstream rec, sum, cards;
            write_records_csv(rec, records, timings);
            write_summary_csv(sum, plan, cells);
            write_cards_csv(cards, plan, cells);
            py::dict out;
            out["records_csv"] = rec.str();
            out["summary_csv"] = sum.str();
            out["cards_csv"] = cards.str();
            return out;
        },
        py::arg("plan_json"), py::arg("timings") = false);

    m.attr("hlc_sample_ladder") = hlc_sample_ladder();
    m.attr("lc_sample_ladder") = lc_sample_ladder();
}
