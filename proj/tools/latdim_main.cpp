#include <CLI11.hpp>

#include <latdim/dimension.hpp>
#include <latdim/experiment.hpp>
#include <latdim/learning.hpp>
#include <latdim/model.hpp>
#include <latdim/scoring.hpp>
#include <latdim/search.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace latdim;

namespace {

constexpr const char* kVersion = "latdim 0.1.0";

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct ModelArgs {
    std::string model;
    std::string structure_path;

    void attach(CLI::App* cmd) {
        auto* m = cmd->add_option("--model", model, "Model spec string (e.g. 3:2,2,2)");
        auto* s = cmd->add_option("--structure", structure_path, "Structure file")
                      ->check(CLI::ExistingFile);
        m->excludes(s);
    }

    ModelSpec load(bool allow_unset_hidden = false) const {
        if (model.empty() == structure_path.empty())
            throw std::invalid_argument("give exactly one of --model and --structure");
        if (!structure_path.empty()) return parse_structure(slurp(structure_path), allow_unset_hidden);
        if (allow_unset_hidden) {
            // hidden cardinalities may be written as '?'; the search resets them anyway
            std::string text = model;
            const auto colon = text.find(':');
            for (std::size_t i = 0; i < colon && i < text.size(); ++i)
                if (text[i] == '?') text[i] = '2';
            return parse_model(text);
        }
        return parse_model(model);
    }
};

struct EmArgs {
    EmConfig config;

    void attach(CLI::App* cmd) {
        cmd->add_option("--restarts", config.restarts, "EM restarts")->capture_default_str();
        cmd->add_option("--max-iters", config.max_iters, "EM iteration cap")->capture_default_str();
        cmd->add_option("--rel-tol", config.rel_tol, "EM relative log-likelihood tolerance")
            ->capture_default_str();
    }
};

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return read_dataset_csv(in);
}

void print_json(const nlohmann::json& j, bool table) {
    if (!table) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    for (const auto& [key, value] : j.items())
        std::cout << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump())
                  << '\n';
}

int cmd_dim(const ModelArgs& margs, int draws, std::uint64_t seed, const std::string& method,
            bool fallback_bound, bool table) {
    const auto m = margs.load();
    DimOptions opts{draws, seed, DimOptions::Direct::off};
    DimensionReport report;
    const std::string mode = method == "auto" ? (is_lc(m) ? "numeric" : "decomposed") : method;
    if (mode == "numeric") {
        report.label = render_model(m);
        report.ds = standard_dimension(m);
        report.dc = complete_dimension(m);
        if (is_lc(m)) {
            auto bounds = bound_db(m);
            report.dp = bounds.dp;
            report.db = bounds.db;
            report.dp_split_names = bounds.dp_split_names;
            report.known_exception = bounds.known_exception;
            report.exception_de = bounds.exception_de;
        }
        auto est = effective_dim_numeric(m, draws, seed);
        if (!est.reliable) {
            if (fallback_bound && is_lc(m)) {
                report.de_numeric = std::move(est);
                auto j = report.to_json();
                j["de_fallback_bound"] =
                    report.known_exception ? *report.exception_de : report.db.value();
                print_json(j, table);
                return 0;
            }
            throw unreliable_rank_error("rank estimate unreliable for " + render_model(m) +
                                        " (singular gap " + std::to_string(est.singular_gap) + ")");
        }
        report.de_numeric = std::move(est);
    } else if (mode == "decomposed" || mode == "both") {
        opts.direct = mode == "both" ? DimOptions::Direct::force : DimOptions::Direct::off;
        report = hlc_effective_dim(m, opts);
    } else {
        throw std::invalid_argument("unknown --method '" + method + "'");
    }
    print_json(report.to_json(), table);
    return 0;
}

int cmd_bound(const ModelArgs& margs, bool table) {
    print_json(bound_db(margs.load()).to_json(), table);
    return 0;
}

int cmd_show(const ModelArgs& margs, bool table) {
    const auto m = margs.load();
    if (table) {
        std::cout << structure_body(m);
        return 0;
    }
    nlohmann::json j;
    j["label"] = render_model(m);
    j["structure"] = structure_body(m);
    j["ds"] = standard_dimension(m);
    j["dc"] = complete_dimension(m);
    const auto check = is_regular(m);
    j["regular"] = check.regular;
    nlohmann::json violators = nlohmann::json::array();
    for (int v : check.violators) violators.push_back(m.structure.var(v).name);
    j["violators"] = violators;
    nlohmann::json locals = nlohmann::json::array();
    for (const auto& local : local_lc_models(m))
        locals.push_back({{"node", m.structure.var(local.hidden_node).name},
                          {"model", local.model.label}});
    j["local_lc_models"] = locals;
    nlohmann::json vars = nlohmann::json::array();
    for (const auto& v : m.structure.variables())
        vars.push_back({{"name", v.name},
                        {"cardinality", v.cardinality},
                        {"role", v.role == Role::hidden ? "hidden" : "observed"}});
    j["variables"] = vars;
    print_json(j, false);
    return 0;
}

int cmd_fit(const ModelArgs& margs, const std::string& data_path, EmConfig em, bool table) {
    const auto m = margs.load();
    const auto d = load_dataset(data_path);
    const auto fit = em_fit(m, d, em);
    nlohmann::json j;
    j["model"] = render_model(m);
    j["loglik"] = fit.loglik;
    j["iterations"] = fit.iterations;
    j["restarts_used"] = fit.restarts_used;
    j["converged"] = fit.converged;
    j["n"] = d.total();
    nlohmann::json params = nlohmann::json::object();
    for (int v = 0; v < m.structure.size(); ++v) {
        const auto& tab = fit.params.table(v);
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < tab.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int k = 0; k < tab.cols(); ++k) row.push_back(tab(i, k));
            rows.push_back(row);
        }
        params[m.structure.var(v).name] = rows;
    }
    j["params"] = params;
    print_json(j, table);
    return 0;
}

int cmd_score(const ModelArgs& margs, const std::string& data_path, const std::string& score,
              const std::string& dim_source, int draws, std::uint64_t seed, EmConfig em,
              bool table) {
    const auto m = margs.load();
    const auto d = load_dataset(data_path);
    std::optional<DimSource> source;
    if (dim_source == "numeric") {
        source = DimSource::numeric;
    } else if (dim_source == "decomposed") {
        source = DimSource::decomposed;
    } else if (dim_source == "bound") {
        source = DimSource::bound;
    } else if (dim_source != "auto") {
        throw std::invalid_argument("unknown --dim-source '" + dim_source + "'");
    }
    ScoreConfig config;
    config.em = em;
    config.em.seed = seed;
    config.dim_draws = draws;
    config.dim_seed = seed;
    print_json(score_model(m, d, score_from_string(score), source, config).to_json(), table);
    return 0;
}

int cmd_select(const ModelArgs& margs, const std::string& data_path, const std::string& score,
               std::uint64_t seed, const std::string& range, const std::string& out_path,
               EmConfig em, int draws, bool table) {
    const auto topology = margs.load(true);
    const auto d = load_dataset(data_path);
    SearchConfig cfg;
    cfg.em = em;
    cfg.dim_draws = draws;
    cfg.seed = seed;

    SearchResult result;
    if (is_lc(topology)) {
        int lo = 2, hi = 0;
        if (!range.empty()) {
            const auto colon = range.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("--range must look like lo:hi");
            lo = std::stoi(range.substr(0, colon));
            hi = std::stoi(range.substr(colon + 1));
        }
        std::vector<int> cards;
        long long prod = 1, max_card = 0;
        for (const auto& name : d.names) {
            const int v = topology.structure.index_of(name);
            if (v < 0 || topology.structure.var(v).role != Role::observed)
                throw std::invalid_argument("dataset column '" + name +
                                            "' is not an observed variable of the model");
            cards.push_back(topology.structure.var(v).cardinality);
            prod *= cards.back();
            max_card = std::max<long long>(max_card, cards.back());
        }
        if (hi == 0) hi = static_cast<int>(prod / max_card);
        result = select_lc_cardinality(cards, d, score_from_string(score), lo, hi, cfg);
    } else {
        if (!range.empty()) throw std::invalid_argument("--range applies to LC models only");
        result = hillclimb_hlc_cardinality(topology, d, score_from_string(score), cfg);
    }

    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw std::invalid_argument("cannot write '" + out_path + "'");
        out << result.trace.to_json().dump(2) << '\n';
    }
    if (table) {
        std::cout << trace_table(result.trace);
    } else {
        std::cout << result.trace.to_json().dump(2) << '\n';
    }
    return 0;
}

int cmd_experiment(const std::string& plan_path, const std::string& out_dir, bool timings) {
    const auto plan = plan_from_json(nlohmann::json::parse(slurp(plan_path)));
    const auto records = run_plan(plan);
    const auto cells = summarize(plan, records);

    std::filesystem::create_directories(out_dir);
    auto open = [&](const char* name) {
        std::ofstream out(std::filesystem::path(out_dir) / name);
        if (!out) throw std::runtime_error(std::string("cannot write ") + name);
        return out;
    };
    {
        auto out = open("records.csv");
        write_records_csv(out, records, timings);
    }
    {
        auto out = open("summary.csv");
        write_summary_csv(out, plan, cells);
    }
    {
        auto out = open("cards.csv");
        write_cards_csv(out, plan, cells);
    }
    write_summary_csv(std::cout, plan, cells);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Effective dimensions and dimension-corrected scores for latent tree models"};
    app.name("latdim");
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    ModelArgs dim_model, bound_model, show_model, fit_model, score_model_args, select_model;
    EmArgs fit_em, score_em, select_em;
    int dim_draws = 10, score_draws = 10, select_draws = 10;
    std::uint64_t dim_seed = 0, fit_seed = 0, score_seed = 0, select_seed = 0;
    std::string dim_method = "auto";
    bool dim_fallback = false;
    bool dim_table = false, bound_table = false, show_table = false, fit_table = false,
         score_table = false, select_table = false;
    std::string fit_data, score_data, select_data;
    std::string score_name, select_score;
    std::string score_dim_source = "auto";
    std::string select_range, select_out;
    std::string plan_path, out_dir = ".";
    bool exp_timings = false;

    auto* dim = app.add_subcommand("dim", "Dimension report (ds, dc, bounds, effective dimension)");
    dim_model.attach(dim);
    dim->add_option("--draws", dim_draws, "Random parameter draws for the rank")->capture_default_str();
    dim->add_option("--seed", dim_seed, "Random seed")->capture_default_str();
    dim->add_option("--method", dim_method, "numeric, decomposed, both, or auto")
        ->check(CLI::IsMember({"numeric", "decomposed", "both", "auto"}))
        ->capture_default_str();
    dim->add_flag("--fallback-bound", dim_fallback,
                  "On an unreliable rank estimate, report the bound instead of failing");
    dim->add_flag("--table", dim_table, "Human-readable output");

    auto* bound = app.add_subcommand("bound", "Closed-form bounds ds, dc, dp, db for an LC model");
    bound_model.attach(bound);
    bound->add_flag("--table", bound_table, "Human-readable output");

    auto* show = app.add_subcommand("show", "Parse a model and print its structure");
    show_model.attach(show);
    show->add_flag("--table", show_table, "Print the structure file body only");

    auto* fit = app.add_subcommand("fit", "Fit parameters by EM and print the result");
    fit_model.attach(fit);
    fit->add_option("--data", fit_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    fit_em.attach(fit);
    fit->add_option("--seed", fit_seed, "Random seed")->capture_default_str();
    fit->add_flag("--table", fit_table, "Human-readable output");

    auto* score = app.add_subcommand("score", "Score a model against data");
    score_model_args.attach(score);
    score->add_option("--data", score_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    score->add_option("--score", score_name, "bic, bic_plus, cs, or cs_plus")->required();
    score->add_option("--dim-source", score_dim_source, "numeric, decomposed, bound, or auto")
        ->check(CLI::IsMember({"numeric", "decomposed", "bound", "auto"}))
        ->capture_default_str();
    score->add_option("--draws", score_draws, "Random parameter draws for the rank")
        ->capture_default_str();
    score->add_option("--seed", score_seed, "Random seed")->capture_default_str();
    score_em.attach(score);
    score->add_flag("--table", score_table, "Human-readable output");

    auto* select = app.add_subcommand("select", "Select hidden cardinalities by score");
    select_model.attach(select);
    select->add_option("--data", select_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    select->add_option("--score", select_score, "bic, bic_plus, cs, or cs_plus")->required();
    select->add_option("--seed", select_seed, "Master seed")->capture_default_str();
    select->add_option("--range", select_range, "LC cardinality range lo:hi (default 2:cap)");
    select->add_option("--out", select_out, "Write the trace JSON to this file");
    select->add_option("--draws", select_draws, "Random parameter draws for the rank")
        ->capture_default_str();
    select_em.attach(select);
    select->add_flag("--table", select_table, "Print the trace as a table");

    auto* experiment = app.add_subcommand("experiment", "Run an experiment plan");
    experiment->add_option("--plan", plan_path, "Plan JSON file")->required()->check(CLI::ExistingFile);
    experiment->add_option("--out-dir", out_dir, "Directory for records.csv, summary.csv, cards.csv")
        ->capture_default_str();
    experiment->add_flag("--timings", exp_timings, "Include wall-clock times in records.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (dim->parsed())
            return cmd_dim(dim_model, dim_draws, dim_seed, dim_method, dim_fallback, dim_table);
        if (bound->parsed()) return cmd_bound(bound_model, bound_table);
        if (show->parsed()) return cmd_show(show_model, show_table);
        if (fit->parsed()) {
            fit_em.config.seed = fit_seed;
            return cmd_fit(fit_model, fit_data, fit_em.config, fit_table);
        }
        if (score->parsed())
            return cmd_score(score_model_args, score_data, score_name, score_dim_source, score_draws,
                             score_seed, score_em.config, score_table);
        if (select->parsed())
            return cmd_select(select_model, select_data, select_score, select_seed, select_range,
                              select_out, select_em.config, select_draws, select_table);
        if (experiment->parsed()) return cmd_experiment(plan_path, out_dir, exp_timings);
    } catch (const unreliable_rank_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
