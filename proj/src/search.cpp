#include "latdim/search.hpp"

#include "latdim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace latdim {

namespace {

constexpr double kScoreEps = 1e-9;
constexpr std::uint64_t kTagFit = 0x6669747365656400ULL;
constexpr std::uint64_t kTagDim = 0x64696d7365656400ULL;

struct CandidateEval {
    FitResult fit;
    ScoreSet scores;
};

CandidateEval evaluate_candidate(const ModelSpec& m, const Dataset& d, const SearchConfig& cfg) {
    const std::uint64_t label_hash = fnv1a64(render_model(m));
    EmConfig em = cfg.em;
    em.seed = mix_seed(cfg.seed, kTagFit, label_hash);
    auto fit = em_fit(m, d, em);
    const long long ds = standard_dimension(m);
    const long long de =
        effective_dimension(m, is_lc(m) ? DimSource::numeric : DimSource::decomposed,
                            {cfg.dim_draws, mix_seed(cfg.seed, kTagDim, label_hash)});
    auto scores = score_all(m, d, fit, ds, de);
    return {std::move(fit), scores};
}

std::string fresh_hidden_name(const std::vector<std::string>& taken) {
    std::string name = "X";
    int suffix = 0;
    while (std::find(taken.begin(), taken.end(), name) != taken.end())
        name = "X" + std::to_string(suffix++);
    return name;
}

ModelSpec lc_star(const std::vector<std::string>& names, const std::vector<int>& cards,
                  int hidden_card) {
    std::vector<Variable> vars;
    const std::string hidden = fresh_hidden_name(names);
    vars.push_back({hidden, hidden_card, Role::hidden});
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < names.size(); ++i) {
        vars.push_back({names[i], cards[i], Role::observed});
        edges.emplace_back(hidden, names[i]);
    }
    return relabel(TreeStructure::make(std::move(vars), hidden, edges));
}

ModelSpec with_hidden_cards(const ModelSpec& m, const std::vector<int>& hidden_cards) {
    const auto& t = m.structure;
    std::vector<Variable> vars = t.variables();
    for (std::size_t i = 0; i < t.hidden().size(); ++i)
        vars[static_cast<std::size_t>(t.hidden()[i])].cardinality = hidden_cards[i];
    std::vector<std::pair<std::string, std::string>> edges;
    for (int v = 0; v < t.size(); ++v)
        for (int c : t.children(v)) edges.emplace_back(t.var(v).name, t.var(c).name);
    return relabel(TreeStructure::make(std::move(vars), t.var(t.root()).name, edges));
}

}  // namespace

StepChoice choose_step(std::span<const double> scores, double eps) {
    StepChoice choice;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (choice.winner < 0 || scores[i] > scores[static_cast<std::size_t>(choice.winner)] + eps)
            choice.winner = static_cast<int>(i);
    if (choice.winner >= 0) {
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (static_cast<int>(i) != choice.winner &&
                std::abs(scores[i] - scores[static_cast<std::size_t>(choice.winner)]) <= eps)
                choice.tied.push_back(static_cast<int>(i));
    }
    return choice;
}

SearchResult select_lc_cardinality(const std::vector<int>& observed_cards, const Dataset& d,
                                   ScoreName score, int lo, int hi, const SearchConfig& config) {
    if (observed_cards.size() != d.names.size())
        throw std::invalid_argument("observed cardinalities do not match the dataset columns");
    long long prod = 1, max_card = 0;
    for (int c : observed_cards) {
        if (c < 2) throw std::invalid_argument("observed cardinalities must be >= 2");
        prod *= c;
        max_card = std::max<long long>(max_card, c);
    }
    const long long cap = prod / max_card;
    if (lo < 2 || hi < lo || hi > cap)
        throw std::invalid_argument("cardinality range must satisfy 2 <= lo <= hi <= " +
                                    std::to_string(cap));

    SearchTrace trace;
    trace.score_name = to_string(score);
    std::vector<CandidateEval> evals;
    std::vector<double> values;
    for (int k = lo; k <= hi; ++k) {
        auto m = lc_star(d.names, observed_cards, k);
        auto eval = evaluate_candidate(m, d, config);
        trace.steps.push_back({0, m.label, eval.scores, false, false});
        values.push_back(eval.scores.value(score));
        evals.push_back(std::move(eval));
    }
    const auto choice = choose_step(values, kScoreEps);
    trace.steps[static_cast<std::size_t>(choice.winner)].chosen = true;
    for (int i : choice.tied) trace.steps[static_cast<std::size_t>(i)].tie = true;

    auto final_model = lc_star(d.names, observed_cards, lo + choice.winner);
    trace.final_label = final_model.label;
    return {std::move(final_model), std::move(evals[static_cast<std::size_t>(choice.winner)].fit),
            std::move(trace)};
}

SearchResult hillclimb_hlc_cardinality(const ModelSpec& topology, const Dataset& d, ScoreName score,
                                       const SearchConfig& config) {
    const auto& t = topology.structure;
    const int n_hidden = static_cast<int>(t.hidden().size());
    if (n_hidden == 0) throw std::invalid_argument("hillclimb needs at least one hidden variable");

    std::vector<int> cards(static_cast<std::size_t>(n_hidden), 2);
    auto current = with_hidden_cards(topology, cards);
    if (!is_regular(current).regular)
        throw std::invalid_argument("the all-binary start is irregular for this topology");

    SearchTrace trace;
    trace.score_name = to_string(score);
    auto current_eval = evaluate_candidate(current, d, config);
    trace.steps.push_back({0, current.label.empty() ? structure_body(current) : current.label,
                           current_eval.scores, true, false});

    for (int round = 1;; ++round) {
        std::vector<std::vector<int>> candidate_cards;
        std::vector<CandidateEval> evals;
        std::vector<double> values;
        std::vector<TraceStep> steps;
        for (int i = 0; i < n_hidden; ++i) {
            auto bumped = cards;
            ++bumped[static_cast<std::size_t>(i)];
            auto candidate = with_hidden_cards(topology, bumped);
            if (!is_regular(candidate).regular) continue;
            auto eval = evaluate_candidate(candidate, d, config);
            steps.push_back({round, candidate.label.empty() ? structure_body(candidate) : candidate.label,
                             eval.scores, false, false});
            values.push_back(eval.scores.value(score));
            candidate_cards.push_back(std::move(bumped));
            evals.push_back(std::move(eval));
        }
        if (values.empty()) break;
        const auto choice = choose_step(values, kScoreEps);
        const double best = values[static_cast<std::size_t>(choice.winner)];
        const bool improves = best > current_eval.scores.value(score) + kScoreEps;
        if (improves) {
            steps[static_cast<std::size_t>(choice.winner)].chosen = true;
            for (int i : choice.tied) steps[static_cast<std::size_t>(i)].tie = true;
        }
        for (auto& s : steps) trace.steps.push_back(std::move(s));
        if (!improves) break;
        cards = candidate_cards[static_cast<std::size_t>(choice.winner)];
        current = with_hidden_cards(topology, cards);
        current_eval = std::move(evals[static_cast<std::size_t>(choice.winner)]);
    }

    trace.final_label = current.label.empty() ? structure_body(current) : current.label;
    return {std::move(current), std::move(current_eval.fit), std::move(trace)};
}

nlohmann::json SearchTrace::to_json() const {
    nlohmann::json j;
    j["score_name"] = score_name;
    j["final"] = final_label;
    nlohmann::json steps_json = nlohmann::json::array();
    for (const auto& s : steps) {
        steps_json.push_back({{"round", s.round},
                              {"label", s.label},
                              {"chosen", s.chosen},
                              {"tie", s.tie},
                              {"loglik", s.scores.loglik},
                              {"ds", s.scores.ds},
                              {"de", s.scores.de},
                              {"BIC", s.scores.bic},
                              {"BIC_plus", s.scores.bic_plus},
                              {"CS", s.scores.cs},
                              {"CS_plus", s.scores.cs_plus}});
    }
    j["steps"] = steps_json;
    return j;
}

std::string trace_table(const SearchTrace& trace) {
    std::ostringstream os;
    os << "round  model           BIC          BIC+         CS           CS+          ds  de  pick\n";
    for (const auto& s : trace.steps) {
        os << std::left << std::setw(7) << s.round << std::setw(15) << s.label << std::right
           << std::fixed << std::setprecision(3) << std::setw(12) << s.scores.bic << ' '
           << std::setw(12) << s.scores.bic_plus << ' ' << std::setw(12) << s.scores.cs << ' '
           << std::setw(12) << s.scores.cs_plus << ' ' << std::setw(3) << s.scores.ds << ' '
           << std::setw(3) << s.scores.de << "  " << (s.chosen ? "*" : s.tie ? "=" : "") << '\n';
    }
    os << "final: " << trace.final_label << " (" << trace.score_name << ")\n";
    return os.str();
}

}  // namespace latdim
