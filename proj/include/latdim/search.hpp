#pragma once

#include "latdim/scoring.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace latdim {

struct SearchConfig {
    EmConfig em;
    int dim_draws = 10;
    std::uint64_t seed = 0;
};

struct TraceStep {
    int round = 0;
    std::string label;
    ScoreSet scores;
    bool chosen = false;
    bool tie = false;  // within 1e-9 of the round's chosen score, not chosen itself
};

struct SearchTrace {
    std::string score_name;
    std::string final_label;
    std::vector<TraceStep> steps;

    nlohmann::json to_json() const;
};

std::string trace_table(const SearchTrace& trace);

struct SearchResult {
    ModelSpec final;
    FitResult final_fit;
    SearchTrace trace;
};

/// Winner among candidate scores: a later candidate must beat the incumbent by
/// more than eps, so near-ties resolve to the earlier (more parsimonious)
/// index. tied lists every losing index within eps of the winner.
struct StepChoice {
    int winner = -1;
    std::vector<int> tied;
};
StepChoice choose_step(std::span<const double> scores, double eps = 1e-9);

/// Scores every LC hidden cardinality in [lo, hi] (bounded by the regular cap
/// prod|O|/max|O|) against the dataset and returns the argmax under the chosen
/// score. Candidate fits are seeded by (seed, candidate label), so every score
/// sees identical fits.
SearchResult select_lc_cardinality(const std::vector<int>& observed_cards, const Dataset& d,
                                   ScoreName score, int lo, int hi, const SearchConfig& config = {});

/// Greedy cardinality search over the hidden nodes of a fixed topology:
/// starts all-binary, repeatedly applies the single best strictly-improving
/// +1 increment that keeps the model regular, and stops when none improves.
SearchResult hillclimb_hlc_cardinality(const ModelSpec& topology, const Dataset& d, ScoreName score,
                                       const SearchConfig& config = {});

}  // namespace latdim
