#pragma once

#include "latdim/search.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace latdim {

enum class ParamMode { random_params, deterministic_block };

/// Preset sample-size ladders.
const std::vector<long long>& hlc_sample_ladder();  // 1k..243k, factor 3
const std::vector<long long>& lc_sample_ladder();   // 1k..256k, factor 4

struct ExperimentPlan {
    ModelSpec generative;
    ParamMode mode = ParamMode::random_params;
    std::vector<std::string> block_vars;  // deterministic mode; empty = shortest matching prefix
    int n_params = 1;
    std::vector<long long> sample_sizes;  // strictly increasing
    std::vector<ScoreName> scores;
    std::uint64_t master_seed = 0;
    EmConfig em;
    int dim_draws = 10;
    int range_lo = 2;
    int range_hi = 0;  // 0 = regular cap (LC generative models only)
};

/// Plan JSON: model (spec string or structure body), mode, block_vars,
/// n_params, sample_sizes (array or "lc"/"hlc" preset), scores, master_seed,
/// em {restarts, max_iters, rel_tol}, dim_draws, range [lo, hi].
ExperimentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

struct ExperimentRecord {
    int param_index = 0;
    long long n = 0;
    ScoreName score = ScoreName::bic;
    std::string selected;
    double kl_bits = 0.0;
    std::vector<int> hidden_cards;
    double wall_ms = 0.0;  // measured; excluded from canonical output
    std::string error;     // nonempty marks a failed cell, the run continues
};

/// One cell per (parametrization, sample size, score): each parametrization
/// draws one dataset per sample size, shared across scores; each score then
/// selects a model (LC range scan or HLC hill-climb) and the KL divergence of
/// its ML observed marginal to the generative marginal is recorded. Fully
/// determined by master_seed.
std::vector<ExperimentRecord> run_plan(const ExperimentPlan& plan);

struct SummaryCell {
    ScoreName score = ScoreName::bic;
    long long n = 0;
    int count = 0;  // non-failed cells
    double mean_kl = 0.0;
    double half_width = 0.0;  // 1.96 * stderr, 0 for a single record
    std::vector<double> mean_cards;
    bool best = false;  // lowest mean at this n, or interval overlaps the lowest
};

std::vector<SummaryCell> summarize(const ExperimentPlan& plan,
                                   const std::vector<ExperimentRecord>& records);

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records,
                       bool timings = false);
/// Table-style pivot: one row per sample size, one column per score, cells
/// "mean+-halfwidth" in 1e-3 bits with a trailing * for the best set.
void write_summary_csv(std::ostream& out, const ExperimentPlan& plan,
                       const std::vector<SummaryCell>& cells);
/// Long form with counts, KL statistics, and mean selected cardinalities.
void write_cards_csv(std::ostream& out, const ExperimentPlan& plan,
                     const std::vector<SummaryCell>& cells);

}  // namespace latdim
