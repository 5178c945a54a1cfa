#pragma once

#include "latdim/dimension.hpp"
#include "latdim/learning.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace latdim {

enum class ScoreName { bic, bic_plus, cs, cs_plus };

std::string to_string(ScoreName s);                  // "BIC", "BIC_plus", "CS", "CS_plus"
ScoreName score_from_string(const std::string& s);   // case-insensitive, accepts "bic+", "cs+"

/// BIC(D|G) = loglik - ds/2 * ln n (natural logs throughout).
double bic(double loglik, long long ds, long long n);
/// BIC+(D|G) = loglik - de/2 * ln n.
double bic_plus(double loglik, long long de, long long n);

/// Exact marginal log-likelihood of (possibly fractional) completed counts
/// under a flat Dirichlet prior: per node and parent configuration,
/// lnG(K) - lnG(K + N_j) + sum_k lnG(1 + N_jk).
double exact_marginal_loglik(const ModelSpec& m, const CompletedDataset& counts);

/// Expected complete-data log-likelihood sum_{X,j,k} N_jk * ln theta_jk.
double expected_loglik(const ModelSpec& m, const Parameters& p, const CompletedDataset& counts);

/// Cheeseman-Stutz: completes d with the fitted parameters, then
/// exact_marginal_loglik(D^) - loglik(D^|theta^) + loglik(D|theta^).
double cs(const ModelSpec& m, const FitResult& fit, const Dataset& d);

/// All four scores evaluated on one fit; the plus scores differ from their
/// bases by exactly (ds - de)/2 * ln n.
struct ScoreSet {
    double bic = 0, bic_plus = 0, cs = 0, cs_plus = 0;
    double loglik = 0;
    long long ds = 0, de = 0, n = 0;

    double value(ScoreName s) const;
};

ScoreSet score_all(const ModelSpec& m, const Dataset& d, const FitResult& fit, long long ds,
                   long long de);

struct ScoreReport {
    std::string score_name;
    double value = 0;
    double loglik = 0;
    long long ds = 0;
    long long de = 0;
    long long n = 0;
    std::vector<std::pair<std::string, double>> components;

    nlohmann::json to_json() const;
};

struct ScoreConfig {
    EmConfig em;
    int dim_draws = 10;
    std::uint64_t dim_seed = 0;
};

/// Fits m to d by EM and scores it. dim_source defaults to the numeric rank
/// for LC models and the decomposition for HLC models.
ScoreReport score_model(const ModelSpec& m, const Dataset& d, ScoreName which,
                        std::optional<DimSource> dim_source = std::nullopt,
                        const ScoreConfig& config = {});

}  // namespace latdim
