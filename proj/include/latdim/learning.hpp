#pragma once

#include "latdim/model.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace latdim {

/// Observed categorical records with counts. Column order is the dataset's
/// own; fitting realigns columns to the model's observed variables by name.
struct Dataset {
    std::vector<std::string> names;
    std::vector<int> cards;  // per column, at least max state + 1
    struct Row {
        std::vector<int> state;
        long long count = 1;
    };
    std::vector<Row> rows;

    long long total() const;
};

/// CSV with a header of variable names and 0-based state indices, one row per
/// observation; an optional trailing `count` column holds pre-aggregated data.
Dataset read_dataset_csv(std::istream& in);
void write_dataset_csv(const Dataset& d, std::ostream& out);

/// Flat-simplex CPT columns, deterministic given seed.
Parameters random_parameters(const ModelSpec& m, std::uint64_t seed);

/// LC parametrization with a deterministic bijection between the hidden state
/// and the joint state of block_vars (their cardinality product must equal the
/// hidden cardinality); all other columns are random.
Parameters deterministic_block_parameters(const ModelSpec& m,
                                          const std::vector<std::string>& block_vars,
                                          std::uint64_t seed);

/// n forward samples root-to-leaves with hidden values discarded, aggregated
/// into counted records sorted by joint state.
Dataset sample_dataset(const ModelSpec& m, const Parameters& p, long long n, std::uint64_t seed);

struct EmConfig {
    int restarts = 16;
    int max_iters = 500;
    double rel_tol = 1e-7;
    std::uint64_t seed = 0;
};

struct FitResult {
    Parameters params;
    double loglik = 0.0;  // exact observed-data log-likelihood of params
    int iterations = 0;
    int restarts_used = 0;
    bool converged = false;
};

/// Best-of-restarts EM. Exact E-step posteriors per distinct record; the
/// returned log-likelihood is recomputed from the final parameters through the
/// observed-marginal path. Ties within 1e-12 go to the lower restart index.
/// loglik_paths, when given, receives the per-iteration log-likelihood series
/// of every restart.
FitResult em_fit(const ModelSpec& m, const Dataset& d, const EmConfig& config = {},
                 std::vector<std::vector<double>>* loglik_paths = nullptr);

/// Expected sufficient statistics N(x, pa) of the completed data under p.
struct CompletedDataset {
    std::vector<Eigen::MatrixXd> counts;  // per node, card x parent-card
    double total = 0.0;                   // = |D| for every node
};

CompletedDataset complete_dataset(const ModelSpec& m, const Parameters& p, const Dataset& d);

/// Observed-data log-likelihood via the full observed marginal (natural log).
double loglik(const ModelSpec& m, const Parameters& p, const Dataset& d);

/// KL divergence in bits; +infinity where q vanishes on the support of p.
double kl_divergence_bits(std::span<const double> p_true, std::span<const double> q);

}  // namespace latdim
