#pragma once

#include "latdim/model.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace latdim {

/// Raised when a numerical rank estimate cannot be trusted (the singular gap
/// stayed ambiguous on every draw, or draws disagreed) and the caller did not
/// ask for a bound fallback.
class unreliable_rank_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Effective dimension of an LC model with two (possibly composite) observed
/// variables: ds* - x(x-1) when x <= min(u1, u2), the saturated u1*u2 - 1
/// otherwise. The two branches coincide at equality.
long long two_var_effective_dim(long long x_card, long long u1_card, long long u2_card);

struct Bipartition {
    std::vector<int> left, right;  // positions into the observed variable list
    long long left_card = 1, right_card = 1;
};

/// Minimum of the two-composite-variable bound over all 2^(n-1)-1 bipartitions
/// of the observed variables of an LC model (n <= 20). Ties resolve to the
/// lexicographically first left set.
std::pair<long long, Bipartition> pairwise_bound_dp(const ModelSpec& m);

/// True when the hidden cardinality is small enough that ds < dp and ds < dc,
/// i.e. |X| < 2*sqrt(|O|) - sum|O_i| + (n-1) and |X| < |O| / (sum|O_i| - (n-1)).
/// Evaluated in exact integer arithmetic.
bool standard_dim_bound_applies(const ModelSpec& m);

/// Numerical rank aggregated over repeated random-parameter draws.
struct RankEstimate {
    int rank = 0;              // maximum over draws
    int draws = 0;
    double singular_gap = 0.0; // min over draws of sigma_rank / sigma_rank+1
    double tolerance = 0.0;    // threshold of the first draw attaining the max rank
    bool ranks_agree = true;
    bool reliable = true;      // some draw had a clean gap and all draws agreed
    std::vector<int> per_draw;
};

struct JacobianColumn {
    std::string node;
    int parent_state = 0;
    int state = 0;  // free states only; the last state of each column is dependent
};

/// Dense Jacobian of the parameters -> observed-marginal map under the
/// free-parameter convention. Rows follow the canonical joint observed order,
/// columns the canonical parameter order.
struct JacobianMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> observed_names;
    std::vector<JacobianColumn> columns;
};

JacobianMatrix build_jacobian(const ModelSpec& m, const Parameters& p);

/// Thresholded rank of a singular value profile: sigma > sigma_max *
/// max(rows, cols) * 2^-40 counts, and the estimate is clean only when
/// sigma_rank / sigma_rank+1 exceeds 10^3.
struct RankCut {
    int rank = 0;
    double tolerance = 0.0;
    double gap = 0.0;  // +inf when nothing falls below the threshold
};
RankCut rank_from_singular_values(const Eigen::VectorXd& sv, long long rows, long long cols);

/// de by repeated random draws: sample strictly positive parameters, build the
/// Jacobian, count singular values above the threshold; the maximum rank over
/// draws is reported and disagreements are surfaced, never averaged.
RankEstimate effective_dim_numeric(const ModelSpec& m, int draws = 10, std::uint64_t seed = 0);

/// All-binary tree rule: de = ds - 2k with k the number of hidden nodes that
/// have fewer than three neighbours.
long long binary_tree_effective_dim(const ModelSpec& m);

struct LocalCorrection {
    std::string node;
    std::string local_label;
    long long local_ds = 0;
    int local_de = 0;
    long long correction = 0;  // local ds - local de
};

struct DimensionReport {
    std::string label;
    long long ds = 0;
    long long dc = 0;
    std::optional<long long> dp;  // LC models only
    std::optional<long long> db;
    std::optional<RankEstimate> de_numeric;
    std::optional<long long> de_decomposed;
    bool known_exception = false;               // 3:2,2,2,2 or 4:3,3,3 (then de = db - 1)
    std::optional<long long> exception_de;
    std::optional<std::string> regularized_from;
    std::optional<Bipartition> dp_split;
    std::vector<std::string> dp_split_names;
    std::vector<LocalCorrection> corrections;

    nlohmann::json to_json() const;
};

/// Bounds-only report for an LC model: db = min(ds, dc, dp) plus the known
/// exception flag.
DimensionReport bound_db(const ModelSpec& m);

struct DimOptions {
    int draws = 10;
    std::uint64_t seed = 0;
    enum class Direct { automatic, force, off };
    /// Whether to also run the direct Jacobian rank next to the decomposition
    /// (automatic: only when the joint observed space is at most 2^14).
    Direct direct = Direct::automatic;
};

/// Decomposition path: regularize, then subtract from ds the summed
/// (ds - de) differences of the local LC models; cross-checked against the
/// direct rank when feasible. Throws on a cross-check mismatch or an
/// unreliable local rank.
DimensionReport hlc_effective_dim(const ModelSpec& m, const DimOptions& opts = {});

enum class DimSource { numeric, decomposed, bound };

/// de as a plain integer for scoring: numeric rank, decomposition, or the
/// exception-adjusted bound (LC only).
long long effective_dimension(const ModelSpec& m, DimSource source, const DimOptions& opts = {});

}  // namespace latdim
