#include "latdim/dimension.hpp"

#include "latdim/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace latdim {

namespace {

constexpr double kGapRequirement = 1e3;
constexpr long long kDirectCheckCap = 1LL << 14;

// seed tags for independent substreams
constexpr std::uint64_t kTagDraw = 0x7261776472617764ULL;
constexpr std::uint64_t kTagLocal = 0x6c61636f6c636c64ULL;
constexpr std::uint64_t kTagDirect = 0x7463657269646c64ULL;

void require_lc(const ModelSpec& m, const char* what) {
    if (!is_lc(m)) throw std::invalid_argument(std::string(what) + " requires an LC model");
}

long long lc_hidden_card(const ModelSpec& m) {
    return m.structure.var(m.structure.hidden().front()).cardinality;
}

std::vector<long long> lc_observed_cards(const ModelSpec& m) {
    std::vector<long long> cards;
    for (int v : m.structure.observed()) cards.push_back(m.structure.var(v).cardinality);
    return cards;
}

}  // namespace

long long two_var_effective_dim(long long x_card, long long u1_card, long long u2_card) {
    if (x_card < 2 || u1_card < 2 || u2_card < 2)
        throw std::invalid_argument("two_var_effective_dim needs cardinalities >= 2");
    if (x_card <= std::min(u1_card, u2_card)) {
        const long long ds_star = (x_card - 1) + x_card * (u1_card - 1) + x_card * (u2_card - 1);
        return ds_star - x_card * (x_card - 1);
    }
    return u1_card * u2_card - 1;
}

std::pair<long long, Bipartition> pairwise_bound_dp(const ModelSpec& m) {
    require_lc(m, "pairwise_bound_dp");
    const auto cards = lc_observed_cards(m);
    const int n = static_cast<int>(cards.size());
    if (n < 2) throw std::invalid_argument("pairwise_bound_dp needs at least two observed variables");
    if (n > 20) throw std::invalid_argument("pairwise_bound_dp refuses more than 20 observed variables");
    const long long x = lc_hidden_card(m);
    const long long dc = complete_dimension(m);

    long long total = 1;
    for (long long c : cards) total *= c;

    long long best = std::numeric_limits<long long>::max();
    std::vector<int> best_left;
    std::vector<int> left = {0};

    // subsets containing variable 0, in lexicographic member-list order
    auto consider = [&](const std::vector<int>& members, long long left_card) {
        if (static_cast<int>(members.size()) == n) return;  // right side must be nonempty
        const long long right_card = total / left_card;
        const long long value = x < std::min(left_card, right_card)
                                    ? two_var_effective_dim(x, left_card, right_card)
                                    : dc;
        if (value < best) {
            best = value;
            best_left = members;
        }
    };
    auto rec = [&](auto&& self, int start, long long left_card) -> void {
        consider(left, left_card);
        for (int i = start; i < n; ++i) {
            left.push_back(i);
            self(self, i + 1, left_card * cards[static_cast<std::size_t>(i)]);
            left.pop_back();
        }
    };
    rec(rec, 1, cards[0]);

    Bipartition split;
    split.left = best_left;
    for (int i = 0; i < n; ++i)
        if (std::find(best_left.begin(), best_left.end(), i) == best_left.end())
            split.right.push_back(i);
    for (int i : split.left) split.left_card *= cards[static_cast<std::size_t>(i)];
    for (int i : split.right) split.right_card *= cards[static_cast<std::size_t>(i)];
    return {best, split};
}

bool standard_dim_bound_applies(const ModelSpec& m) {
    require_lc(m, "standard_dim_bound_applies");
    const auto cards = lc_observed_cards(m);
    const long long n = static_cast<long long>(cards.size());
    const long long x = lc_hidden_card(m);
    long long sum = 0, prod = 1;
    for (long long c : cards) {
        sum += c;
        prod *= c;
    }
    // x < 2*sqrt(prod) - sum + (n-1), exactly: t = x + sum - (n-1) and t^2 < 4*prod
    const long long t = x + sum - (n - 1);
    const bool first = t <= 0 || t * t < 4 * prod;
    const bool second = x * (sum - (n - 1)) < prod;
    return first && second;
}

// ---------------------------------------------------------------------------
// Jacobian and numerical rank

JacobianMatrix build_jacobian(const ModelSpec& m, const Parameters& p) {
    const auto& t = m.structure;
    if (!p.strictly_positive())
        throw std::domain_error("build_jacobian needs strictly positive parameters");
    const auto obs = observed_indexer(m);
    if (obs.size() > kObservedSpaceCap)
        throw std::domain_error("joint observed space exceeds the 2^20 enumeration cap");

    JacobianMatrix jac;
    for (int v : t.observed()) jac.observed_names.push_back(t.var(v).name);
    for (int v = 0; v < t.size(); ++v) {
        const int pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        for (int j = 0; j < pa_card; ++j)
            for (int k = 0; k + 1 < t.var(v).cardinality; ++k)
                jac.columns.push_back({t.var(v).name, j, k});
    }
    const long long cols = static_cast<long long>(jac.columns.size());
    jac.values.resize(obs.size(), cols);

    std::vector<int> state(static_cast<std::size_t>(obs.arity()));
    for (long long row = 0; row < obs.size(); ++row) {
        obs.decode(row, state);
        const auto ej = edge_joints(m, p, state);
        long long col = 0;
        for (int v = 0; v < t.size(); ++v) {
            const auto& joint = ej.node_tables[static_cast<std::size_t>(v)];
            const auto& theta = p.table(v);
            const int last = t.var(v).cardinality - 1;
            for (int j = 0; j < joint.cols(); ++j) {
                const double dep = joint(last, j) / theta(last, j);
                for (int k = 0; k < last; ++k)
                    jac.values(row, col++) = joint(k, j) / theta(k, j) - dep;
            }
        }
    }
    return jac;
}

RankCut rank_from_singular_values(const Eigen::VectorXd& sv, long long rows, long long cols) {
    RankCut cut;
    if (sv.size() == 0) return cut;
    cut.tolerance = sv(0) * static_cast<double>(std::max(rows, cols)) * std::pow(2.0, -40);
    int rank = 0;
    while (rank < sv.size() && sv(rank) > cut.tolerance) ++rank;
    cut.rank = rank;
    if (rank == 0) {
        cut.gap = 0.0;
    } else if (rank == sv.size() || sv(rank) == 0.0) {
        cut.gap = std::numeric_limits<double>::infinity();
    } else {
        cut.gap = sv(rank - 1) / sv(rank);
    }
    return cut;
}

RankEstimate effective_dim_numeric(const ModelSpec& m, int draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("effective_dim_numeric needs draws >= 1");
    RankEstimate est;
    est.draws = draws;
    est.singular_gap = std::numeric_limits<double>::infinity();
    bool any_clean = false;
    for (int d = 0; d < draws; ++d) {
        const auto params = sample_parameters(m, mix_seed(seed, kTagDraw, static_cast<std::uint64_t>(d)),
                                              1e-6);
        const auto jac = build_jacobian(m, params);
        Eigen::BDCSVD<Eigen::MatrixXd> svd(jac.values);
        const auto cut = rank_from_singular_values(svd.singularValues(), jac.values.rows(),
                                                   jac.values.cols());
        est.per_draw.push_back(cut.rank);
        est.singular_gap = std::min(est.singular_gap, cut.gap);
        any_clean |= cut.gap > kGapRequirement;
        if (cut.rank > est.rank) {
            est.rank = cut.rank;
            est.tolerance = cut.tolerance;
        }
    }
    est.ranks_agree =
        std::all_of(est.per_draw.begin(), est.per_draw.end(), [&](int r) { return r == est.rank; });
    est.reliable = est.ranks_agree && any_clean;
    return est;
}

long long binary_tree_effective_dim(const ModelSpec& m) {
    const auto& t = m.structure;
    for (int v = 0; v < t.size(); ++v)
        if (t.var(v).cardinality != 2)
            throw std::invalid_argument("binary_tree_effective_dim requires all variables binary");
    long long k = 0;
    for (int h : t.hidden())
        if (t.neighbours(h).size() < 3) ++k;
    return standard_dimension(m) - 2 * k;
}

// ---------------------------------------------------------------------------
// Bounds report and decomposition

namespace {

bool is_known_exception(const ModelSpec& m) {
    if (!is_lc(m)) return false;
    auto cards = lc_observed_cards(m);
    std::sort(cards.begin(), cards.end());
    const long long x = lc_hidden_card(m);
    return (x == 3 && cards == std::vector<long long>{2, 2, 2, 2}) ||
           (x == 4 && cards == std::vector<long long>{3, 3, 3});
}

void fill_lc_bounds(DimensionReport& report, const ModelSpec& m) {
    auto [dp, split] = pairwise_bound_dp(m);
    report.dp = dp;
    report.db = std::min({report.ds, report.dc, dp});
    report.dp_split = split;
    for (int i : split.left)
        report.dp_split_names.push_back(
            m.structure.var(m.structure.observed()[static_cast<std::size_t>(i)]).name);
    report.known_exception = is_known_exception(m);
    if (report.known_exception) report.exception_de = *report.db - 1;
}

}  // namespace

DimensionReport bound_db(const ModelSpec& m) {
    require_lc(m, "bound_db");
    DimensionReport report;
    report.label = render_model(m);
    report.ds = standard_dimension(m);
    report.dc = complete_dimension(m);
    fill_lc_bounds(report, m);
    return report;
}

DimensionReport hlc_effective_dim(const ModelSpec& m, const DimOptions& opts) {
    auto reg = regularize(m);
    DimensionReport report;
    report.label = render_model(reg);
    if (structure_body(reg) != structure_body(m)) report.regularized_from = render_model(m);
    report.ds = standard_dimension(reg);
    report.dc = complete_dimension(reg);
    if (is_lc(reg)) fill_lc_bounds(report, reg);

    long long correction_sum = 0;
    std::uint64_t local_index = 0;
    for (const auto& local : local_lc_models(reg)) {
        const long long local_ds = standard_dimension(local.model);
        const auto est =
            effective_dim_numeric(local.model, opts.draws, mix_seed(opts.seed, kTagLocal, local_index++));
        if (!est.reliable)
            throw unreliable_rank_error("unreliable rank estimate for local model " +
                                        local.model.label);
        const long long bound = bound_db(local.model).db.value();
        if (est.rank > bound)
            throw std::logic_error("local rank " + std::to_string(est.rank) + " exceeds bound " +
                                   std::to_string(bound) + " for " + local.model.label);
        report.corrections.push_back({reg.structure.var(local.hidden_node).name, local.model.label,
                                      local_ds, est.rank, local_ds - est.rank});
        correction_sum += local_ds - est.rank;
    }
    report.de_decomposed = report.ds - correction_sum;

    const bool run_direct =
        opts.direct == DimOptions::Direct::force ||
        (opts.direct == DimOptions::Direct::automatic && observed_indexer(reg).size() <= kDirectCheckCap);
    if (run_direct) {
        auto est = effective_dim_numeric(reg, opts.draws, mix_seed(opts.seed, kTagDirect));
        if (!est.reliable)
            throw unreliable_rank_error("unreliable direct rank estimate for " + report.label);
        if (est.rank != *report.de_decomposed) {
            std::ostringstream os;
            os << "decomposition disagrees with the direct rank for " << report.label << ": "
               << *report.de_decomposed << " vs " << est.rank;
            throw std::logic_error(os.str());
        }
        report.de_numeric = std::move(est);
    }
    return report;
}

long long effective_dimension(const ModelSpec& m, DimSource source, const DimOptions& opts) {
    switch (source) {
        case DimSource::numeric: {
            const auto est = effective_dim_numeric(m, opts.draws, opts.seed);
            if (!est.reliable)
                throw unreliable_rank_error("unreliable rank estimate for " + render_model(m));
            return est.rank;
        }
        case DimSource::decomposed: {
            DimOptions local = opts;
            local.direct = DimOptions::Direct::off;
            return hlc_effective_dim(m, local).de_decomposed.value();
        }
        case DimSource::bound: {
            const auto report = bound_db(m);
            return report.known_exception ? *report.exception_de : *report.db;
        }
    }
    throw std::logic_error("unknown dimension source");
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json DimensionReport::to_json() const {
    nlohmann::json j;
    j["label"] = label;
    j["ds"] = ds;
    j["dc"] = dc;
    j["dp"] = dp ? nlohmann::json(*dp) : nlohmann::json(nullptr);
    j["db"] = db ? nlohmann::json(*db) : nlohmann::json(nullptr);
    j["known_exception"] = known_exception;
    j["exception_de"] = exception_de ? nlohmann::json(*exception_de) : nlohmann::json(nullptr);
    j["regularized_from"] =
        regularized_from ? nlohmann::json(*regularized_from) : nlohmann::json(nullptr);
    j["de_decomposed"] = de_decomposed ? nlohmann::json(*de_decomposed) : nlohmann::json(nullptr);
    if (de_numeric) {
        j["de_numeric"] = de_numeric->rank;
        j["draws"] = de_numeric->draws;
        // JSON has no infinity; an exact-zero singular tail reports as "inf"
        j["singular_gap"] = std::isfinite(de_numeric->singular_gap)
                                ? nlohmann::json(de_numeric->singular_gap)
                                : nlohmann::json("inf");
        j["rank_tolerance"] = de_numeric->tolerance;
        j["ranks_agree"] = de_numeric->ranks_agree;
        j["reliable"] = de_numeric->reliable;
    } else {
        j["de_numeric"] = nullptr;
        j["draws"] = nullptr;
        j["singular_gap"] = nullptr;
    }
    if (!dp_split_names.empty()) j["dp_split_left"] = dp_split_names;
    if (!corrections.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : corrections)
            arr.push_back({{"node", c.node},
                           {"local", c.local_label},
                           {"ds", c.local_ds},
                           {"de", c.local_de},
                           {"correction", c.correction}});
        j["corrections"] = arr;
    }
    return j;
}

}  // namespace latdim
