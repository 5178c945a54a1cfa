#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace latdim {

enum class Role { hidden, observed };

struct Variable {
    std::string name;
    int cardinality = 0;  // >= 2
    Role role = Role::observed;
};

/// Rooted directed tree of discrete variables. Observed variables are leaves,
/// hidden variables are internal with at least two neighbours, and the root is
/// hidden whenever any hidden variable exists. Trees with no hidden variables
/// are accepted as plain observed Bayesian trees (used by the scoring tests);
/// for those the leaf rules do not apply.
class TreeStructure {
public:
    static TreeStructure make(std::vector<Variable> variables, const std::string& root,
                              const std::vector<std::pair<std::string, std::string>>& edges);

    const std::vector<Variable>& variables() const { return vars_; }
    const Variable& var(int v) const { return vars_[static_cast<std::size_t>(v)]; }
    int size() const { return static_cast<int>(vars_.size()); }

    int root() const { return root_; }
    int parent(int v) const { return parent_[static_cast<std::size_t>(v)]; }
    const std::vector<int>& children(int v) const { return children_[static_cast<std::size_t>(v)]; }
    std::vector<int> neighbours(int v) const;

    const std::vector<int>& observed() const { return observed_; }
    const std::vector<int>& hidden() const { return hidden_; }
    /// Parents precede children.
    const std::vector<int>& topo_order() const { return topo_; }

    int index_of(std::string_view name) const;  // -1 if absent

private:
    std::vector<Variable> vars_;
    int root_ = -1;
    std::vector<int> parent_;
    std::vector<std::vector<int>> children_;
    std::vector<int> observed_, hidden_, topo_;
};

struct ModelSpec {
    TreeStructure structure;
    std::string label;  // canonical spec string, or "" when only a structure body renders it
};

/// Accepts an LC spec string "k:c1,...,cn", the built-in five-leaf HLC spec
/// "h1,h2,h3:o1,...,o5" (root H1 with children H2, H3 and one leaf; H2 and H3
/// with two leaves each), or a structure-file body.
ModelSpec parse_model(const std::string& text);

/// Structure-file body only (lines: `var <name> <card> <hidden|observed>`,
/// `edge <parent> <child>`, `root <name>`, `#` comments). With
/// allow_unset_hidden, hidden cardinalities may be given as `?` and default
/// to 2 (used by the cardinality search, which overrides them anyway).
ModelSpec parse_structure(const std::string& text, bool allow_unset_hidden = false);

/// Canonical spec string when one exists, otherwise the structure body.
std::string render_model(const ModelSpec& m);
std::string structure_body(const ModelSpec& m);

ModelSpec relabel(TreeStructure structure);  // recompute the canonical label

bool is_lc(const ModelSpec& m);  // exactly one hidden variable

/// ds = sum over nodes of (|X|-1) * |Pa(X)|.
long long standard_dimension(const ModelSpec& m);
/// dc = product of observed cardinalities minus one.
long long complete_dimension(const ModelSpec& m);

struct RegularityCheck {
    bool regular = true;
    std::vector<int> violators;  // hidden node indices over the cap
};

/// A hidden node H is within bounds when |H| <= prod(Ne)/max(Ne); the
/// inequality is strict when H has exactly two neighbours at least one of
/// which is hidden.
RegularityCheck is_regular(const ModelSpec& m);

/// Equivalent regular model: hidden cardinalities above the cap are replaced
/// by it (cap-1 in the strict two-neighbour case), iterating to a fixpoint.
/// Throws if a cap would force a cardinality below 2.
ModelSpec regularize(const ModelSpec& m);

struct LocalModel {
    int hidden_node = -1;  // index in the owning model
    ModelSpec model;       // LC star over the node's neighbours
};

/// One LC model per hidden node: the node plus its neighbours, hidden
/// neighbours treated as observed.
std::vector<LocalModel> local_lc_models(const ModelSpec& m);

/// Mixed-radix index over a fixed variable subset, row-major with the first
/// listed variable slowest. All distributions and matrices share this order.
class StateIndexer {
public:
    StateIndexer() = default;
    explicit StateIndexer(std::vector<int> cards);

    long long size() const { return size_; }
    int arity() const { return static_cast<int>(cards_.size()); }
    const std::vector<int>& cards() const { return cards_; }

    long long index(std::span<const int> state) const;
    void decode(long long index, std::span<int> state) const;

private:
    std::vector<int> cards_;
    std::vector<long long> strides_;
    long long size_ = 1;
};

StateIndexer observed_indexer(const ModelSpec& m);
StateIndexer hidden_indexer(const ModelSpec& m);

inline constexpr long long kObservedSpaceCap = 1LL << 20;
inline constexpr long long kHiddenEnumerationCap = 1LL << 16;

/// Conditional probability tables aligned with one structure: table(v) has
/// card(v) rows and one column per parent state (a single column at the root).
class Parameters {
public:
    static Parameters from_tables(const ModelSpec& m, std::vector<Eigen::MatrixXd> tables);
    static Parameters uniform(const ModelSpec& m);

    const Eigen::MatrixXd& table(int v) const { return tables_[static_cast<std::size_t>(v)]; }
    const std::vector<Eigen::MatrixXd>& tables() const { return tables_; }
    bool strictly_positive() const;

private:
    std::vector<Eigen::MatrixXd> tables_;
};

/// Every CPT column drawn from the flat simplex distribution; min_mass > 0
/// clamps entries away from zero and renormalizes. Deterministic given seed.
Parameters sample_parameters(const ModelSpec& m, std::uint64_t seed, double min_mass = 0.0);

/// Full distribution over joint observed states in canonical order. Refuses
/// models with more than 2^20 joint observed states. Marginalization is by
/// hidden-configuration enumeration up to 2^16 hidden states, by per-state
/// tree propagation beyond.
std::vector<double> observed_marginal(const ModelSpec& m, const Parameters& p);
std::vector<double> observed_marginal_enumeration(const ModelSpec& m, const Parameters& p);
std::vector<double> observed_marginal_propagation(const ModelSpec& m, const Parameters& p);

/// For one joint observed state: p(o) and, per node, the table
/// p(X = x, Pa(X) = u, o) (single column at the root). This is everything the
/// EM E-step and the Jacobian columns need.
struct EdgeJoints {
    double prob = 0.0;
    std::vector<Eigen::MatrixXd> node_tables;
};

EdgeJoints edge_joints(const ModelSpec& m, const Parameters& p, std::span<const int> observed_state);
EdgeJoints edge_joints_enumeration(const ModelSpec& m, const Parameters& p,
                                   std::span<const int> observed_state);
EdgeJoints edge_joints_propagation(const ModelSpec& m, const Parameters& p,
                                   std::span<const int> observed_state);

}  // namespace latdim
