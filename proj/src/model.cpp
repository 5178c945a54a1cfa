#include "latdim/model.hpp"

#include "latdim/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace latdim {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

long long checked_mul(long long a, long long b) {
    if (a != 0 && b > (1LL << 62) / a) throw std::overflow_error("cardinality product overflow");
    return a * b;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

int parse_card(const std::string& tok, const std::string& what) {
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail("bad " + what + " '" + tok + "'");
    if (v < 2) fail(what + " must be at least 2, got '" + tok + "'");
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// TreeStructure

TreeStructure TreeStructure::make(std::vector<Variable> variables, const std::string& root,
                                  const std::vector<std::pair<std::string, std::string>>& edges) {
    TreeStructure t;
    t.vars_ = std::move(variables);
    const int n = t.size();
    if (n == 0) fail("model has no variables");

    std::unordered_map<std::string, int> index;
    for (int i = 0; i < n; ++i) {
        const auto& v = t.vars_[static_cast<std::size_t>(i)];
        if (v.name.empty()) fail("empty variable name");
        if (v.cardinality < 2) fail("variable '" + v.name + "' has cardinality < 2");
        if (!index.emplace(v.name, i).second) fail("duplicate variable '" + v.name + "'");
    }

    auto lookup = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) fail("unknown variable '" + name + "'");
        return it->second;
    };

    t.root_ = lookup(root);
    t.parent_.assign(static_cast<std::size_t>(n), -1);
    t.children_.assign(static_cast<std::size_t>(n), {});
    if (static_cast<int>(edges.size()) != n - 1) fail("edge set does not form a tree");
    for (const auto& [pa, ch] : edges) {
        int p = lookup(pa), c = lookup(ch);
        if (c == t.root_) fail("root '" + root + "' has a parent");
        if (t.parent_[static_cast<std::size_t>(c)] != -1) fail("variable '" + ch + "' has two parents");
        t.parent_[static_cast<std::size_t>(c)] = p;
        t.children_[static_cast<std::size_t>(p)].push_back(c);
    }

    // connectivity: every node reachable from the root
    t.topo_.reserve(static_cast<std::size_t>(n));
    t.topo_.push_back(t.root_);
    for (std::size_t i = 0; i < t.topo_.size(); ++i)
        for (int c : t.children_[static_cast<std::size_t>(t.topo_[i])]) t.topo_.push_back(c);
    if (static_cast<int>(t.topo_.size()) != n) fail("edge set is not connected");

    for (int i = 0; i < n; ++i) {
        (t.vars_[static_cast<std::size_t>(i)].role == Role::observed ? t.observed_ : t.hidden_)
            .push_back(i);
    }
    if (t.observed_.empty()) fail("model has no observed variable");

    if (!t.hidden_.empty()) {
        if (t.var(t.root_).role != Role::hidden) fail("root must be hidden");
        for (int i = 0; i < n; ++i) {
            const int degree =
                static_cast<int>(t.children_[static_cast<std::size_t>(i)].size()) + (i == t.root_ ? 0 : 1);
            if (t.var(i).role == Role::observed && degree != 1)
                fail("observed variable '" + t.var(i).name + "' is not a leaf");
            if (t.var(i).role == Role::hidden && degree < 2)
                fail("hidden variable '" + t.var(i).name + "' has fewer than two neighbours");
        }
    }
    return t;
}

std::vector<int> TreeStructure::neighbours(int v) const {
    std::vector<int> out;
    if (v != root_) out.push_back(parent(v));
    for (int c : children(v)) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

int TreeStructure::index_of(std::string_view name) const {
    for (int i = 0; i < size(); ++i)
        if (vars_[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
}

// ---------------------------------------------------------------------------
// Parsing and rendering

namespace {

ModelSpec make_lc(int hidden_card, const std::vector<int>& observed_cards) {
    if (observed_cards.size() < 2) fail("an LC model needs at least two observed variables");
    std::vector<Variable> vars;
    vars.push_back({"X", hidden_card, Role::hidden});
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < observed_cards.size(); ++i) {
        std::string name = "O" + std::to_string(i + 1);
        vars.push_back({name, observed_cards[i], Role::observed});
        edges.emplace_back("X", name);
    }
    return relabel(TreeStructure::make(std::move(vars), "X", edges));
}

// The built-in five-leaf HLC: H1 -> {H2, H3, O5}, H2 -> {O1, O2}, H3 -> {O3, O4}.
ModelSpec make_builtin_hlc(const std::vector<int>& h, const std::vector<int>& o) {
    std::vector<Variable> vars;
    for (int i = 0; i < 3; ++i) vars.push_back({"H" + std::to_string(i + 1), h[static_cast<std::size_t>(i)], Role::hidden});
    for (int i = 0; i < 5; ++i) vars.push_back({"O" + std::to_string(i + 1), o[static_cast<std::size_t>(i)], Role::observed});
    std::vector<std::pair<std::string, std::string>> edges = {
        {"H1", "H2"}, {"H1", "H3"}, {"H1", "O5"},
        {"H2", "O1"}, {"H2", "O2"}, {"H3", "O3"}, {"H3", "O4"},
    };
    return relabel(TreeStructure::make(std::move(vars), "H1", edges));
}

std::optional<std::string> spec_label(const TreeStructure& t) {
    const auto& hidden = t.hidden();
    if (hidden.empty()) return std::nullopt;
    std::ostringstream os;
    if (hidden.size() == 1) {
        os << t.var(hidden[0]).cardinality << ':';
        for (std::size_t i = 0; i < t.observed().size(); ++i)
            os << (i ? "," : "") << t.var(t.observed()[i]).cardinality;
        return os.str();
    }
    // built-in shape: root with two hidden children of two leaves each plus one leaf
    if (hidden.size() != 3 || t.observed().size() != 5) return std::nullopt;
    const int r = t.root();
    std::vector<int> hidden_kids, leaf_kids;
    for (int c : t.children(r))
        (t.var(c).role == Role::hidden ? hidden_kids : leaf_kids).push_back(c);
    if (hidden_kids.size() != 2 || leaf_kids.size() != 1) return std::nullopt;
    for (int hk : hidden_kids) {
        if (t.children(hk).size() != 2) return std::nullopt;
        for (int c : t.children(hk))
            if (t.var(c).role != Role::observed) return std::nullopt;
    }
    os << t.var(r).cardinality << ',' << t.var(hidden_kids[0]).cardinality << ','
       << t.var(hidden_kids[1]).cardinality << ':';
    std::vector<int> leaves;
    for (int hk : hidden_kids)
        for (int c : t.children(hk)) leaves.push_back(c);
    leaves.push_back(leaf_kids[0]);
    for (std::size_t i = 0; i < leaves.size(); ++i)
        os << (i ? "," : "") << t.var(leaves[i]).cardinality;
    return os.str();
}

}  // namespace

ModelSpec relabel(TreeStructure structure) {
    ModelSpec m{std::move(structure), ""};
    if (auto label = spec_label(m.structure)) m.label = *label;
    return m;
}

ModelSpec parse_structure(const std::string& text, bool allow_unset_hidden) {
    std::vector<Variable> vars;
    std::vector<std::pair<std::string, std::string>> edges;
    std::optional<std::string> root;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        if (kw == "var") {
            std::string name, card, role;
            if (!(ls >> name >> card >> role)) fail("bad var line: " + line);
            Role r;
            if (role == "hidden") {
                r = Role::hidden;
            } else if (role == "observed") {
                r = Role::observed;
            } else {
                fail("bad role '" + role + "'");
            }
            int c;
            if (card == "?" && r == Role::hidden && allow_unset_hidden) {
                c = 2;
            } else {
                c = parse_card(card, "cardinality");
            }
            vars.push_back({name, c, r});
        } else if (kw == "edge") {
            std::string pa, ch;
            if (!(ls >> pa >> ch)) fail("bad edge line: " + line);
            edges.emplace_back(pa, ch);
        } else if (kw == "root") {
            std::string name;
            if (!(ls >> name)) fail("bad root line: " + line);
            root = name;
        } else {
            fail("unknown directive '" + kw + "'");
        }
        std::string rest;
        if (ls >> rest) fail("trailing tokens on line: " + line);
    }
    if (vars.empty()) fail("structure has no variables");
    if (!root) fail("structure has no root line");
    return relabel(TreeStructure::make(std::move(vars), *root, edges));
}

ModelSpec parse_model(const std::string& text) {
    const std::string body = trim(text);
    if (body.empty()) fail("empty model description");
    if (body.find('\n') != std::string::npos || body.starts_with("var ") || body.starts_with("root ") ||
        body.starts_with("#")) {
        return parse_structure(body);
    }
    auto colon = body.find(':');
    if (colon == std::string::npos) fail("model spec string needs a ':'");
    std::vector<int> hidden_cards, observed_cards;
    for (const auto& tok : split(body.substr(0, colon), ','))
        hidden_cards.push_back(parse_card(trim(tok), "hidden cardinality"));
    for (const auto& tok : split(body.substr(colon + 1), ','))
        observed_cards.push_back(parse_card(trim(tok), "observed cardinality"));
    if (hidden_cards.size() == 1) return make_lc(hidden_cards[0], observed_cards);
    if (hidden_cards.size() == 3 && observed_cards.size() == 5)
        return make_builtin_hlc(hidden_cards, observed_cards);
    fail("no built-in topology with " + std::to_string(hidden_cards.size()) + " hidden and " +
         std::to_string(observed_cards.size()) + " observed variables");
}

std::string structure_body(const ModelSpec& m) {
    const auto& t = m.structure;
    std::ostringstream os;
    for (const auto& v : t.variables())
        os << "var " << v.name << ' ' << v.cardinality << ' '
           << (v.role == Role::hidden ? "hidden" : "observed") << '\n';
    for (int v = 0; v < t.size(); ++v)
        for (int c : t.children(v)) os << "edge " << t.var(v).name << ' ' << t.var(c).name << '\n';
    os << "root " << t.var(t.root()).name << '\n';
    return os.str();
}

std::string render_model(const ModelSpec& m) {
    return m.label.empty() ? structure_body(m) : m.label;
}

bool is_lc(const ModelSpec& m) { return m.structure.hidden().size() == 1; }

// ---------------------------------------------------------------------------
// Dimensions and regularity

long long standard_dimension(const ModelSpec& m) {
    const auto& t = m.structure;
    long long ds = 0;
    for (int v = 0; v < t.size(); ++v) {
        const long long pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        ds += static_cast<long long>(t.var(v).cardinality - 1) * pa_card;
    }
    return ds;
}

long long complete_dimension(const ModelSpec& m) {
    long long prod = 1;
    for (int v : m.structure.observed()) prod = checked_mul(prod, m.structure.var(v).cardinality);
    return prod - 1;
}

namespace {

// prod(Ne)/max(Ne) cap and whether the strict form applies to this node
struct HiddenCap {
    long long cap = 0;
    bool strict = false;
};

HiddenCap hidden_cap(const TreeStructure& t, int v) {
    auto ne = t.neighbours(v);
    long long prod = 1, max_card = 0;
    bool any_hidden = false;
    for (int u : ne) {
        prod = checked_mul(prod, t.var(u).cardinality);
        max_card = std::max<long long>(max_card, t.var(u).cardinality);
        any_hidden |= t.var(u).role == Role::hidden;
    }
    return {prod / max_card, ne.size() == 2 && any_hidden};
}

}  // namespace

RegularityCheck is_regular(const ModelSpec& m) {
    RegularityCheck out;
    for (int v : m.structure.hidden()) {
        const auto [cap, strict] = hidden_cap(m.structure, v);
        const long long card = m.structure.var(v).cardinality;
        if (card > cap || (strict && card == cap)) {
            out.regular = false;
            out.violators.push_back(v);
        }
    }
    return out;
}

ModelSpec regularize(const ModelSpec& m) {
    std::vector<Variable> vars = m.structure.variables();
    ModelSpec cur = m;
    for (;;) {
        auto check = is_regular(cur);
        if (check.regular) return cur;
        for (int v : check.violators) {
            const auto [cap, strict] = hidden_cap(cur.structure, v);
            const long long target = strict ? cap - 1 : cap;
            if (target < 2)
                throw std::domain_error("hidden variable '" + cur.structure.var(v).name +
                                        "' cannot be regularized within cardinality >= 2");
            vars[static_cast<std::size_t>(v)].cardinality = static_cast<int>(target);
        }
        std::vector<std::pair<std::string, std::string>> edges;
        const auto& t = cur.structure;
        for (int v = 0; v < t.size(); ++v)
            for (int c : t.children(v)) edges.emplace_back(t.var(v).name, t.var(c).name);
        cur = relabel(TreeStructure::make(vars, t.var(t.root()).name, edges));
    }
}

std::vector<LocalModel> local_lc_models(const ModelSpec& m) {
    std::vector<LocalModel> out;
    const auto& t = m.structure;
    for (int h : t.hidden()) {
        std::vector<Variable> vars;
        vars.push_back({t.var(h).name, t.var(h).cardinality, Role::hidden});
        std::vector<std::pair<std::string, std::string>> edges;
        for (int u : t.neighbours(h)) {
            vars.push_back({t.var(u).name, t.var(u).cardinality, Role::observed});
            edges.emplace_back(t.var(h).name, t.var(u).name);
        }
        out.push_back({h, relabel(TreeStructure::make(std::move(vars), t.var(h).name, edges))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// State indexing

StateIndexer::StateIndexer(std::vector<int> cards) : cards_(std::move(cards)) {
    strides_.assign(cards_.size(), 1);
    for (int i = static_cast<int>(cards_.size()) - 2; i >= 0; --i)
        strides_[static_cast<std::size_t>(i)] =
            checked_mul(strides_[static_cast<std::size_t>(i) + 1], cards_[static_cast<std::size_t>(i) + 1]);
    for (int c : cards_) size_ = checked_mul(size_, c);
}

long long StateIndexer::index(std::span<const int> state) const {
    long long idx = 0;
    for (std::size_t i = 0; i < cards_.size(); ++i) idx += state[i] * strides_[i];
    return idx;
}

void StateIndexer::decode(long long index, std::span<int> state) const {
    for (std::size_t i = 0; i < cards_.size(); ++i) {
        state[i] = static_cast<int>(index / strides_[i]);
        index %= strides_[i];
    }
}

namespace {

StateIndexer indexer_over(const ModelSpec& m, const std::vector<int>& nodes) {
    std::vector<int> cards;
    cards.reserve(nodes.size());
    for (int v : nodes) cards.push_back(m.structure.var(v).cardinality);
    return StateIndexer(std::move(cards));
}

}  // namespace

StateIndexer observed_indexer(const ModelSpec& m) { return indexer_over(m, m.structure.observed()); }
StateIndexer hidden_indexer(const ModelSpec& m) { return indexer_over(m, m.structure.hidden()); }

// ---------------------------------------------------------------------------
// Parameters

Parameters Parameters::from_tables(const ModelSpec& m, std::vector<Eigen::MatrixXd> tables) {
    const auto& t = m.structure;
    if (static_cast<int>(tables.size()) != t.size()) fail("wrong number of parameter tables");
    for (int v = 0; v < t.size(); ++v) {
        const auto& tab = tables[static_cast<std::size_t>(v)];
        const int pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        if (tab.rows() != t.var(v).cardinality || tab.cols() != pa_card)
            fail("table shape mismatch for variable '" + t.var(v).name + "'");
        for (int j = 0; j < tab.cols(); ++j) {
            if ((tab.col(j).array() < 0.0).any())
                fail("negative probability in table of '" + t.var(v).name + "'");
            if (std::abs(tab.col(j).sum() - 1.0) > 1e-12)
                fail("column " + std::to_string(j) + " of '" + t.var(v).name + "' does not sum to 1");
        }
    }
    Parameters p;
    p.tables_ = std::move(tables);
    return p;
}

Parameters Parameters::uniform(const ModelSpec& m) {
    const auto& t = m.structure;
    std::vector<Eigen::MatrixXd> tables;
    tables.reserve(static_cast<std::size_t>(t.size()));
    for (int v = 0; v < t.size(); ++v) {
        const int pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        const int card = t.var(v).cardinality;
        tables.push_back(Eigen::MatrixXd::Constant(card, pa_card, 1.0 / card));
    }
    return from_tables(m, std::move(tables));
}

bool Parameters::strictly_positive() const {
    for (const auto& t : tables_)
        if ((t.array() <= 0.0).any()) return false;
    return true;
}

Parameters sample_parameters(const ModelSpec& m, std::uint64_t seed, double min_mass) {
    Rng rng(seed);
    const auto& t = m.structure;
    std::vector<Eigen::MatrixXd> tables;
    tables.reserve(static_cast<std::size_t>(t.size()));
    for (int v = 0; v < t.size(); ++v) {
        const int pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        const int card = t.var(v).cardinality;
        Eigen::MatrixXd tab(card, pa_card);
        for (int j = 0; j < pa_card; ++j) {
            auto col = rng.simplex(card, min_mass);
            for (int i = 0; i < card; ++i) tab(i, j) = col[static_cast<std::size_t>(i)];
        }
        tables.push_back(std::move(tab));
    }
    return Parameters::from_tables(m, std::move(tables));
}

// ---------------------------------------------------------------------------
// Observed marginal and edge joints

namespace {

void check_observed_cap(const StateIndexer& obs) {
    if (obs.size() > kObservedSpaceCap)
        throw std::domain_error("joint observed space exceeds the 2^20 enumeration cap");
}

// Accumulates, for one assignment of all hidden variables, the observed
// product over every joint observed state: out[o] += weight * prod_i p(o_i | pa_i).
// Recurses over observed variables in topological order (parents first, so
// observed parents in hidden-free models are assigned before their children)
// while indexing with the canonical observed strides.
void scatter_observed_products(const ModelSpec& m, const Parameters& p, std::vector<int>& full_state,
                               double weight, const std::vector<long long>& stride_by_node,
                               const std::vector<int>& observed_topo, std::vector<double>& out) {
    const auto& t = m.structure;
    const int n = static_cast<int>(observed_topo.size());
    auto rec = [&](auto&& self, int level, long long idx, double prod) -> void {
        if (level == n) {
            out[static_cast<std::size_t>(idx)] += prod;
            return;
        }
        if (prod == 0.0) return;
        const int v = observed_topo[static_cast<std::size_t>(level)];
        const int pa = t.parent(v);
        const int pa_state = pa < 0 ? 0 : full_state[static_cast<std::size_t>(pa)];
        const auto& tab = p.table(v);
        for (int s = 0; s < t.var(v).cardinality; ++s) {
            full_state[static_cast<std::size_t>(v)] = s;
            self(self, level + 1, idx + s * stride_by_node[static_cast<std::size_t>(v)],
                 prod * tab(s, pa_state));
        }
    };
    rec(rec, 0, 0, weight);
}

}  // namespace

std::vector<double> observed_marginal_enumeration(const ModelSpec& m, const Parameters& p) {
    const auto& t = m.structure;
    const auto obs = observed_indexer(m);
    check_observed_cap(obs);
    std::vector<double> out(static_cast<std::size_t>(obs.size()), 0.0);

    std::vector<long long> stride_by_node(static_cast<std::size_t>(t.size()), 0);
    {
        long long stride = 1;
        for (auto it = t.observed().rbegin(); it != t.observed().rend(); ++it) {
            stride_by_node[static_cast<std::size_t>(*it)] = stride;
            stride *= t.var(*it).cardinality;
        }
    }
    std::vector<int> observed_topo;
    for (int v : t.topo_order())
        if (t.var(v).role == Role::observed) observed_topo.push_back(v);

    const auto hid = hidden_indexer(m);
    const auto& hidden = t.hidden();
    std::vector<int> full(static_cast<std::size_t>(t.size()), 0);
    std::vector<int> hstate(hidden.size(), 0);
    for (long long h = 0; h < hid.size(); ++h) {
        hid.decode(h, hstate);
        for (std::size_t i = 0; i < hidden.size(); ++i)
            full[static_cast<std::size_t>(hidden[i])] = hstate[i];
        double w = 1.0;
        for (int v : hidden) {
            const int pa_state = v == t.root() ? 0 : full[static_cast<std::size_t>(t.parent(v))];
            w *= p.table(v)(full[static_cast<std::size_t>(v)], pa_state);
        }
        if (w == 0.0) continue;
        scatter_observed_products(m, p, full, w, stride_by_node, observed_topo, out);
    }
    return out;
}

namespace {

// Upward (leaf-to-root) pass for a single observed state. up[v] is the
// likelihood of the observed evidence in v's subtree given each state of v;
// lambda(v) premultiplied by the CPT is folded into the parent on the fly.
struct UpwardPass {
    std::vector<Eigen::VectorXd> up;      // per node
    std::vector<Eigen::VectorXd> lambda;  // message v -> parent(v)
    double prob = 0.0;
};

UpwardPass upward(const ModelSpec& m, const Parameters& p, std::span<const int> observed_state) {
    const auto& t = m.structure;
    UpwardPass pass;
    pass.up.resize(static_cast<std::size_t>(t.size()));
    pass.lambda.resize(static_cast<std::size_t>(t.size()));

    std::vector<int> obs_pos(static_cast<std::size_t>(t.size()), -1);
    for (std::size_t i = 0; i < t.observed().size(); ++i)
        obs_pos[static_cast<std::size_t>(t.observed()[i])] = static_cast<int>(i);

    const auto& topo = t.topo_order();
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const int v = *it;
        const int card = t.var(v).cardinality;
        Eigen::VectorXd u;
        if (t.var(v).role == Role::observed) {
            u = Eigen::VectorXd::Zero(card);
            u(observed_state[static_cast<std::size_t>(obs_pos[static_cast<std::size_t>(v)])]) = 1.0;
        } else {
            u = Eigen::VectorXd::Ones(card);
        }
        for (int c : t.children(v)) u.array() *= pass.lambda[static_cast<std::size_t>(c)].array();
        pass.up[static_cast<std::size_t>(v)] = u;
        if (v != t.root()) pass.lambda[static_cast<std::size_t>(v)] = p.table(v).transpose() * u;
    }
    pass.prob = p.table(t.root()).col(0).dot(pass.up[static_cast<std::size_t>(t.root())]);
    return pass;
}

}  // namespace

std::vector<double> observed_marginal_propagation(const ModelSpec& m, const Parameters& p) {
    const auto obs = observed_indexer(m);
    check_observed_cap(obs);
    std::vector<double> out(static_cast<std::size_t>(obs.size()));
    std::vector<int> state(static_cast<std::size_t>(obs.arity()));
    for (long long i = 0; i < obs.size(); ++i) {
        obs.decode(i, state);
        out[static_cast<std::size_t>(i)] = upward(m, p, state).prob;
    }
    return out;
}

std::vector<double> observed_marginal(const ModelSpec& m, const Parameters& p) {
    return hidden_indexer(m).size() <= kHiddenEnumerationCap ? observed_marginal_enumeration(m, p)
                                                             : observed_marginal_propagation(m, p);
}

EdgeJoints edge_joints_propagation(const ModelSpec& m, const Parameters& p,
                                   std::span<const int> observed_state) {
    const auto& t = m.structure;
    auto pass = upward(m, p, observed_state);

    EdgeJoints out;
    out.prob = pass.prob;
    out.node_tables.resize(static_cast<std::size_t>(t.size()));

    // alpha[v](x) = p(v = x, evidence outside v's subtree)
    std::vector<Eigen::VectorXd> alpha(static_cast<std::size_t>(t.size()));
    alpha[static_cast<std::size_t>(t.root())] = p.table(t.root()).col(0);
    out.node_tables[static_cast<std::size_t>(t.root())] =
        (alpha[static_cast<std::size_t>(t.root())].array() *
         pass.up[static_cast<std::size_t>(t.root())].array())
            .matrix();

    for (int v : t.topo_order()) {
        const auto& kids = t.children(v);
        if (kids.empty()) continue;
        const int card = t.var(v).cardinality;
        // prefix/suffix products of child messages, avoiding division by zero entries
        const int k = static_cast<int>(kids.size());
        Eigen::MatrixXd pre(card, k + 1), suf(card, k + 1);
        pre.col(0).setOnes();
        suf.col(k).setOnes();
        for (int i = 0; i < k; ++i)
            pre.col(i + 1) =
                pre.col(i).array() * pass.lambda[static_cast<std::size_t>(kids[static_cast<std::size_t>(i)])].array();
        for (int i = k - 1; i >= 0; --i)
            suf.col(i) =
                suf.col(i + 1).array() * pass.lambda[static_cast<std::size_t>(kids[static_cast<std::size_t>(i)])].array();
        for (int i = 0; i < k; ++i) {
            const int c = kids[static_cast<std::size_t>(i)];
            // beta(u) = p(parent = u, evidence outside c's subtree)
            Eigen::VectorXd beta =
                alpha[static_cast<std::size_t>(v)].array() * pre.col(i).array() * suf.col(i + 1).array();
            Eigen::MatrixXd joint =
                p.table(c).array() * (pass.up[static_cast<std::size_t>(c)] * beta.transpose()).array();
            out.node_tables[static_cast<std::size_t>(c)] = joint;
            alpha[static_cast<std::size_t>(c)] = p.table(c) * beta;
        }
    }
    return out;
}

EdgeJoints edge_joints_enumeration(const ModelSpec& m, const Parameters& p,
                                   std::span<const int> observed_state) {
    const auto& t = m.structure;
    EdgeJoints out;
    out.node_tables.resize(static_cast<std::size_t>(t.size()));
    for (int v = 0; v < t.size(); ++v) {
        const int pa_card = v == t.root() ? 1 : t.var(t.parent(v)).cardinality;
        out.node_tables[static_cast<std::size_t>(v)] =
            Eigen::MatrixXd::Zero(t.var(v).cardinality, pa_card);
    }

    std::vector<int> full(static_cast<std::size_t>(t.size()), 0);
    for (std::size_t i = 0; i < t.observed().size(); ++i)
        full[static_cast<std::size_t>(t.observed()[i])] = observed_state[i];

    const auto hid = hidden_indexer(m);
    const auto& hidden = t.hidden();
    std::vector<int> hstate(hidden.size(), 0);
    for (long long h = 0; h < hid.size(); ++h) {
        hid.decode(h, hstate);
        for (std::size_t i = 0; i < hidden.size(); ++i)
            full[static_cast<std::size_t>(hidden[i])] = hstate[i];
        double w = 1.0;
        for (int v = 0; v < t.size() && w != 0.0; ++v) {
            const int pa_state = v == t.root() ? 0 : full[static_cast<std::size_t>(t.parent(v))];
            w *= p.table(v)(full[static_cast<std::size_t>(v)], pa_state);
        }
        if (w == 0.0) continue;
        out.prob += w;
        for (int v = 0; v < t.size(); ++v) {
            const int pa_state = v == t.root() ? 0 : full[static_cast<std::size_t>(t.parent(v))];
            out.node_tables[static_cast<std::size_t>(v)](full[static_cast<std::size_t>(v)], pa_state) += w;
        }
    }
    return out;
}

EdgeJoints edge_joints(const ModelSpec& m, const Parameters& p, std::span<const int> observed_state) {
    return hidden_indexer(m).size() <= kHiddenEnumerationCap
               ? edge_joints_enumeration(m, p, observed_state)
               : edge_joints_propagation(m, p, observed_state);
}

}  // namespace latdim
