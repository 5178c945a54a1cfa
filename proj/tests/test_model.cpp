#include <doctest.h>

#include <latdim/model.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "test_util.hpp"

using namespace latdim;
using testutil::random_params;

namespace {

const char* kTable1Labels[] = {
    "2:2,2",   "2:2,2,2",   "3:2,2,2",   "4:2,2,2",   "2:3,3",     "2:3,3,3",   "3:3,3,3",
    "3:4,5",   "4:3,3,3",   "5:3,3,3",   "6:3,3,3",   "2:2,2,2,2", "3:2,2,2,2", "4:2,2,2,2",
    "5:2,2,2,2", "6:2,2,2,2", "3:5,2,2", "3:4,2,2",   "5:3,3,2",   "5:6,3,2",   "5:10,3,2",
};

ModelSpec chain_two_observed() {
    return parse_structure(
        "var A 2 observed\n"
        "var B 3 observed\n"
        "edge A B\n"
        "root A\n");
}

}  // namespace

TEST_CASE("parse LC spec strings") {
    auto m = parse_model("3:2,2,2");
    CHECK(m.label == "3:2,2,2");
    CHECK(m.structure.hidden().size() == 1);
    CHECK(m.structure.observed().size() == 3);
    CHECK(m.structure.var(m.structure.root()).cardinality == 3);
    for (int v : m.structure.observed()) CHECK(m.structure.var(v).cardinality == 2);

    auto lc = parse_model("2:2,2");
    CHECK(lc.structure.size() == 3);
    CHECK(lc.label == "2:2,2");
}

TEST_CASE("parse built-in five-leaf HLC") {
    auto m = parse_model("5,3,3:2,2,2,2,2");
    CHECK(m.label == "5,3,3:2,2,2,2,2");
    CHECK(m.structure.hidden().size() == 3);
    CHECK(m.structure.observed().size() == 5);
    const int root = m.structure.root();
    CHECK(m.structure.var(root).cardinality == 5);
    int hidden_kids = 0, leaf_kids = 0;
    for (int c : m.structure.children(root))
        (m.structure.var(c).role == Role::hidden ? hidden_kids : leaf_kids)++;
    CHECK(hidden_kids == 2);
    CHECK(leaf_kids == 1);
}

TEST_CASE("parse errors") {
    CHECK_THROWS(parse_model(""));
    CHECK_THROWS(parse_model("nonsense"));
    CHECK_THROWS(parse_model("3:"));
    CHECK_THROWS(parse_model("3:1,2"));      // cardinality < 2
    CHECK_THROWS(parse_model("2:2"));        // hidden root with a single neighbour
    CHECK_THROWS(parse_model("2,2:2,2,2"));  // no built-in topology

    // observed node with children
    CHECK_THROWS(parse_structure(
        "var X 2 hidden\nvar A 2 observed\nvar B 2 observed\nvar C 2 observed\n"
        "edge X A\nedge A B\nedge A C\nroot X\n"));
    // two parents
    CHECK_THROWS(parse_structure(
        "var X 2 hidden\nvar Y 2 hidden\nvar A 2 observed\nvar B 2 observed\nvar C 2 observed\n"
        "edge X A\nedge X B\nedge Y B\nedge Y C\nroot X\n"));
    // disconnected
    CHECK_THROWS(parse_structure(
        "var X 2 hidden\nvar A 2 observed\nvar B 2 observed\nvar C 2 observed\n"
        "edge X A\nedge X B\nedge C C\nroot X\n"));
    // observed root above hidden
    CHECK_THROWS(parse_structure(
        "var A 2 observed\nvar X 2 hidden\nvar B 2 observed\nvar C 2 observed\n"
        "edge A X\nedge X B\nedge X C\nroot A\n"));
}

TEST_CASE("structure files round-trip and accept comments") {
    const std::string body =
        "# five-leaf tree\n"
        "var H1 5 hidden\n"
        "var H2 3 hidden   # a comment\n"
        "var H3 3 hidden\n"
        "var O1 2 observed\nvar O2 2 observed\nvar O3 2 observed\nvar O4 2 observed\n"
        "var O5 2 observed\n"
        "edge H1 H2\nedge H1 H3\nedge H1 O5\nedge H2 O1\nedge H2 O2\nedge H3 O3\nedge H3 O4\n"
        "root H1\n";
    auto m = parse_structure(body);
    CHECK(m.label == "5,3,3:2,2,2,2,2");
    auto again = parse_model(structure_body(m));
    CHECK(again.label == m.label);
    CHECK(structure_body(again) == structure_body(m));
}

TEST_CASE("spec labels round-trip for every known LC model") {
    for (const char* label : kTable1Labels) {
        auto m = parse_model(label);
        CHECK(m.label == label);
        CHECK(parse_model(render_model(m)).label == label);
    }
}

TEST_CASE("standard dimension") {
    CHECK(standard_dimension(parse_model("3:2,2,2")) == 11);
    CHECK(standard_dimension(parse_model("2:2,2")) == 5);
    CHECK(standard_dimension(parse_model("5,3,3:2,2,2,2,2")) == 41);
}

TEST_CASE("complete dimension") {
    CHECK(complete_dimension(parse_model("4:2,2,2")) == 7);
    CHECK(complete_dimension(parse_model("2:3,3")) == 8);
    auto single = parse_structure("var A 2 observed\nroot A\n");
    CHECK(complete_dimension(single) == 1);
}

TEST_CASE("observed-only trees are accepted and saturated") {
    auto m = chain_two_observed();
    CHECK(m.structure.hidden().empty());
    CHECK(standard_dimension(m) == complete_dimension(m));
    CHECK(is_regular(m).regular);
    CHECK(local_lc_models(m).empty());
}

TEST_CASE("regularity") {
    CHECK(is_regular(parse_model("8:2,2,2,2")).regular);
    CHECK(is_regular(parse_model("4:2,2,2")).regular);  // 4 <= 8/2, boundary
    auto check = is_regular(parse_model("9:2,2,2,2"));
    CHECK_FALSE(check.regular);
    REQUIRE(check.violators.size() == 1);
    CHECK(check.violators[0] == parse_model("9:2,2,2,2").structure.root());

    // strict case: two neighbours, one hidden
    auto strict = parse_structure(
        "var H1 2 hidden\nvar H2 3 hidden\nvar O1 2 observed\nvar O2 2 observed\nvar O3 2 observed\n"
        "edge H1 H2\nedge H1 O1\nedge H2 O2\nedge H2 O3\nroot H1\n");
    // H1 neighbours {H2=3, O1=2}: cap 6/3 = 2, strict -> |H1| = 2 violates
    CHECK_FALSE(is_regular(strict).regular);
}

TEST_CASE("regularize") {
    CHECK(regularize(parse_model("9:2,2,2,2")).label == "8:2,2,2,2");
    CHECK(regularize(parse_model("8:2,2,2,2")).label == "8:2,2,2,2");

    // cap exactly reached on a three-neighbour node stays unchanged
    auto m = parse_model("9,5,3:3,3,2,2,3");
    // H1 neighbours {5,3,3}: cap 45/5 = 9; H2 neighbours {9,3,3}: cap 81/9 = 9 >= 5;
    // H3 neighbours {9,2,2}: cap 36/9 = 4 >= 3
    CHECK(is_regular(m).regular);
    CHECK(regularize(m).label == m.label);

    // idempotence on a reduced model
    auto r = regularize(parse_model("30:2,2,2,2"));
    CHECK(r.label == "8:2,2,2,2");
    CHECK(regularize(r).label == r.label);

    // observed variables never change
    for (int v : r.structure.observed()) CHECK(r.structure.var(v).cardinality == 2);

    // a strict two-neighbour node whose cap would fall below 2 cannot be fixed
    auto stuck = parse_structure(
        "var H1 2 hidden\nvar H2 3 hidden\nvar O1 2 observed\nvar O2 2 observed\nvar O3 2 observed\n"
        "edge H1 H2\nedge H1 O1\nedge H2 O2\nedge H2 O3\nroot H1\n");
    CHECK_THROWS_AS(regularize(stuck), std::domain_error);
}

TEST_CASE("local LC models of the worked five-leaf example") {
    auto m = parse_model("5,3,3:2,2,2,2,2");
    auto locals = local_lc_models(m);
    REQUIRE(locals.size() == 3);
    std::vector<std::string> labels;
    for (const auto& l : locals) labels.push_back(l.model.label);
    // H1 induces 5:3,3,2; H2 and H3 induce 3:5,2,2
    CHECK(std::count(labels.begin(), labels.end(), "5:3,3,2") == 1);
    CHECK(std::count(labels.begin(), labels.end(), "3:5,2,2") == 2);

    // neighbour cardinalities survive into the local models
    for (const auto& l : locals) {
        auto ne = m.structure.neighbours(l.hidden_node);
        const auto& obs = l.model.structure.observed();
        REQUIRE(ne.size() == obs.size());
        for (std::size_t i = 0; i < ne.size(); ++i)
            CHECK(m.structure.var(ne[i]).cardinality == l.model.structure.var(obs[i]).cardinality);
    }
}

TEST_CASE("an LC model is its own single local model") {
    auto m = parse_model("4:3,2,2");
    auto locals = local_lc_models(m);
    REQUIRE(locals.size() == 1);
    CHECK(locals[0].model.label == m.label);
}

TEST_CASE("two hidden nodes observe each other in local models") {
    auto m = parse_structure(
        "var H1 3 hidden\nvar H2 3 hidden\nvar O1 3 observed\nvar O2 2 observed\nvar O3 2 observed\n"
        "edge H1 H2\nedge H1 O1\nedge H2 O2\nedge H2 O3\nroot H1\n");
    auto locals = local_lc_models(m);
    REQUIRE(locals.size() == 2);
    CHECK(locals[0].model.structure.index_of("H2") >= 0);
    CHECK(locals[1].model.structure.index_of("H1") >= 0);
    CHECK(locals[0].model.structure.var(locals[0].model.structure.index_of("H2")).role ==
          Role::observed);
}

TEST_CASE("observed marginal: deterministic tables") {
    auto m = parse_model("2:2,2");
    std::vector<Eigen::MatrixXd> tables(3);
    tables[0] = Eigen::MatrixXd(2, 1);
    tables[0] << 0.5, 0.5;
    Eigen::MatrixXd ident(2, 2);
    ident << 1.0, 0.0, 0.0, 1.0;
    tables[1] = ident;
    tables[2] = ident;
    auto p = Parameters::from_tables(m, tables);
    auto marg = observed_marginal(m, p);
    REQUIRE(marg.size() == 4);
    CHECK(marg[0] == doctest::Approx(0.5));
    CHECK(marg[1] == doctest::Approx(0.0));
    CHECK(marg[2] == doctest::Approx(0.0));
    CHECK(marg[3] == doctest::Approx(0.5));
}

TEST_CASE("observed marginal: uniform tables give the uniform distribution") {
    auto m = parse_model("2:2,2,2");
    auto marg = observed_marginal(m, Parameters::uniform(m));
    for (double v : marg) CHECK(v == doctest::Approx(0.125));
}

TEST_CASE("observed marginal sums to one and both paths agree") {
    const char* labels[] = {"3:2,2,2", "5:3,3,2", "5,3,3:2,2,2,2,2", "2:3,3"};
    std::uint64_t seed = 7;
    for (const char* label : labels) {
        auto m = parse_model(label);
        auto p = random_params(m, seed++);
        auto enumd = observed_marginal_enumeration(m, p);
        auto prop = observed_marginal_propagation(m, p);
        REQUIRE(enumd.size() == prop.size());
        CHECK(std::abs(std::accumulate(enumd.begin(), enumd.end(), 0.0) - 1.0) < 1e-9);
        for (std::size_t i = 0; i < enumd.size(); ++i)
            CHECK(enumd[i] == doctest::Approx(prop[i]).epsilon(1e-10));
    }
}

TEST_CASE("edge joints agree between enumeration and propagation") {
    auto m = parse_model("5,3,3:2,2,2,2,2");
    auto p = random_params(m, 51);
    std::vector<int> state = {1, 0, 1, 1, 0};
    auto a = edge_joints_enumeration(m, p, state);
    auto b = edge_joints_propagation(m, p, state);
    CHECK(a.prob == doctest::Approx(b.prob).epsilon(1e-12));
    for (int v = 0; v < m.structure.size(); ++v) {
        const auto& ta = a.node_tables[static_cast<std::size_t>(v)];
        const auto& tb = b.node_tables[static_cast<std::size_t>(v)];
        REQUIRE(ta.rows() == tb.rows());
        REQUIRE(ta.cols() == tb.cols());
        CHECK((ta - tb).cwiseAbs().maxCoeff() < 1e-12);
        // each node table marginalizes to p(o)
        CHECK(ta.sum() == doctest::Approx(a.prob).epsilon(1e-10));
    }
}

TEST_CASE("joint observed spaces above the cap are refused") {
    std::string label = "2:2";
    for (int i = 1; i < 21; ++i) label += ",2";
    auto m = parse_model(label);  // 21 binary leaves -> 2^21 states
    CHECK_THROWS(observed_marginal(m, Parameters::uniform(m)));
}

TEST_CASE("parameter validation") {
    auto m = parse_model("2:2,2");
    std::vector<Eigen::MatrixXd> tables(3);
    tables[0] = Eigen::MatrixXd(2, 1);
    tables[0] << 0.7, 0.4;  // does not sum to 1
    tables[1] = Eigen::MatrixXd::Constant(2, 2, 0.5);
    tables[2] = Eigen::MatrixXd::Constant(2, 2, 0.5);
    CHECK_THROWS(Parameters::from_tables(m, tables));
    tables[0] << 1.3, -0.3;  // negative entry
    CHECK_THROWS(Parameters::from_tables(m, tables));
    tables[0] << 0.6, 0.4;
    CHECK_NOTHROW(Parameters::from_tables(m, tables));
}

// Equivalence witness: the regularized model reproduces the irregular model's
// observed marginal exactly when its hidden variable is wired as the joint of
// all observed variables except the largest one.
TEST_CASE("regularized models are equivalent via the explicit construction") {
    const char* labels[] = {"5:2,2", "9:2,2,2", "6:3,2"};
    std::uint64_t seed = 99;
    for (const char* label : labels) {
        auto m = parse_model(label);
        REQUIRE_FALSE(is_regular(m).regular);
        auto p1 = random_params(m, seed++);
        auto target = observed_marginal(m, p1);

        auto m2 = regularize(m);
        const auto& t2 = m2.structure;
        const auto& obs = t2.observed();
        const int n = static_cast<int>(obs.size());

        // j* = first observed variable of maximal cardinality
        int jstar = 0;
        for (int i = 1; i < n; ++i)
            if (t2.var(obs[static_cast<std::size_t>(i)]).cardinality >
                t2.var(obs[static_cast<std::size_t>(jstar)]).cardinality)
                jstar = i;

        std::vector<int> rest_cards;
        for (int i = 0; i < n; ++i)
            if (i != jstar) rest_cards.push_back(t2.var(obs[static_cast<std::size_t>(i)]).cardinality);
        StateIndexer rest(rest_cards);
        const int hidden_card = t2.var(t2.root()).cardinality;
        REQUIRE(rest.size() == hidden_card);

        auto full = observed_indexer(m2);
        std::vector<int> state(static_cast<std::size_t>(n));
        std::vector<int> rest_state(rest_cards.size());
        const int jstar_card = t2.var(obs[static_cast<std::size_t>(jstar)]).cardinality;

        Eigen::VectorXd prior = Eigen::VectorXd::Zero(hidden_card);
        Eigen::MatrixXd jstar_table = Eigen::MatrixXd::Zero(jstar_card, hidden_card);
        for (long long o = 0; o < full.size(); ++o) {
            full.decode(o, state);
            int k = 0;
            for (int i = 0; i < n; ++i)
                if (i != jstar) rest_state[static_cast<std::size_t>(k++)] = state[static_cast<std::size_t>(i)];
            const long long h = rest.index(rest_state);
            prior(h) += target[static_cast<std::size_t>(o)];
            jstar_table(state[static_cast<std::size_t>(jstar)], h) += target[static_cast<std::size_t>(o)];
        }
        for (int h = 0; h < hidden_card; ++h) {
            if (prior(h) > 0.0) {
                jstar_table.col(h) /= prior(h);
            } else {
                jstar_table.col(h).setConstant(1.0 / jstar_card);
            }
        }

        std::vector<Eigen::MatrixXd> tables(static_cast<std::size_t>(t2.size()));
        tables[static_cast<std::size_t>(t2.root())] = prior;
        for (int i = 0; i < n; ++i) {
            const int v = obs[static_cast<std::size_t>(i)];
            const int card = t2.var(v).cardinality;
            if (i == jstar) {
                tables[static_cast<std::size_t>(v)] = jstar_table;
                continue;
            }
            // deterministic digit of the hidden joint state
            Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(card, hidden_card);
            for (int h = 0; h < hidden_card; ++h) {
                rest.decode(h, rest_state);
                int pos = 0;
                for (int q = 0; q < n; ++q) {
                    if (q == jstar) continue;
                    if (q == i) break;
                    ++pos;
                }
                tab(rest_state[static_cast<std::size_t>(pos)], h) = 1.0;
            }
            tables[static_cast<std::size_t>(v)] = tab;
        }
        auto p2 = Parameters::from_tables(m2, tables);
        auto got = observed_marginal(m2, p2);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(target[i]).epsilon(0).scale(1).epsilon(1e-9));
    }
}
