#include <doctest.h>

#include <latdim/learning.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace latdim;

namespace {

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
    return tv / 2;
}

// Observed-data log-likelihood through the per-record posterior path, used as
// an independent check on FitResult.loglik (which goes through the marginal).
double loglik_by_records(const ModelSpec& m, const Parameters& p, const Dataset& d) {
    double ll = 0.0;
    for (const auto& row : d.rows) {
        // dataset columns from sample_dataset are already in model order
        ll += static_cast<double>(row.count) * std::log(edge_joints(m, p, row.state).prob);
    }
    return ll;
}

// Dense grid plus shrinking local refinement over the 5 free parameters of a
// 2:2,2 model; independent of the EM path.
double grid_oracle_loglik(const Dataset& d) {
    auto loglik_at = [&](double a, double b0, double b1, double c0, double c1) {
        double ll = 0.0;
        for (const auto& row : d.rows) {
            const double pb0 = row.state[0] == 0 ? b0 : 1 - b0;
            const double pb1 = row.state[0] == 0 ? b1 : 1 - b1;
            const double pc0 = row.state[1] == 0 ? c0 : 1 - c0;
            const double pc1 = row.state[1] == 0 ? c1 : 1 - c1;
            ll += static_cast<double>(row.count) * std::log(a * pb0 * pc0 + (1 - a) * pb1 * pc1);
        }
        return ll;
    };
    double best[5] = {0.5, 0.5, 0.5, 0.5, 0.5};
    double best_ll = -1e300;
    double lo = 0.02, hi = 0.98, step = 0.08;
    auto sweep = [&](double center[5], double radius, double delta) {
        double v[5];
        for (v[0] = std::max(lo, center[0] - radius); v[0] <= std::min(hi, center[0] + radius) + 1e-12;
             v[0] += delta)
            for (v[1] = std::max(lo, center[1] - radius); v[1] <= std::min(hi, center[1] + radius) + 1e-12;
                 v[1] += delta)
                for (v[2] = std::max(lo, center[2] - radius);
                     v[2] <= std::min(hi, center[2] + radius) + 1e-12; v[2] += delta)
                    for (v[3] = std::max(lo, center[3] - radius);
                         v[3] <= std::min(hi, center[3] + radius) + 1e-12; v[3] += delta)
                        for (v[4] = std::max(lo, center[4] - radius);
                             v[4] <= std::min(hi, center[4] + radius) + 1e-12; v[4] += delta) {
                            const double ll = loglik_at(v[0], v[1], v[2], v[3], v[4]);
                            if (ll > best_ll) {
                                best_ll = ll;
                                std::copy(v, v + 5, best);
                            }
                        }
    };
    sweep(best, 0.48, step);
    double radius = step;
    for (int round = 0; round < 8; ++round) {
        double center[5];
        std::copy(best, best + 5, center);
        sweep(center, radius, radius / 3);
        radius /= 3;
    }
    return best_ll;
}

}  // namespace

TEST_CASE("random parameters are deterministic and normalized") {
    auto m = parse_model("3:2,2,2");
    auto a = random_parameters(m, 42);
    auto b = random_parameters(m, 42);
    for (int v = 0; v < m.structure.size(); ++v) {
        CHECK(a.table(v) == b.table(v));
        for (int j = 0; j < a.table(v).cols(); ++j)
            CHECK(std::abs(a.table(v).col(j).sum() - 1.0) <= 1e-12);
    }
    auto c = random_parameters(m, 43);
    const auto ma = observed_marginal(m, a);
    const auto mc = observed_marginal(m, c);
    CHECK(total_variation(ma, mc) > 0.0);
}

TEST_CASE("deterministic block parametrization") {
    auto m = parse_model("8:2,2,2,2");
    auto p = deterministic_block_parameters(m, {"O1", "O2", "O3"}, 5);
    const auto& t = m.structure;
    for (const char* name : {"O1", "O2", "O3"}) {
        const auto& tab = p.table(t.index_of(name));
        for (int j = 0; j < tab.cols(); ++j)
            for (int i = 0; i < tab.rows(); ++i) CHECK((tab(i, j) == 0.0 || tab(i, j) == 1.0));
        for (int j = 0; j < tab.cols(); ++j) CHECK(tab.col(j).sum() == 1.0);
    }
    // the joint block state determines the hidden state bijectively
    const auto& o1 = p.table(t.index_of("O1"));
    const auto& o2 = p.table(t.index_of("O2"));
    const auto& o3 = p.table(t.index_of("O3"));
    std::vector<int> seen(8, 0);
    for (int h = 0; h < 8; ++h) {
        int d1 = -1, d2 = -1, d3 = -1;
        for (int s = 0; s < 2; ++s) {
            if (o1(s, h) == 1.0) d1 = s;
            if (o2(s, h) == 1.0) d2 = s;
            if (o3(s, h) == 1.0) d3 = s;
        }
        seen[static_cast<std::size_t>(d1 * 4 + d2 * 2 + d3)]++;
    }
    for (int c : seen) CHECK(c == 1);

    CHECK_THROWS(deterministic_block_parameters(m, {"O1", "O2"}, 5));
    CHECK_THROWS(deterministic_block_parameters(parse_model("5,3,3:2,2,2,2,2"), {"O1"}, 5));
}

TEST_CASE("a deterministic-block model refits its own data exactly") {
    auto m = parse_model("8:2,2,2,2");
    auto p = deterministic_block_parameters(m, {"O1", "O2", "O3"}, 7);
    auto d = sample_dataset(m, p, 4096, 8);

    auto fit = em_fit(m, d, {.restarts = 16, .max_iters = 500, .rel_tol = 1e-9, .seed = 3});
    // 8:2,2,2,2 is saturated, so the ML marginal matches the empirical one
    std::vector<double> empirical(16, 0.0);
    const auto indexer = observed_indexer(m);
    for (const auto& row : d.rows)
        empirical[static_cast<std::size_t>(indexer.index(row.state))] +=
            static_cast<double>(row.count) / static_cast<double>(d.total());
    const auto fitted = observed_marginal(m, fit.params);
    CHECK(kl_divergence_bits(empirical, fitted) <= 1e-3);
}

TEST_CASE("sampling totals, determinism, and a single draw") {
    auto m = parse_model("2:2,2,2");
    auto p = random_parameters(m, 1);
    auto d = sample_dataset(m, p, 1000, 2);
    CHECK(d.total() == 1000);

    std::ostringstream a, b;
    write_dataset_csv(d, a);
    write_dataset_csv(sample_dataset(m, p, 1000, 2), b);
    CHECK(a.str() == b.str());

    auto single = sample_dataset(m, p, 1, 3);
    REQUIRE(single.rows.size() == 1);
    CHECK(single.rows[0].count == 1);
}

TEST_CASE("large-sample empirical marginal tracks the exact marginal") {
    auto m = parse_model("2:2,2,2,2");
    auto p = random_parameters(m, 21);
    const long long n = 1000000;
    auto d = sample_dataset(m, p, n, 22);
    const auto marginal = observed_marginal(m, p);
    const auto indexer = observed_indexer(m);
    std::vector<double> freq(marginal.size(), 0.0);
    for (const auto& row : d.rows)
        freq[static_cast<std::size_t>(indexer.index(row.state))] =
            static_cast<double>(row.count) / static_cast<double>(n);
    for (std::size_t i = 0; i < marginal.size(); ++i) {
        const double se = std::sqrt(marginal[i] * (1 - marginal[i]) / static_cast<double>(n));
        CHECK(std::abs(freq[i] - marginal[i]) <= 3 * se);
    }
}

TEST_CASE("CSV round trip and validation") {
    std::istringstream in("B,A,count\n0,1,5\n1,0,2\n");
    auto d = read_dataset_csv(in);
    CHECK(d.names == std::vector<std::string>{"B", "A"});
    CHECK(d.total() == 7);
    std::ostringstream out;
    write_dataset_csv(d, out);
    std::istringstream in2(out.str());
    auto d2 = read_dataset_csv(in2);
    CHECK(d2.total() == 7);
    CHECK(d2.names == d.names);

    std::istringstream bad("A,B\n0,x\n");
    CHECK_THROWS(read_dataset_csv(bad));
    std::istringstream neg("A,B,count\n0,0,-1\n");
    CHECK_THROWS(read_dataset_csv(neg));
}

TEST_CASE("fitting realigns dataset columns by name") {
    auto m = parse_model("2:2,2");
    // columns deliberately swapped relative to the model order O1, O2
    std::istringstream in("O2,O1,count\n0,0,40\n1,0,10\n0,1,10\n1,1,40\n");
    auto d = read_dataset_csv(in);
    auto fit = em_fit(m, d, {.restarts = 4, .max_iters = 200, .rel_tol = 1e-9, .seed = 1});
    CHECK(std::isfinite(fit.loglik));

    std::istringstream wrong("O1,OX,count\n0,0,1\n");
    auto dw = read_dataset_csv(wrong);
    CHECK_THROWS(em_fit(m, dw, {}));
}

TEST_CASE("EM log-likelihood is non-decreasing within every restart") {
    auto m = parse_model("3:2,2,2,2");
    auto d = sample_dataset(m, random_parameters(m, 31), 2000, 32);
    std::vector<std::vector<double>> paths;
    auto fit = em_fit(m, d, {.restarts = 6, .max_iters = 2000, .rel_tol = 1e-8, .seed = 33}, &paths);
    REQUIRE(paths.size() == 6);
    for (const auto& path : paths) {
        REQUIRE(!path.empty());
        for (std::size_t i = 1; i < path.size(); ++i) CHECK(path[i] >= path[i - 1] - 1e-10);
    }
    CHECK(fit.restarts_used == 6);
    CHECK(fit.converged);
}

TEST_CASE("the ML fit is at least as good as the generative parameters") {
    auto m = parse_model("2:2,2,2");
    auto truth = random_parameters(m, 55);
    auto d = sample_dataset(m, truth, 5000, 56);
    auto fit = em_fit(m, d, {.restarts = 8, .max_iters = 400, .rel_tol = 1e-9, .seed = 57});
    CHECK(fit.loglik >= loglik(m, truth, d) - 1e-8);
}

TEST_CASE("reported loglik agrees with an independent per-record evaluation") {
    auto m = parse_model("3:2,2,2");
    auto d = sample_dataset(m, random_parameters(m, 61), 800, 62);
    auto fit = em_fit(m, d, {.restarts = 4, .max_iters = 200, .rel_tol = 1e-8, .seed = 63});
    CHECK(fit.loglik == doctest::Approx(loglik_by_records(m, fit.params, d)).epsilon(1e-8));
}

TEST_CASE("EM matches a dense grid oracle on 2:2,2") {
    auto m = parse_model("2:2,2");
    auto d = sample_dataset(m, random_parameters(m, 71), 200, 72);
    auto fit = em_fit(m, d, {.restarts = 16, .max_iters = 1000, .rel_tol = 1e-12, .seed = 73});
    const double oracle = grid_oracle_loglik(d);
    CHECK(fit.loglik == doctest::Approx(oracle).epsilon(0).scale(0).epsilon(1e-6).scale(1000));
    CHECK(std::abs(fit.loglik - oracle) <= 1e-3);
}

TEST_CASE("completed data of an observed-only model are the raw counts") {
    auto m = parse_structure("var A 2 observed\nvar B 3 observed\nedge A B\nroot A\n");
    std::istringstream in("A,B,count\n0,0,3\n0,2,4\n1,1,2\n");
    auto d = read_dataset_csv(in);
    auto completed = complete_dataset(m, Parameters::uniform(m), d);
    CHECK(completed.total == 9.0);
    const auto& t = m.structure;
    const auto& na = completed.counts[static_cast<std::size_t>(t.index_of("A"))];
    const auto& nb = completed.counts[static_cast<std::size_t>(t.index_of("B"))];
    CHECK(na(0, 0) == doctest::Approx(7.0));
    CHECK(na(1, 0) == doctest::Approx(2.0));
    CHECK(nb(0, 0) == doctest::Approx(3.0));
    CHECK(nb(2, 0) == doctest::Approx(4.0));
    CHECK(nb(1, 1) == doctest::Approx(2.0));
    CHECK(na.sum() == doctest::Approx(9.0));
    CHECK(nb.sum() == doctest::Approx(9.0));
}

TEST_CASE("completed counts marginalize back to the empirical counts") {
    auto m = parse_model("3:2,3,2");
    auto p = random_parameters(m, 81);
    auto d = sample_dataset(m, p, 500, 82);
    auto completed = complete_dataset(m, p, d);
    const auto& t = m.structure;
    CHECK(completed.total == doctest::Approx(500.0));
    for (int v = 0; v < t.size(); ++v)
        CHECK(completed.counts[static_cast<std::size_t>(v)].sum() == doctest::Approx(500.0).epsilon(1e-10));
    for (std::size_t k = 0; k < t.observed().size(); ++k) {
        const int v = t.observed()[k];
        Eigen::VectorXd empirical = Eigen::VectorXd::Zero(t.var(v).cardinality);
        for (const auto& row : d.rows) empirical(row.state[k]) += static_cast<double>(row.count);
        const Eigen::VectorXd from_completed = completed.counts[static_cast<std::size_t>(v)].rowwise().sum();
        CHECK((from_completed - empirical).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("deterministic posteriors give integer completed counts") {
    auto m = parse_model("4:2,2,2");
    auto p = deterministic_block_parameters(m, {"O1", "O2"}, 91);
    auto d = sample_dataset(m, p, 50, 92);
    auto completed = complete_dataset(m, p, d);
    for (const auto& table : completed.counts)
        for (int j = 0; j < table.cols(); ++j)
            for (int i = 0; i < table.rows(); ++i)
                CHECK(table(i, j) == doctest::Approx(std::round(table(i, j))).epsilon(1e-9));
}

TEST_CASE("KL divergence") {
    std::vector<double> p1 = {0.25, 0.75};
    CHECK(kl_divergence_bits(p1, p1) == 0.0);
    std::vector<double> point = {1.0, 0.0}, half = {0.5, 0.5};
    CHECK(kl_divergence_bits(point, half) == doctest::Approx(1.0));
    std::vector<double> p3 = {0.75, 0.25};
    CHECK(kl_divergence_bits(p3, half) == doctest::Approx(0.188721875540867).epsilon(1e-12));
    std::vector<double> q0 = {0.0, 1.0};
    CHECK(std::isinf(kl_divergence_bits(p3, q0)));
}

TEST_CASE("fit quality improves with sample size on average") {
    auto m = parse_model("2:2,2,2");
    const long long sizes[] = {1000, 10000, 100000};
    double mean_kl[3] = {0, 0, 0};
    const int n_seeds = 10;
    for (int s = 0; s < n_seeds; ++s) {
        auto p = random_parameters(m, 100 + static_cast<std::uint64_t>(s));
        const auto truth = observed_marginal(m, p);
        for (int k = 0; k < 3; ++k) {
            auto d = sample_dataset(m, p, sizes[k], 200 + static_cast<std::uint64_t>(10 * s + k));
            auto fit = em_fit(m, d, {.restarts = 8, .max_iters = 300, .rel_tol = 1e-8,
                                     .seed = 300 + static_cast<std::uint64_t>(s)});
            mean_kl[k] += kl_divergence_bits(truth, observed_marginal(m, fit.params)) / n_seeds;
        }
    }
    CHECK(mean_kl[0] > mean_kl[1]);
    CHECK(mean_kl[1] > mean_kl[2]);
}

TEST_CASE("irregular models fit no better than their regular reduction") {
    auto irregular = parse_model("9:2,2,2,2");
    auto regular = regularize(irregular);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto gen = random_parameters(parse_model("4:2,2,2,2"), 400 + seed);
        auto d = sample_dataset(parse_model("4:2,2,2,2"), gen, 1500, 410 + seed);
        EmConfig cfg{.restarts = 12, .max_iters = 400, .rel_tol = 1e-9, .seed = 420 + seed};
        auto f1 = em_fit(irregular, d, cfg);
        auto f2 = em_fit(regular, d, cfg);
        CHECK(std::abs(f1.loglik - f2.loglik) <= 1e-4 * std::max(1.0, std::abs(f2.loglik)));
    }
}

TEST_CASE("empty datasets are rejected") {
    auto m = parse_model("2:2,2");
    Dataset d;
    d.names = {"O1", "O2"};
    d.cards = {2, 2};
    CHECK_THROWS(em_fit(m, d, {}));
}
