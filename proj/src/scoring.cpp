#include "latdim/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace latdim {

std::string to_string(ScoreName s) {
    switch (s) {
        case ScoreName::bic: return "BIC";
        case ScoreName::bic_plus: return "BIC_plus";
        case ScoreName::cs: return "CS";
        case ScoreName::cs_plus: return "CS_plus";
    }
    throw std::logic_error("unknown score");
}

ScoreName score_from_string(const std::string& s) {
    std::string k;
    for (char c : s)
        if (c != '-') k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (k == "bic") return ScoreName::bic;
    if (k == "bic_plus" || k == "bic+" || k == "bicplus") return ScoreName::bic_plus;
    if (k == "cs") return ScoreName::cs;
    if (k == "cs_plus" || k == "cs+" || k == "csplus") return ScoreName::cs_plus;
    throw std::invalid_argument("unknown score '" + s + "'");
}

double bic(double loglik, long long ds, long long n) {
    if (n < 1) throw std::invalid_argument("bic needs n >= 1");
    return loglik - static_cast<double>(ds) / 2.0 * std::log(static_cast<double>(n));
}

double bic_plus(double loglik, long long de, long long n) {
    if (n < 1) throw std::invalid_argument("bic_plus needs n >= 1");
    return loglik - static_cast<double>(de) / 2.0 * std::log(static_cast<double>(n));
}

double exact_marginal_loglik(const ModelSpec& m, const CompletedDataset& counts) {
    const auto& t = m.structure;
    if (static_cast<int>(counts.counts.size()) != t.size())
        throw std::invalid_argument("completed counts do not match the model");
    double total = 0.0;
    for (int v = 0; v < t.size(); ++v) {
        const auto& table = counts.counts[static_cast<std::size_t>(v)];
        const double k = static_cast<double>(t.var(v).cardinality);
        for (int j = 0; j < table.cols(); ++j) {
            double nj = 0.0;
            double cells = 0.0;
            for (int i = 0; i < table.rows(); ++i) {
                const double njk = table(i, j);
                if (njk < 0.0) throw std::invalid_argument("negative completed count");
                nj += njk;
                cells += std::lgamma(1.0 + njk);  // lnG(1) = 0
            }
            total += std::lgamma(k) - std::lgamma(k + nj) + cells;
        }
    }
    return total;
}

double expected_loglik(const ModelSpec& m, const Parameters& p, const CompletedDataset& counts) {
    const auto& t = m.structure;
    double total = 0.0;
    for (int v = 0; v < t.size(); ++v) {
        const auto& n = counts.counts[static_cast<std::size_t>(v)];
        const auto& theta = p.table(v);
        for (int j = 0; j < n.cols(); ++j)
            for (int i = 0; i < n.rows(); ++i) {
                if (n(i, j) == 0.0) continue;
                if (theta(i, j) <= 0.0) return -std::numeric_limits<double>::infinity();
                total += n(i, j) * std::log(theta(i, j));
            }
    }
    return total;
}

double cs(const ModelSpec& m, const FitResult& fit, const Dataset& d) {
    const auto completed = complete_dataset(m, fit.params, d);
    return exact_marginal_loglik(m, completed) - expected_loglik(m, fit.params, completed) +
           fit.loglik;
}

double ScoreSet::value(ScoreName s) const {
    switch (s) {
        case ScoreName::bic: return bic;
        case ScoreName::bic_plus: return bic_plus;
        case ScoreName::cs: return cs;
        case ScoreName::cs_plus: return cs_plus;
    }
    throw std::logic_error("unknown score");
}

ScoreSet score_all(const ModelSpec& m, const Dataset& d, const FitResult& fit, long long ds,
                   long long de) {
    ScoreSet out;
    out.loglik = fit.loglik;
    out.ds = ds;
    out.de = de;
    out.n = d.total();
    const double correction =
        static_cast<double>(ds - de) / 2.0 * std::log(static_cast<double>(out.n));
    out.bic = bic(fit.loglik, ds, out.n);
    out.bic_plus = out.bic + correction;
    out.cs = cs(m, fit, d);
    out.cs_plus = out.cs + correction;
    return out;
}

ScoreReport score_model(const ModelSpec& m, const Dataset& d, ScoreName which,
                        std::optional<DimSource> dim_source, const ScoreConfig& config) {
    const auto fit = em_fit(m, d, config.em);
    const long long ds = standard_dimension(m);
    const DimSource source =
        dim_source.value_or(is_lc(m) ? DimSource::numeric : DimSource::decomposed);
    const long long de = m.structure.hidden().empty()
                             ? ds
                             : effective_dimension(m, source, {config.dim_draws, config.dim_seed});

    ScoreReport report;
    report.score_name = to_string(which);
    report.loglik = fit.loglik;
    report.ds = ds;
    report.de = de;
    report.n = d.total();
    const double log_n = std::log(static_cast<double>(report.n));

    switch (which) {
        case ScoreName::bic:
            report.components = {{"loglik", fit.loglik},
                                 {"dimension_penalty", -static_cast<double>(ds) / 2.0 * log_n}};
            break;
        case ScoreName::bic_plus:
            report.components = {{"loglik", fit.loglik},
                                 {"dimension_penalty", -static_cast<double>(de) / 2.0 * log_n}};
            break;
        case ScoreName::cs:
        case ScoreName::cs_plus: {
            const auto completed = complete_dataset(m, fit.params, d);
            report.components = {
                {"completed_marginal_loglik", exact_marginal_loglik(m, completed)},
                {"minus_completed_expected_loglik", -expected_loglik(m, fit.params, completed)},
                {"observed_loglik", fit.loglik}};
            if (which == ScoreName::cs_plus)
                report.components.emplace_back("dimension_correction",
                                               static_cast<double>(ds - de) / 2.0 * log_n);
            break;
        }
    }
    report.value = 0.0;
    for (const auto& [name, part] : report.components) report.value += part;
    return report;
}

nlohmann::json ScoreReport::to_json() const {
    nlohmann::json j;
    j["score_name"] = score_name;
    j["value"] = value;
    j["loglik"] = loglik;
    j["ds"] = ds;
    j["de"] = de;
    j["n"] = n;
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [name, part] : components) comps[name] = part;
    j["components"] = comps;
    return j;
}

}  // namespace latdim
