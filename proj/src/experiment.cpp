#include "latdim/experiment.hpp"

#include "latdim/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace latdim {

namespace {

constexpr std::uint64_t kTagParam = 0x706172616d736564ULL;
constexpr std::uint64_t kTagData = 0x6461746173656564ULL;
constexpr std::uint64_t kTagSelect = 0x73656c6563747364ULL;

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> auto_block(const ModelSpec& m) {
    const auto& t = m.structure;
    const long long hidden_card = t.var(t.root()).cardinality;
    std::vector<std::string> block;
    long long prod = 1;
    for (int v : t.observed()) {
        prod *= t.var(v).cardinality;
        block.push_back(t.var(v).name);
        if (prod == hidden_card) return block;
        if (prod > hidden_card) break;
    }
    throw std::invalid_argument(
        "no observed prefix matches the hidden cardinality; set block_vars explicitly");
}

}  // namespace

const std::vector<long long>& hlc_sample_ladder() {
    static const std::vector<long long> ladder = {1000, 3000, 9000, 27000, 81000, 243000};
    return ladder;
}

const std::vector<long long>& lc_sample_ladder() {
    static const std::vector<long long> ladder = {1000, 4000, 16000, 64000, 256000};
    return ladder;
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
    ExperimentPlan plan;
    if (!j.contains("model")) throw std::invalid_argument("plan needs a 'model'");
    plan.generative = parse_model(j.at("model").get<std::string>());

    const std::string mode = j.value("mode", std::string("random"));
    if (mode == "random") {
        plan.mode = ParamMode::random_params;
    } else if (mode == "deterministic_block") {
        plan.mode = ParamMode::deterministic_block;
    } else {
        throw std::invalid_argument("unknown mode '" + mode + "'");
    }
    if (j.contains("block_vars")) plan.block_vars = j.at("block_vars").get<std::vector<std::string>>();

    plan.n_params = j.value("n_params", 1);
    if (plan.n_params < 1) throw std::invalid_argument("n_params must be >= 1");

    if (!j.contains("sample_sizes")) throw std::invalid_argument("plan needs 'sample_sizes'");
    const auto& sizes = j.at("sample_sizes");
    if (sizes.is_string()) {
        const std::string preset = sizes.get<std::string>();
        if (preset == "hlc") {
            plan.sample_sizes = hlc_sample_ladder();
        } else if (preset == "lc") {
            plan.sample_sizes = lc_sample_ladder();
        } else {
            throw std::invalid_argument("unknown sample size preset '" + preset + "'");
        }
    } else {
        plan.sample_sizes = sizes.get<std::vector<long long>>();
    }
    if (plan.sample_sizes.empty()) throw std::invalid_argument("sample_sizes is empty");
    for (std::size_t i = 0; i < plan.sample_sizes.size(); ++i) {
        if (plan.sample_sizes[i] < 1) throw std::invalid_argument("sample sizes must be >= 1");
        if (i > 0 && plan.sample_sizes[i] <= plan.sample_sizes[i - 1])
            throw std::invalid_argument("sample_sizes must be strictly increasing");
    }

    if (j.contains("scores")) {
        for (const auto& s : j.at("scores")) plan.scores.push_back(score_from_string(s.get<std::string>()));
    } else {
        plan.scores = {ScoreName::bic, ScoreName::bic_plus, ScoreName::cs, ScoreName::cs_plus};
    }
    if (plan.scores.empty()) throw std::invalid_argument("scores is empty");

    plan.master_seed = j.value("master_seed", std::uint64_t{0});
    if (j.contains("em")) {
        const auto& em = j.at("em");
        plan.em.restarts = em.value("restarts", plan.em.restarts);
        plan.em.max_iters = em.value("max_iters", plan.em.max_iters);
        plan.em.rel_tol = em.value("rel_tol", plan.em.rel_tol);
    }
    plan.dim_draws = j.value("dim_draws", plan.dim_draws);
    if (j.contains("range")) {
        const auto range = j.at("range").get<std::vector<int>>();
        if (range.size() != 2) throw std::invalid_argument("range must be [lo, hi]");
        plan.range_lo = range[0];
        plan.range_hi = range[1];
    }
    return plan;
}

nlohmann::json plan_to_json(const ExperimentPlan& plan) {
    nlohmann::json j;
    j["model"] = render_model(plan.generative);
    j["mode"] = plan.mode == ParamMode::random_params ? "random" : "deterministic_block";
    if (!plan.block_vars.empty()) j["block_vars"] = plan.block_vars;
    j["n_params"] = plan.n_params;
    j["sample_sizes"] = plan.sample_sizes;
    nlohmann::json scores = nlohmann::json::array();
    for (auto s : plan.scores) scores.push_back(to_string(s));
    j["scores"] = scores;
    j["master_seed"] = plan.master_seed;
    j["em"] = {{"restarts", plan.em.restarts},
               {"max_iters", plan.em.max_iters},
               {"rel_tol", plan.em.rel_tol}};
    j["dim_draws"] = plan.dim_draws;
    if (plan.range_hi > 0) j["range"] = {plan.range_lo, plan.range_hi};
    return j;
}

std::vector<ExperimentRecord> run_plan(const ExperimentPlan& plan) {
    const auto& gen = plan.generative;
    const bool lc = is_lc(gen);
    std::vector<int> observed_cards;
    for (int v : gen.structure.observed()) observed_cards.push_back(gen.structure.var(v).cardinality);

    int range_lo = plan.range_lo, range_hi = plan.range_hi;
    if (lc && range_hi <= 0) {
        long long prod = 1, max_card = 0;
        for (int c : observed_cards) {
            prod *= c;
            max_card = std::max<long long>(max_card, c);
        }
        range_hi = static_cast<int>(prod / max_card);
    }

    std::vector<ExperimentRecord> records;
    for (int pi = 0; pi < plan.n_params; ++pi) {
        const std::uint64_t param_seed =
            mix_seed(plan.master_seed, kTagParam, static_cast<std::uint64_t>(pi));

        Parameters params = Parameters::uniform(gen);
        std::vector<double> gen_marginal;
        std::string param_error;
        try {
            params = plan.mode == ParamMode::random_params
                         ? random_parameters(gen, param_seed)
                         : deterministic_block_parameters(
                               gen, plan.block_vars.empty() ? auto_block(gen) : plan.block_vars,
                               param_seed);
            gen_marginal = observed_marginal(gen, params);
        } catch (const std::exception& e) {
            param_error = e.what();
        }

        for (const long long n : plan.sample_sizes) {
            Dataset data;
            std::string data_error = param_error;
            if (data_error.empty()) {
                try {
                    data = sample_dataset(gen, params, n,
                                          mix_seed(param_seed, kTagData, static_cast<std::uint64_t>(n)));
                } catch (const std::exception& e) {
                    data_error = e.what();
                }
            }
            const std::uint64_t select_seed =
                mix_seed(param_seed, kTagSelect, static_cast<std::uint64_t>(n));

            for (const ScoreName score : plan.scores) {
                ExperimentRecord rec;
                rec.param_index = pi;
                rec.n = n;
                rec.score = score;
                const auto started = std::chrono::steady_clock::now();
                if (!data_error.empty()) {
                    rec.error = data_error;
                    rec.kl_bits = std::numeric_limits<double>::quiet_NaN();
                    records.push_back(std::move(rec));
                    continue;
                }
                try {
                    SearchConfig cfg;
                    cfg.em = plan.em;
                    cfg.em.seed = 0;  // overridden per candidate
                    cfg.dim_draws = plan.dim_draws;
                    cfg.seed = select_seed;
                    const SearchResult result =
                        lc ? select_lc_cardinality(observed_cards, data, score, range_lo, range_hi, cfg)
                           : hillclimb_hlc_cardinality(gen, data, score, cfg);
                    rec.selected = render_model(result.final);
                    for (int h : result.final.structure.hidden())
                        rec.hidden_cards.push_back(result.final.structure.var(h).cardinality);
                    rec.kl_bits = kl_divergence_bits(
                        gen_marginal, observed_marginal(result.final, result.final_fit.params));
                } catch (const std::exception& e) {
                    rec.error = e.what();
                    rec.kl_bits = std::numeric_limits<double>::quiet_NaN();
                }
                rec.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

std::vector<SummaryCell> summarize(const ExperimentPlan& plan,
                                   const std::vector<ExperimentRecord>& records) {
    const std::size_t n_hidden = plan.generative.structure.hidden().size();
    std::vector<SummaryCell> cells;
    for (const long long n : plan.sample_sizes) {
        for (const ScoreName score : plan.scores) {
            SummaryCell cell;
            cell.score = score;
            cell.n = n;
            cell.mean_cards.assign(n_hidden, 0.0);
            std::vector<double> kls;
            for (const auto& rec : records) {
                if (rec.n != n || rec.score != score || !rec.error.empty()) continue;
                if (!std::isfinite(rec.kl_bits)) continue;
                kls.push_back(rec.kl_bits);
                for (std::size_t h = 0; h < n_hidden && h < rec.hidden_cards.size(); ++h)
                    cell.mean_cards[h] += rec.hidden_cards[h];
            }
            cell.count = static_cast<int>(kls.size());
            if (cell.count > 0) {
                for (double kl : kls) cell.mean_kl += kl;
                cell.mean_kl /= cell.count;
                for (auto& c : cell.mean_cards) c /= cell.count;
                if (cell.count > 1) {
                    double ss = 0.0;
                    for (double kl : kls) ss += (kl - cell.mean_kl) * (kl - cell.mean_kl);
                    const double sd = std::sqrt(ss / (cell.count - 1));
                    cell.half_width = 1.96 * sd / std::sqrt(static_cast<double>(cell.count));
                }
            }
            cells.push_back(std::move(cell));
        }
    }
    // mark, per sample size, the lowest mean and everything overlapping it
    for (const long long n : plan.sample_sizes) {
        const SummaryCell* best = nullptr;
        for (const auto& c : cells)
            if (c.n == n && c.count > 0 && (!best || c.mean_kl < best->mean_kl)) best = &c;
        if (!best) continue;
        for (auto& c : cells)
            if (c.n == n && c.count > 0)
                c.best = c.mean_kl - c.half_width <= best->mean_kl + best->half_width;
    }
    return cells;
}

void write_records_csv(std::ostream& out, const std::vector<ExperimentRecord>& records,
                       bool timings) {
    out << "param,n,score,selected,kl_bits,hidden_cards,error";
    if (timings) out << ",wall_ms";
    out << '\n';
    for (const auto& rec : records) {
        std::string cards;
        for (std::size_t i = 0; i < rec.hidden_cards.size(); ++i)
            cards += (i ? ";" : "") + std::to_string(rec.hidden_cards[i]);
        out << rec.param_index << ',' << rec.n << ',' << to_string(rec.score) << ','
            << csv_escape(rec.selected) << ',' << format_double(rec.kl_bits) << ',' << cards << ','
            << csv_escape(rec.error);
        if (timings) out << ',' << format_double(rec.wall_ms);
        out << '\n';
    }
}

void write_summary_csv(std::ostream& out, const ExperimentPlan& plan,
                       const std::vector<SummaryCell>& cells) {
    out << "n";
    for (const ScoreName s : plan.scores) out << ',' << to_string(s);
    out << '\n';
    for (const long long n : plan.sample_sizes) {
        out << n;
        for (const ScoreName s : plan.scores) {
            const SummaryCell* cell = nullptr;
            for (const auto& c : cells)
                if (c.n == n && c.score == s) cell = &c;
            out << ',';
            if (!cell || cell->count == 0) continue;
            char buf[96];
            std::snprintf(buf, sizeof buf, "%.4g+-%.2g%s", cell->mean_kl * 1e3,
                          cell->half_width * 1e3, cell->best ? "*" : "");
            out << buf;
        }
        out << '\n';
    }
}

void write_cards_csv(std::ostream& out, const ExperimentPlan& plan,
                     const std::vector<SummaryCell>& cells) {
    out << "n,score,count,mean_kl_e3_bits,half_width_e3_bits,best";
    for (int h : plan.generative.structure.hidden())
        out << ",mean_card_" << plan.generative.structure.var(h).name;
    out << '\n';
    for (const auto& c : cells) {
        out << c.n << ',' << to_string(c.score) << ',' << c.count << ','
            << format_double(c.mean_kl * 1e3) << ',' << format_double(c.half_width * 1e3) << ','
            << (c.best ? 1 : 0);
        for (double card : c.mean_cards) out << ',' << format_double(card);
        out << '\n';
    }
}

}  // namespace latdim
