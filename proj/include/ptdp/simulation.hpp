#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/roots.hpp>
#include <nlohmann/json.hpp>

#include "ptdp/io/delimited.hpp"
#include "ptdp/parallel.hpp"
#include "ptdp/pipeline.hpp"
#include "ptdp/rng.hpp"

namespace ptdp {

enum class Design { one_sample, two_sample };

inline std::string_view to_string(Design d) { return d == Design::one_sample ? "one_sample" : "two_sample"; }
inline Design parse_design(std::string_view s) {
    if (s == "one_sample" || s == "one-sample") return Design::one_sample;
    if (s == "two_sample" || s == "two-sample") return Design::two_sample;
    throw invalid_input("unknown design '" + std::string(s) + "'");
}

/// One Monte-Carlo configuration. For the two-sample design `n` is the total
/// number of subjects drawn from a fresh pool of `pool` null subjects per
/// replicate and split evenly into two groups.
struct SimulationSpec {
    Design design = Design::one_sample;
    std::size_t n = 50;
    std::size_t m = 200;
    double rho2 = 0.0;  // pairwise correlation of the noise
    double nu = 0.9;    // proportion of true nulls
    double alpha = 0.05;
    std::size_t w = 200;
    std::size_t replications = 100;
    FamilyKind family = FamilyKind::simes_shift;
    double delta = 0.0;
    std::uint64_t seed = 1;
    double kappa = 1.0;  // null p-values become p^kappa; 1 means no distortion
    PValueMethod pvalue_method = PValueMethod::student_t;
    double target_power = 0.8;
    std::optional<double> effect;  // overrides the power-based signal size
    std::size_t pool = 103;
    std::size_t subsets_per_replicate = 20;
    unsigned threads = 0;

    void validate() const {
        if (m < 1) throw invalid_input("m must be positive");
        if (!(rho2 >= 0.0 && rho2 <= 1.0)) throw invalid_input("rho2 must lie in [0, 1]");
        if (!(nu >= 0.0 && nu <= 1.0)) throw invalid_input("nu must lie in [0, 1]");
        if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0, 1)");
        if (w < 2) throw invalid_input("w must be at least 2");
        if (replications < 1) throw invalid_input("replications must be positive");
        if (!(kappa >= 1.0)) throw invalid_input("kappa must be >= 1");
        if (!(target_power > alpha && target_power < 1.0)) throw invalid_input("target power must lie in (alpha, 1)");
        make_family(family, m, delta);
        if (design == Design::one_sample) {
            if (n < 2) throw invalid_input("one-sample design needs n >= 2");
        } else {
            if (n < 4 || n % 2 != 0) throw invalid_input("two-sample design needs an even n >= 4");
            if (pool < n) throw invalid_input("subject pool smaller than n");
            if (nu != 1.0) throw invalid_input("the two-sample design simulates the global null only (nu = 1)");
        }
    }
};

/// Number of active variables: m (1 - nu), rounded when it is an integer up
/// to floating error, otherwise rounded up.
inline std::size_t active_count(std::size_t m, double nu) {
    const double x = static_cast<double>(m) * (1.0 - nu);
    const double r = std::round(x);
    const double k = std::fabs(x - r) < 1e-9 ? r : std::ceil(x);
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(m)));
}

/// Mean shift giving the one-sample t-test (n subjects, unit noise variance)
/// the requested power, from the noncentral t distribution.
inline double signal_for_power(std::size_t n, double alpha, double power, Alternative alt = Alternative::two_sided) {
    namespace bm = boost::math;
    const double df = static_cast<double>(n - 1);
    const bool two = alt == Alternative::two_sided;
    const double crit = bm::quantile(bm::complement(bm::students_t(df), two ? alpha / 2 : alpha));
    auto power_at = [&](double mu) {
        bm::non_central_t d(df, mu * std::sqrt(static_cast<double>(n)));
        double p = bm::cdf(bm::complement(d, crit));
        if (two) p += bm::cdf(d, -crit);
        return p;
    };
    double hi = 1.0;
    while (power_at(hi) < power) hi *= 2.0;
    bm::tools::eps_tolerance<double> tol(50);
    std::uintmax_t iters = 200;
    auto r = bm::tools::toms748_solve([&](double mu) { return power_at(mu) - power; }, 0.0, hi, tol, iters);
    return 0.5 * (r.first + r.second);
}

inline double effect_size(const SimulationSpec& s) {
    return s.effect ? *s.effect : signal_for_power(s.n, s.alpha, s.target_power);
}

/// n x m data: each row is sqrt(rho2) g 1 + sqrt(1 - rho2) z + mu 1_A with A the
/// first active_count(m, nu) variables.
inline Matrix<double> equicorrelated_rows(std::size_t rows, std::size_t m, double rho2, std::size_t active, double mu,
                                          Rng& rng) {
    Matrix<double> d(rows, m);
    const double a = std::sqrt(rho2), b = std::sqrt(1.0 - rho2);
    for (std::size_t s = 0; s < rows; ++s) {
        const double g = rng.normal();
        for (std::size_t i = 0; i < m; ++i) d(s, i) = a * g + b * rng.normal() + (i < active ? mu : 0.0);
    }
    return d;
}

inline SubjectContrasts generate_dataset(const SimulationSpec& spec, std::uint64_t replicate_seed) {
    Rng rng(derive_seed(replicate_seed, 0));
    const std::size_t rows = spec.design == Design::one_sample ? spec.n : spec.pool;
    const std::size_t active = spec.design == Design::one_sample ? active_count(spec.m, spec.nu) : 0;
    const double mu = active > 0 ? effect_size(spec) : 0.0;
    return make_contrasts(equicorrelated_rows(rows, spec.m, spec.rho2, active, mu, rng));
}

struct ReplicateRecord {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    double lambda_alpha = 0.0;
    std::size_t h = 0;
    std::size_t perm_bound = 0;   // bound on the whole set B
    std::size_t param_bound = 0;
    bool perm_covered = true;     // every subset of the battery (and B) bounded correctly
    bool param_covered = true;
};

struct MethodSummary {
    double mean_bound = 0.0;
    double sd_bound = 0.0;
    double mean_tdp = 0.0;
    double sd_tdp = 0.0;
    double fwer = 0.0;      // fraction of replicates with a bound above the truth for B
    double coverage = 0.0;  // fraction of replicates where the whole battery is covered
};

struct SimulationResult {
    SimulationSpec spec;
    double effect = 0.0;
    std::size_t active = 0;
    std::vector<ReplicateRecord> records;
    MethodSummary permutation;
    MethodSummary parametric;
};

namespace detail {

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

inline MethodSummary summarize(const std::vector<ReplicateRecord>& recs, std::size_t m, std::size_t active,
                               bool permutation) {
    std::vector<double> bound, tdp;
    double exceed = 0.0, covered = 0.0;
    for (const auto& r : recs) {
        const auto b = permutation ? r.perm_bound : r.param_bound;
        bound.push_back(static_cast<double>(b));
        tdp.push_back(static_cast<double>(b) / static_cast<double>(m));
        exceed += b > active;
        covered += permutation ? r.perm_covered : r.param_covered;
    }
    MethodSummary s;
    mean_sd(bound, s.mean_bound, s.sd_bound);
    mean_sd(tdp, s.mean_tdp, s.sd_tdp);
    s.fwer = exceed / static_cast<double>(recs.size());
    s.coverage = covered / static_cast<double>(recs.size());
    return s;
}

// Battery of subsets: half uniformly random, half the k smallest p-values
// (the sets most likely to be overclaimed).
inline std::vector<VoxelSubset> subset_battery(std::size_t count, std::span<const double> p, Rng& rng) {
    const std::size_t m = p.size();
    std::vector<Index> order(m);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return p[a] < p[b]; });
    std::vector<VoxelSubset> out;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t size = 1 + rng.below(m);
        std::vector<Index> idx;
        if (k % 2 == 0) {
            std::vector<Index> all(m);
            std::iota(all.begin(), all.end(), Index{0});
            rng.shuffle(all);
            idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
        } else {
            idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
        }
        out.push_back(VoxelSubset::from_indices(std::move(idx), m));
    }
    return out;
}

inline std::size_t true_active(const VoxelSubset& s, std::size_t active) {
    return static_cast<std::size_t>(std::lower_bound(s.indices().begin(), s.indices().end(), active) -
                                    s.indices().begin());
}

}  // namespace detail

/// One replicate of the full pipeline on fresh data.
inline ReplicateRecord run_replicate(const SimulationSpec& spec, std::size_t r, double mu) {
    const std::uint64_t rep_seed = derive_seed(spec.seed, r);
    Rng rng(derive_seed(rep_seed, 0));
    const std::size_t m = spec.m;
    const std::size_t active = spec.design == Design::one_sample ? active_count(m, spec.nu) : 0;

    SubjectContrasts data;
    PermutationScheme scheme{SchemeKind::sign_flip, spec.w, derive_seed(rep_seed, 1), {}};
    if (spec.design == Design::one_sample) {
        data = make_contrasts(equicorrelated_rows(spec.n, m, spec.rho2, active, mu, rng));
    } else {
        // fresh pool, shuffled, first n subjects split into two equal groups
        auto pool = equicorrelated_rows(spec.pool, m, spec.rho2, 0, 0.0, rng);
        std::vector<std::size_t> pick(spec.pool);
        std::iota(pick.begin(), pick.end(), std::size_t{0});
        rng.shuffle(pick);
        Matrix<double> d(spec.n, m);
        for (std::size_t s = 0; s < spec.n; ++s) std::copy_n(pool.row(pick[s]).begin(), m, d.row(s).begin());
        data = make_contrasts(std::move(d));
        scheme.kind = SchemeKind::group_label;
        scheme.group_labels.assign(spec.n, 1);
        std::fill(scheme.group_labels.begin() + static_cast<std::ptrdiff_t>(spec.n / 2), scheme.group_labels.end(), 2);
    }

    auto stats = compute_statistics(data, scheme, Alternative::two_sided, 1);
    auto pvals = compute_pvalues(stats, spec.pvalue_method, 1);
    auto param_p = parametric_pvalues(stats.observed(), stats.degrees_of_freedom, Alternative::two_sided);
    if (spec.kappa != 1.0) {
        for (std::size_t j = 0; j < pvals.w(); ++j)
            for (std::size_t i = active; i < m; ++i) pvals.values(j, i) = std::pow(pvals.values(j, i), spec.kappa);
        for (std::size_t i = active; i < m; ++i) param_p[i] = std::pow(param_p[i], spec.kappa);
    }
    auto cal = calibrate(pvals, make_family(spec.family, m, spec.delta), spec.alpha, 1);
    auto perm_cv = permutation_critical_vector(cal);
    auto h = hommel_h(param_p, spec.alpha);
    auto param_cv = parametric_critical_vector(h, m);

    ReplicateRecord rec;
    rec.replicate = r;
    rec.seed = rep_seed;
    rec.lambda_alpha = cal.lambda_alpha;
    rec.h = h.h;
    const auto all = VoxelSubset::all(m);
    const auto observed = pvals.observed();
    rec.perm_bound = tdp_lower_bound(all, observed, perm_cv).lower_bound;
    rec.param_bound = tdp_lower_bound(all, param_p, param_cv).lower_bound;
    rec.perm_covered = rec.perm_bound <= active;
    rec.param_covered = rec.param_bound <= active;
    Rng subset_rng(derive_seed(rep_seed, 2));
    for (const auto& s : detail::subset_battery(spec.subsets_per_replicate, observed, subset_rng)) {
        const std::size_t truth = detail::true_active(s, active);
        rec.perm_covered = rec.perm_covered && tdp_lower_bound(s, observed, perm_cv).lower_bound <= truth;
        rec.param_covered = rec.param_covered && tdp_lower_bound(s, param_p, param_cv).lower_bound <= truth;
    }
    return rec;
}

/// Runs all replicates; replicates run in parallel, results are in replicate order.
inline SimulationResult run_simulation(const SimulationSpec& spec) {
    spec.validate();
    SimulationResult res;
    res.spec = spec;
    res.active = spec.design == Design::one_sample ? active_count(spec.m, spec.nu) : 0;
    res.effect = res.active > 0 ? effect_size(spec) : 0.0;
    res.records.resize(spec.replications);
    parallel_for(spec.replications, spec.threads, [&](std::size_t begin, std::size_t end, unsigned) {
        for (std::size_t r = begin; r < end; ++r) res.records[r] = run_replicate(spec, r, res.effect);
    });
    res.permutation = detail::summarize(res.records, spec.m, res.active, true);
    res.parametric = detail::summarize(res.records, spec.m, res.active, false);
    return res;
}

/// Global-null validation: the flagged fraction is the empirical FWER.
inline SimulationResult run_fwer_validation(SimulationSpec spec) {
    if (spec.nu != 1.0) throw invalid_input("FWER validation runs under the global null (nu = 1)");
    return run_simulation(spec);
}

struct PowerGrid {
    SimulationSpec base;
    std::vector<double> rho2;
    std::vector<double> nu;
    std::vector<std::pair<FamilyKind, double>> families;  // (kind, delta)
};

/// Runs every (rho2, nu, family) combination with the base seed, so grid
/// points share data replicate by replicate and can be compared pairwise.
inline std::vector<SimulationResult> run_power_grid(const PowerGrid& grid) {
    if (grid.rho2.empty() || grid.nu.empty() || grid.families.empty()) throw invalid_input("power grid is empty");
    std::vector<SimulationResult> out;
    for (double r : grid.rho2)
        for (double v : grid.nu)
            for (const auto& [kind, delta] : grid.families) {
                SimulationSpec s = grid.base;
                s.rho2 = r;
                s.nu = v;
                s.family = kind;
                s.delta = delta;
                out.push_back(run_simulation(s));
            }
    return out;
}

inline std::string power_grid_csv(const std::vector<SimulationResult>& results) {
    std::string out = "rho2,nu,family,delta,method,mean_tdp,sd_tdp,replications,seed,mean_bound,sd_bound,fwer,coverage\n";
    using io::format_number;
    for (const auto& r : results) {
        auto row = [&](std::string_view family, double delta, std::string_view method, const MethodSummary& s) {
            out += format_number(r.spec.rho2) + ',' + format_number(r.spec.nu) + ',' + std::string(family) + ',' +
                   format_number(delta) + ',' + std::string(method) + ',' + format_number(s.mean_tdp) + ',' +
                   format_number(s.sd_tdp) + ',' + std::to_string(r.spec.replications) + ',' +
                   std::to_string(r.spec.seed) + ',' + format_number(s.mean_bound) + ',' + format_number(s.sd_bound) +
                   ',' + format_number(s.fwer) + ',' + format_number(s.coverage) + '\n';
        };
        row(to_string(r.spec.family), r.spec.delta, "permutation", r.permutation);
        row("simes_hommel", 0.0, "parametric", r.parametric);
    }
    return out;
}

// JSON helpers shared by the CLI.

inline SimulationSpec spec_from_json(const nlohmann::json& j, SimulationSpec s = {}) {
    if (!j.is_object()) throw invalid_input("simulation spec must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        if (k == "design") s.design = parse_design(v.get<std::string>());
        else if (k == "n") s.n = v.get<std::size_t>();
        else if (k == "m") s.m = v.get<std::size_t>();
        else if (k == "rho2") s.rho2 = v.get<double>();
        else if (k == "nu") s.nu = v.get<double>();
        else if (k == "alpha") s.alpha = v.get<double>();
        else if (k == "w" || k == "permutations") s.w = v.get<std::size_t>();
        else if (k == "replications") s.replications = v.get<std::size_t>();
        else if (k == "family") s.family = parse_family(v.get<std::string>());
        else if (k == "delta") s.delta = v.get<double>();
        else if (k == "seed") s.seed = v.get<std::uint64_t>();
        else if (k == "kappa") s.kappa = v.get<double>();
        else if (k == "pvalues") s.pvalue_method = parse_pvalue_method(v.get<std::string>());
        else if (k == "power") s.target_power = v.get<double>();
        else if (k == "effect") s.effect = v.get<double>();
        else if (k == "pool") s.pool = v.get<std::size_t>();
        else if (k == "subsets") s.subsets_per_replicate = v.get<std::size_t>();
        else if (k == "threads") s.threads = v.get<unsigned>();
        else throw invalid_input("unknown simulation spec key '" + k + "'");
    }
    return s;
}

/// {"base": {...}, "rho2": [...], "nu": [...], "families": [{"family": "simes", "delta": 0 or [0, 1, ...]}]}.
/// Missing axes default to the base spec's value.
inline PowerGrid grid_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw invalid_input("grid must be a JSON object");
    PowerGrid g;
    g.base = j.contains("base") ? spec_from_json(j.at("base")) : SimulationSpec{};
    g.rho2 = j.contains("rho2") ? j.at("rho2").get<std::vector<double>>() : std::vector<double>{g.base.rho2};
    g.nu = j.contains("nu") ? j.at("nu").get<std::vector<double>>() : std::vector<double>{g.base.nu};
    if (j.contains("families")) {
        for (const auto& f : j.at("families")) {
            const auto kind = parse_family(f.at("family").get<std::string>());
            if (!f.contains("delta")) {
                g.families.emplace_back(kind, 0.0);
            } else if (f.at("delta").is_array()) {
                for (double d : f.at("delta").get<std::vector<double>>()) g.families.emplace_back(kind, d);
            } else {
                g.families.emplace_back(kind, f.at("delta").get<double>());
            }
        }
    } else {
        g.families.emplace_back(g.base.family, g.base.delta);
    }
    return g;
}

inline nlohmann::json to_json(const MethodSummary& s) {
    return {{"mean_bound", s.mean_bound}, {"sd_bound", s.sd_bound}, {"mean_tdp", s.mean_tdp},
            {"sd_tdp", s.sd_tdp},         {"fwer", s.fwer},         {"coverage", s.coverage}};
}

inline nlohmann::json to_json(const SimulationSpec& s) {
    return {{"design", to_string(s.design)}, {"n", s.n}, {"m", s.m}, {"rho2", s.rho2}, {"nu", s.nu},
            {"alpha", s.alpha}, {"w", s.w}, {"replications", s.replications}, {"family", to_string(s.family)},
            {"delta", s.delta}, {"seed", s.seed}, {"kappa", s.kappa}, {"pvalues", to_string(s.pvalue_method)},
            {"power", s.target_power}, {"pool", s.pool}, {"subsets", s.subsets_per_replicate}};
}

inline nlohmann::json to_json(const SimulationResult& r, bool records = false) {
    const double R = static_cast<double>(r.records.size());
    const auto se = [&](double p) { return std::sqrt(std::max(p * (1 - p), 0.0) / R); };
    nlohmann::json j{{"schema_version", 1},
                     {"spec", to_json(r.spec)},
                     {"effect", r.effect},
                     {"active", r.active},
                     {"permutation", to_json(r.permutation)},
                     {"parametric", to_json(r.parametric)},
                     {"fwer_bound", r.spec.alpha + 3 * std::sqrt(r.spec.alpha * (1 - r.spec.alpha) / R)},
                     {"permutation_fwer_se", se(r.permutation.fwer)},
                     {"parametric_fwer_se", se(r.parametric.fwer)}};
    if (records) {
        auto& arr = j["records"] = nlohmann::json::array();
        for (const auto& x : r.records)
            arr.push_back({{"replicate", x.replicate}, {"seed", x.seed}, {"lambda_alpha", x.lambda_alpha},
                           {"h", x.h}, {"perm_bound", x.perm_bound}, {"param_bound", x.param_bound},
                           {"perm_covered", x.perm_covered}, {"param_covered", x.param_covered}});
    }
    return j;
}

}  // namespace ptdp
