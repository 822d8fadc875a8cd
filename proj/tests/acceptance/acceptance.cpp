// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
// below. Usage: acceptance [criterion numbers...]; no arguments runs all.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ptdp/io/nifti.hpp"
#include "ptdp/io/tdp_map.hpp"
#include "ptdp/simulation.hpp"

using namespace ptdp;

namespace {

// Pinned tolerances.
constexpr double alpha = 0.05;
constexpr double identity_tol = 1e-12;                     // criterion 8
const double fwer_limit = 0.05 + 3 * std::sqrt(0.05 * 0.95 / 1000);  // criterion 4
constexpr double coverage_sigmas = 3.0;                     // criterion 5
constexpr double gap_sigmas_low = -1.0;                     // criterion 6, rho2 = 0
constexpr double gap_sigmas_high = 3.0;                     // criteria 6 and 7
constexpr double runtime_single_s = 5.0;                    // criterion 9
constexpr double runtime_multi_s = 1.5;
constexpr double runtime_limit_1_s = 10.0, runtime_limit_2_s = 30.0, runtime_limit_4_s = 600.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

// ---- independent oracles -------------------------------------------------

// Local test of U with a fixed critical vector: reject iff some p^U_(i) <= l_i.
bool local_rejects(const std::vector<double>& p, std::uint32_t u, const std::vector<double>& l) {
    std::vector<double> q;
    for (std::size_t b = 0; b < p.size(); ++b)
        if (u & (1u << b)) q.push_back(p[b]);
    std::sort(q.begin(), q.end());
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] <= l[i]) return true;
    return false;
}

// Full closed testing over all intersection hypotheses; closed[U] is true when
// U and every superset are locally rejected.
std::vector<char> closure(const std::vector<double>& p, const std::function<bool(std::uint32_t)>& rejects) {
    const std::size_t m = p.size();
    const std::uint32_t full = (1u << m) - 1;
    std::vector<char> closed(full + 1, 0);
    for (std::uint32_t v = full; v >= 1; --v) {
        bool rej = rejects(v);
        for (std::size_t b = 0; b < m && rej; ++b)
            if (!(v & (1u << b))) rej = closed[v | (1u << b)];
        closed[v] = rej;
    }
    return closed;
}

// Discoveries in S: |S| minus the largest unrejected U inside S.
std::size_t closed_bound(const std::vector<char>& closed, std::uint32_t s) {
    std::size_t largest = 0;
    for (std::uint32_t v = 1; v < closed.size(); ++v)
        if ((v & s) == v && !closed[v]) largest = std::max<std::size_t>(largest, std::popcount(v));
    return static_cast<std::size_t>(std::popcount(s)) - largest;
}

bool simes_rejects(const std::vector<double>& p, std::uint32_t u, double a) {
    std::vector<double> q;
    for (std::size_t b = 0; b < p.size(); ++b)
        if (u & (1u << b)) q.push_back(p[b]);
    std::sort(q.begin(), q.end());
    const double k = static_cast<double>(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] <= static_cast<double>(i + 1) * a / k) return true;
    return false;
}

// Largest lambda_j whose curve keeps at least w - floor(alpha w) rows dominating.
double sweep_supremum(const PValueMatrix& pv, const CriticalFamily& f, double a, const std::vector<double>& lambdas) {
    const std::size_t w = pv.w();
    const std::size_t needed = w - static_cast<std::size_t>(std::floor(a * static_cast<double>(w) + 1e-9));
    double best = -std::numeric_limits<double>::infinity();
    for (double lam : std::set<double>(lambdas.begin(), lambdas.end()))
        if (condition_count(pv, f, lam) >= needed) best = std::max(best, lam);
    return best;
}

std::vector<double> random_pvalues(Rng& rng, std::size_t m) {
    std::vector<double> p(m);
    for (auto& v : p) {
        const double u = rng.uniform();
        v = u < 0.15 ? static_cast<double>(1 + rng.below(20)) / 20.0  // grid values, ties likely
            : u < 0.3 ? std::pow(rng.uniform(), 4.0)
                      : rng.uniform() * (1.0 - 1e-12) + 1e-12;
    }
    return p;
}

// ---- criteria ------------------------------------------------------------

Outcome criterion1() {
    const auto t0 = Clock::now();
    Rng rng(101);
    std::size_t subsets = 0, mismatches = 0;
    for (int inst = 0; inst < 500; ++inst) {
        const std::size_t m = 1 + rng.below(10);
        const auto p = random_pvalues(rng, m);
        std::vector<double> l(m);
        for (auto& v : l) v = rng.uniform() < 0.2 ? p[rng.below(m)] : rng.uniform() * 0.6;
        std::sort(l.begin(), l.end());
        CriticalVector cv{l, VectorSource::permutation, alpha, std::nullopt};
        const auto closed = closure(p, [&](std::uint32_t u) { return local_rejects(p, u, l); });
        for (std::uint32_t s = 1; s < (1u << m); ++s) {
            std::vector<Index> idx;
            for (std::size_t b = 0; b < m; ++b)
                if (s & (1u << b)) idx.push_back(b);
            const auto got = tdp_lower_bound(VoxelSubset::from_indices(idx, m), p, cv).lower_bound;
            ++subsets;
            mismatches += got != closed_bound(closed, s);
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < runtime_limit_1_s,
            "500 instances, " + std::to_string(subsets) + " subsets, " + std::to_string(mismatches) +
                " mismatches vs full closed testing, " + fmt(t, 3) + " s (limit " + fmt(runtime_limit_1_s) + " s)"};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    Rng rng(202);
    std::size_t checks = 0, mismatches = 0;
    for (int inst = 0; inst < 200; ++inst) {
        const std::size_t m = 1 + rng.below(20), w = 2 + rng.below(49);
        PValueMatrix pv;
        if (inst % 2 == 0) {
            const std::size_t J = 3 + rng.below(10);
            Matrix<double> d(J, m);
            for (std::size_t s = 0; s < J; ++s) {
                const double g = rng.normal();
                for (std::size_t i = 0; i < m; ++i) d(s, i) = 0.6 * g + rng.normal() + (i < 2 ? 0.7 : 0.0);
            }
            auto stats = one_sample_statistics(make_contrasts(std::move(d)), {SchemeKind::sign_flip, w, rng(), {}});
            pv = compute_pvalues(stats, inst % 4 == 0 ? PValueMethod::rank : PValueMethod::student_t, 1);
        } else {
            pv.values = Matrix<double>(w, m);
            for (auto& v : pv.values.data()) v = static_cast<double>(1 + rng.below(w)) / static_cast<double>(w);
        }
        std::vector<CriticalFamily> families{make_family(FamilyKind::simes_shift, m),
                                             make_family(FamilyKind::aorc_shift, m),
                                             make_family(FamilyKind::higher_criticism, m),
                                             make_family(FamilyKind::beta_quantile, m)};
        if (m > 3) {
            families.push_back(make_family(FamilyKind::simes_shift, m, 2.0));
            families.push_back(make_family(FamilyKind::aorc_shift, m, 1.5));
        }
        const double a = inst % 3 == 0 ? 0.1 : alpha;
        for (const auto& f : families) {
            const auto cal = calibrate(pv, f, a, 1);
            ++checks;
            mismatches += cal.lambda_alpha != sweep_supremum(pv, f, a, cal.per_permutation_lambdas);
        }
    }
    const double t = seconds_since(t0);
    return {mismatches == 0 && t < runtime_limit_2_s,
            "200 instances, " + std::to_string(checks) + " family calibrations, " + std::to_string(mismatches) +
                " mismatches vs condition_count sweep, " + fmt(t, 3) + " s (limit " + fmt(runtime_limit_2_s) + " s)"};
}

Outcome criterion3() {
    Rng rng(303);
    std::size_t checks = 0, mismatches = 0;
    for (double a : {0.05, 0.2}) {
        for (int inst = 0; inst < 300; ++inst) {
            const std::size_t m = 1 + rng.below(10);
            std::vector<double> p(m);
            for (auto& v : p)
                v = rng.uniform() < 0.2 ? static_cast<double>(rng.below(6)) * a / 5.0 : std::pow(rng.uniform(), 2.5);
            std::size_t h = 0;
            for (std::uint32_t u = 1; u < (1u << m); ++u)
                if (!simes_rejects(p, u, a)) h = std::max<std::size_t>(h, std::popcount(u));
            // discoveries for every subset must also agree with Simes closed testing
            const auto closed = closure(p, [&](std::uint32_t u) { return simes_rejects(p, u, a); });
            const auto hh = hommel_h(p, a);
            const auto cv = parametric_critical_vector(hh, m);
            bool ok = hh.h == h;
            for (std::uint32_t s = 1; s < (1u << m) && ok; ++s) {
                std::vector<Index> idx;
                for (std::size_t b = 0; b < m; ++b)
                    if (s & (1u << b)) idx.push_back(b);
                ok = tdp_lower_bound(VoxelSubset::from_indices(idx, m), p, cv).lower_bound == closed_bound(closed, s);
            }
            ++checks;
            mismatches += !ok;
        }
    }
    return {mismatches == 0, std::to_string(checks) + " p-vectors (alpha 0.05 and 0.2), " + std::to_string(mismatches) +
                                 " disagreements with exhaustive Simes closed testing (h and all subset bounds)"};
}

SimulationSpec base_spec() {
    SimulationSpec s;
    s.alpha = alpha;
    s.m = 200;
    s.w = 200;
    s.seed = 20240101;
    s.threads = 0;
    return s;
}

Outcome criterion4() {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (double rho2 : {0.0, 0.5}) {
        auto s = base_spec();
        s.design = Design::two_sample;
        s.n = 40;
        s.nu = 1.0;
        s.rho2 = rho2;
        s.replications = 1000;
        const auto r = run_fwer_validation(s);
        pass = pass && r.permutation.fwer <= fwer_limit && r.parametric.fwer <= fwer_limit;
        detail += "rho2=" + fmt(rho2) + ": perm " + fmt(r.permutation.fwer) + ", param " + fmt(r.parametric.fwer) + "; ";
    }
    const double t = seconds_since(t0);
    pass = pass && t < runtime_limit_4_s;
    return {pass, detail + "limit " + fmt(fwer_limit) + ", " + fmt(t, 3) + " s (limit " + fmt(runtime_limit_4_s) + " s)"};
}

Outcome criterion5() {
    bool pass = true;
    std::string detail;
    const double R = 1000;
    const double limit = 0.95 - coverage_sigmas * std::sqrt(0.95 * 0.05 / R);
    for (double rho2 : {0.0, 0.5}) {
        auto s = base_spec();
        s.n = 50;
        s.nu = 0.9;
        s.rho2 = rho2;
        s.replications = static_cast<std::size_t>(R);
        s.subsets_per_replicate = 20;
        const auto r = run_simulation(s);
        pass = pass && r.permutation.coverage >= limit && r.parametric.coverage >= limit;
        detail += "rho2=" + fmt(rho2) + ": perm " + fmt(r.permutation.coverage) + ", param " +
                  fmt(r.parametric.coverage) + "; ";
    }
    return {pass, detail + "limit " + fmt(limit)};
}

struct Paired {
    double mean = 0, se = 0;
};

// Mean and Monte-Carlo SE of per-replicate differences a_r - b_r.
Paired paired(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t R = a.size();
    std::vector<double> d(R);
    for (std::size_t r = 0; r < R; ++r) d[r] = a[r] - b[r];
    double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(R);
    double ss = 0;
    for (double x : d) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(R - 1)) / std::sqrt(static_cast<double>(R))};
}

SimulationSpec power_spec(double rho2) {
    auto s = base_spec();
    s.n = 50;
    s.nu = 0.9;
    s.rho2 = rho2;
    s.replications = 200;
    return s;
}

std::vector<double> tdp_of(const SimulationResult& r, bool permutation) {
    std::vector<double> out;
    for (const auto& x : r.records)
        out.push_back(static_cast<double>(permutation ? x.perm_bound : x.param_bound) / static_cast<double>(r.spec.m));
    return out;
}

Outcome criterion6() {
    bool pass = true;
    std::string detail;
    for (double rho2 : {0.0, 0.3, 0.5, 0.8}) {
        const auto r = run_simulation(power_spec(rho2));
        const auto d = paired(tdp_of(r, true), tdp_of(r, false));
        const double z = d.se > 0 ? d.mean / d.se : (d.mean > 0 ? INFINITY : d.mean < 0 ? -INFINITY : 0.0);
        if (rho2 == 0.0) pass = pass && z >= gap_sigmas_low;
        if (rho2 >= 0.5) pass = pass && z > gap_sigmas_high;
        detail += "rho2=" + fmt(rho2) + ": perm " + fmt(r.permutation.mean_tdp) + " param " +
                  fmt(r.parametric.mean_tdp) + " diff/SE " + fmt(z, 3) + "; ";
    }
    return {pass, detail + "need >= " + fmt(gap_sigmas_low) + " SE at 0 and > +" + fmt(gap_sigmas_high) +
                      " SE at 0.5, 0.8"};
}

Outcome criterion7() {
    auto s = power_spec(0.8);
    const auto simes = run_simulation(s);
    s.family = FamilyKind::beta_quantile;
    const auto beta = run_simulation(s);
    std::vector<double> a, b;
    for (std::size_t r = 0; r < simes.records.size(); ++r) {
        a.push_back(static_cast<double>(simes.records[r].perm_bound));
        b.push_back(static_cast<double>(beta.records[r].perm_bound));
    }
    const auto d = paired(a, b);
    const double z = d.se > 0 ? d.mean / d.se : (d.mean > 0 ? INFINITY : 0.0);
    return {z > gap_sigmas_high, "rho2=0.8: mean bound simes " + fmt(simes.permutation.mean_bound) + ", beta " +
                                     fmt(beta.permutation.mean_bound) + ", diff/SE " + fmt(z, 3) + " (need > " +
                                     fmt(gap_sigmas_high) + ")"};
}

Outcome criterion8() {
    double hc_err = 0;
    for (std::size_t m = 1; m <= 1000; ++m) {
        const auto f = make_family(FamilyKind::higher_criticism, m);
        for (std::size_t i = 1; i <= m; ++i)
            hc_err = std::max(hc_err, std::fabs(evaluate(f, 0.0, i) - static_cast<double>(i) / static_cast<double>(m)));
    }
    double aorc_err = 0;
    Rng rng(808);
    for (std::size_t m = 1; m <= 1000; ++m) {
        const auto f = make_family(FamilyKind::aorc_shift, m);
        for (int k = 0; k < 5; ++k) {
            const double lam = f.lambda_max() * (1.0 - rng.uniform());  // (0, cap]
            aorc_err = std::max(aorc_err, std::fabs(evaluate(f, lam, m) - 1.0));
        }
    }
    std::size_t shifted_violations = 0, shifted_checks = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const std::size_t m = 5 + rng.below(60);
        const double delta = static_cast<double>(1 + rng.below(std::min<std::size_t>(m - 2, 12))) +
                             (inst % 3 == 0 ? 0.5 : 0.0);
        const auto kind = inst % 2 ? FamilyKind::simes_shift : FamilyKind::aorc_shift;
        const auto f = make_family(kind, m, delta);
        const double lam = f.lambda_min() + (std::min(f.lambda_max(), 50.0) - f.lambda_min()) * rng.uniform();
        CriticalVector cv{critical_values(f, lam), VectorSource::permutation, alpha, std::nullopt};
        std::vector<double> p(m);
        for (auto& v : p) v = rng.uniform() < 0.5 ? 1e-300 + rng.uniform() * 1e-6 : rng.uniform() + 1e-300;
        const auto max_size = static_cast<std::size_t>(std::floor(delta));
        for (int k = 0; k < 50; ++k) {
            const std::size_t size = 1 + rng.below(max_size);
            std::vector<Index> all(m);
            std::iota(all.begin(), all.end(), Index{0});
            rng.shuffle(all);
            all.resize(size);
            ++shifted_checks;
            shifted_violations += tdp_lower_bound(VoxelSubset::from_indices(all, m), p, cv).lower_bound != 0;
        }
    }
    const bool pass = hc_err <= identity_tol && aorc_err <= identity_tol && shifted_violations == 0;
    return {pass, "HC(0) vs i/m max error " + fmt(hc_err) + ", AORC l_m - 1 max error " + fmt(aorc_err) + " (tol " +
                      fmt(identity_tol) + "); shifted families: " + std::to_string(shifted_violations) + "/" +
                      std::to_string(shifted_checks) + " subsets with |S| <= delta and a nonzero bound"};
}

Outcome criterion9() {
    SimulationSpec s;
    s.n = 20;
    s.m = 2000;
    s.nu = 1.0;
    const auto data = generate_dataset(s, 909);
    auto time_pipeline = [&](unsigned threads) {
        double best = INFINITY;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = Clock::now();
            AnalysisConfig c;
            c.w = 1000;
            c.seed = 9;
            c.threads = threads;
            c.family = FamilyKind::simes_shift;
            const auto a = analyze(data, c);
            volatile auto b = tdp_lower_bound(VoxelSubset::all(s.m), a.observed_p, a.critical).lower_bound;
            (void)b;
            best = std::min(best, seconds_since(t0));
        }
        return best;
    };
    const double single = time_pipeline(1);
    const unsigned cores = default_threads();
    const double multi = time_pipeline(0);
    const bool pass = single <= runtime_single_s && multi <= runtime_multi_s;
    return {pass, "m=2000 n=20 w=1000: single-threaded " + fmt(single, 3) + " s (limit " + fmt(runtime_single_s) +
                      "), " + std::to_string(cores) + "-thread " + fmt(multi, 3) + " s (limit " +
                      fmt(runtime_multi_s) + ")"};
}

Outcome criterion10() {
    namespace fs = std::filesystem;
    Rng rng(1010);
    const std::array<int, 4> dims{7, 5, 4, 3};
    std::size_t mismatches = 0, cases = 0;
    for (auto type : {io::NiftiType::uint8, io::NiftiType::int16, io::NiftiType::int32, io::NiftiType::float32,
                      io::NiftiType::float64}) {
        std::vector<double> raw(7 * 5 * 4 * 3);
        for (auto& v : raw) {
            switch (type) {
                case io::NiftiType::uint8: v = static_cast<double>(rng.below(256)); break;
                case io::NiftiType::int16: v = static_cast<double>(rng.below(65536)) - 32768.0; break;
                case io::NiftiType::int32: v = static_cast<double>(rng.below(4294967296ull)) - 2147483648.0; break;
                case io::NiftiType::float32: v = static_cast<double>(static_cast<float>(rng.normal() * 100)); break;
                case io::NiftiType::float64: v = rng.normal() * 1e6; break;
            }
        }
        const auto le = io::parse_nifti(io::encode_nifti(dims, raw, type, std::endian::little));
        const auto be = io::parse_nifti(io::encode_nifti(dims, raw, type, std::endian::big));
        ++cases;
        mismatches += !(le.values == raw && be.values == raw && le.dims == dims && be.dims == dims &&
                        le.header.datatype == type && be.header.datatype == type);
    }
    // TDP map through a file
    const auto dir = fs::temp_directory_path() / "ptdp_acceptance_nifti";
    fs::create_directories(dir);
    std::vector<bool> mask(6 * 5 * 4);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = rng.uniform() < 0.8;
    const auto g = build_geometry({6, 5, 4}, mask);
    std::vector<double> stat(g.size());
    for (auto& v : stat) v = rng.normal() * 2;
    ClusterReport report{1.0, 26, {}};
    for (const auto& sub : threshold_clusters(stat, g, 1.0, 6)) {
        const std::size_t lb = rng.below(sub.size() + 1);
        report.clusters.push_back({report.clusters.size() + 1, sub, TdpResult{lb, sub.size(), 1}, {}, 0, 0});
    }
    const auto expected = tdp_map(report, g.size());
    const auto path = (dir / "tdp.nii").string();
    io::write_tdp_map(report, g, path, io::MapFormat::nifti);
    const auto back = io::read_nifti(path);
    const auto values = io::map_from_volume(back, g);
    std::size_t map_mismatch = back.header.datatype != io::NiftiType::float32;
    for (Index i = 0; i < g.size(); ++i)
        map_mismatch += values[i] != static_cast<double>(static_cast<float>(expected[i]));
    fs::remove_all(dir);
    return {mismatches == 0 && map_mismatch == 0,
            std::to_string(cases) + " datatypes x 2 byte orders, " + std::to_string(mismatches) +
                " decode mismatches; TDP map of " + std::to_string(report.clusters.size()) + " clusters, " +
                std::to_string(map_mismatch) + " float32 mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
        {"oracle equivalence, TDP bound", criterion1},
        {"oracle equivalence, calibration", criterion2},
        {"oracle equivalence, Hommel h", criterion3},
        {"FWER control, two-sample global null", criterion4},
        {"simultaneous coverage", criterion5},
        {"power ordering, permutation vs parametric", criterion6},
        {"family degradation, beta vs simes at rho2=0.8", criterion7},
        {"analytic identities", criterion8},
        {"performance", criterion9},
        {"NIfTI round-trip", criterion10},
    };
    std::vector<std::size_t> selected;
    for (int k = 1; k < argc; ++k) {
        const int c = std::atoi(argv[k]);
        if (c < 1 || c > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion '" << argv[k] << "'\n";
            return 2;
        }
        selected.push_back(static_cast<std::size_t>(c));
    }
    if (selected.empty())
        for (std::size_t c = 1; c <= criteria.size(); ++c) selected.push_back(c);

    int failures = 0;
    for (std::size_t c : selected) {
        const auto& [name, fn] = criteria[c - 1];
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << name << "): " << o.detail << " ["
                  << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
