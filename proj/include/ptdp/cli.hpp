#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ptdp/cluster.hpp"
#include "ptdp/inputs.hpp"
#include "ptdp/io/subset.hpp"
#include "ptdp/io/tdp_map.hpp"
#include "ptdp/pipeline.hpp"
#include "ptdp/service.hpp"
#include "ptdp/simulation.hpp"

namespace ptdp::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
enum ExitCode : int { ok = 0, failure = 1, usage = 2 };

struct AnalysisOptions {
    std::string data, mask, groups, groups_file;
    std::vector<int> dims;
    double alpha = 0.05;
    std::string family = "simes";
    double delta = 0.0;
    std::size_t permutations = 1000;
    std::uint64_t seed = 0;
    std::string alternative = "two_sided";
    std::string pvalues = "student_t";
    unsigned threads = 0;
};

inline void add_analysis_options(CLI::App& cmd, AnalysisOptions& o) {
    cmd.add_option("--data", o.data, "contrast matrix (subjects x voxels, CSV/TSV) or 4D NIfTI stack")
        ->required()
        ->check(CLI::ExistingFile);
    cmd.add_option("--mask,--geometry", o.mask, "NIfTI mask defining the voxel grid")->check(CLI::ExistingFile);
    cmd.add_option("--dims", o.dims, "grid dimensions x,y,z for delimited data without a mask")
        ->delimiter(',')
        ->expected(3);
    cmd.add_option("--alpha", o.alpha, "error level")->capture_default_str();
    cmd.add_option("--family", o.family, "critical family: simes, aorc, hc, beta")->capture_default_str();
    cmd.add_option("--delta", o.delta, "shift for simes/aorc")->capture_default_str();
    cmd.add_option("--permutations,-w", o.permutations, "number of transformations w (identity included)")
        ->capture_default_str();
    cmd.add_option("--seed", o.seed, "random seed")->capture_default_str();
    cmd.add_option("--groups", o.groups, "two-sample group labels, e.g. 1,1,2,2 (switches to label permutation)");
    cmd.add_option("--groups-file", o.groups_file, "file with one group label (1 or 2) per subject")
        ->check(CLI::ExistingFile);
    cmd.add_option("--alternative", o.alternative, "two_sided, greater or less")->capture_default_str();
    cmd.add_option("--pvalues", o.pvalues, "per-transformation p-values: student_t or rank")->capture_default_str();
    cmd.add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

inline SubjectContrasts load(const AnalysisOptions& o) {
    DataSource src;
    src.data_path = o.data;
    src.mask_path = o.mask;
    if (!o.dims.empty()) src.dims = std::array<int, 3>{o.dims[0], o.dims[1], o.dims[2]};
    return load_contrasts(src);
}

inline AnalysisConfig config_of(const AnalysisOptions& o) {
    AnalysisConfig c;
    c.alpha = o.alpha;
    c.family = parse_family(o.family);
    c.delta = o.delta;
    c.w = o.permutations;
    c.seed = o.seed;
    c.alternative = parse_alternative(o.alternative);
    c.pvalue_method = parse_pvalue_method(o.pvalues);
    c.threads = o.threads;
    if (!o.groups.empty() && !o.groups_file.empty()) throw invalid_input("give --groups or --groups-file, not both");
    if (!o.groups.empty()) c.group_labels = parse_group_labels(o.groups);
    if (!o.groups_file.empty()) c.group_labels = parse_group_labels(io::read_file(o.groups_file));
    if (!c.group_labels.empty()) c.scheme = SchemeKind::group_label;
    return c;
}

inline nlohmann::json numbers(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(number_or_string(x));
    return a;
}

inline nlohmann::json error_json(std::string_view kind, const std::string& message, int code) {
    return {{"schema_version", schema_version}, {"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}};
}

/// Parses argv and runs one subcommand. JSON results go to `out`, JSON errors to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Permutation-based true discovery proportion bounds", "ptdp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ptdp 0.1.0");

    AnalysisOptions ao;
    bool with_lambdas = false, with_critical = false;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "calibrate the critical vector and print lambda_alpha");
    add_analysis_options(*calibrate_cmd, ao);
    calibrate_cmd->add_flag("--lambdas", with_lambdas, "include the per-transformation lambdas");
    calibrate_cmd->add_flag("--critical", with_critical, "include the calibrated critical vector");

    std::string subset_path, method = "permutation";
    auto* tdp_cmd = app.add_subcommand("tdp", "lower bound on true discoveries in a voxel subset");
    add_analysis_options(*tdp_cmd, ao);
    tdp_cmd->add_option("--subset", subset_path, "JSON subset file ({\"indices\": [...]} or {\"coords\": [...]})")
        ->required()
        ->check(CLI::ExistingFile);
    tdp_cmd->add_option("--method", method, "permutation or parametric")->capture_default_str();

    double threshold = 0.0;
    int connectivity = 26;
    bool voxels = false;
    std::string map_path, map_format;
    std::optional<std::size_t> drill_cluster;
    std::optional<double> drill_threshold;
    auto* cluster_cmd = app.add_subcommand("cluster", "threshold the statistic map and bound each cluster");
    add_analysis_options(*cluster_cmd, ao);
    cluster_cmd->add_option("--threshold", threshold, "cluster-forming threshold on the statistic")->required();
    cluster_cmd->add_option("--connectivity", connectivity, "6, 18 or 26")->capture_default_str();
    cluster_cmd->add_flag("--voxels", voxels, "include voxel lists");
    cluster_cmd->add_option("--tdp-map", map_path, "write the per-voxel TDP map");
    cluster_cmd->add_option("--map-format", map_format, "nifti or csv (default from the file extension)");
    auto* dc = cluster_cmd->add_option("--drill", drill_cluster, "re-cluster this cluster id at --drill-threshold");
    cluster_cmd->add_option("--drill-threshold", drill_threshold, "higher threshold for --drill")->needs(dc);
    dc->needs("--drill-threshold");

    std::string grid_path, csv_path, summary_path;
    bool records = false;
    auto* simulate_cmd = app.add_subcommand("simulate", "Monte-Carlo power grid");
    simulate_cmd->add_option("--grid", grid_path, "grid JSON")->required()->check(CLI::ExistingFile);
    simulate_cmd->add_option("--out", csv_path, "results CSV");
    simulate_cmd->add_option("--summary", summary_path, "also write the JSON summary to this file");
    simulate_cmd->add_flag("--records", records, "include per-replicate records in the JSON summary");

    std::string spec_path;
    auto* fwer_cmd = app.add_subcommand("validate-fwer", "empirical FWER under the global null");
    fwer_cmd->add_option("--spec", spec_path, "simulation spec JSON")->required()->check(CLI::ExistingFile);
    fwer_cmd->add_option("--out", csv_path, "results CSV");
    fwer_cmd->add_flag("--records", records, "include per-replicate records");

    std::string bind = "127.0.0.1:8080", data_dir;
    std::size_t max_sessions = 64;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP session service");
    serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();
    serve_cmd->add_option("--data-dir", data_dir, "directory for JSON session snapshots");
    serve_cmd->add_option("--max-sessions", max_sessions, "maximum live sessions")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << error_json("usage", e.what(), usage).dump() << '\n';
        return usage;
    }

    try {
        if (calibrate_cmd->parsed()) {
            const auto a = analyze(load(ao), config_of(ao));
            const auto& c = a.calibration;
            nlohmann::json j{{"schema_version", schema_version}, {"lambda_alpha", c.lambda_alpha},
                             {"alpha", c.alpha},          {"family", to_string(c.family.kind)},
                             {"delta", c.family.delta},   {"w", a.config.w},
                             {"seed", a.config.seed},     {"order_statistic", c.order_statistic},
                             {"pvalues", to_string(a.config.pvalue_method)}, {"m", a.observed_p.size()},
                             {"warnings", c.warnings}};
            if (with_lambdas) j["per_permutation_lambdas"] = c.per_permutation_lambdas;
            if (with_critical) j["critical_vector"] = numbers(c.critical_vector);
            out << j.dump(2) << '\n';
        } else if (tdp_cmd->parsed()) {
            if (method != "permutation" && method != "parametric") throw invalid_input("--method must be permutation or parametric");
            auto data = load(ao);
            const auto subset = io::read_subset(subset_path, data.voxels(), &*data.geometry);
            const auto a = analyze(data, config_of(ao));
            TdpResult r;
            if (method == "parametric") {
                const auto b = parametric_baseline(a);
                r = tdp_lower_bound(subset, b.p, b.critical);
            } else {
                r = tdp_lower_bound(subset, a.observed_p, a.critical);
            }
            auto j = to_json(r);
            j["schema_version"] = schema_version;
            j["method"] = method;
            j["lambda_alpha"] = a.calibration.lambda_alpha;
            out << j.dump(2) << '\n';
        } else if (cluster_cmd->parsed()) {
            check_connectivity(connectivity);
            if (drill_threshold && !(*drill_threshold > threshold))
                throw invalid_input("--drill-threshold must exceed --threshold");
            auto data = load(ao);
            const auto& g = *data.geometry;
            const auto a = analyze(data, config_of(ao));
            auto subsets = threshold_clusters(a.observed_stat, g, threshold, connectivity);
            auto report = build_report(subsets, a.observed_p, a.critical, a.observed_stat, g, threshold, connectivity);
            nlohmann::json parent;
            if (drill_cluster) {
                if (*drill_cluster < 1 || *drill_cluster > subsets.size())
                    throw invalid_input("no cluster " + std::to_string(*drill_cluster) + " at threshold " +
                                        io::format_number(threshold));
                parent = {{"threshold", threshold}, {"cluster_id", *drill_cluster},
                          {"size", subsets[*drill_cluster - 1].size()}};
                auto sub = drill_down(subsets[*drill_cluster - 1], a.observed_stat, g, *drill_threshold, connectivity);
                report = build_report(sub, a.observed_p, a.critical, a.observed_stat, g, *drill_threshold, connectivity);
            }
            if (!map_path.empty()) {
                const auto fmt = !map_format.empty() ? io::parse_map_format(map_format)
                                 : has_nifti_extension(map_path) ? io::MapFormat::nifti
                                                                 : io::MapFormat::csv;
                io::write_tdp_map(report, g, map_path, fmt);
            }
            auto j = to_json(report, &g, voxels);
            j["lambda_alpha"] = a.calibration.lambda_alpha;
            if (drill_cluster) j["parent"] = parent;
            out << j.dump(2) << '\n';
        } else if (simulate_cmd->parsed()) {
            const auto grid = grid_from_json(nlohmann::json::parse(io::read_file(grid_path)));
            const auto results = run_power_grid(grid);
            if (!csv_path.empty()) io::write_file(csv_path, power_grid_csv(results));
            nlohmann::json points = nlohmann::json::array();
            for (const auto& r : results) points.push_back(to_json(r, records));
            nlohmann::json j{{"schema_version", schema_version}, {"points", points}};
            if (!summary_path.empty()) io::write_file(summary_path, j.dump(2));
            out << j.dump(2) << '\n';
        } else if (fwer_cmd->parsed()) {
            SimulationSpec base;
            base.design = Design::two_sample;
            base.n = 40;
            base.nu = 1.0;
            const auto spec = spec_from_json(nlohmann::json::parse(io::read_file(spec_path)), base);
            const auto r = run_fwer_validation(spec);
            if (!csv_path.empty()) io::write_file(csv_path, power_grid_csv({r}));
            auto j = to_json(r, records);
            const double bound = j["fwer_bound"].get<double>();
            j["permutation_within_bound"] = r.permutation.fwer <= bound;
            j["parametric_within_bound"] = r.parametric.fwer <= bound;
            out << j.dump(2) << '\n';
        } else if (serve_cmd->parsed()) {
            const auto [host, port] = parse_bind(bind);
            Service service(StoreOptions{data_dir, max_sessions});
            httplib::Server srv;
            service.mount(srv);
            if (!srv.bind_to_port(host, port)) {
                err << error_json("runtime", "cannot bind " + bind, failure).dump() << '\n';
                return failure;
            }
            out << nlohmann::json{{"schema_version", schema_version}, {"listening", bind}}.dump() << std::endl;
            srv.listen_after_bind();
        }
    } catch (const io::file_error& e) {
        err << error_json("file", e.what(), usage).dump() << '\n';
        return usage;
    } catch (const invalid_input& e) {
        err << error_json("input", e.what(), usage).dump() << '\n';
        return usage;
    } catch (const nlohmann::json::exception& e) {
        err << error_json("input", e.what(), usage).dump() << '\n';
        return usage;
    } catch (const std::exception& e) {
        err << error_json("runtime", e.what(), failure).dump() << '\n';
        return failure;
    }
    return ok;
}

}  // namespace ptdp::cli
