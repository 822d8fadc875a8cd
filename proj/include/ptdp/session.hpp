#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptdp/cluster.hpp"
#include "ptdp/inputs.hpp"
#include "ptdp/io/subset.hpp"
#include "ptdp/pipeline.hpp"

namespace ptdp {

/// Status code plus JSON body; the HTTP layer only forwards these.
struct Reply {
    int status = 200;
    nlohmann::json body;
};

inline Reply error_reply(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
    extra["schema_version"] = schema_version;
    extra["error"] = {{"status", status}, {"message", message}};
    return {status, std::move(extra)};
}

/// Parsed POST /sessions body.
struct SessionRequest {
    DataSource source;
    AnalysisConfig config;
    bool async = false;
};

inline SessionRequest session_request_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw invalid_input("session request must be a JSON object");
    SessionRequest r;
    auto& c = r.config;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        if (k == "data") r.source.data_path = v.get<std::string>();
        else if (k == "matrix") r.source.matrix = matrix_from_json(v);
        else if (k == "mask") r.source.mask_path = v.get<std::string>();
        else if (k == "dims") r.source.dims = v.get<std::array<int, 3>>();
        else if (k == "alpha") c.alpha = v.get<double>();
        else if (k == "family") c.family = parse_family(v.get<std::string>());
        else if (k == "delta") c.delta = v.get<double>();
        else if (k == "w" || k == "permutations") c.w = v.get<std::size_t>();
        else if (k == "seed") c.seed = v.get<std::uint64_t>();
        else if (k == "alternative") c.alternative = parse_alternative(v.get<std::string>());
        else if (k == "pvalues") c.pvalue_method = parse_pvalue_method(v.get<std::string>());
        else if (k == "threads") c.threads = v.get<unsigned>();
        else if (k == "async") r.async = v.get<bool>();
        else if (k == "groups") {
            c.group_labels = v.is_string() ? parse_group_labels(v.get<std::string>()) : v.get<std::vector<int>>();
            c.scheme = SchemeKind::group_label;
        } else throw invalid_input("unknown session field '" + k + "'");
    }
    if (r.source.data_path.empty() && !r.source.matrix) throw invalid_input("session needs \"data\" or \"matrix\"");
    return r;
}

/// One step of the drill tree. Roots are threshold reports over the whole
/// mask (or an explicit voxel list); children re-cluster one parent cluster
/// at a strictly higher threshold.
struct DrillNode {
    std::size_t id = 0;
    std::optional<std::size_t> parent;
    std::optional<std::size_t> cluster_id;      // cluster of the parent report that was drilled
    std::optional<std::vector<Index>> voxels;   // explicit voxel list instead of a cluster
    double threshold = 0.0;
    int connectivity = 26;
    std::vector<VoxelSubset> subsets;
};

class Session {
public:
    enum class State { computing, ready, failed };

    Session(std::string id, nlohmann::json request) : id_(std::move(id)), request_(std::move(request)) {}

    const std::string& id() const noexcept { return id_; }
    const nlohmann::json& request() const noexcept { return request_; }
    State state() const noexcept { return state_.load(std::memory_order_acquire); }
    double progress() const noexcept { return progress_.load(std::memory_order_relaxed); }
    const std::string& error() const noexcept { return error_; }

    // Valid once state() == ready; never modified afterwards.
    const Analysis& analysis() const noexcept { return analysis_; }
    const VolumeGeometry& geometry() const noexcept { return geometry_; }

    /// Runs the whole analysis. Called once, by the thread that owns construction.
    void compute(const SessionRequest& req) {
        try {
            auto data = load_contrasts(req.source);
            geometry_ = *data.geometry;
            analysis_ = analyze(data, req.config, [this](double f) { progress_.store(f, std::memory_order_relaxed); });
            state_.store(State::ready, std::memory_order_release);
        } catch (const std::exception& e) {
            error_ = e.what();
            state_.store(State::failed, std::memory_order_release);
        }
    }

    Reply summary() const {
        nlohmann::json j{{"schema_version", schema_version}, {"id", id_}};
        switch (state()) {
            case State::computing:
                j["status"] = "computing";
                j["progress"] = progress();
                break;
            case State::failed:
                j["status"] = "failed";
                j["error"] = error_;
                break;
            case State::ready: {
                const auto& a = analysis_;
                j["status"] = "ready";
                j["progress"] = 1.0;
                j["lambda_alpha"] = a.calibration.lambda_alpha;
                j["alpha"] = a.config.alpha;
                j["family"] = to_string(a.config.family);
                j["delta"] = a.config.delta;
                j["w"] = a.config.w;
                j["seed"] = a.config.seed;
                j["pvalues"] = to_string(a.config.pvalue_method);
                j["order_statistic"] = a.calibration.order_statistic;
                j["warnings"] = a.calibration.warnings;
                j["m"] = a.observed_p.size();
                j["dims"] = geometry_.dims();
                break;
            }
        }
        return {200, std::move(j)};
    }

    /// 409 while computing, 422 after a failed computation, nullopt when ready.
    std::optional<Reply> not_ready() const {
        switch (state()) {
            case State::computing:
                return error_reply(409, "session is still computing", {{"status", "computing"}, {"progress", progress()}});
            case State::failed:
                return error_reply(422, "session computation failed: " + error_, {{"status", "failed"}});
            case State::ready: break;
        }
        return std::nullopt;
    }

    ClusterReport report_for(const std::vector<VoxelSubset>& subsets, double threshold, int connectivity) const {
        return build_report(subsets, analysis_.observed_p, analysis_.critical, analysis_.observed_stat, geometry_,
                            threshold, connectivity);
    }

    Reply clusters(double threshold, int connectivity, bool voxels) const {
        if (auto r = not_ready()) return *r;
        auto subsets = threshold_clusters(analysis_.observed_stat, geometry_, threshold, connectivity);
        return {200, to_json(report_for(subsets, threshold, connectivity), &geometry_, voxels)};
    }

    Reply tdp(const nlohmann::json& body) const {
        if (auto r = not_ready()) return *r;
        const auto subset = io::parse_subset(body, geometry_.size(), &geometry_);
        const bool parametric = body.is_object() && body.value("method", "permutation") == "parametric";
        nlohmann::json j;
        if (parametric) {
            const auto base = parametric_baseline(analysis_);
            j = to_json(tdp_lower_bound(subset, base.p, base.critical));
            j["method"] = "parametric";
        } else {
            j = to_json(tdp_lower_bound(subset, analysis_.observed_p, analysis_.critical));
            j["method"] = "permutation";
        }
        j["schema_version"] = schema_version;
        return {200, std::move(j)};
    }

    Reply drill(const nlohmann::json& body);
    Reply history() const;
    Reply slice(const std::string& axis, long index, const std::string& layer, std::optional<double> threshold,
                int connectivity, std::optional<std::size_t> node) const;

    /// Snapshot for the data directory: the request plus the drill steps, enough to rebuild everything.
    nlohmann::json snapshot() const {
        std::lock_guard lock(history_mutex_);
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : nodes_) {
            nlohmann::json x{{"id", n.id}, {"threshold", n.threshold}, {"connectivity", n.connectivity}};
            x["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
            x["cluster_id"] = n.cluster_id ? nlohmann::json(*n.cluster_id) : nlohmann::json(nullptr);
            if (n.voxels) x["voxels"] = *n.voxels;
            nodes.push_back(std::move(x));
        }
        nlohmann::json j{{"schema_version", schema_version}, {"id", id_}, {"request", request_}, {"nodes", nodes}};
        if (state() == State::ready) j["lambda_alpha"] = analysis_.calibration.lambda_alpha;
        return j;
    }

    /// Replays drill steps from a snapshot. Needs a ready session.
    void restore_history(const nlohmann::json& nodes) {
        std::lock_guard lock(history_mutex_);
        for (const auto& x : nodes) {
            DrillNode n;
            n.id = nodes_.size();
            if (!x.at("parent").is_null()) n.parent = x.at("parent").get<std::size_t>();
            if (!x.at("cluster_id").is_null()) n.cluster_id = x.at("cluster_id").get<std::size_t>();
            if (x.contains("voxels")) n.voxels = x.at("voxels").get<std::vector<Index>>();
            n.threshold = x.at("threshold").get<double>();
            n.connectivity = x.at("connectivity").get<int>();
            if (n.parent && *n.parent >= nodes_.size()) throw invalid_input("snapshot drill tree is out of order");
            n.subsets = subsets_of(n);
            nodes_.push_back(std::move(n));
        }
    }

private:
    // Clusters of a node, recomputed from its definition.
    std::vector<VoxelSubset> subsets_of(const DrillNode& n) const {
        const auto& stat = analysis_.observed_stat;
        if (n.voxels) return drill_down(VoxelSubset::from_indices(*n.voxels, geometry_.size()), stat, geometry_,
                                        n.threshold, n.connectivity);
        if (n.parent) {
            const auto& p = nodes_.at(*n.parent);
            if (!n.cluster_id || *n.cluster_id < 1 || *n.cluster_id > p.subsets.size())
                throw invalid_input("drill step refers to a missing cluster");
            return drill_down(p.subsets[*n.cluster_id - 1], stat, geometry_, n.threshold, n.connectivity);
        }
        return threshold_clusters(stat, geometry_, n.threshold, n.connectivity);
    }

    // Existing node with the same definition, or a new one. Caller holds the lock.
    const DrillNode& find_or_add(DrillNode n) {
        for (const auto& x : nodes_)
            if (x.parent == n.parent && x.cluster_id == n.cluster_id && x.voxels == n.voxels &&
                x.threshold == n.threshold && x.connectivity == n.connectivity)
                return x;
        n.id = nodes_.size();
        n.subsets = subsets_of(n);
        nodes_.push_back(std::move(n));
        return nodes_.back();
    }

    nlohmann::json node_json(const DrillNode& n) const {
        nlohmann::json j{{"node", n.id}, {"threshold", n.threshold}, {"connectivity", n.connectivity},
                         {"clusters", n.subsets.size()}};
        j["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
        j["cluster_id"] = n.cluster_id ? nlohmann::json(*n.cluster_id) : nlohmann::json(nullptr);
        if (n.voxels) j["voxel_count"] = n.voxels->size();
        nlohmann::json children = nlohmann::json::array();
        for (const auto& c : nodes_)
            if (c.parent == n.id) children.push_back(node_json(c));
        j["children"] = std::move(children);
        return j;
    }

    std::string id_;
    nlohmann::json request_;
    std::atomic<State> state_{State::computing};
    std::atomic<double> progress_{0.0};
    std::string error_;
    Analysis analysis_;
    VolumeGeometry geometry_;

    mutable std::mutex history_mutex_;
    std::vector<DrillNode> nodes_;  // ids are positions; parents precede children
};

namespace detail {

inline std::optional<double> json_threshold(const nlohmann::json& body, const char* key) {
    if (!body.contains(key)) return std::nullopt;
    const auto& v = body.at(key);
    if (!v.is_number() || !std::isfinite(v.get<double>()))
        throw invalid_input(std::string(key) + " must be a finite number");
    return v.get<double>();
}

}  // namespace detail

/// Body: {"threshold": z, then one of
///   "cluster_id": k with "node": parent node id or "parent_threshold": z0 (a root report),
///   "voxels": [...] or "coords": [...] (optionally under "node")},
/// plus optional "connectivity" and "voxel_lists".
inline Reply Session::drill(const nlohmann::json& body) {
    if (auto r = not_ready()) return *r;
    if (!body.is_object()) return error_reply(400, "drill request must be a JSON object");
    std::optional<double> threshold;
    std::optional<double> parent_threshold;
    try {
        threshold = detail::json_threshold(body, "threshold");
        parent_threshold = detail::json_threshold(body, "parent_threshold");
    } catch (const invalid_input& e) {
        return error_reply(422, e.what());
    }
    if (!threshold) return error_reply(422, "drill needs a threshold");

    std::lock_guard lock(history_mutex_);
    std::optional<std::size_t> parent;
    if (body.contains("node")) {
        if (!body.at("node").is_number_unsigned() || body.at("node").get<std::size_t>() >= nodes_.size())
            return error_reply(404, "unknown drill node");
        parent = body.at("node").get<std::size_t>();
    }
    int connectivity = body.value("connectivity", parent ? nodes_[*parent].connectivity : 26);
    check_connectivity(connectivity);
    const bool voxel_lists = body.value("voxel_lists", false);

    DrillNode n;
    n.threshold = *threshold;
    n.connectivity = connectivity;
    if (body.contains("voxels") || body.contains("coords")) {
        nlohmann::json list = body.contains("voxels") ? nlohmann::json{{"indices", body.at("voxels")}}
                                                      : nlohmann::json{{"coords", body.at("coords")}};
        auto subset = io::parse_subset(list, geometry_.size(), &geometry_);
        if (parent) {
            if (*threshold <= nodes_[*parent].threshold)
                return error_reply(422, "drill threshold must exceed the parent threshold " +
                                            io::format_number(nodes_[*parent].threshold));
            VoxelSubset within;
            for (const auto& s : nodes_[*parent].subsets)
                if (subset.is_subset_of(s)) within = s;
            if (within.empty()) return error_reply(422, "voxel list is not inside one cluster of the parent node");
        }
        n.parent = parent;
        n.voxels = subset.indices();
    } else if (body.contains("cluster_id")) {
        if (!parent) {
            if (!parent_threshold) return error_reply(422, "drill by cluster_id needs \"node\" or \"parent_threshold\"");
            DrillNode root;
            root.threshold = *parent_threshold;
            root.connectivity = connectivity;
            parent = find_or_add(std::move(root)).id;
        }
        const auto& p = nodes_[*parent];
        if (!body.at("cluster_id").is_number_unsigned()) return error_reply(400, "cluster_id must be a positive integer");
        const auto k = body.at("cluster_id").get<std::size_t>();
        if (k < 1 || k > p.subsets.size())
            return error_reply(404, "no cluster " + std::to_string(k) + " in the parent report (" +
                                        std::to_string(p.subsets.size()) + " clusters)");
        if (*threshold <= p.threshold)
            return error_reply(422, "drill threshold must exceed the parent threshold " + io::format_number(p.threshold));
        n.parent = parent;
        n.cluster_id = k;
    } else {
        return error_reply(400, "drill needs \"cluster_id\" or an explicit \"voxels\"/\"coords\" list");
    }
    const auto& node = find_or_add(std::move(n));
    auto j = to_json(report_for(node.subsets, node.threshold, node.connectivity), &geometry_, voxel_lists);
    j["node"] = node.id;
    j["parent"] = node.parent ? nlohmann::json(*node.parent) : nlohmann::json(nullptr);
    j["cluster_id"] = node.cluster_id ? nlohmann::json(*node.cluster_id) : nlohmann::json(nullptr);
    return {200, std::move(j)};
}

inline Reply Session::history() const {
    if (auto r = not_ready()) return *r;
    std::lock_guard lock(history_mutex_);
    nlohmann::json roots = nlohmann::json::array();
    for (const auto& n : nodes_)
        if (!n.parent) roots.push_back(node_json(n));
    return {200, {{"schema_version", schema_version}, {"id", id_}, {"nodes", nodes_.size()}, {"roots", roots}}};
}

/// 2D grid of one axis-aligned slice. Rows run along the slower remaining
/// axis: (y, x) for axis z, (z, x) for axis y, (z, y) for axis x. Voxels
/// outside the mask are null. The tdp layer needs a threshold or a drill node
/// and also returns the cluster label grid.
inline Reply Session::slice(const std::string& axis, long index, const std::string& layer,
                            std::optional<double> threshold, int connectivity, std::optional<std::size_t> node) const {
    if (auto r = not_ready()) return *r;
    int a;
    if (axis == "x" || axis == "0") a = 0;
    else if (axis == "y" || axis == "1") a = 1;
    else if (axis == "z" || axis == "2") a = 2;
    else return error_reply(400, "axis must be x, y or z");
    if (layer != "stat" && layer != "tdp") return error_reply(400, "layer must be stat or tdp");
    const auto& d = geometry_.dims();
    if (index < 0 || index >= d[a])
        return error_reply(400, "slice index out of range [0, " + std::to_string(d[a]) + ")");

    std::vector<double> values;
    std::vector<std::size_t> labels;
    if (layer == "stat") {
        values = analysis_.observed_stat;
    } else {
        ClusterReport report;
        if (node) {
            std::lock_guard lock(history_mutex_);
            if (*node >= nodes_.size()) return error_reply(404, "unknown drill node");
            const auto& n = nodes_[*node];
            report = report_for(n.subsets, n.threshold, n.connectivity);
        } else if (threshold) {
            report = report_for(threshold_clusters(analysis_.observed_stat, geometry_, *threshold, connectivity),
                                *threshold, connectivity);
        } else {
            return error_reply(422, "the tdp layer needs a threshold or a drill node");
        }
        values = tdp_map(report, geometry_.size());
        labels.assign(geometry_.size(), 0);
        for (const auto& c : report.clusters)
            for (Index i : c.subset.indices()) labels[i] = c.id;
    }
    const int row_axis = a == 2 ? 1 : 2, col_axis = a == 0 ? 1 : 0;
    nlohmann::json grid = nlohmann::json::array(), label_grid = nlohmann::json::array();
    for (int r = 0; r < d[row_axis]; ++r) {
        nlohmann::json row = nlohmann::json::array(), lrow = nlohmann::json::array();
        for (int c = 0; c < d[col_axis]; ++c) {
            std::array<int, 3> p{};
            p[a] = static_cast<int>(index);
            p[row_axis] = r;
            p[col_axis] = c;
            const auto i = geometry_.index_of({p[0], p[1], p[2]});
            row.push_back(i ? number_or_string(values[*i]) : nlohmann::json(nullptr));
            if (!labels.empty()) lrow.push_back(i ? labels[*i] : 0);
        }
        grid.push_back(std::move(row));
        if (!labels.empty()) label_grid.push_back(std::move(lrow));
    }
    const char* names = "xyz";
    nlohmann::json j{{"schema_version", schema_version}, {"axis", std::string(1, names[a])}, {"index", index},
                     {"layer", layer}, {"rows_axis", std::string(1, names[row_axis])},
                     {"cols_axis", std::string(1, names[col_axis])}, {"height", d[row_axis]},
                     {"width", d[col_axis]}, {"values", std::move(grid)}};
    if (!labels.empty()) j["labels"] = std::move(label_grid);
    return {200, std::move(j)};
}

struct StoreOptions {
    std::string data_dir;          // write-through JSON snapshots when set
    std::size_t max_sessions = 64;
};

/// In-memory sessions keyed by an opaque id.
class SessionStore {
public:
    explicit SessionStore(StoreOptions opts = {}) : opts_(std::move(opts)) {
        if (!opts_.data_dir.empty()) {
            std::filesystem::create_directories(opts_.data_dir);
            load_snapshots();
        }
    }
    ~SessionStore() {
        std::vector<std::thread> workers;
        {
            std::lock_guard lock(mutex_);
            workers.swap(workers_);
        }
        for (auto& t : workers) t.join();
    }
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    Reply create(const nlohmann::json& body) {
        SessionRequest req;
        try {
            req = session_request_from_json(body);
        } catch (const nlohmann::json::exception& e) {
            return error_reply(400, std::string("malformed session request: ") + e.what());
        } catch (const invalid_input& e) {
            return error_reply(400, e.what());
        }
        std::shared_ptr<Session> s;
        {
            std::lock_guard lock(mutex_);
            if (sessions_.size() >= opts_.max_sessions)
                return error_reply(429, "session limit reached (" + std::to_string(opts_.max_sessions) + ")");
            s = std::make_shared<Session>(new_id(), body);
            sessions_[s->id()] = s;
        }
        if (req.async) {
            std::lock_guard lock(mutex_);
            workers_.emplace_back([this, s, req] {
                s->compute(req);
                persist(*s);
            });
            auto r = s->summary();
            r.status = 202;
            return r;
        }
        s->compute(req);
        if (s->state() == Session::State::failed) {
            remove(s->id());
            return error_reply(422, s->error());
        }
        persist(*s);
        auto r = s->summary();
        r.status = 201;
        return r;
    }

    std::shared_ptr<Session> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    bool remove(const std::string& id) {
        std::lock_guard lock(mutex_);
        if (sessions_.erase(id) == 0) return false;
        if (!opts_.data_dir.empty()) std::filesystem::remove(snapshot_path(id));
        return true;
    }

    std::vector<std::string> ids() const {
        std::lock_guard lock(mutex_);
        std::vector<std::string> out;
        for (const auto& [id, s] : sessions_) out.push_back(id);
        return out;
    }

    /// Writes the session snapshot when a data directory is configured.
    void persist(const Session& s) const {
        if (opts_.data_dir.empty() || s.state() != Session::State::ready) return;
        {
            std::lock_guard lock(mutex_);
            if (!sessions_.count(s.id())) return;  // deleted meanwhile
        }
        const auto path = snapshot_path(s.id());
        const auto tmp = path + ".tmp";
        io::write_file(tmp, s.snapshot().dump(2));
        std::filesystem::rename(tmp, path);
    }

    const StoreOptions& options() const noexcept { return opts_; }

private:
    std::string snapshot_path(const std::string& id) const {
        return (std::filesystem::path(opts_.data_dir) / (id + ".json")).string();
    }

    std::string new_id() {
        static constexpr char hex[] = "0123456789abcdef";
        std::string id;
        do {
            id.clear();
            for (int k = 0; k < 4; ++k) {
                auto v = random_();
                for (int b = 0; b < 8; ++b, v >>= 4) id.push_back(hex[v & 0xf]);
            }
        } while (sessions_.count(id));
        return id;
    }

    // Sessions from an earlier run are recomputed from their requests; drill steps are replayed.
    void load_snapshots() {
        for (const auto& entry : std::filesystem::directory_iterator(opts_.data_dir)) {
            if (entry.path().extension() != ".json") continue;
            try {
                const auto j = nlohmann::json::parse(io::read_file(entry.path().string()));
                auto s = std::make_shared<Session>(j.at("id").get<std::string>(), j.at("request"));
                s->compute(session_request_from_json(j.at("request")));
                if (s->state() != Session::State::ready) continue;
                s->restore_history(j.at("nodes"));
                sessions_[s->id()] = s;
            } catch (const std::exception&) {
                // unreadable snapshots are skipped, not fatal
            }
        }
    }

    StoreOptions opts_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::vector<std::thread> workers_;
    std::random_device random_;
};

}  // namespace ptdp
