#include "attnflow/io.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "attnflow/energy.hpp"

namespace attnflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json matrix_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat matrix_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(field, "expected a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
    if (cols == 0) {
        throw ConfigError(field, "expected rows to be non-empty arrays");
    }
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError(field, "row " + std::to_string(i) + " has the wrong length");
        }
        for (Eigen::Index k = 0; k < cols; ++k) {
            const json& v = row[static_cast<std::size_t>(k)];
            if (!v.is_number()) {
                throw ConfigError(field, "entries must be numbers");
            }
            m(i, k) = v.get<double>();
        }
    }
    return m;
}

namespace {

template <class T>
T get_field(const json& j, const char* key, const std::string& prefix) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(prefix + key, e.what());
    }
}

std::string lower(std::string s) {
    for (auto& ch : s) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return s;
}

}  // namespace

json model_to_json(const ModelSpec& m) {
    json j;
    j["variant"] = to_string(m.variant);
    j["beta"] = m.beta;
    if (m.Q) j["Q"] = matrix_to_json(*m.Q);
    if (m.K) j["K"] = matrix_to_json(*m.K);
    if (m.V) j["V"] = matrix_to_json(*m.V);
    if (!m.heads.empty()) {
        json heads = json::array();
        for (const auto& h : m.heads) {
            heads.push_back({{"Q", matrix_to_json(h.Q)}, {"K", matrix_to_json(h.K)}, {"V", matrix_to_json(h.V)}});
        }
        j["heads"] = heads;
    }
    j["coupling"] = m.coupling == Coupling::ExpCos ? "exp_cos" : "sine";
    j["Kc"] = m.Kc;
    if (m.omega) {
        j["omega"] = std::vector<double>(m.omega->data(), m.omega->data() + m.omega->size());
    }
    j["value_sign"] = m.value_sign;
    j["noise_sigma"] = m.noise_sigma;
    j["tie_rule"] = lower(to_string(m.tie_rule));
    j["tie_tol"] = m.tie_tol;
    return j;
}

ModelSpec model_from_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("model", "expected an object");
    }
    const std::string p = "model.";
    ModelSpec m;
    if (!j.contains("variant")) {
        throw ConfigError(p + "variant", "missing required field");
    }
    try {
        m.variant = parse_variant(get_field<std::string>(j, "variant", p));
    } catch (const DomainError& e) {
        throw ConfigError(p + "variant", e.what());
    }
    if (!j.contains("beta")) {
        throw ConfigError(p + "beta", "missing required field");
    }
    m.beta = get_field<double>(j, "beta", p);
    if (!(m.beta >= 0.0) || !std::isfinite(m.beta)) {
        throw ConfigError(p + "beta", "must be a finite number >= 0");
    }
    for (const char* key : {"Q", "K", "V"}) {
        if (j.contains(key)) {
            Mat mat = matrix_from_json(j.at(key), p + key);
            (key[0] == 'Q' ? m.Q : key[0] == 'K' ? m.K : m.V) = std::move(mat);
        }
    }
    if (j.contains("heads")) {
        const json& hs = j.at("heads");
        if (!hs.is_array()) {
            throw ConfigError(p + "heads", "expected an array of {Q,K,V} objects");
        }
        for (std::size_t h = 0; h < hs.size(); ++h) {
            const std::string hp = p + "heads[" + std::to_string(h) + "].";
            for (const char* key : {"Q", "K", "V"}) {
                if (!hs[h].contains(key)) {
                    throw ConfigError(hp + key, "missing required field");
                }
            }
            m.heads.push_back({matrix_from_json(hs[h].at("Q"), hp + "Q"), matrix_from_json(hs[h].at("K"), hp + "K"),
                               matrix_from_json(hs[h].at("V"), hp + "V")});
        }
    }
    if (j.contains("coupling")) {
        const std::string c = lower(get_field<std::string>(j, "coupling", p));
        if (c == "exp_cos") {
            m.coupling = Coupling::ExpCos;
        } else if (c == "sine") {
            m.coupling = Coupling::Sine;
        } else {
            throw ConfigError(p + "coupling", "expected exp_cos or sine");
        }
    }
    if (j.contains("Kc")) m.Kc = get_field<double>(j, "Kc", p);
    if (j.contains("omega")) {
        const auto w = get_field<std::vector<double>>(j, "omega", p);
        m.omega = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    }
    if (j.contains("value_sign")) {
        m.value_sign = get_field<int>(j, "value_sign", p);
        if (m.value_sign != 1 && m.value_sign != -1) {
            throw ConfigError(p + "value_sign", "must be +1 or -1");
        }
    }
    if (j.contains("noise_sigma")) {
        m.noise_sigma = get_field<double>(j, "noise_sigma", p);
        if (!(m.noise_sigma >= 0.0)) {
            throw ConfigError(p + "noise_sigma", "must be >= 0");
        }
    }
    if (j.contains("tie_rule")) {
        const std::string r = lower(get_field<std::string>(j, "tie_rule", p));
        if (r == "average") {
            m.tie_rule = TieRule::Average;
        } else if (r == "lowest_index") {
            m.tie_rule = TieRule::LowestIndex;
        } else {
            throw ConfigError(p + "tie_rule", "expected average or lowest_index");
        }
    }
    if (j.contains("tie_tol")) m.tie_tol = get_field<double>(j, "tie_tol", p);
    return m;
}

json integrator_to_json(const IntegratorConfig& c) {
    return {{"scheme", c.scheme == Scheme::RK4Retract ? "rk4" : "euler"},
            {"dt", c.dt},
            {"t_end", c.t_end},
            {"sample_every", c.sample_every},
            {"retraction", c.retraction == Retraction::ExpMap ? "exp" : "normalize"},
            {"noise_sigma", c.noise_sigma},
            {"seed", c.seed},
            {"max_steps", c.max_steps},
            {"stop_tol", c.stop_tol}};
}

IntegratorConfig integrator_from_json(const json& j, IntegratorConfig c) {
    if (!j.is_object()) {
        throw ConfigError("integrator", "expected an object");
    }
    const std::string p = "integrator.";
    if (j.contains("scheme")) {
        const std::string s = lower(get_field<std::string>(j, "scheme", p));
        if (s == "rk4") {
            c.scheme = Scheme::RK4Retract;
        } else if (s == "euler") {
            c.scheme = Scheme::EulerRetract;
        } else {
            throw ConfigError(p + "scheme", "expected rk4 or euler");
        }
    }
    if (j.contains("retraction")) {
        const std::string s = lower(get_field<std::string>(j, "retraction", p));
        if (s == "exp") {
            c.retraction = Retraction::ExpMap;
        } else if (s == "normalize") {
            c.retraction = Retraction::Normalize;
        } else {
            throw ConfigError(p + "retraction", "expected exp or normalize");
        }
    }
    if (j.contains("dt")) c.dt = get_field<double>(j, "dt", p);
    if (j.contains("t_end")) c.t_end = get_field<double>(j, "t_end", p);
    if (j.contains("sample_every")) c.sample_every = get_field<double>(j, "sample_every", p);
    if (j.contains("noise_sigma")) c.noise_sigma = get_field<double>(j, "noise_sigma", p);
    if (j.contains("seed")) c.seed = get_field<std::uint64_t>(j, "seed", p);
    if (j.contains("max_steps")) c.max_steps = get_field<long>(j, "max_steps", p);
    if (j.contains("stop_tol")) c.stop_tol = get_field<double>(j, "stop_tol", p);
    try {
        c.validate();
    } catch (const DomainError& e) {
        throw ConfigError("integrator", e.what());
    }
    return c;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << text;
        if (!out) {
            throw std::runtime_error("failed writing " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj) {
    std::ostringstream out;
    const Eigen::Index d = traj.states.empty() ? 0 : traj.states.front().cols();
    out << "t,particle";
    for (Eigen::Index k = 0; k < d; ++k) {
        out << ",coord" << k;
    }
    out << '\n';
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        const Mat& x = traj.states[s];
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            out << format_double(traj.times[s]) << ',' << i;
            for (Eigen::Index k = 0; k < x.cols(); ++k) {
                out << ',' << format_double(x(i, k));
            }
            out << '\n';
        }
    }
    write_text_atomic(path, out.str());
}

TrajectoryData read_trajectory_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("t,particle", 0) != 0) {
        throw std::runtime_error(path.string() + ": missing trajectory header");
    }
    const auto d = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') - 1);
    TrajectoryData data;
    std::vector<std::vector<double>> rows;
    double current_t = std::numeric_limits<double>::quiet_NaN();
    auto flush = [&] {
        if (rows.empty()) {
            return;
        }
        Mat x(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (Eigen::Index k = 0; k < d; ++k) {
                x(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
            }
        }
        data.times.push_back(current_t);
        data.states.push_back(std::move(x));
        rows.clear();
    };
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<double> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            fields.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (static_cast<Eigen::Index>(fields.size()) != d + 2) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
        }
        const bool new_block = rows.empty() || fields[0] != current_t || fields[1] == 0.0;
        if (new_block) {
            flush();
            current_t = fields[0];
        }
        rows.emplace_back(fields.begin() + 2, fields.end());
    }
    flush();
    return data;
}

void write_energy_csv(const fs::path& path, const Trajectory& traj) {
    const bool has_dissipation = traj.kind == StateKind::Sphere && traj.model.beta > 0.0 &&
                                 traj.model.is_isotropic() && traj.model.value_sign > 0 &&
                                 (traj.model.variant == Variant::SA || traj.model.variant == Variant::USA) &&
                                 traj.states.size() == traj.times.size();
    std::ostringstream out;
    out << "t,energy,dissipation\n";
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
        double diss = std::numeric_limits<double>::quiet_NaN();
        if (has_dissipation) {
            diss = dissipation_rate(Configuration::normalized(traj.states[s]), traj.model.beta, traj.model.variant);
        }
        out << format_double(traj.times[s]) << ',' << format_double(traj.energies[s]) << ',' << format_double(diss)
            << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_cluster_timeline_csv(const fs::path& path, const std::vector<ClusterSummary>& timeline) {
    std::ostringstream out;
    out << "t,count,max_intra_angle,residual,labels\n";
    for (const auto& s : timeline) {
        out << format_double(s.time) << ',' << s.count << ',' << format_double(s.max_intra_angle) << ','
            << format_double(s.residual) << ',';
        for (std::size_t i = 0; i < s.labels.size(); ++i) {
            out << (i ? " " : "") << s.labels[i];
        }
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_phase_grid_csv(const fs::path& path, const PhaseGrid& grid) {
    std::ostringstream out;
    out << "beta,t,prob,reps\n";
    for (std::size_t b = 0; b < grid.beta_grid.size(); ++b) {
        for (std::size_t k = 0; k < grid.t_grid.size(); ++k) {
            out << format_double(grid.beta_grid[b]) << ',' << format_double(grid.t_grid[k]) << ','
                << format_double(grid.prob(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k))) << ','
                << grid.reps << '\n';
        }
    }
    write_text_atomic(path, out.str());
}

void write_curve_csv(const fs::path& path, const std::vector<std::pair<double, double>>& curve) {
    std::ostringstream out;
    out << "beta,t_star\n";
    for (const auto& [beta, t] : curve) {
        out << format_double(beta) << ',' << format_double(t) << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_scalar_curve_csv(const fs::path& path, const ScalarCurve& curve, const std::string& value_name) {
    std::ostringstream out;
    out << "t," << value_name << '\n';
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        out << format_double(curve.times[k]) << ',' << format_double(curve.values[k]) << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_histogram_csv(const fs::path& path, const Histogram& h, bool density) {
    std::ostringstream out;
    out << "bin_lo,bin_hi," << (density ? "density" : "count") << '\n';
    for (std::size_t b = 0; b < h.bin_lo.size(); ++b) {
        out << format_double(h.bin_lo[b]) << ',' << format_double(h.bin_hi[b]) << ',';
        if (density) {
            out << format_double(h.density[b]);
        } else {
            out << h.counts[b];
        }
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

json RunManifest::to_json() const {
    return {{"command_line", command_line}, {"config", config},         {"master_seed", master_seed},
            {"version", version},           {"wall_time_s", wall_time_s}, {"outputs", outputs},
            {"invariants", invariants}};
}

void write_manifest(const fs::path& path, const RunManifest& m) { write_text_atomic(path, m.to_json().dump(2) + "\n"); }

}  // namespace attnflow
