#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "attnflow/analysis.hpp"
#include "attnflow/dynamics.hpp"
#include "attnflow/integrate.hpp"

namespace attnflow {

inline constexpr const char* kVersion = "attnflow 0.1.0";

/// Malformed or out-of-range configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Shortest text that round-trips the double exactly (17 significant digits).
std::string format_double(double v);

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j, const std::string& field);

nlohmann::json model_to_json(const ModelSpec& m);
/// `beta` and `variant` are required; everything else defaults.
ModelSpec model_from_json(const nlohmann::json& j);

nlohmann::json integrator_to_json(const IntegratorConfig& c);
/// Missing keys keep the values already in `base`.
IntegratorConfig integrator_from_json(const nlohmann::json& j, IntegratorConfig base = {});

/// Rows `t,particle,coord0..coord{d-1}`; angle states use a single coordinate.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

struct TrajectoryData {
    std::vector<double> times;
    std::vector<Mat> states;
};
TrajectoryData read_trajectory_csv(const std::filesystem::path& path);

/// Rows `t,energy,dissipation`; dissipation is NaN where it is not defined.
void write_energy_csv(const std::filesystem::path& path, const Trajectory& traj);
void write_cluster_timeline_csv(const std::filesystem::path& path, const std::vector<ClusterSummary>& timeline);
void write_phase_grid_csv(const std::filesystem::path& path, const PhaseGrid& grid);
void write_curve_csv(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& curve);
void write_scalar_curve_csv(const std::filesystem::path& path, const ScalarCurve& curve, const std::string& value_name);
void write_histogram_csv(const std::filesystem::path& path, const Histogram& h, bool density);

struct RunManifest {
    std::string command_line;
    nlohmann::json config;
    std::uint64_t master_seed = 0;
    std::string version = kVersion;
    double wall_time_s = 0.0;
    std::vector<std::string> outputs;
    std::map<std::string, bool> invariants;

    nlohmann::json to_json() const;
};

/// Writes to a temporary sibling then renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

}  // namespace attnflow
