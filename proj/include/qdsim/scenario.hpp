#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdsim/drive.hpp"
#include "qdsim/dynamics.hpp"
#include "qdsim/kernel.hpp"
#include "qdsim/material.hpp"
#include "qdsim/observables.hpp"

namespace qdsim {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* output_dir_env = "QDSIM_OUTPUT_DIR";

enum class Mode { ExcitonOnly, CavityFull, CavityClosure, KernelOnly };

const char* to_string(Mode mode);

enum class InitialCondition { Ground, Excited };

struct GridParams {
    double t_max_ps = 100.0;
    double dt_ps = 1e-3;
    double snapshot_stride_ps = 0.1;
};

struct SweepSpec {
    std::string axis;
    std::vector<double> values;
};

struct ConvergenceSpec {
    int extra_photons = 0;     // rerun with n_trunc + extra_photons when > 0
    bool step_halving = false;  // rerun at dt / 2
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::string preset;
    Mode mode = Mode::CavityFull;
    MaterialParams material;
    bool phonons = true;
    PulseParams pulse;
    bool center_from_width = true;  // t0 = 3a unless given explicitly
    SystemParams system;
    GridParams grid;
    InitialCondition initial = InitialCondition::Ground;
    std::string output_dir = "out";
    std::vector<std::string> paper_unspecified;
    std::optional<SweepSpec> sweep;
    ConvergenceSpec convergence;

    SpectralModel spectral_model() const;  // zero prefactor with phonons off

    // Throws Error(Validation) naming the offending field.
    void validate() const;
};

// Throws Error(Validation) on unknown keys or malformed values.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ScenarioConfig& config);

// Stable 64-bit FNV-1a digest of the resolved config, hex encoded.
std::string config_hash(const ScenarioConfig& config);

struct ValidationReport {
    bool valid = true;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    std::vector<std::string> info;  // resolved unit conversions
};

ValidationReport check(const nlohmann::json& doc);

// Shares kernel tables between runs whose bath and grid match; optionally
// persisted as CSV under a directory.
class KernelCache {
public:
    explicit KernelCache(std::optional<std::filesystem::path> directory = std::nullopt);

    std::shared_ptr<const KernelTable> get(const SpectralModel& model, double temperature_K, double t_max,
                                           double dt);

private:
    std::optional<std::filesystem::path> directory_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const KernelTable>> tables_;
};

struct RunManifest {
    nlohmann::json config;
    std::string config_hash;
    std::string status = "ok";  // "failed" when an invariant tolerance is exceeded
    double wall_time_s = 0.0;
    InvariantReport invariants;
    bool excitation_conserving = false;
    std::map<std::string, double> convergence;
    std::map<std::string, double> reductions;
    std::vector<std::string> failures;
    std::vector<std::string> outputs;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

// In-memory result of one scenario.
struct RunOutcome {
    RunManifest manifest;
    std::vector<ObservableRecord> records;  // cavity modes
    std::vector<ExcitonState> exciton;      // exciton-only mode
    std::shared_ptr<const KernelTable> table;
};

// Integrates one scenario without touching the filesystem (sweep ignored).
RunOutcome execute(const ScenarioConfig& config, KernelCache& cache);

// Writes <name>.csv (or <name>.kernel.csv) plus <name>.manifest.json.
// Delegates to sweep() when the config carries one.
std::vector<RunManifest> run(const ScenarioConfig& config);

struct SweepResult {
    std::vector<RunManifest> runs;
    std::filesystem::path summary;
};

SweepResult sweep(const ScenarioConfig& base, const std::string& axis, const std::vector<double>& values);

// Copy of `config` with one sweepable scalar replaced.
ScenarioConfig with_axis_value(const ScenarioConfig& config, const std::string& axis, double value);

// Output directory after the environment override.
std::filesystem::path resolve_output_dir(const ScenarioConfig& config);

}  // namespace qdsim
