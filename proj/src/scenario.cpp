#include "qdsim/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include "qdsim/csv.hpp"
#include "qdsim/error.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Dynamics tolerances a finished run is held to.
constexpr double trace_tolerance = 1e-9;
constexpr double hermiticity_tolerance = 1e-10;
constexpr double population_tolerance = -1e-8;
constexpr double excitation_tolerance = 1e-9;
constexpr double positivity_tolerance = 1e-8;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCategory::Validation, what); }

// Reads one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) invalid(where("") + " must be an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    double number(const std::string& key, double fallback) {
        seen_.insert(key);
        if (!obj_.contains(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_number()) invalid(where(key) + " must be a number");
        return v.get<double>();
    }

    int integer(const std::string& key, int fallback) {
        seen_.insert(key);
        if (!obj_.contains(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_number_integer()) invalid(where(key) + " must be an integer");
        return v.get<int>();
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        if (!obj_.contains(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_boolean()) invalid(where(key) + " must be true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        seen_.insert(key);
        if (!obj_.contains(key)) return fallback;
        const auto& v = obj_.at(key);
        if (!v.is_string()) invalid(where(key) + " must be a string");
        return v.get<std::string>();
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key) ? &obj_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) invalid("unknown config field " + where(key));
        }
    }

    std::string where(const std::string& key) const {
        if (path_.empty()) return key;
        return key.empty() ? path_ : path_ + "." + key;
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

Mode parse_mode(const std::string& s) {
    if (s == "exciton-only") return Mode::ExcitonOnly;
    if (s == "cavity-full") return Mode::CavityFull;
    if (s == "cavity-closure") return Mode::CavityClosure;
    if (s == "kernel-only") return Mode::KernelOnly;
    invalid("mode must be one of exciton-only, cavity-full, cavity-closure, kernel-only (got '" + s + "')");
}

InitialCondition parse_initial(const std::string& s) {
    if (s == "ground") return InitialCondition::Ground;
    if (s == "excited") return InitialCondition::Excited;
    invalid("initial_state must be 'ground' or 'excited' (got '" + s + "')");
}

std::string canonical_axis(const std::string& axis) {
    static const std::map<std::string, std::string> aliases{
        {"amplitude", "amplitude"}, {"A", "amplitude"},       {"width", "width"},         {"a", "width"},
        {"detuning", "detuning"},   {"Delta", "detuning"},    {"coupling", "coupling"},   {"g", "coupling"},
        {"temperature", "temperature"}, {"T", "temperature"}, {"n_trunc", "n_trunc"},     {"N_trunc", "n_trunc"},
    };
    const auto it = aliases.find(axis);
    if (it == aliases.end()) {
        invalid("unknown sweep axis '" + axis + "' (expected amplitude, width, detuning, coupling, temperature, n_trunc)");
    }
    return it->second;
}

bool is_whole_multiple(double stride, double dt) {
    const double r = stride / dt;
    return r >= 1.0 - 1e-9 && std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

// Snap t_max onto the step grid.
double grid_end(const GridParams& g) { return std::round(g.t_max_ps / g.dt_ps) * g.dt_ps; }

void write_atomically(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCategory::Io, "cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out) throw Error(ErrorCategory::Io, "failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCategory::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string kernel_key(const SpectralModel& m, double temperature_K, double t_max, double dt) {
    std::ostringstream os;
    os << csv::format_double(m.prefactor_ps2) << '|' << csv::format_double(m.cutoff_rad_ps) << '|'
       << csv::format_double(temperature_K) << '|' << csv::format_double(t_max) << '|' << csv::format_double(dt)
       << '|' << KernelOptions{}.abs_tol;
    return fnv1a_hex(os.str());
}

json invariants_json(const InvariantReport& r) {
    return {{"max_trace_drift", r.max_trace_drift},
            {"max_hermiticity_drift", r.max_hermiticity_drift},
            {"most_negative_population", r.most_negative_population},
            {"max_excitation_drift", r.max_excitation_drift},
            {"max_positivity_violation", r.max_positivity_violation}};
}

std::vector<std::string> standard_notes(const ScenarioConfig& c) {
    std::vector<std::string> notes{
        "cavity detuning and laser detuning are read in rad/ps",
        "drive carrier is resonant in the rotating frame; residual phase exp(i laser_detuning t)",
        c.center_from_width ? "pulse center defaulted to 3 * width" : "pulse center given explicitly",
    };
    if (c.mode == Mode::CavityClosure) {
        notes.push_back("closure mode keeps populations and nearest-neighbour chain coherences only");
    }
    if (!c.phonons) notes.push_back("phonon coupling switched off");
    for (const auto& field : c.paper_unspecified) notes.push_back("paper-unspecified: " + field);
    return notes;
}

void judge(RunManifest& m) {
    const auto& r = m.invariants;
    auto fail = [&](const std::string& what) { m.failures.push_back(what); };
    if (r.max_trace_drift > trace_tolerance) fail("trace drift exceeds 1e-9");
    if (r.max_hermiticity_drift > hermiticity_tolerance) fail("hermiticity drift exceeds 1e-10");
    if (r.most_negative_population < population_tolerance) fail("population below -1e-8");
    if (r.max_positivity_violation > positivity_tolerance) fail("exciton positivity violated beyond 1e-8");
    if (m.excitation_conserving && r.max_excitation_drift > excitation_tolerance) {
        fail("excitation number drift exceeds 1e-9");
    }
    const auto at = [&](const char* key) -> std::optional<double> {
        const auto it = m.reductions.find(key);
        return it == m.reductions.end() ? std::nullopt : std::optional<double>(it->second);
    };
    if (auto v = at("min_photon_probability"); v && *v < population_tolerance) fail("photon probability below -1e-8");
    if (auto v = at("max_distribution_sum_error"); v && *v > 1e-8) fail("photon distribution sum off by more than 1e-8");
    if (auto v = at("min_photon_variance"); v && *v < -1e-10) fail("photon number variance below -1e-10");
    if (auto v = at("min_M"); v && *v < -1.0 - 1e-8) fail("Mandel parameter below -1");
    if (auto v = at("min_g2"); v && *v < -1e-8) fail("g2 negative");
    if (auto v = at("max_moment_identity_residual"); v && *v > 1e-9) fail("moment identity residual exceeds 1e-9");
    m.status = m.failures.empty() ? "ok" : "failed";
}

StepControl control_for(const GridParams& g, double dt) {
    StepControl c;
    c.dt = dt;
    c.snapshot_stride = static_cast<std::size_t>(std::llround(g.snapshot_stride_ps / dt));
    c.keep_states = false;
    return c;
}

QDCavityState initial_cavity_state(const ScenarioConfig& c, int n_trunc) {
    const Level level = c.initial == InitialCondition::Excited ? Level::Excited : Level::Ground;
    return QDCavityState::basis(n_trunc, level, 0, 0.0);
}

std::vector<ObservableRecord> run_cavity(const ScenarioConfig& c, const SystemParams& sys, double dt,
                                         const KernelTable& table, InvariantReport* report) {
    std::vector<ObservableRecord> records;
    StepControl ctl = control_for(c.grid, dt);
    ctl.on_snapshot = [&](const QDCavityState& s) { records.push_back(observe(s)); };
    const TimeSpan span{0.0, grid_end(c.grid)};
    const QDCavityState rho0 = initial_cavity_state(c, sys.n_trunc);
    const CavityTrajectory traj = c.mode == Mode::CavityClosure
                                      ? closure_integrate(sys, c.pulse, table, rho0, span, ctl)
                                      : integrate(sys, c.pulse, table, rho0, span, ctl);
    if (report) *report = traj.invariants;
    return records;
}

std::vector<ExcitonState> run_exciton(const ScenarioConfig& c, double dt, const KernelTable& table,
                                      InvariantReport* report) {
    StepControl ctl = control_for(c.grid, dt);
    ctl.keep_states = true;
    ExcitonState x0;
    if (c.initial == InitialCondition::Excited) x0.population = 1.0;
    const auto traj = exciton_only_integrate(c.pulse, table, x0, {0.0, grid_end(c.grid)}, ctl);
    if (report) *report = traj.invariants;
    return traj.snapshots;
}

void add_cavity_reductions(const std::vector<ObservableRecord>& records, std::map<std::string, double>& out) {
    if (records.empty()) return;
    double max_ne = -1.0, max_n = 0.0;
    std::optional<double> min_m, max_m, min_g2, max_g2;
    double max_residual = 0.0, min_p = 0.0, max_sum_error = 0.0, min_variance = 0.0;
    for (const auto& r : records) {
        double total = 0.0;
        for (double x : r.distribution) {
            total += x;
            min_p = std::min(min_p, x);
        }
        max_sum_error = std::max(max_sum_error, std::abs(total - 1.0));
        min_variance = std::min(min_variance, r.photon_second_moment - r.photon_mean * r.photon_mean);
        max_ne = std::max(max_ne, r.exciton_population);
        max_n = std::max(max_n, r.photon_mean);
        if (r.mandel) {
            min_m = min_m ? std::min(*min_m, *r.mandel) : *r.mandel;
            max_m = max_m ? std::max(*max_m, *r.mandel) : *r.mandel;
        }
        if (r.g2) {
            min_g2 = min_g2 ? std::min(*min_g2, *r.g2) : *r.g2;
            max_g2 = max_g2 ? std::max(*max_g2, *r.g2) : *r.g2;
        }
        if (auto res = g2_mandel_residual(r.distribution)) max_residual = std::max(max_residual, *res);
    }
    out["max_N_e"] = max_ne;
    out["max_n_mean"] = max_n;
    out["final_n_mean"] = records.back().photon_mean;
    out["max_moment_identity_residual"] = max_residual;
    out["min_photon_probability"] = min_p;
    out["max_distribution_sum_error"] = max_sum_error;
    out["min_photon_variance"] = min_variance;
    if (min_m) {
        out["min_M"] = *min_m;
        out["max_M"] = *max_m;
        out["peak_to_peak_M"] = *max_m - *min_m;
    }
    if (min_g2) {
        out["min_g2"] = *min_g2;
        out["max_g2"] = *max_g2;
    }
}

void add_exciton_reductions(const std::vector<ExcitonState>& states, std::map<std::string, double>& out) {
    if (states.empty()) return;
    double max_ne = 0.0, max_im = 0.0;
    for (const auto& s : states) {
        max_ne = std::max(max_ne, s.population);
        max_im = std::max(max_im, std::abs(s.polarization.imag()));
    }
    out["max_N_e"] = max_ne;
    out["max_abs_ImP"] = max_im;
    out["final_N_e"] = states.back().population;
}

double max_abs_diff_photon_mean(const std::vector<ObservableRecord>& a, const std::vector<ObservableRecord>& b) {
    double worst = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(a[i].photon_mean - b[i].photon_mean));
    return worst;
}

double final_observable_delta(const ObservableRecord& a, const ObservableRecord& b) {
    double d = std::max({std::abs(a.exciton_population - b.exciton_population),
                         std::abs(a.photon_mean - b.photon_mean), std::abs(a.re_polarization - b.re_polarization),
                         std::abs(a.im_polarization - b.im_polarization)});
    if (a.mandel && b.mandel) d = std::max(d, std::abs(*a.mandel - *b.mandel));
    if (a.g2 && b.g2) d = std::max(d, std::abs(*a.g2 - *b.g2));
    return d;
}

std::string csv_text_cavity(const std::vector<ObservableRecord>& records, int n_trunc) {
    std::ostringstream os;
    csv::write_row(os, observable_header(n_trunc));
    for (const auto& r : records) csv::write_row(os, observable_row(r));
    return os.str();
}

std::string csv_text_exciton(const std::vector<ExcitonState>& states) {
    std::ostringstream os;
    csv::write_row(os, exciton_header());
    for (const auto& s : states) csv::write_row(os, exciton_row(s));
    return os.str();
}

std::string value_label(double v) { return csv::format_double(v); }

}  // namespace

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::ExcitonOnly: return "exciton-only";
        case Mode::CavityFull: return "cavity-full";
        case Mode::CavityClosure: return "cavity-closure";
        case Mode::KernelOnly: return "kernel-only";
    }
    return "unknown";
}

SpectralModel ScenarioConfig::spectral_model() const {
    SpectralModel s = derive_spectral_model(material);
    if (!phonons) s.prefactor_ps2 = 0.0;
    return s;
}

void ScenarioConfig::validate() const {
    auto rethrow_as_validation = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            if (e.category() == ErrorCategory::Validation) throw;
            invalid(e.what());
        }
    };
    if (name.empty() || name.find('/') != std::string::npos) invalid("name must be a non-empty file stem");
    rethrow_as_validation([&] { material.validate(); });
    rethrow_as_validation([&] { pulse.validate(); });
    if (mode == Mode::CavityFull || mode == Mode::CavityClosure) {
        rethrow_as_validation([&] { system.validate(); });
    }
    if (!(std::isfinite(grid.dt_ps) && grid.dt_ps > 0.0)) invalid("grid.dt_ps must be > 0");
    if (!(std::isfinite(grid.t_max_ps) && grid.t_max_ps >= grid.dt_ps)) invalid("grid.t_max_ps must be >= grid.dt_ps");
    if (!is_whole_multiple(grid.snapshot_stride_ps, grid.dt_ps)) {
        invalid("grid.snapshot_stride_ps must be a whole multiple of grid.dt_ps");
    }
    if (convergence.extra_photons < 0) invalid("convergence.extra_photons must be >= 0");
    if (sweep) canonical_axis(sweep->axis);
}

ScenarioConfig parse_config(const json& doc) {
    ScenarioConfig c;
    ObjectReader top(doc, "");
    c.name = top.string("name", c.name);
    c.preset = top.string("preset", "");
    c.mode = parse_mode(top.string("mode", to_string(c.mode)));
    c.phonons = top.boolean("phonons", true);
    c.initial = parse_initial(top.string("initial_state", "ground"));
    c.output_dir = top.string("output_dir", c.output_dir);

    if (const json* m = top.child("material")) {
        ObjectReader r(*m, "material");
        auto& mp = c.material;
        mp.deformation_potential_diff_eV = r.number("deformation_potential_diff_eV", mp.deformation_potential_diff_eV);
        mp.mass_density_kg_m3 = r.number("mass_density_kg_m3", mp.mass_density_kg_m3);
        mp.sound_speed_m_s = r.number("sound_speed_m_s", mp.sound_speed_m_s);
        mp.localization_length_nm = r.number("localization_length_nm", mp.localization_length_nm);
        mp.temperature_K = r.number("temperature_K", mp.temperature_K);
        r.finish();
    }
    if (const json* p = top.child("pulse")) {
        ObjectReader r(*p, "pulse");
        if (r.has("amplitude") && r.has("area")) invalid("pulse: give either amplitude or area, not both");
        c.pulse.amplitude = r.number("amplitude", c.pulse.amplitude);
        if (r.has("area")) c.pulse.amplitude = PulseParams::amplitude_for_area(r.number("area", 0.0));
        c.pulse.width_ps = r.number("width_ps", c.pulse.width_ps);
        c.center_from_width = !r.has("center_ps");
        c.pulse.center_ps = r.number("center_ps", 3.0 * c.pulse.width_ps);
        c.pulse.laser_detuning = r.number("laser_detuning_rad_ps", c.pulse.laser_detuning);
        r.finish();
    } else {
        c.pulse.center_ps = 3.0 * c.pulse.width_ps;
    }
    if (const json* s = top.child("system")) {
        ObjectReader r(*s, "system");
        c.system.coupling = r.number("coupling_rad_ps", c.system.coupling);
        c.system.cavity_detuning = r.number("detuning_rad_ps", c.system.cavity_detuning);
        c.system.n_trunc = r.integer("n_trunc", c.system.n_trunc);
        r.finish();
    }
    if (const json* g = top.child("grid")) {
        ObjectReader r(*g, "grid");
        c.grid.t_max_ps = r.number("t_max_ps", c.grid.t_max_ps);
        c.grid.dt_ps = r.number("dt_ps", c.grid.dt_ps);
        c.grid.snapshot_stride_ps = r.number("snapshot_stride_ps", c.grid.snapshot_stride_ps);
        r.finish();
    }
    if (const json* u = top.child("paper_unspecified")) {
        if (!u->is_array()) invalid("paper_unspecified must be an array of strings");
        for (const auto& v : *u) {
            if (!v.is_string()) invalid("paper_unspecified must be an array of strings");
            c.paper_unspecified.push_back(v.get<std::string>());
        }
    }
    if (const json* s = top.child("sweep")) {
        ObjectReader r(*s, "sweep");
        SweepSpec spec;
        spec.axis = r.string("axis", "");
        if (const json* vals = r.child("values")) {
            if (!vals->is_array()) invalid("sweep.values must be an array of numbers");
            for (const auto& v : *vals) {
                if (!v.is_number()) invalid("sweep.values must be an array of numbers");
                spec.values.push_back(v.get<double>());
            }
        }
        r.finish();
        canonical_axis(spec.axis);
        c.sweep = spec;
    }
    if (const json* cv = top.child("convergence")) {
        ObjectReader r(*cv, "convergence");
        c.convergence.extra_photons = r.integer("extra_photons", 0);
        c.convergence.step_halving = r.boolean("step_halving", false);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

ScenarioConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::Io, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        invalid("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

json to_json(const ScenarioConfig& c) {
    json doc{
        {"name", c.name},
        {"mode", to_string(c.mode)},
        {"phonons", c.phonons},
        {"initial_state", c.initial == InitialCondition::Excited ? "excited" : "ground"},
        {"output_dir", c.output_dir},
        {"material",
         {{"deformation_potential_diff_eV", c.material.deformation_potential_diff_eV},
          {"mass_density_kg_m3", c.material.mass_density_kg_m3},
          {"sound_speed_m_s", c.material.sound_speed_m_s},
          {"localization_length_nm", c.material.localization_length_nm},
          {"temperature_K", c.material.temperature_K}}},
        {"pulse",
         {{"amplitude", c.pulse.amplitude},
          {"width_ps", c.pulse.width_ps},
          {"laser_detuning_rad_ps", c.pulse.laser_detuning}}},
        {"system",
         {{"coupling_rad_ps", c.system.coupling},
          {"detuning_rad_ps", c.system.cavity_detuning},
          {"n_trunc", c.system.n_trunc}}},
        {"grid",
         {{"t_max_ps", c.grid.t_max_ps}, {"dt_ps", c.grid.dt_ps}, {"snapshot_stride_ps", c.grid.snapshot_stride_ps}}},
        {"paper_unspecified", c.paper_unspecified},
        {"convergence",
         {{"extra_photons", c.convergence.extra_photons}, {"step_halving", c.convergence.step_halving}}},
    };
    if (!c.center_from_width) doc["pulse"]["center_ps"] = c.pulse.center_ps;
    if (!c.preset.empty()) doc["preset"] = c.preset;
    if (c.sweep) doc["sweep"] = {{"axis", c.sweep->axis}, {"values", c.sweep->values}};
    return doc;
}

std::string config_hash(const ScenarioConfig& config) { return fnv1a_hex(to_json(config).dump()); }

ValidationReport check(const json& doc) {
    ValidationReport report;
    ScenarioConfig c;
    try {
        c = parse_config(doc);
    } catch (const Error& e) {
        report.valid = false;
        report.errors.push_back(e.what());
        return report;
    }
    const SpectralModel s = c.spectral_model();
    auto line = [](const std::string& label, double v, const std::string& unit) {
        return label + " = " + csv::format_double(v) + " " + unit;
    };
    report.info.push_back(line("hbar", units::hbar_eV_fs, "eV fs"));
    report.info.push_back(line("spectral prefactor", s.prefactor_ps2, "ps^2"));
    report.info.push_back(line("spectral cutoff omega_cut", s.cutoff_rad_ps, "rad/ps"));
    report.info.push_back(line("spectral peak", s.peak_frequency(), "rad/ps"));
    report.info.push_back(line("spectral cutoff energy", units::rad_per_ps_to_eV(s.cutoff_rad_ps) * 1e3, "meV"));
    report.info.push_back(line("thermal frequency k_B T / hbar", units::thermal_frequency(c.material.temperature_K),
                               "rad/ps"));
    report.info.push_back(line("pulse peak Rabi frequency 2 f(t0)", 2.0 * envelope(c.pulse, c.pulse.center_ps),
                               "rad/ps"));
    report.info.push_back(line("cavity coupling g", c.system.coupling, "rad/ps") + " (" +
                          csv::format_double(units::rad_per_ps_to_eV(c.system.coupling) * 1e6) + " ueV)");
    report.info.push_back(line("cavity detuning", c.system.cavity_detuning, "rad/ps") + " (" +
                          csv::format_double(units::rad_per_ps_to_eV(c.system.cavity_detuning) * 1e3) + " meV)");

    if (c.pulse.amplitude > 0.0 && c.mode != Mode::KernelOnly &&
        c.grid.t_max_ps < c.pulse.center_ps + 4.0 * c.pulse.width_ps) {
        report.warnings.push_back("grid.t_max_ps ends before the pulse tail (center + 4 * width = " +
                                  csv::format_double(c.pulse.center_ps + 4.0 * c.pulse.width_ps) + " ps)");
    }
    if (c.pulse.amplitude > 0.0 && c.pulse.center_ps < 3.0 * c.pulse.width_ps) {
        report.warnings.push_back("pulse.center_ps < 3 * width: part of the pulse precedes t = 0");
    }
    return report;
}

KernelCache::KernelCache(std::optional<fs::path> directory) : directory_(std::move(directory)) {}

std::shared_ptr<const KernelTable> KernelCache::get(const SpectralModel& model, double temperature_K, double t_max,
                                                    double dt) {
    const std::string key = kernel_key(model, temperature_K, t_max, dt);
    std::lock_guard lock(mutex_);
    if (auto it = tables_.find(key); it != tables_.end()) return it->second;

    std::shared_ptr<const KernelTable> table;
    std::optional<fs::path> file;
    if (directory_) file = *directory_ / (key + ".csv");
    if (file && fs::exists(*file)) {
        std::ifstream in(*file);
        table = std::make_shared<const KernelTable>(read_table_csv(in, model, temperature_K));
    } else {
        table = std::make_shared<const KernelTable>(build_table(model, temperature_K, t_max, dt));
        if (file) {
            fs::create_directories(*directory_);
            std::ostringstream os;
            write_table_csv(*table, os);
            write_atomically(*file, os.str());
        }
    }
    tables_.emplace(key, table);
    return table;
}

json RunManifest::to_json() const {
    json conv = json::object();
    for (const auto& [k, v] : convergence) conv[k] = v;
    json red = json::object();
    for (const auto& [k, v] : reductions) red[k] = v;
    return {{"tool", "qdsim"},
            {"version", tool_version},
            {"config", config},
            {"config_hash", config_hash},
            {"status", status},
            {"failures", failures},
            {"wall_time_s", wall_time_s},
            {"invariants", invariants_json(invariants)},
            {"excitation_conserving", excitation_conserving},
            {"convergence", conv},
            {"reductions", red},
            {"outputs", outputs},
            {"notes", notes}};
}

RunOutcome execute(const ScenarioConfig& c, KernelCache& cache) {
    c.validate();
    const auto started = std::chrono::steady_clock::now();
    RunOutcome out;
    RunManifest& m = out.manifest;
    m.config = to_json(c);
    m.config_hash = config_hash(c);
    m.notes = standard_notes(c);
    m.excitation_conserving = c.pulse.amplitude == 0.0;

    const SpectralModel model = c.spectral_model();
    const double t_end = grid_end(c.grid);
    const double temperature = c.material.temperature_K;

    if (c.mode == Mode::KernelOnly) {
        out.table = cache.get(model, temperature, t_end, c.grid.dt_ps);
        m.reductions["quadrature_error"] = out.table->quadrature_error();
        m.reductions["final_ReGamma"] = out.table->gamma().back().real();
        m.reductions["final_ImGamma"] = out.table->gamma().back().imag();
    } else {
        // Table nodes every dt/2 put every RK4 stage on a node; dt/4 covers a halved-step rerun too.
        const double table_dt = c.grid.dt_ps / (c.convergence.step_halving ? 4.0 : 2.0);
        out.table = cache.get(model, temperature, t_end, table_dt);
        const KernelTable& table = *out.table;

        if (c.mode == Mode::ExcitonOnly) {
            out.exciton = run_exciton(c, c.grid.dt_ps, table, &m.invariants);
            add_exciton_reductions(out.exciton, m.reductions);
            if (c.convergence.step_halving) {
                const auto fine = run_exciton(c, 0.5 * c.grid.dt_ps, table, nullptr);
                const auto& a = out.exciton.back();
                const auto& b = fine.back();
                m.convergence["step_halving_final_delta"] =
                    std::max(std::abs(a.population - b.population), std::abs(a.polarization - b.polarization));
            }
        } else {
            out.records = run_cavity(c, c.system, c.grid.dt_ps, table, &m.invariants);
            add_cavity_reductions(out.records, m.reductions);
            if (c.convergence.extra_photons > 0) {
                SystemParams bigger = c.system;
                bigger.n_trunc += c.convergence.extra_photons;
                const auto wide = run_cavity(c, bigger, c.grid.dt_ps, table, nullptr);
                m.convergence["truncation_max_photon_mean_delta"] = max_abs_diff_photon_mean(out.records, wide);
            }
            if (c.convergence.step_halving) {
                const auto fine = run_cavity(c, c.system, 0.5 * c.grid.dt_ps, table, nullptr);
                m.convergence["step_halving_final_delta"] = final_observable_delta(out.records.back(), fine.back());
            }
        }
        judge(m);
    }
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

fs::path resolve_output_dir(const ScenarioConfig& config) {
    if (const char* env = std::getenv(output_dir_env); env && *env) return fs::path(env);
    return fs::path(config.output_dir);
}

namespace {

struct WrittenRun {
    RunManifest manifest;
    std::vector<ObservableRecord> records;
};

WrittenRun run_and_write(const ScenarioConfig& c, KernelCache& cache) {
    const fs::path dir = resolve_output_dir(c);
    fs::create_directories(dir);
    RunOutcome out = execute(c, cache);
    RunManifest& m = out.manifest;

    std::string csv_text;
    fs::path csv_path;
    if (c.mode == Mode::KernelOnly) {
        std::ostringstream os;
        write_table_csv(*out.table, os);
        csv_text = os.str();
        csv_path = dir / (c.name + ".kernel.csv");
    } else if (c.mode == Mode::ExcitonOnly) {
        csv_text = csv_text_exciton(out.exciton);
        csv_path = dir / (c.name + ".csv");
    } else {
        csv_text = csv_text_cavity(out.records, c.system.n_trunc);
        csv_path = dir / (c.name + ".csv");
    }
    write_atomically(csv_path, csv_text);
    m.outputs.push_back(csv_path.filename().string());
    write_atomically(dir / (c.name + ".manifest.json"), m.to_json().dump(2) + "\n");
    return {std::move(m), std::move(out.records)};
}

}  // namespace

std::vector<RunManifest> run(const ScenarioConfig& config) {
    if (config.sweep) return sweep(config, config.sweep->axis, config.sweep->values).runs;
    KernelCache cache(resolve_output_dir(config) / "kernel_cache");
    return {run_and_write(config, cache).manifest};
}

ScenarioConfig with_axis_value(const ScenarioConfig& config, const std::string& axis, double value) {
    ScenarioConfig c = config;
    c.sweep.reset();
    const std::string canon = canonical_axis(axis);
    if (canon == "amplitude") {
        c.pulse.amplitude = value;
    } else if (canon == "width") {
        c.pulse.width_ps = value;
        if (c.center_from_width) c.pulse.center_ps = 3.0 * value;
    } else if (canon == "detuning") {
        c.system.cavity_detuning = value;
    } else if (canon == "coupling") {
        c.system.coupling = value;
    } else if (canon == "temperature") {
        c.material.temperature_K = value;
    } else if (canon == "n_trunc") {
        if (value != std::floor(value)) invalid("sweep value for n_trunc must be an integer");
        c.system.n_trunc = static_cast<int>(value);
    }
    c.name = config.name + "_" + canon + "_" + value_label(value);
    c.validate();
    return c;
}

SweepResult sweep(const ScenarioConfig& base, const std::string& axis, const std::vector<double>& values) {
    const std::string canon = canonical_axis(axis);
    const fs::path dir = resolve_output_dir(base);
    fs::create_directories(dir);

    std::vector<ScenarioConfig> configs;
    configs.reserve(values.size());
    for (double v : values) configs.push_back(with_axis_value(base, canon, v));

    KernelCache cache(dir / "kernel_cache");
    std::vector<WrittenRun> done(configs.size());
    const unsigned workers = std::clamp<unsigned>(std::thread::hardware_concurrency(), 1u, 8u);
    for (std::size_t first = 0; first < configs.size(); first += workers) {
        const std::size_t last = std::min(configs.size(), first + workers);
        std::vector<std::future<WrittenRun>> batch;
        for (std::size_t i = first; i < last; ++i) {
            batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                       [&, i] { return run_and_write(configs[i], cache); }));
        }
        for (std::size_t i = first; i < last; ++i) done[i] = batch[i - first].get();
    }

    std::ostringstream os;
    const std::vector<std::string> reduction_columns{"max_N_e",     "final_N_e", "max_abs_ImP", "max_n_mean",
                                                     "final_n_mean", "min_M",     "max_M",       "peak_to_peak_M",
                                                     "min_g2",      "max_g2"};
    std::vector<std::string> header{canon, "name", "status"};
    header.insert(header.end(), reduction_columns.begin(), reduction_columns.end());
    header.push_back("max_trace_drift");
    header.push_back("delta_n_mean_vs_previous");
    csv::write_row(os, header);

    SweepResult result;
    for (std::size_t i = 0; i < done.size(); ++i) {
        const RunManifest& m = done[i].manifest;
        std::vector<std::string> row{value_label(values[i]), configs[i].name, m.status};
        for (const auto& col : reduction_columns) {
            const auto it = m.reductions.find(col);
            row.push_back(it == m.reductions.end() ? "" : csv::format_double(it->second));
        }
        row.push_back(csv::format_double(m.invariants.max_trace_drift));
        const bool comparable = i > 0 && !done[i].records.empty() &&
                                done[i].records.size() == done[i - 1].records.size();
        row.push_back(comparable ? csv::format_double(max_abs_diff_photon_mean(done[i].records, done[i - 1].records))
                                 : "");
        csv::write_row(os, row);
        result.runs.push_back(m);
    }
    result.summary = dir / (base.name + "_sweep_" + canon + ".csv");
    write_atomically(result.summary, os.str());
    return result;
}

}  // namespace qdsim
