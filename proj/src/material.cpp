#include "qdsim/material.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "qdsim/error.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

namespace {

void require(bool ok, const char* field, const char* rule) {
    if (!ok) {
        throw Error(ErrorCategory::InvalidParameter,
                    std::string("MaterialParams.") + field + " must be " + rule);
    }
}

}  // namespace

void MaterialParams::validate() const {
    // A zero deformation-potential difference is the decoupled limit.
    require(std::isfinite(deformation_potential_diff_eV) && deformation_potential_diff_eV >= 0.0,
            "deformation_potential_diff", "finite and >= 0");
    require(std::isfinite(mass_density_kg_m3) && mass_density_kg_m3 > 0.0, "mass_density", "> 0");
    require(std::isfinite(sound_speed_m_s) && sound_speed_m_s > 0.0, "sound_speed", "> 0");
    require(std::isfinite(localization_length_nm) && localization_length_nm > 0.0,
            "localization_length", "> 0");
    require(std::isfinite(temperature_K) && temperature_K >= 0.0, "temperature", ">= 0");
}

double SpectralModel::peak_frequency() const { return std::sqrt(1.5) * cutoff_rad_ps; }

SpectralModel derive_spectral_model(const MaterialParams& m) {
    m.validate();
    const double d_joule = m.deformation_potential_diff_eV * units::elementary_charge_C;
    const double c = m.sound_speed_m_s;
    const double c5 = c * c * c * c * c;
    const double four_pi_sq = 4.0 * std::numbers::pi * std::numbers::pi;
    const double prefactor_s2 = d_joule * d_joule / (four_pi_sq * m.mass_density_kg_m3 * c5 * units::hbar_J_s);

    SpectralModel s;
    s.prefactor_ps2 = prefactor_s2 * units::ps_per_s * units::ps_per_s;
    // exp(-3 l^2 w^2 / 2 c^2) == exp(-w^2 / w_cut^2)
    s.cutoff_rad_ps = std::sqrt(2.0 / 3.0) * c / (m.localization_length_nm * units::m_per_nm) / units::ps_per_s;
    return s;
}

double spectral_density(const SpectralModel& s, double omega) {
    if (!(omega >= 0.0)) {
        throw Error(ErrorCategory::Domain, "spectral_density: frequency must be >= 0");
    }
    const double x = omega / s.cutoff_rad_ps;
    return s.prefactor_ps2 * omega * omega * omega * std::exp(-x * x);
}

}  // namespace qdsim
