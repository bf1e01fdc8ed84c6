#pragma once

namespace qdsim {

// Deformation-potential acoustic phonon environment of a spherical dot.
struct MaterialParams {
    double deformation_potential_diff_eV = 9.0;  // sigma_e - sigma_h
    double mass_density_kg_m3 = 5350.0;
    double sound_speed_m_s = 5150.0;
    double localization_length_nm = 4.5;
    double temperature_K = 30.0;

    // Throws Error(InvalidParameter) naming the first offending field.
    void validate() const;
};

// j(w) = prefactor * w^3 * exp(-w^2 / cutoff^2), w and j in rad/ps.
struct SpectralModel {
    double prefactor_ps2 = 0.0;
    double cutoff_rad_ps = 1.0;

    // Location of the single interior maximum of j.
    double peak_frequency() const;
};

SpectralModel derive_spectral_model(const MaterialParams& material);

// Throws Error(Domain) for negative omega.
double spectral_density(const SpectralModel& model, double omega);

}  // namespace qdsim
