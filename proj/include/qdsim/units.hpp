#pragma once

// Simulation units: time in ps, angular frequency and energy in rad/ps (hbar = 1).

namespace qdsim::units {

// The one hbar the whole code base converts through.
inline constexpr double hbar_eV_fs = 0.6582119;
inline constexpr double hbar_eV_ps = hbar_eV_fs * 1e-3;

inline constexpr double elementary_charge_C = 1.602176634e-19;
inline constexpr double boltzmann_eV_per_K = 8.617333262e-5;

inline constexpr double hbar_J_s = hbar_eV_fs * 1e-15 * elementary_charge_C;

inline constexpr double ps_per_s = 1e12;
inline constexpr double m_per_nm = 1e-9;

double eV_to_rad_per_ps(double energy_eV);
double rad_per_ps_to_eV(double omega);

// k_B T / hbar in rad/ps.
double thermal_frequency(double temperature_K);

}  // namespace qdsim::units
