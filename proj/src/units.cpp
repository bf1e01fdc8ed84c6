#include "qdsim/units.hpp"

namespace qdsim::units {

double eV_to_rad_per_ps(double energy_eV) { return energy_eV / hbar_eV_ps; }

double rad_per_ps_to_eV(double omega) { return omega * hbar_eV_ps; }

double thermal_frequency(double temperature_K) {
    return boltzmann_eV_per_K * temperature_K / hbar_eV_ps;
}

}  // namespace qdsim::units
