#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdsim/dynamics.hpp"

namespace qdsim {

// Below this mean photon number the Mandel parameter and g2 are 0/0.
inline constexpr double undefined_photon_threshold = 1e-12;

// p(n) = rho_{en,en} + rho_{gn,gn}
std::vector<double> photon_distribution(const QDCavityState& rho);

double photon_mean(std::span<const double> p);
double photon_second_moment(std::span<const double> p);

// (<n^2> - <n>^2) / <n> - 1, or nullopt when <n> <= threshold.
std::optional<double> mandel(std::span<const double> p, double threshold = undefined_photon_threshold);

// sum n (n - 1) p(n) / <n>^2, or nullopt when <n> <= threshold.
std::optional<double> g2_zero(std::span<const double> p, double threshold = undefined_photon_threshold);

// |M - <n> (g2 - 1)|; both sides come from the same two moments.
std::optional<double> g2_mandel_residual(std::span<const double> p, double threshold = undefined_photon_threshold);

// <e,0| rho |g,1>
std::complex<double> polarization_one_photon(const QDCavityState& rho);

double exciton_population(const QDCavityState& rho);

struct ObservableRecord {
    double t = 0.0;
    double exciton_population = 0.0;
    double inversion = 0.0;
    double re_polarization = 0.0;  // Re <e0|rho|g1>
    double im_polarization = 0.0;  // Im <e0|rho|g1>
    double photon_mean = 0.0;
    double photon_second_moment = 0.0;
    std::optional<double> mandel;
    std::optional<double> g2;
    std::vector<double> distribution;
};

ObservableRecord observe(const QDCavityState& rho);

// Header t, N_e, inversion, ReP, ImP, n_mean, n2_mean, M, g2, p0..pN.
std::vector<std::string> observable_header(int n_trunc);
std::vector<std::string> observable_row(const ObservableRecord& record);

// Exciton-only rows: t, N_e, inversion, ReP, ImP.
std::vector<std::string> exciton_header();
std::vector<std::string> exciton_row(const ExcitonState& state);

}  // namespace qdsim
