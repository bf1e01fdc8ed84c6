#pragma once

#include <complex>
#include <istream>
#include <ostream>
#include <vector>

#include "qdsim/material.hpp"

namespace qdsim {

using complex = std::complex<double>;

struct KernelOptions {
    double abs_tol = 1e-10;        // 1/ps^2
    double window_in_cutoffs = 20.0;  // frequency integration runs over [0, window * cutoff]
};

struct KernelValue {
    complex value;          // 1/ps^2
    double error_estimate;  // below abs_tol whenever returned
};

// j(w) coth(w / 2 theta) with the w -> 0 limit taken analytically;
// theta = k_B T / hbar in rad/ps, theta == 0 meaning zero temperature.
double thermal_spectral_weight(const SpectralModel& model, double theta, double omega);

// Bath correlation function
//   K(t) = int_0^inf dw j(w) [coth(w / 2 theta) cos(w t) - i sin(w t)]
// by adaptive Gauss-Kronrod quadrature. Defined for all real t, with
// K(-t) = conj(K(t)). Throws AccuracyError if abs_tol is not reached.
KernelValue kernel_at(const SpectralModel& model, double temperature_K, double t,
                      const KernelOptions& options = {});

// K(t) on a uniform grid together with the cumulative dephasing coefficient
// Gamma(t) = int_0^t K(s) ds, which multiplies rho(t) in the time-local
// master equation.
class KernelTable {
public:
    KernelTable(SpectralModel model, double temperature_K, double dt, std::vector<complex> kernel,
                std::vector<complex> gamma);

    const SpectralModel& model() const { return model_; }
    double temperature_K() const { return temperature_K_; }
    double dt() const { return dt_; }
    double t_max() const { return time(size() - 1); }
    std::size_t size() const { return kernel_.size(); }
    double time(std::size_t i) const { return static_cast<double>(i) * dt_; }

    const std::vector<complex>& kernel() const { return kernel_; }
    const std::vector<complex>& gamma() const { return gamma_; }

    // Largest quadrature error estimate seen while tabulating K.
    double quadrature_error() const { return quadrature_error_; }
    void set_quadrature_error(double e) { quadrature_error_ = e; }

private:
    SpectralModel model_;
    double temperature_K_;
    double dt_;
    std::vector<complex> kernel_;
    std::vector<complex> gamma_;
    double quadrature_error_ = 0.0;
};

// Grid t_i = i * dt, i = 0..n with n = ceil(t_max / dt). All grid points share
// one frequency partition, refined adaptively at t_max and a ladder of shorter
// times, so every K(t_i) meets abs_tol.
KernelTable build_table(const SpectralModel& model, double temperature_K, double t_max, double dt,
                        const KernelOptions& options = {});

// Linear interpolation of Gamma; returns the stored value at grid points.
// Throws Error(Domain) outside [0, t_max].
complex gamma_at(const KernelTable& table, double t);

// Columns t, ReK, ImK, ReGamma, ImGamma.
void write_table_csv(const KernelTable& table, std::ostream& out);
KernelTable read_table_csv(std::istream& in, const SpectralModel& model, double temperature_K);

}  // namespace qdsim
