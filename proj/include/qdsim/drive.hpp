#pragma once

#include <complex>

namespace qdsim {

// Gaussian pulse f(t) = A exp(-(t - t0)^2 / a^2) / (sqrt(2 pi) a) in the frame
// rotating at the laser frequency; the carrier leaves the residual phase
// exp(i laser_detuning t).
struct PulseParams {
    double amplitude = 0.0;        // A, rad; the envelope integrates to A / sqrt(2)
    double width_ps = 10.0;        // a
    double center_ps = 30.0;       // t0
    double laser_detuning = 0.0;   // delta_L = w_ex - w_L, rad/ps

    void validate() const;

    // Pulse whose envelope integrates to `area`.
    static double amplitude_for_area(double area);
};

double envelope(const PulseParams& pulse, double t);

std::complex<double> alpha(const PulseParams& pulse, double t);

}  // namespace qdsim
