#include "qdsim/drive.hpp"

#include <cmath>
#include <numbers>

#include "qdsim/error.hpp"

namespace qdsim {

void PulseParams::validate() const {
    if (!(std::isfinite(width_ps) && width_ps > 0.0)) {
        throw Error(ErrorCategory::InvalidParameter, "PulseParams.width must be > 0");
    }
    if (!(std::isfinite(amplitude) && amplitude >= 0.0)) {
        throw Error(ErrorCategory::InvalidParameter, "PulseParams.amplitude must be >= 0");
    }
    if (!std::isfinite(center_ps)) throw Error(ErrorCategory::InvalidParameter, "PulseParams.center must be finite");
    if (!std::isfinite(laser_detuning)) {
        throw Error(ErrorCategory::InvalidParameter, "PulseParams.laser_detuning must be finite");
    }
}

double PulseParams::amplitude_for_area(double area) { return area * std::numbers::sqrt2; }

double envelope(const PulseParams& p, double t) {
    const double u = (t - p.center_ps) / p.width_ps;
    return p.amplitude * std::exp(-u * u) / (std::sqrt(2.0 * std::numbers::pi) * p.width_ps);
}

std::complex<double> alpha(const PulseParams& p, double t) {
    const double f = envelope(p, t);
    if (p.laser_detuning == 0.0) return {f, 0.0};
    return std::polar(f, p.laser_detuning * t);
}

}  // namespace qdsim
