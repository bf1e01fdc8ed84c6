#pragma once

// Internal: the time-dependent Hamiltonian is tridiagonal in the chain basis.

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "qdsim/drive.hpp"
#include "qdsim/dynamics.hpp"
#include "qdsim/error.hpp"

namespace qdsim::detail {

// g sqrt(n + 1) for n = 0..n_trunc - 1, the cavity part of the ladder.
inline Eigen::VectorXd cavity_ladder(const SystemParams& sys) {
    Eigen::VectorXd ladder(sys.n_trunc);
    for (int n = 0; n < sys.n_trunc; ++n) ladder[n] = sys.coupling * std::sqrt(static_cast<double>(n + 1));
    return ladder;
}

// hop[k] = H_{k,k+1}; H_{k+1,k} = conj(hop[k]).
inline void fill_hopping(const SystemParams& sys, const PulseParams& pulse, double t, const Eigen::VectorXd& ladder,
                         Eigen::VectorXcd& hop) {
    const Eigen::Index n = ladder.size();
    hop.resize(2 * n + 1);
    const std::complex<double> drive_down = std::conj(alpha(pulse, t));  // <g n|H|e n>
    const std::complex<double> cavity_phase = std::polar(1.0, sys.cavity_detuning * t);
    for (Eigen::Index k = 0; k < n; ++k) {
        hop[2 * k] = drive_down;
        hop[2 * k + 1] = ladder[k] * cavity_phase;  // <e k|H|g k+1>
    }
    hop[2 * n] = drive_down;
}

inline void fill_hopping(const SystemParams& sys, const PulseParams& pulse, double t, Eigen::VectorXcd& hop) {
    fill_hopping(sys, pulse, t, cavity_ladder(sys), hop);
}

struct StepCount {
    std::size_t steps;
    double dt;
};

inline StepCount count_steps(TimeSpan span, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCategory::InvalidParameter, "integrate: dt must be > 0");
    const double length = span.end - span.start;
    if (!(length >= 0.0)) throw Error(ErrorCategory::InvalidParameter, "integrate: time span must not be reversed");
    const double ratio = length / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6) {
        throw Error(ErrorCategory::InvalidParameter, "integrate: time span is not a whole number of steps");
    }
    return {static_cast<std::size_t>(rounded), dt};
}

inline void require_table_covers(const KernelTable& table, TimeSpan span) {
    if (span.start < 0.0 || span.end > table.t_max() * (1.0 + 1e-12)) {
        throw Error(ErrorCategory::Domain, "integrate: time span exceeds kernel table range");
    }
}

}  // namespace qdsim::detail
