#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "qdsim/drive.hpp"
#include "qdsim/kernel.hpp"

namespace qdsim {

using Matrix = Eigen::MatrixXcd;

struct SystemParams {
    double coupling = 0.1;         // g, rad/ps
    double cavity_detuning = 0.0;  // Delta = w_ex - w_c, rad/ps
    int n_trunc = 90;              // highest retained Fock state

    void validate() const;
};

enum class Level : int { Ground = 0, Excited = 1 };

// Product basis |g,0>, |e,0>, |g,1>, |e,1>, ... In this order the drive and the
// Jaynes-Cummings coupling only connect neighbouring indices.
constexpr Eigen::Index basis_index(Level level, int photons) {
    return 2 * static_cast<Eigen::Index>(photons) + static_cast<Eigen::Index>(level);
}

class QDCavityState {
public:
    explicit QDCavityState(int n_trunc, double time = 0.0);
    QDCavityState(Matrix rho, double time);

    static QDCavityState basis(int n_trunc, Level level, int photons, double time = 0.0);
    static QDCavityState pure(const Eigen::VectorXcd& psi, double time = 0.0);

    int n_trunc() const { return n_trunc_; }
    Eigen::Index dim() const { return rho_.rows(); }
    double time() const { return time_; }
    void set_time(double t) { time_ = t; }

    const Matrix& matrix() const { return rho_; }
    Matrix& matrix() { return rho_; }

    std::complex<double> element(Level li, int ni, Level lj, int nj) const {
        return rho_(basis_index(li, ni), basis_index(lj, nj));
    }

    double trace_drift() const;        // |Tr rho - 1|
    double hermiticity_drift() const;  // max |rho - rho^dagger| elementwise
    double min_population() const;     // smallest real diagonal entry

private:
    Matrix rho_;
    int n_trunc_;
    double time_;
};

struct ExcitonState {
    std::complex<double> polarization;  // P = <e|rho|g>
    double population = 0.0;            // N_e = <e|rho|e>
    double time = 0.0;
};

// Worst excursions seen over a run.
struct InvariantReport {
    double max_trace_drift = 0.0;
    double max_hermiticity_drift = 0.0;
    double most_negative_population = 0.0;  // min(0, smallest population)
    double max_excitation_drift = 0.0;      // relative to the initial excitation number
    double max_positivity_violation = 0.0;  // exciton mode: |P|^2 - N_e (1 - N_e)
};

struct TimeSpan {
    double start = 0.0;
    double end = 0.0;
};

struct StepControl {
    double dt = 1e-3;
    std::size_t snapshot_stride = 1;  // in steps
    bool keep_states = true;
    // Trace or hermiticity drift beyond this aborts with DivergenceError.
    double divergence_tolerance = 1e-6;
    std::function<void(const QDCavityState&)> on_snapshot;
    std::function<void(const ExcitonState&)> on_exciton_snapshot;
};

struct CavityTrajectory {
    std::vector<QDCavityState> snapshots;  // empty unless keep_states
    std::vector<double> times;
    InvariantReport invariants;
};

struct ExcitonTrajectory {
    std::vector<ExcitonState> snapshots;
    InvariantReport invariants;
};

// i [rho, H0(t)] with
//   H0 = g (s_eg a e^{i Delta t} + a^dag s_ge e^{-i Delta t}) + f(t) (s_eg e^{i dL t} + s_ge e^{-i dL t}).
Matrix hamiltonian_apply(const SystemParams& sys, const PulseParams& pulse, double t, const QDCavityState& rho);

// -G [s_ee, s_ee rho] + G* [s_ee, rho s_ee]: damps e-g coherences, leaves populations alone.
Matrix dissipator_apply(std::complex<double> gamma, const QDCavityState& rho);

// Fixed-step RK4 on the full density matrix.
CavityTrajectory integrate(const SystemParams& sys, const PulseParams& pulse, const KernelTable& table,
                           const QDCavityState& initial, TimeSpan span, const StepControl& control);

// Two-level exciton driven by the pulse alone:
//   dP/dt = i alpha (2 N_e - 1) - Gamma P,  dN_e/dt = -2 Im(conj(alpha) P).
ExcitonTrajectory exciton_only_integrate(const PulseParams& pulse, const KernelTable& table,
                                         const ExcitonState& initial, TimeSpan span, const StepControl& control);

// Propagates only populations and nearest-neighbour coherences in the chain
// g0, e0, g1, e1, ...: rho_{en,en}, rho_{gn,gn}, rho_{e n-1, g n}, rho_{en,gn}.
// All other elements are never stored. The initial state must be zero
// outside that band.
CavityTrajectory closure_integrate(const SystemParams& sys, const PulseParams& pulse, const KernelTable& table,
                                   const QDCavityState& initial, TimeSpan span, const StepControl& control);

// Tr[rho (a^dag a + s_ee)]
double excitation_number(const QDCavityState& rho);

}  // namespace qdsim
