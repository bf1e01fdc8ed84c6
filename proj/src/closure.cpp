#include <algorithm>
#include <cmath>
#include <string>

#include "band.hpp"
#include "qdsim/dynamics.hpp"
#include "qdsim/error.hpp"

namespace qdsim {

namespace {

using complex = std::complex<double>;
constexpr complex I{0.0, 1.0};

// Populations plus the first off-diagonal of rho in the chain basis.
struct BandState {
    Eigen::VectorXd diag;
    Eigen::VectorXcd upper;  // upper[k] = rho_{k,k+1}
};

BandState extract_band(const QDCavityState& s) {
    const Eigen::Index d = s.dim();
    const Matrix& m = s.matrix();
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(i - j) > 1 && m(i, j) != complex{}) {
                throw Error(ErrorCategory::InvalidParameter,
                            "closure_integrate: initial state has coherences the closure does not retain");
            }
        }
    }
    BandState b;
    b.diag = m.diagonal().real();
    b.upper = m.diagonal(1);
    return b;
}

QDCavityState to_dense(const BandState& b, double t) {
    const Eigen::Index d = b.diag.size();
    Matrix m = Matrix::Zero(d, d);
    m.diagonal() = b.diag.cast<complex>();
    m.diagonal(1) = b.upper;
    m.diagonal(-1) = b.upper.conjugate();
    return QDCavityState(std::move(m), t);
}

void closure_rhs(const Eigen::VectorXcd& hop, complex gamma, const BandState& x, BandState& out) {
    const Eigen::Index d = x.diag.size();
    out.diag.setZero(d);
    out.upper.resize(d - 1);
    for (Eigen::Index k = 0; k + 1 < d; ++k) {
        // flux between neighbours k and k+1
        const double flux = 2.0 * std::imag(x.upper[k] * std::conj(hop[k]));
        out.diag[k] -= flux;
        out.diag[k + 1] += flux;
        // odd k is (e, n) above (g, n+1): rho_{e,g} decays with G, rho_{g,e} with G*
        const complex rate = (k % 2 == 1) ? gamma : std::conj(gamma);
        out.upper[k] = I * hop[k] * (x.diag[k] - x.diag[k + 1]) - rate * x.upper[k];
    }
}

}  // namespace

CavityTrajectory closure_integrate(const SystemParams& sys, const PulseParams& pulse, const KernelTable& table,
                                   const QDCavityState& initial, TimeSpan span, const StepControl& control) {
    sys.validate();
    pulse.validate();
    if (initial.n_trunc() != sys.n_trunc) {
        throw Error(ErrorCategory::Shape, "closure_integrate: state truncation does not match SystemParams.n_trunc");
    }
    detail::require_table_covers(table, span);
    const auto [steps, dt] = detail::count_steps(span, control.dt);
    const std::size_t stride = std::max<std::size_t>(1, control.snapshot_stride);

    BandState x = extract_band(initial);
    BandState k1, k2, k3, k4, stage;
    Eigen::VectorXcd hop;
    auto rhs = [&](double t, const BandState& in, BandState& out) {
        detail::fill_hopping(sys, pulse, t, hop);
        closure_rhs(hop, gamma_at(table, t), in, out);
    };
    auto axpy = [](const BandState& base, double h, const BandState& k, BandState& out) {
        out.diag = base.diag + h * k.diag;
        out.upper = base.upper + h * k.upper;
    };

    CavityTrajectory traj;
    const double initial_excitation = excitation_number(initial);
    auto emit = [&](double t) {
        QDCavityState snap = to_dense(x, t);
        const double trace = std::abs(x.diag.sum() - 1.0);
        if (!std::isfinite(trace) || !x.upper.allFinite() || trace > control.divergence_tolerance) {
            throw DivergenceError("closure state left the physical manifold at t = " + std::to_string(t) + " ps", t);
        }
        auto& inv = traj.invariants;
        inv.max_trace_drift = std::max(inv.max_trace_drift, trace);
        inv.most_negative_population = std::min(inv.most_negative_population, x.diag.minCoeff());
        inv.max_excitation_drift =
            std::max(inv.max_excitation_drift, std::abs(excitation_number(snap) - initial_excitation));
        traj.times.push_back(t);
        if (control.on_snapshot) control.on_snapshot(snap);
        if (control.keep_states) traj.snapshots.push_back(std::move(snap));
    };

    emit(span.start);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = span.start + static_cast<double>(n) * dt;
        const double t_half = t + 0.5 * dt;
        const double t_next = span.start + static_cast<double>(n + 1) * dt;
        rhs(t, x, k1);
        axpy(x, 0.5 * dt, k1, stage);
        rhs(t_half, stage, k2);
        axpy(x, 0.5 * dt, k2, stage);
        rhs(t_half, stage, k3);
        axpy(x, dt, k3, stage);
        rhs(t_next, stage, k4);
        x.diag += (dt / 6.0) * (k1.diag + 2.0 * k2.diag + 2.0 * k3.diag + k4.diag);
        x.upper += (dt / 6.0) * (k1.upper + 2.0 * k2.upper + 2.0 * k3.upper + k4.upper);
        if ((n + 1) % stride == 0 || n + 1 == steps) emit(t_next);
    }
    return traj;
}

}  // namespace qdsim
