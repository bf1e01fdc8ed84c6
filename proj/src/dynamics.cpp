#include "qdsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <xmmintrin.h>
#include <pmmintrin.h>

#include "band.hpp"
#include "qdsim/error.hpp"

namespace qdsim {

namespace {

using complex = std::complex<double>;
constexpr complex I{0.0, 1.0};

void check_shape(const SystemParams& sys, const QDCavityState& rho) {
    if (rho.n_trunc() != sys.n_trunc) {
        throw Error(ErrorCategory::Shape, "state truncation " + std::to_string(rho.n_trunc()) +
                                              " does not match SystemParams.n_trunc " + std::to_string(sys.n_trunc));
    }
}

// out = i (rho H - H rho) for tridiagonal H, column by column.
void add_commutator(const Eigen::VectorXcd& hop, const Matrix& rho, Matrix& out) {
    const Eigen::Index d = rho.rows();
    const Eigen::VectorXcd hop_conj = hop.conjugate();
    for (Eigen::Index j = 0; j < d; ++j) {
        auto col = out.col(j);
        // (rho H)(:, j) = rho(:, j-1) H_{j-1,j} + rho(:, j+1) H_{j+1,j}
        if (j > 0) col.noalias() += (I * hop[j - 1]) * rho.col(j - 1);
        if (j + 1 < d) col.noalias() += (I * hop_conj[j]) * rho.col(j + 1);
        // (H rho)(i, j) = H_{i,i-1} rho(i-1, j) + H_{i,i+1} rho(i+1, j)
        col.tail(d - 1).noalias() -= I * hop_conj.cwiseProduct(rho.col(j).head(d - 1));
        col.head(d - 1).noalias() -= I * hop.cwiseProduct(rho.col(j).tail(d - 1));
    }
}

void add_dissipator(complex gamma, const Matrix& rho, Matrix& out) {
    if (gamma == complex{}) return;
    const Eigen::Index d = rho.rows();
    const complex gamma_conj = std::conj(gamma);
    for (Eigen::Index j = 0; j < d; ++j) {
        const bool col_excited = (j % 2) == 1;
        // rows of the opposite exciton level: e-g picks up -G, g-e picks up -G*
        const complex rate = col_excited ? gamma_conj : gamma;
        for (Eigen::Index i = col_excited ? 0 : 1; i < d; i += 2) out(i, j) -= rate * rho(i, j);
    }
}

// Far photon tails decay below the normal range; subnormal arithmetic is
// two orders of magnitude slower and those values carry no information.
class FlushDenormals {
public:
    FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | _MM_FLUSH_ZERO_ON | _MM_DENORMALS_ZERO_ON); }
    ~FlushDenormals() { _mm_setcsr(saved_); }
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_;
};

struct Block {
    Eigen::Index lo, hi;
};

// Per-step generator data: i*hop, i*conj(hop) padded with a zero at both
// ends, and the per-row decay rate for even / odd columns.
struct Generator {
    Eigen::VectorXcd ih, ihc;
    Eigen::VectorXcd rate[2];

    void set(const Eigen::VectorXcd& hop, complex gamma) {
        const Eigen::Index d = hop.size() + 1;
        ih.resize(d + 1);
        ihc.resize(d + 1);
        ih[0] = ihc[0] = ih[d] = ihc[d] = complex{};
        ih.segment(1, d - 1) = I * hop;
        ihc.segment(1, d - 1) = I * hop.conjugate();
        // rows of the other exciton level decay: e-g at -G, g-e at -G*
        for (auto& r : rate) r.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            const bool even = (i % 2) == 0;
            rate[0][i] = even ? complex{} : gamma;
            rate[1][i] = even ? std::conj(gamma) : complex{};
        }
    }
};

// One RK4 stage with x Hermitian and supported on blk: with k = L(x),
// acc += w k and (if next) next = base + c k. Only the upper triangle and
// first subdiagonal of x are read, and only those are written.
void fused_stage(const Generator& gen, const Matrix& x, const Matrix& base, Matrix& acc, double w, Matrix* next,
                 double c, Block blk) {
    const Eigen::Index d = x.rows();
    const complex* ih = gen.ih.data() + 1;  // ih[k] = i*hop[k], ih[-1] = ih[d-1] = 0
    const complex* ihc = gen.ihc.data() + 1;
    for (Eigen::Index j = blk.lo; j <= blk.hi; ++j) {
        const complex* xc = x.col(j).data();
        const complex* left = j > 0 ? x.col(j - 1).data() : xc;
        const complex* right = j + 1 < d ? x.col(j + 1).data() : xc;
        const complex* r = gen.rate[j % 2].data();
        const complex* bc = base.col(j).data();
        complex* ac = acc.col(j).data();
        complex* nc = next ? next->col(j).data() : nullptr;
        const complex a = ih[j - 1];
        const complex b = ihc[j];
        auto put = [&](Eigen::Index i, complex v) {
            ac[i] += w * v;
            if (nc) nc[i] = bc[i] + c * v;
        };
        Eigen::Index i = blk.lo;
        if (i == 0) {
            put(0, a * left[0] + b * right[0] - ih[0] * xc[1] - r[0] * xc[0]);
            ++i;
        }
        const Eigen::Index last = std::min(j, d - 2);
        if (nc) {
            for (; i <= last; ++i) {
                const complex v =
                    a * left[i] + b * right[i] - ihc[i - 1] * xc[i - 1] - ih[i] * xc[i + 1] - r[i] * xc[i];
                ac[i] += w * v;
                nc[i] = bc[i] + c * v;
            }
        } else {
            for (; i <= last; ++i) {
                ac[i] += w * (a * left[i] + b * right[i] - ihc[i - 1] * xc[i - 1] - ih[i] * xc[i + 1] - r[i] * xc[i]);
            }
        }
        if (i == d - 1 && j == d - 1) put(i, a * left[i] + b * right[i] - ihc[i - 1] * xc[i - 1] - r[i] * xc[i]);
    }
    if (next) {
        for (Eigen::Index j = blk.lo; j < blk.hi; ++j) (*next)(j + 1, j) = std::conj((*next)(j, j + 1));
    }
}

void mirror_upper(Matrix& m, Block blk) {
    for (Eigen::Index j = blk.lo; j <= blk.hi; ++j) {
        for (Eigen::Index i = j + 1; i <= blk.hi; ++i) m(i, j) = std::conj(m(j, i));
    }
}

// Smallest index range holding every nonzero element.
Block support(const Matrix& m) {
    const Eigen::Index d = m.rows();
    Block blk{d, -1};
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) {
            if (m(i, j) != complex{}) {
                blk.lo = std::min({blk.lo, i, j});
                blk.hi = std::max({blk.hi, i, j});
            }
        }
    }
    if (blk.hi < 0) blk = {0, 0};
    return blk;
}

// One RK4 step moves the support by at most four sites, and only across
// hops that are nonzero at some stage time.
Block widen(Block blk, Eigen::Index d, const Eigen::VectorXcd (&hops)[3]) {
    auto open = [&](Eigen::Index k) { return hops[0][k] != complex{} || hops[1][k] != complex{} || hops[2][k] != complex{}; };
    for (int s = 0; s < 4; ++s) {
        if (blk.hi + 1 < d && open(blk.hi)) ++blk.hi;
        if (blk.lo > 0 && open(blk.lo - 1)) --blk.lo;
    }
    return blk;
}

// Everything outside blk is exactly zero, so the block alone decides the
// drifts; the zero diagonal outside it still counts as a population.
void record_invariants(const QDCavityState& s, Block blk, double initial_excitation, InvariantReport& report,
                       double divergence_tolerance) {
    const Eigen::Index lo = blk.lo, w = blk.hi - blk.lo + 1;
    const auto m = s.matrix().block(lo, lo, w, w);
    const double trace = std::abs(m.trace() - complex{1.0, 0.0});
    double herm = 0.0;  // squared until the end
    for (Eigen::Index j = 0; j < w; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) herm = std::max(herm, std::norm(m(i, j) - std::conj(m(j, i))));
    }
    herm = std::sqrt(herm);
    double min_pop = m.diagonal().real().minCoeff();
    if (w < s.dim()) min_pop = std::min(min_pop, 0.0);
    if (!std::isfinite(trace) || !std::isfinite(herm) || trace > divergence_tolerance ||
        herm > divergence_tolerance) {
        throw DivergenceError("density matrix left the physical manifold at t = " + std::to_string(s.time()) +
                                  " ps (trace drift " + std::to_string(trace) + ", hermiticity drift " +
                                  std::to_string(herm) + ")",
                              s.time());
    }
    report.max_trace_drift = std::max(report.max_trace_drift, trace);
    report.max_hermiticity_drift = std::max(report.max_hermiticity_drift, herm);
    report.most_negative_population = std::min(report.most_negative_population, min_pop);
    report.max_excitation_drift =
        std::max(report.max_excitation_drift, std::abs(excitation_number(s) - initial_excitation));
}

}  // namespace

void SystemParams::validate() const {
    if (n_trunc < 1) throw Error(ErrorCategory::InvalidParameter, "SystemParams.n_trunc must be >= 1");
    if (!(std::isfinite(coupling) && coupling >= 0.0)) {
        throw Error(ErrorCategory::InvalidParameter, "SystemParams.coupling must be >= 0");
    }
    if (!std::isfinite(cavity_detuning)) {
        throw Error(ErrorCategory::InvalidParameter, "SystemParams.detuning must be finite");
    }
}

QDCavityState::QDCavityState(int n_trunc, double time)
    : rho_(Matrix::Zero(2 * (n_trunc + 1), 2 * (n_trunc + 1))), n_trunc_(n_trunc), time_(time) {
    if (n_trunc < 0) throw Error(ErrorCategory::Shape, "QDCavityState: n_trunc must be >= 0");
}

QDCavityState::QDCavityState(Matrix rho, double time) : rho_(std::move(rho)), time_(time) {
    if (rho_.rows() != rho_.cols() || rho_.rows() < 2 || rho_.rows() % 2 != 0) {
        throw Error(ErrorCategory::Shape, "QDCavityState: matrix must be square with even dimension");
    }
    n_trunc_ = static_cast<int>(rho_.rows() / 2 - 1);
}

QDCavityState QDCavityState::basis(int n_trunc, Level level, int photons, double time) {
    if (photons < 0 || photons > n_trunc) throw Error(ErrorCategory::Shape, "basis: photon number out of range");
    QDCavityState s(n_trunc, time);
    const auto k = basis_index(level, photons);
    s.rho_(k, k) = 1.0;
    return s;
}

QDCavityState QDCavityState::pure(const Eigen::VectorXcd& psi, double time) {
    return QDCavityState(psi * psi.adjoint(), time);
}

double QDCavityState::trace_drift() const { return std::abs(rho_.trace() - complex{1.0, 0.0}); }

double QDCavityState::hermiticity_drift() const {
    double worst = 0.0;  // squared, one sqrt at the end
    const Eigen::Index d = rho_.rows();
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            worst = std::max(worst, std::norm(rho_(i, j) - std::conj(rho_(j, i))));
        }
    }
    return std::sqrt(worst);
}

double QDCavityState::min_population() const { return rho_.diagonal().real().minCoeff(); }

Matrix hamiltonian_apply(const SystemParams& sys, const PulseParams& pulse, double t, const QDCavityState& rho) {
    check_shape(sys, rho);
    Eigen::VectorXcd hop;
    detail::fill_hopping(sys, pulse, t, hop);
    Matrix out = Matrix::Zero(rho.dim(), rho.dim());
    add_commutator(hop, rho.matrix(), out);
    return out;
}

Matrix dissipator_apply(complex gamma, const QDCavityState& rho) {
    Matrix out = Matrix::Zero(rho.dim(), rho.dim());
    add_dissipator(gamma, rho.matrix(), out);
    return out;
}

double excitation_number(const QDCavityState& rho) {
    double total = 0.0;
    for (int n = 0; n <= rho.n_trunc(); ++n) {
        total += n * rho.element(Level::Ground, n, Level::Ground, n).real();
        total += (n + 1) * rho.element(Level::Excited, n, Level::Excited, n).real();
    }
    return total;
}

CavityTrajectory integrate(const SystemParams& sys, const PulseParams& pulse, const KernelTable& table,
                           const QDCavityState& initial, TimeSpan span, const StepControl& control) {
    sys.validate();
    pulse.validate();
    check_shape(sys, initial);
    detail::require_table_covers(table, span);
    const auto [steps, dt] = detail::count_steps(span, control.dt);
    const std::size_t stride = std::max<std::size_t>(1, control.snapshot_stride);

    const Eigen::Index d = initial.dim();
    if (initial.hermiticity_drift() > 1e-12) {
        throw Error(ErrorCategory::InvalidParameter, "integrate: initial state is not Hermitian");
    }
    Matrix rho = initial.matrix();
    Matrix acc = rho, s1 = Matrix::Zero(d, d), s2 = s1;
    Eigen::VectorXcd hops[3];  // at t, t + dt/2, t + dt
    const Eigen::VectorXd ladder = detail::cavity_ladder(sys);
    Generator gen;
    Block blk = support(rho);

    const FlushDenormals ftz;
    CavityTrajectory traj;
    const double initial_excitation = excitation_number(initial);
    QDCavityState snap(rho, span.start);  // reused so snapshots do not allocate
    auto emit = [&](double t) {
        mirror_upper(rho, blk);
        const Eigen::Index lo = blk.lo, w = blk.hi - blk.lo + 1;
        snap.matrix().block(lo, lo, w, w) = rho.block(lo, lo, w, w);  // zero elsewhere in both
        snap.set_time(t);
        record_invariants(snap, blk, initial_excitation, traj.invariants, control.divergence_tolerance);
        traj.times.push_back(t);
        if (control.on_snapshot) control.on_snapshot(snap);
        if (control.keep_states) traj.snapshots.push_back(snap);
    };

    emit(span.start);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = span.start + static_cast<double>(n) * dt;
        const double t_half = t + 0.5 * dt;
        const double t_next = span.start + static_cast<double>(n + 1) * dt;
        detail::fill_hopping(sys, pulse, t, ladder, hops[0]);
        detail::fill_hopping(sys, pulse, t_half, ladder, hops[1]);
        detail::fill_hopping(sys, pulse, t_next, ladder, hops[2]);
        blk = widen(blk, d, hops);
        const Eigen::Index lo = blk.lo, w = blk.hi - blk.lo + 1;
        acc.block(lo, lo, w, w) = rho.block(lo, lo, w, w);

        gen.set(hops[0], gamma_at(table, t));
        fused_stage(gen, rho, rho, acc, dt / 6.0, &s1, 0.5 * dt, blk);
        gen.set(hops[1], gamma_at(table, t_half));
        fused_stage(gen, s1, rho, acc, dt / 3.0, &s2, 0.5 * dt, blk);
        fused_stage(gen, s2, rho, acc, dt / 3.0, &s1, dt, blk);
        gen.set(hops[2], gamma_at(table, t_next));
        fused_stage(gen, s1, rho, acc, dt / 6.0, nullptr, 0.0, blk);
        rho.swap(acc);
        for (Eigen::Index j = blk.lo; j < blk.hi; ++j) rho(j + 1, j) = std::conj(rho(j, j + 1));

        if ((n + 1) % stride == 0 || n + 1 == steps) emit(t_next);
    }
    return traj;
}

ExcitonTrajectory exciton_only_integrate(const PulseParams& pulse, const KernelTable& table,
                                         const ExcitonState& initial, TimeSpan span, const StepControl& control) {
    pulse.validate();
    detail::require_table_covers(table, span);
    const auto [steps, dt] = detail::count_steps(span, control.dt);
    const std::size_t stride = std::max<std::size_t>(1, control.snapshot_stride);

    struct Deriv {
        complex dp;
        double dn;
    };
    auto rhs = [&](double t, complex p, double ne) -> Deriv {
        const complex a = alpha(pulse, t);
        return {I * a * (2.0 * ne - 1.0) - gamma_at(table, t) * p, -2.0 * std::imag(std::conj(a) * p)};
    };

    ExcitonTrajectory traj;
    complex p = initial.polarization;
    double ne = initial.population;
    auto emit = [&](double t) {
        if (!std::isfinite(ne) || !std::isfinite(p.real()) || !std::isfinite(p.imag())) {
            throw DivergenceError("exciton state became non-finite at t = " + std::to_string(t) + " ps", t);
        }
        auto& inv = traj.invariants;
        inv.most_negative_population = std::min({inv.most_negative_population, ne, 1.0 - ne});
        inv.max_positivity_violation = std::max(inv.max_positivity_violation, std::norm(p) - ne * (1.0 - ne));
        ExcitonState snap{p, ne, t};
        if (control.on_exciton_snapshot) control.on_exciton_snapshot(snap);
        if (control.keep_states) traj.snapshots.push_back(snap);
    };

    emit(span.start);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = span.start + static_cast<double>(n) * dt;
        const double t_half = t + 0.5 * dt;
        const double t_next = span.start + static_cast<double>(n + 1) * dt;
        const Deriv k1 = rhs(t, p, ne);
        const Deriv k2 = rhs(t_half, p + 0.5 * dt * k1.dp, ne + 0.5 * dt * k1.dn);
        const Deriv k3 = rhs(t_half, p + 0.5 * dt * k2.dp, ne + 0.5 * dt * k2.dn);
        const Deriv k4 = rhs(t_next, p + dt * k3.dp, ne + dt * k3.dn);
        p += dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
        ne += dt / 6.0 * (k1.dn + 2.0 * k2.dn + 2.0 * k3.dn + k4.dn);
        if ((n + 1) % stride == 0 || n + 1 == steps) emit(t_next);
    }
    return traj;
}

}  // namespace qdsim
