#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "qdsim/dynamics.hpp"
#include "qdsim/error.hpp"

using namespace qdsim;

namespace {

const SpectralModel gaas = derive_spectral_model(MaterialParams{});

SpectralModel decoupled() {
    SpectralModel s = gaas;
    s.prefactor_ps2 = 0.0;
    return s;
}

Matrix random_hermitian_density(Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) a(i, j) = {n(rng), n(rng)};
    Matrix rho = a * a.adjoint();
    rho = (0.5 * (rho + rho.adjoint())).eval();  // exactly Hermitian, bit for bit
    return rho / rho.trace().real();
}

// s_ee (x) 1 on the Fock factor, built explicitly.
Matrix sigma_ee(Eigen::Index d) {
    Matrix s = Matrix::Zero(d, d);
    for (Eigen::Index k = 1; k < d; k += 2) s(k, k) = 1.0;
    return s;
}

// H0(t) assembled as a dense matrix from a and sigma operators.
Matrix dense_hamiltonian(const SystemParams& sys, const PulseParams& p, double t) {
    const int n = sys.n_trunc;
    const Eigen::Index d = 2 * (n + 1);
    Matrix a = Matrix::Zero(d, d), s_eg = Matrix::Zero(d, d);
    for (int m = 0; m <= n; ++m) {
        for (int q = 0; q < 2; ++q) {
            const Level lv = static_cast<Level>(q);
            if (m > 0) a(basis_index(lv, m - 1), basis_index(lv, m)) = std::sqrt(double(m));
        }
        s_eg(basis_index(Level::Excited, m), basis_index(Level::Ground, m)) = 1.0;
    }
    const std::complex<double> cav = std::polar(1.0, sys.cavity_detuning * t);
    const std::complex<double> drv = std::polar(1.0, p.laser_detuning * t);
    Matrix h = sys.coupling * (cav * s_eg * a);
    h += envelope(p, t) * drv * s_eg;
    return h + h.adjoint().eval();
}

PulseParams no_pulse() {
    PulseParams p;
    p.amplitude = 0.0;
    return p;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("hamiltonian_apply") {
    SystemParams sys;
    sys.n_trunc = 3;

    SUBCASE("free rotating frame gives zero") {
        sys.coupling = 0.0;
        std::mt19937_64 rng(1);
        QDCavityState rho(random_hermitian_density(8, rng), 0.0);
        CHECK(max_abs(hamiltonian_apply(sys, no_pulse(), 2.0, rho)) == 0.0);
    }

    SUBCASE("|e,0> couples only to |g,1> with strength g") {
        sys.coupling = 0.1;
        const auto rho = QDCavityState::basis(3, Level::Excited, 0);
        Matrix out = hamiltonian_apply(sys, no_pulse(), 0.7, rho);
        const auto e0 = basis_index(Level::Excited, 0), g1 = basis_index(Level::Ground, 1);
        CHECK(std::abs(out(e0, g1)) == doctest::Approx(0.1));
        CHECK(std::abs(out(g1, e0)) == doctest::Approx(0.1));
        out(e0, g1) = out(g1, e0) = 0.0;
        CHECK(max_abs(out) == 0.0);
    }

    SUBCASE("agrees with the dense operator commutator and is traceless") {
        sys.coupling = 0.13;
        sys.cavity_detuning = 0.8;
        PulseParams p;
        p.amplitude = 3.0;
        p.width_ps = 5.0;
        p.center_ps = 4.0;
        p.laser_detuning = 0.3;
        std::mt19937_64 rng(2);
        for (double t : {0.0, 1.7, 6.2}) {
            QDCavityState rho(random_hermitian_density(8, rng), t);
            const Matrix h = dense_hamiltonian(sys, p, t);
            const Matrix expect = std::complex<double>(0, 1) * (rho.matrix() * h - h * rho.matrix());
            const Matrix got = hamiltonian_apply(sys, p, t, rho);
            CHECK(max_abs(got - expect) < 1e-14);
            CHECK(std::abs(got.trace()) < 1e-14);
        }
    }

    SUBCASE("dimension mismatch is a shape error") {
        const auto rho = QDCavityState::basis(2, Level::Ground, 0);
        try {
            hamiltonian_apply(sys, no_pulse(), 0.0, rho);
            FAIL("expected shape error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Shape);
        }
    }
}

TEST_CASE("dissipator_apply") {
    const std::complex<double> gamma{0.07, -0.02};

    SUBCASE("diagonal states are untouched") {
        QDCavityState rho(2);
        rho.matrix().diagonal() << 0.1, 0.2, 0.3, 0.15, 0.05, 0.2;
        CHECK(max_abs(dissipator_apply(gamma, rho)) == 0.0);
    }

    SUBCASE("single e0-g0 coherence is scaled by -Gamma") {
        QDCavityState rho(1);
        rho.matrix()(basis_index(Level::Excited, 0), basis_index(Level::Ground, 0)) = 1.0;
        Matrix out = dissipator_apply(gamma, rho);
        CHECK(out(1, 0) == -gamma);
        out(1, 0) = 0.0;
        CHECK(max_abs(out) == 0.0);
    }

    SUBCASE("matches brute-force commutators and is traceless") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 5; ++trial) {
            QDCavityState rho(random_hermitian_density(10, rng), 0.0);
            const Matrix s = sigma_ee(10);
            const Matrix& r = rho.matrix();
            const Matrix expect = -gamma * (s * (s * r) - (s * r) * s) + std::conj(gamma) * (s * (r * s) - (r * s) * s);
            const Matrix got = dissipator_apply(gamma, rho);
            CHECK(max_abs(got - expect) < 1e-15);
            CHECK(std::abs(got.trace()) < 1e-15);
        }
    }
}

TEST_CASE("excitation number") {
    CHECK(excitation_number(QDCavityState::basis(4, Level::Excited, 0)) == 1.0);
    CHECK(excitation_number(QDCavityState::basis(4, Level::Ground, 0)) == 0.0);
    CHECK(excitation_number(QDCavityState::basis(4, Level::Excited, 2)) == 3.0);
}

TEST_CASE("integrate: all couplings zero leaves the state untouched") {
    SystemParams sys;
    sys.n_trunc = 2;
    sys.coupling = 0.0;
    const auto table = build_table(decoupled(), 30.0, 2.0, 0.005);
    std::mt19937_64 rng(4);
    QDCavityState rho0(random_hermitian_density(6, rng), 0.0);
    StepControl ctl;
    ctl.dt = 0.01;
    ctl.snapshot_stride = 1;
    const auto traj = integrate(sys, no_pulse(), table, rho0, {0.0, 2.0}, ctl);
    REQUIRE(traj.snapshots.size() == 201);
    for (const auto& s : traj.snapshots) CHECK((s.matrix().array() == rho0.matrix().array()).all());
}

TEST_CASE("integrate: vacuum Rabi oscillation") {
    SystemParams sys;
    sys.coupling = 0.1;
    sys.n_trunc = 2;
    const auto table = build_table(decoupled(), 30.0, 100.0, 5e-4);
    StepControl ctl;
    ctl.dt = 1e-3;
    ctl.snapshot_stride = 100;
    const auto traj = integrate(sys, no_pulse(), table, QDCavityState::basis(2, Level::Excited, 0), {0.0, 100.0}, ctl);
    double worst = 0.0;
    for (const auto& s : traj.snapshots) {
        const double c = std::cos(sys.coupling * s.time());
        worst = std::max(worst, std::abs(s.element(Level::Excited, 0, Level::Excited, 0).real() - c * c));
        // <e0|rho|g1> = i cos sin (one-excitation block)
        const auto coh = s.element(Level::Excited, 0, Level::Ground, 1);
        CHECK(std::abs(coh - std::complex<double>(0.0, 0.5 * std::sin(2.0 * sys.coupling * s.time()))) < 1e-6);
    }
    CHECK(worst < 1e-6);
    CHECK(traj.invariants.max_trace_drift < 1e-12);
    CHECK(traj.invariants.max_hermiticity_drift < 1e-12);
}

TEST_CASE("integrate: excitation number conserved with phonons and no drive") {
    SystemParams sys;
    sys.coupling = 0.15;
    sys.n_trunc = 4;
    const auto table = build_table(gaas, 30.0, 40.0, 5e-3);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(10);
    psi(basis_index(Level::Excited, 0)) = 0.6;
    psi(basis_index(Level::Ground, 1)) = std::complex<double>(0.0, 0.8);
    StepControl ctl;
    ctl.dt = 1e-2;
    ctl.snapshot_stride = 10;
    const auto traj = integrate(sys, no_pulse(), table, QDCavityState::pure(psi), {0.0, 40.0}, ctl);
    CHECK(traj.invariants.max_excitation_drift < 1e-9);
    CHECK(traj.invariants.max_trace_drift < 1e-9);
}

TEST_CASE("integrate: RK4 self-convergence and fourth-order scaling") {
    SystemParams sys;
    sys.coupling = 0.1;
    sys.n_trunc = 2;
    const auto table = build_table(decoupled(), 30.0, 100.0, 5e-4);
    const auto e0 = QDCavityState::basis(2, Level::Excited, 0);
    auto final_error = [&](double dt) {
        StepControl ctl;
        ctl.dt = dt;
        ctl.snapshot_stride = 1000000;
        const auto traj = integrate(sys, no_pulse(), table, e0, {0.0, 100.0}, ctl);
        const double c = std::cos(10.0);
        return std::abs(traj.snapshots.back().element(Level::Excited, 0, Level::Excited, 0).real() - c * c);
    };
    // Larger steps than the acceptance ones so the truncation error dominates round-off.
    const double e1 = final_error(0.4), e2 = final_error(0.2), e3 = final_error(0.1);
    CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.5));
    CHECK(e2 / e3 == doctest::Approx(16.0).epsilon(0.5));
}

TEST_CASE("exciton_only_integrate") {
    StepControl ctl;
    ctl.dt = 1e-3;
    ctl.snapshot_stride = 500;

    SUBCASE("pure dephasing follows the independent-boson closed form") {
        const auto table = build_table(gaas, 30.0, 20.0, 5e-4);
        ExcitonState x0{{0.5, 0.0}, 0.5, 0.0};
        const auto traj = exciton_only_integrate(no_pulse(), table, x0, {0.0, 20.0}, ctl);
        for (const auto& s : traj.snapshots) {
            CHECK(s.population == 0.5);
            const double expect = 0.5 * std::exp(-oracle::decoherence_exponent(gaas, 30.0, s.time).real());
            CHECK(std::abs(std::abs(s.polarization) - expect) / expect < 1e-6);
        }
    }

    SUBCASE("ground state without drive is a fixed point") {
        const auto table = build_table(gaas, 30.0, 5.0, 5e-4);
        const auto traj = exciton_only_integrate(no_pulse(), table, {}, {0.0, 5.0}, ctl);
        for (const auto& s : traj.snapshots) {
            CHECK(s.population == 0.0);
            CHECK(s.polarization == std::complex<double>{});
        }
    }

    SUBCASE("resonant Rabi flopping with phonons off") {
        const auto table = build_table(decoupled(), 30.0, 60.0, 5e-4);
        PulseParams p;
        p.width_ps = 10.0;
        p.center_ps = 30.0;
        p.amplitude = 7.0;
        const auto traj = exciton_only_integrate(p, table, {}, {0.0, 60.0}, ctl);
        for (const auto& s : traj.snapshots) {
            // real drive: N_e = sin^2(int_0^t f), Im P = -sin(2 int_0^t f) / 2
            const double area = p.amplitude / (2.0 * std::sqrt(2.0)) *
                                (std::erf((s.time - p.center_ps) / p.width_ps) + std::erf(p.center_ps / p.width_ps));
            CHECK(std::abs(s.population - std::pow(std::sin(area), 2)) < 1e-9);
            CHECK(std::abs(s.polarization.imag() + 0.5 * std::sin(2.0 * area)) < 1e-9);
        }
    }

    SUBCASE("plateau drive oscillates at 2|alpha|") {
        const auto table = build_table(decoupled(), 30.0, 20.0, 5e-4);
        PulseParams p;
        p.width_ps = 1e5;
        p.center_ps = 10.0;
        p.amplitude = 0.3 * std::sqrt(2.0 * std::numbers::pi) * p.width_ps;  // |alpha| = 0.3 rad/ps
        p.laser_detuning = 0.0;
        const auto traj = exciton_only_integrate(p, table, {}, {0.0, 20.0}, ctl);
        for (const auto& s : traj.snapshots) CHECK(std::abs(s.population - std::pow(std::sin(0.3 * s.time), 2)) < 1e-6);
    }
}

TEST_CASE("exciton-only agrees with the full propagation of the 2-level subspace") {
    SystemParams sys;
    sys.coupling = 0.0;
    sys.n_trunc = 1;
    PulseParams p;
    p.amplitude = 5.0;
    p.width_ps = 4.0;
    p.center_ps = 10.0;
    p.laser_detuning = 0.2;
    const auto table = build_table(gaas, 30.0, 25.0, 5e-4);
    StepControl ctl;
    ctl.dt = 1e-3;
    ctl.snapshot_stride = 250;
    const auto ex = exciton_only_integrate(p, table, {}, {0.0, 25.0}, ctl);
    const auto full = integrate(sys, p, table, QDCavityState::basis(1, Level::Ground, 0), {0.0, 25.0}, ctl);
    REQUIRE(ex.snapshots.size() == full.snapshots.size());
    for (std::size_t i = 0; i < ex.snapshots.size(); ++i) {
        const auto& f = full.snapshots[i];
        CHECK(std::abs(ex.snapshots[i].polarization - f.element(Level::Excited, 0, Level::Ground, 0)) < 1e-9);
        CHECK(std::abs(ex.snapshots[i].population - f.element(Level::Excited, 0, Level::Excited, 0).real()) < 1e-9);
    }
    CHECK(ex.invariants.max_positivity_violation < 1e-8);
}

TEST_CASE("closure mode") {
    SystemParams sys;
    sys.coupling = 0.1;
    sys.n_trunc = 6;
    const auto table = build_table(gaas, 30.0, 100.0, 5e-3);
    StepControl ctl;
    ctl.dt = 1e-2;
    ctl.snapshot_stride = 100;

    SUBCASE("matches the full Liouvillian when no dropped element is sourced") {
        const auto rho0 = QDCavityState::basis(6, Level::Excited, 0);
        const auto full = integrate(sys, no_pulse(), table, rho0, {0.0, 100.0}, ctl);
        const auto band = closure_integrate(sys, no_pulse(), table, rho0, {0.0, 100.0}, ctl);
        REQUIRE(full.snapshots.size() == band.snapshots.size());
        for (std::size_t i = 0; i < full.snapshots.size(); ++i) {
            CHECK(max_abs(full.snapshots[i].matrix() - band.snapshots[i].matrix()) < 1e-9);
        }
    }

    SUBCASE("undriven ground state stays put") {
        const auto traj = closure_integrate(sys, no_pulse(), table, QDCavityState::basis(6, Level::Ground, 0),
                                            {0.0, 10.0}, ctl);
        for (const auto& s : traj.snapshots) {
            Matrix m = s.matrix();
            CHECK(m(0, 0) == 1.0);
            m(0, 0) = 0.0;
            CHECK(max_abs(m) == 0.0);
        }
    }

    SUBCASE("driven run: deviation from the full Liouvillian is reported") {
        PulseParams p;
        p.amplitude = 7.875;
        p.width_ps = 10.0;
        p.center_ps = 30.0;
        const auto rho0 = QDCavityState::basis(6, Level::Ground, 0);
        const auto full = integrate(sys, p, table, rho0, {0.0, 100.0}, ctl);
        const auto band = closure_integrate(sys, p, table, rho0, {0.0, 100.0}, ctl);
        double worst = 0.0;
        for (std::size_t i = 0; i < full.snapshots.size(); ++i) {
            const Matrix& f = full.snapshots[i].matrix();
            const Matrix& b = band.snapshots[i].matrix();
            worst = std::max(worst, (f.diagonal() - b.diagonal()).cwiseAbs().maxCoeff());
        }
        MESSAGE("closure vs full, max population deviation (a = 10 ps drive): " << worst);
        CHECK(std::isfinite(worst));
        CHECK(band.invariants.max_trace_drift < 1e-9);
    }

    SUBCASE("rejects initial states with coherences outside the band") {
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(14);
        psi(0) = psi(2) = 1.0 / std::sqrt(2.0);
        CHECK_THROWS_AS(closure_integrate(sys, no_pulse(), table, QDCavityState::pure(psi), {0.0, 1.0}, ctl), Error);
    }
}

TEST_CASE("integrate input validation") {
    SystemParams sys;
    sys.n_trunc = 1;
    const auto table = build_table(decoupled(), 0.0, 1.0, 0.01);
    const auto rho0 = QDCavityState::basis(1, Level::Ground, 0);
    StepControl ctl;
    ctl.dt = 0.01;
    CHECK_THROWS_AS(integrate(sys, no_pulse(), table, rho0, {0.0, 2.0}, ctl), Error);
    ctl.dt = 0.003;
    CHECK_THROWS_AS(integrate(sys, no_pulse(), table, rho0, {0.0, 1.0}, ctl), Error);
    sys.n_trunc = 0;
    CHECK_THROWS_AS(integrate(sys, no_pulse(), table, rho0, {0.0, 1.0}, ctl), Error);
}

TEST_CASE("integrate: non-Hermitian input is rejected") {
    SystemParams sys;
    sys.n_trunc = 1;
    const auto table = build_table(decoupled(), 30.0, 1.0, 0.005);
    QDCavityState rho = QDCavityState::basis(1, Level::Ground, 0);
    rho.matrix()(0, 1) = 0.1;
    StepControl ctl;
    ctl.dt = 0.01;
    CHECK_THROWS_AS(integrate(sys, no_pulse(), table, rho, {0.0, 1.0}, ctl), Error);
}

TEST_CASE("integrate: untouched photon ladder stays exactly zero") {
    // A = 0 from |e,0>: only |e,0> and |g,1> ever mix, whatever n_trunc is.
    const auto table = build_table(gaas, 30.0, 20.0, 0.005);
    StepControl ctl;
    ctl.dt = 0.01;
    ctl.snapshot_stride = 100;
    ctl.keep_states = true;
    SystemParams small, big;
    small.n_trunc = 1;
    big.n_trunc = 30;
    const auto a = integrate(small, no_pulse(), table, QDCavityState::basis(1, Level::Excited, 0), {0.0, 20.0}, ctl);
    const auto b = integrate(big, no_pulse(), table, QDCavityState::basis(30, Level::Excited, 0), {0.0, 20.0}, ctl);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
        const Matrix& x = a.snapshots[k].matrix();
        const Matrix& y = b.snapshots[k].matrix();
        CHECK((x.block(1, 1, 2, 2).array() == y.block(1, 1, 2, 2).array()).all());
        Matrix rest = y;
        rest.block(1, 1, 2, 2).setZero();
        CHECK(rest.cwiseAbs().maxCoeff() == 0.0);
    }
}
