#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qdsim/dynamics.hpp"
#include "qdsim/kernel.hpp"
#include "qdsim/observables.hpp"

using namespace qdsim;

namespace {

std::vector<double> poisson(double mean, int n_max) {
    std::vector<double> p(n_max + 1);
    double term = std::exp(-mean);
    for (int n = 0; n <= n_max; ++n) {
        p[n] = term;
        term *= mean / (n + 1);
    }
    return p;
}

std::vector<double> fock(int n, int n_max) {
    std::vector<double> p(n_max + 1, 0.0);
    p[n] = 1.0;
    return p;
}

Matrix random_density(Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) a(i, j) = {g(rng), g(rng)};
    Matrix rho = a * a.adjoint();
    return rho / rho.trace();
}

}  // namespace

TEST_CASE("photon distribution reads the diagonal") {
    const auto vac = photon_distribution(QDCavityState::basis(4, Level::Ground, 0));
    REQUIRE(vac.size() == 5);
    CHECK(vac[0] == 1.0);
    for (int n = 1; n <= 4; ++n) CHECK(vac[n] == 0.0);

    QDCavityState mix(4);
    mix.matrix()(basis_index(Level::Ground, 0), basis_index(Level::Ground, 0)) = 0.5;
    mix.matrix()(basis_index(Level::Excited, 1), basis_index(Level::Excited, 1)) = 0.5;
    const auto p = photon_distribution(mix);
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    CHECK(p[2] == 0.0);
}

TEST_CASE("photon distribution sums to the trace") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix rho = random_density(2 * 9, rng);
        rho *= 0.3 + trial * 0.05;  // trace away from one on purpose
        QDCavityState s(rho, 0.0);
        double total = 0.0;
        for (double x : photon_distribution(s)) total += x;
        CHECK(std::abs(total - rho.trace().real()) < 1e-12);
    }
}

TEST_CASE("Poisson statistics") {
    const auto p = poisson(2.0, 80);
    CHECK(photon_mean(p) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(photon_second_moment(p) == doctest::Approx(6.0).epsilon(1e-12));
    REQUIRE(mandel(p).has_value());
    CHECK(std::abs(*mandel(p)) < 1e-10);
    CHECK(std::abs(*g2_zero(p) - 1.0) < 1e-10);
    CHECK(*g2_mandel_residual(p) < 1e-10);
}

TEST_CASE("Fock states") {
    const auto one = fock(1, 10);
    CHECK(*mandel(one) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(*g2_zero(one) == 0.0);

    const auto two = fock(2, 10);
    CHECK(*g2_zero(two) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(*mandel(two) == doctest::Approx(-1.0).epsilon(1e-14));
    const double nbar = photon_mean(two);
    CHECK(nbar * (*g2_zero(two) - 1.0) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(*g2_mandel_residual(two) < 1e-14);
}

TEST_CASE("thermal distribution with mean one is super-Poissonian") {
    // geometric p(n) = nbar^n / (1 + nbar)^(n + 1), summed directly to n = 1000
    const double nbar = 1.0;
    std::vector<double> p(1001);
    double m1 = 0.0, m2 = 0.0;
    for (int n = 0; n <= 1000; ++n) {
        p[n] = std::pow(nbar, n) / std::pow(1.0 + nbar, n + 1);
        m1 += n * p[n];
        m2 += double(n) * n * p[n];
    }
    const double brute = (m2 - m1 * m1) / m1 - 1.0;
    CHECK(brute == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*mandel(p) == doctest::Approx(brute).epsilon(1e-12));
    CHECK(*g2_zero(p) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("moment identity holds for arbitrary distributions") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(1 + trial % 40);
        double total = 0.0;
        for (double& x : p) total += (x = u(rng) * u(rng));
        for (double& x : p) x /= total;
        const auto r = g2_mandel_residual(p);
        if (photon_mean(p) <= undefined_photon_threshold) {
            CHECK_FALSE(r.has_value());
            continue;
        }
        REQUIRE(r.has_value());
        CHECK(*r < 1e-10);
        CHECK(photon_second_moment(p) >= photon_mean(p) * photon_mean(p) - 1e-10);
        CHECK(*mandel(p) >= -1.0 - 1e-8);
        CHECK(*g2_zero(p) >= 0.0);
    }
}

TEST_CASE("near-vacuum statistics are undefined") {
    const auto vac = fock(0, 5);
    CHECK_FALSE(mandel(vac).has_value());
    CHECK_FALSE(g2_zero(vac).has_value());
    CHECK_FALSE(g2_mandel_residual(vac).has_value());

    std::vector<double> tiny = vac;
    tiny[1] = 1e-13;
    CHECK_FALSE(mandel(tiny).has_value());
    tiny[1] = 1e-11;
    CHECK(mandel(tiny).has_value());

    const auto rec = observe(QDCavityState::basis(3, Level::Ground, 0));
    CHECK_FALSE(rec.mandel.has_value());
    const auto row = observable_row(rec);
    const auto head = observable_header(3);
    REQUIRE(row.size() == head.size());
    CHECK(row[7].empty());  // M
    CHECK(row[8].empty());  // g2
}

TEST_CASE("one-photon coherence element") {
    CHECK(polarization_one_photon(QDCavityState::basis(2, Level::Ground, 0)) == std::complex<double>{});

    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(6);
    psi[basis_index(Level::Excited, 0)] = 1.0 / std::sqrt(2.0);
    psi[basis_index(Level::Ground, 1)] = 1.0 / std::sqrt(2.0);
    const auto c = polarization_one_photon(QDCavityState::pure(psi));
    CHECK(c.real() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(c.imag() == 0.0);
}

TEST_CASE("record columns follow the header") {
    const auto head = observable_header(2);
    const std::vector<std::string> expect{"t",  "N_e", "inversion", "ReP", "ImP", "n_mean",
                                          "n2_mean", "M", "g2", "p0", "p1", "p2"};
    CHECK(head == expect);

    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(6);
    psi[basis_index(Level::Excited, 0)] = 0.6;
    psi[basis_index(Level::Ground, 1)] = std::complex<double>(0.0, 0.8);
    const auto rec = observe(QDCavityState::pure(psi, 1.5));
    CHECK(rec.t == 1.5);
    CHECK(rec.exciton_population == doctest::Approx(0.36));
    CHECK(rec.inversion == doctest::Approx(2 * 0.36 - 1));
    CHECK(rec.photon_mean == doctest::Approx(0.64));
    CHECK(rec.re_polarization == doctest::Approx(0.0));
    CHECK(rec.im_polarization == doctest::Approx(-0.48));
    CHECK(*rec.g2 == 0.0);
    CHECK(exciton_header() == std::vector<std::string>{"t", "N_e", "inversion", "ReP", "ImP"});
}

TEST_CASE("decoupled dot leaves cavity statistics frozen") {
    SystemParams sys;
    sys.coupling = 0.0;
    sys.n_trunc = 12;
    PulseParams pulse;
    pulse.amplitude = 0.0;
    SpectralModel model = derive_spectral_model(MaterialParams{});
    const auto table = build_table(model, 30.0, 20.0, 0.005);

    // coherent cavity field with mean 1.5 next to a partly excited dot
    const int n = sys.n_trunc;
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(2 * (n + 1));
    const auto amps = poisson(1.5, n);
    for (int k = 0; k <= n; ++k) {
        psi[basis_index(Level::Ground, k)] = std::sqrt(0.7 * amps[k]);
        psi[basis_index(Level::Excited, k)] = std::sqrt(0.3 * amps[k]);
    }
    psi.normalize();
    const auto start = observe(QDCavityState::pure(psi));

    StepControl ctl;
    ctl.dt = 0.01;
    ctl.snapshot_stride = 100;
    ctl.keep_states = true;
    const auto traj = integrate(sys, pulse, table, QDCavityState::pure(psi), {0.0, 20.0}, ctl);
    for (const auto& s : traj.snapshots) {
        const auto r = observe(s);
        CHECK(std::abs(r.photon_mean - start.photon_mean) < 1e-12);
        CHECK(std::abs(*r.mandel - *start.mandel) < 1e-12);
        CHECK(std::abs(*r.g2 - *start.g2) < 1e-12);
        CHECK(std::abs(r.exciton_population - start.exciton_population) < 1e-12);
    }
}
