#include "qdsim/observables.hpp"

#include "qdsim/csv.hpp"

namespace qdsim {

std::vector<double> photon_distribution(const QDCavityState& rho) {
    std::vector<double> p(static_cast<std::size_t>(rho.n_trunc()) + 1);
    for (int n = 0; n <= rho.n_trunc(); ++n) {
        p[n] = rho.element(Level::Excited, n, Level::Excited, n).real() +
               rho.element(Level::Ground, n, Level::Ground, n).real();
    }
    return p;
}

double photon_mean(std::span<const double> p) {
    double m = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) m += static_cast<double>(n) * p[n];
    return m;
}

double photon_second_moment(std::span<const double> p) {
    double m = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) m += static_cast<double>(n * n) * p[n];
    return m;
}

std::optional<double> mandel(std::span<const double> p, double threshold) {
    const double mean = photon_mean(p);
    if (!(mean > threshold)) return std::nullopt;
    return (photon_second_moment(p) - mean * mean) / mean - 1.0;
}

std::optional<double> g2_zero(std::span<const double> p, double threshold) {
    const double mean = photon_mean(p);
    if (!(mean > threshold)) return std::nullopt;
    double falling = 0.0;
    for (std::size_t n = 2; n < p.size(); ++n) falling += static_cast<double>(n * (n - 1)) * p[n];
    return falling / (mean * mean);
}

std::optional<double> g2_mandel_residual(std::span<const double> p, double threshold) {
    const auto m = mandel(p, threshold);
    const auto g2 = g2_zero(p, threshold);
    if (!m || !g2) return std::nullopt;
    return std::abs(*m - photon_mean(p) * (*g2 - 1.0));
}

std::complex<double> polarization_one_photon(const QDCavityState& rho) {
    return rho.element(Level::Excited, 0, Level::Ground, 1);
}

double exciton_population(const QDCavityState& rho) {
    double ne = 0.0;
    for (int n = 0; n <= rho.n_trunc(); ++n) ne += rho.element(Level::Excited, n, Level::Excited, n).real();
    return ne;
}

ObservableRecord observe(const QDCavityState& rho) {
    ObservableRecord r;
    r.t = rho.time();
    r.exciton_population = exciton_population(rho);
    r.inversion = 2.0 * r.exciton_population - 1.0;
    const auto pol = polarization_one_photon(rho);
    r.re_polarization = pol.real();
    r.im_polarization = pol.imag();
    r.distribution = photon_distribution(rho);
    r.photon_mean = photon_mean(r.distribution);
    r.photon_second_moment = photon_second_moment(r.distribution);
    r.mandel = mandel(r.distribution);
    r.g2 = g2_zero(r.distribution);
    return r;
}

std::vector<std::string> observable_header(int n_trunc) {
    std::vector<std::string> h{"t", "N_e", "inversion", "ReP", "ImP", "n_mean", "n2_mean", "M", "g2"};
    for (int n = 0; n <= n_trunc; ++n) h.push_back("p" + std::to_string(n));
    return h;
}

std::vector<std::string> observable_row(const ObservableRecord& r) {
    using csv::format_double;
    std::vector<std::string> row{format_double(r.t),
                                 format_double(r.exciton_population),
                                 format_double(r.inversion),
                                 format_double(r.re_polarization),
                                 format_double(r.im_polarization),
                                 format_double(r.photon_mean),
                                 format_double(r.photon_second_moment),
                                 csv::format_optional(r.mandel),
                                 csv::format_optional(r.g2)};
    for (double v : r.distribution) row.push_back(format_double(v));
    return row;
}

std::vector<std::string> exciton_header() { return {"t", "N_e", "inversion", "ReP", "ImP"}; }

std::vector<std::string> exciton_row(const ExcitonState& s) {
    using csv::format_double;
    return {format_double(s.time), format_double(s.population), format_double(2.0 * s.population - 1.0),
            format_double(s.polarization.real()), format_double(s.polarization.imag())};
}

}  // namespace qdsim
