#include "qdsim/kernel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string>
#include <thread>

#include "qdsim/csv.hpp"
#include "qdsim/error.hpp"
#include "qdsim/quadrature.hpp"
#include "qdsim/units.hpp"

namespace qdsim {

namespace {

constexpr double coth_series_threshold = 1e-4;
constexpr std::size_t phase_reseed_block = 512;

double theta_for(double temperature_K) {
    if (!(temperature_K >= 0.0)) {
        throw Error(ErrorCategory::Domain, "kernel: temperature must be >= 0");
    }
    return units::thermal_frequency(temperature_K);
}

auto make_integrand(const SpectralModel& model, double theta, double t) {
    return [&model, theta, t](double w) -> complex {
        const double jw = spectral_density(model, w);
        const double weight = thermal_spectral_weight(model, theta, w);
        return {weight * std::cos(w * t), -jw * std::sin(w * t)};
    };
}

std::size_t initial_panels(double w_max, double t) {
    // about one panel per half period of the oscillating factor
    const double half_periods = w_max * std::abs(t) / 3.141592653589793;
    return std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(half_periods)));
}

std::vector<quad::Interval> intervals_of(const quad::Result& r) {
    std::vector<quad::Interval> out;
    out.reserve(r.panels.size());
    for (const auto& p : r.panels) out.push_back(p.interval);
    return out;
}

// Pre-weighted Kronrod nodes of a fixed frequency partition.
struct FrequencyRule {
    std::vector<double> omega;
    std::vector<double> cos_weight;  // w_k j coth
    std::vector<double> sin_weight;  // w_k j
};

FrequencyRule expand_rule(const SpectralModel& model, double theta, const std::vector<quad::Interval>& parts) {
    using R = quad::GaussKronrod15;
    FrequencyRule rule;
    auto push = [&](double w, double kw) {
        rule.omega.push_back(w);
        rule.cos_weight.push_back(kw * thermal_spectral_weight(model, theta, w));
        rule.sin_weight.push_back(kw * spectral_density(model, w));
    };
    for (const auto& iv : parts) {
        const double centre = 0.5 * (iv.lo + iv.hi);
        const double half = 0.5 * (iv.hi - iv.lo);
        for (int i = 0; i < 7; ++i) {
            push(centre - half * R::nodes[i], half * R::kronrod_weights[i]);
            push(centre + half * R::nodes[i], half * R::kronrod_weights[i]);
        }
        push(centre, half * R::kronrod_weights[7]);
    }
    return rule;
}

// K at t_i = (first + k) * dt for k in [0, count), advancing cos/sin by rotation.
void evaluate_block(const FrequencyRule& rule, double dt, std::size_t first, std::size_t count, complex* out) {
    const std::size_t m = rule.omega.size();
    std::vector<double> c(m), s(m), cr(m), sr(m);
    const double t0 = static_cast<double>(first) * dt;
    for (std::size_t j = 0; j < m; ++j) {
        c[j] = std::cos(rule.omega[j] * t0);
        s[j] = std::sin(rule.omega[j] * t0);
        cr[j] = std::cos(rule.omega[j] * dt);
        sr[j] = std::sin(rule.omega[j] * dt);
    }
    for (std::size_t k = 0; k < count; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            re += rule.cos_weight[j] * c[j];
            im -= rule.sin_weight[j] * s[j];
        }
        out[k] = {re, im};
        for (std::size_t j = 0; j < m; ++j) {
            const double cn = c[j] * cr[j] - s[j] * sr[j];
            s[j] = s[j] * cr[j] + c[j] * sr[j];
            c[j] = cn;
        }
    }
}

std::vector<complex> cumulative_integral(const std::vector<complex>& f, double h) {
    const std::size_t n = f.size();
    std::vector<complex> g(n, complex{});
    if (n < 2) return g;
    if (n == 2) {
        g[1] = 0.5 * h * (f[0] + f[1]);
        return g;
    }
    if (n == 3) {
        g[1] = h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]);
    } else {
        g[1] = h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
    }
    // Simpson on even nodes, Simpson 3/8 from the even node three steps back on odd ones.
    for (std::size_t i = 2; i < n; ++i) {
        if (i % 2 == 0) {
            g[i] = g[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
        } else {
            g[i] = g[i - 3] + 3.0 * h / 8.0 * (f[i - 3] + 3.0 * f[i - 2] + 3.0 * f[i - 1] + f[i]);
        }
    }
    return g;
}

}  // namespace

double thermal_spectral_weight(const SpectralModel& model, double theta, double omega) {
    if (omega == 0.0) return 0.0;
    const double jw = spectral_density(model, omega);
    if (theta == 0.0) return jw;
    const double x = omega / (2.0 * theta);
    if (x < coth_series_threshold) {
        // j ~ w^3 and coth ~ 1/x, so expand instead of dividing by a tiny tanh
        const double w2 = omega * omega;
        const double y = omega / model.cutoff_rad_ps;
        return model.prefactor_ps2 * std::exp(-y * y) * (2.0 * theta * w2 + omega * w2 * x / 3.0);
    }
    if (x > 20.0) return jw;
    return jw / std::tanh(x);
}

KernelValue kernel_at(const SpectralModel& model, double temperature_K, double t, const KernelOptions& options) {
    const double theta = theta_for(temperature_K);
    const double w_max = options.window_in_cutoffs * model.cutoff_rad_ps;
    auto f = make_integrand(model, theta, t);
    quad::Options qo;
    qo.abs_tol = options.abs_tol;
    const auto r = quad::integrate(f, quad::uniform_partition(0.0, w_max, initial_panels(w_max, t)), qo);
    return {r.value, r.error_estimate};
}

KernelTable::KernelTable(SpectralModel model, double temperature_K, double dt, std::vector<complex> kernel,
                         std::vector<complex> gamma)
    : model_(model), temperature_K_(temperature_K), dt_(dt), kernel_(std::move(kernel)), gamma_(std::move(gamma)) {
    if (!(dt_ > 0.0)) throw Error(ErrorCategory::InvalidParameter, "KernelTable: dt must be > 0");
    if (kernel_.size() < 2 || kernel_.size() != gamma_.size()) {
        throw Error(ErrorCategory::InvalidParameter, "KernelTable: need >= 2 matching K and Gamma samples");
    }
}

KernelTable build_table(const SpectralModel& model, double temperature_K, double t_max, double dt,
                        const KernelOptions& options) {
    if (!(dt > 0.0) || !(t_max >= dt)) {
        throw Error(ErrorCategory::InvalidParameter, "build_table: need dt > 0 and t_max >= dt");
    }
    const double theta = theta_for(temperature_K);
    const std::size_t intervals = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
    const std::size_t n = intervals + 1;
    const double t_end = static_cast<double>(intervals) * dt;
    const double w_max = options.window_in_cutoffs * model.cutoff_rad_ps;

    quad::Options qo;
    qo.abs_tol = options.abs_tol;

    // Refine one partition until it resolves the most oscillatory grid time
    // and then a ladder of shorter ones.
    std::vector<double> probes{t_end};
    for (double p = 0.5 * t_end; p > 0.5; p *= 0.5) probes.push_back(p);
    probes.push_back(0.0);

    auto parts = quad::uniform_partition(0.0, w_max, initial_panels(w_max, t_end));
    double worst = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (double p : probes) {
            const auto r = quad::integrate(make_integrand(model, theta, p), parts, qo);
            parts = intervals_of(r);
            worst = std::max(worst, r.error_estimate);
        }
    }
    const FrequencyRule rule = expand_rule(model, theta, parts);

    std::vector<complex> kernel(n);
    const std::size_t blocks = (n + phase_reseed_block - 1) / phase_reseed_block;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b = next++; b < blocks; b = next++) {
            const std::size_t first = b * phase_reseed_block;
            const std::size_t count = std::min(phase_reseed_block, n - first);
            evaluate_block(rule, dt, first, count, kernel.data() + first);
        }
    };
    const unsigned threads = std::clamp<unsigned>(std::thread::hardware_concurrency(), 1u, 16u);
    if (threads == 1 || blocks == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < std::min<std::size_t>(threads, blocks); ++i) pool.emplace_back(worker);
    }
    // sin(0) = 0 exactly; the rotation seed already gives that, keep it explicit
    kernel[0].imag(0.0);

    auto gamma = cumulative_integral(kernel, dt);
    KernelTable table(model, temperature_K, dt, std::move(kernel), std::move(gamma));
    table.set_quadrature_error(worst);
    return table;
}

complex gamma_at(const KernelTable& table, double t) {
    const double t_max = table.t_max();
    if (!(t >= 0.0) || t > t_max * (1.0 + 1e-12)) {
        throw Error(ErrorCategory::Domain,
                    "gamma_at: t = " + std::to_string(t) + " ps outside table range [0, " + std::to_string(t_max) + "]");
    }
    const auto& g = table.gamma();
    const double s = t / table.dt();
    const auto nearest = static_cast<std::size_t>(std::llround(s));
    if (nearest < g.size() && table.time(nearest) == t) return g[nearest];

    std::size_t i = static_cast<std::size_t>(std::floor(s));
    if (i >= g.size() - 1) return g.back();
    const double frac = s - static_cast<double>(i);
    return g[i] + frac * (g[i + 1] - g[i]);
}

void write_table_csv(const KernelTable& table, std::ostream& out) {
    csv::write_row(out, {"t", "ReK", "ImK", "ReGamma", "ImGamma"});
    for (std::size_t i = 0; i < table.size(); ++i) {
        const complex k = table.kernel()[i];
        const complex g = table.gamma()[i];
        csv::write_row(out, {csv::format_double(table.time(i)), csv::format_double(k.real()),
                             csv::format_double(k.imag()), csv::format_double(g.real()),
                             csv::format_double(g.imag())});
    }
}

KernelTable read_table_csv(std::istream& in, const SpectralModel& model, double temperature_K) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCategory::Io, "kernel table CSV is empty");
    std::vector<double> times;
    std::vector<complex> kernel, gamma;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split_row(line);
        if (f.size() != 5) throw Error(ErrorCategory::Io, "kernel table CSV row needs 5 columns");
        times.push_back(csv::parse_double(f[0]));
        kernel.emplace_back(csv::parse_double(f[1]), csv::parse_double(f[2]));
        gamma.emplace_back(csv::parse_double(f[3]), csv::parse_double(f[4]));
    }
    if (times.size() < 2) throw Error(ErrorCategory::Io, "kernel table CSV needs at least two rows");
    const double dt = times[1] - times[0];
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (std::abs(times[i] - static_cast<double>(i) * dt) > 1e-9 * dt * static_cast<double>(i + 1)) {
            throw Error(ErrorCategory::Io, "kernel table CSV grid is not uniform from t = 0");
        }
    }
    return KernelTable(model, temperature_K, dt, std::move(kernel), std::move(gamma));
}

}  // namespace qdsim
