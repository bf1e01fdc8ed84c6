#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <queue>
#include <string>
#include <vector>

#include "qdsim/error.hpp"

namespace qdsim::quad {

using complex = std::complex<double>;

struct Interval {
    double lo;
    double hi;
};

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
// Abscissae are listed from the edge inwards; index 7 is the centre.
struct GaussKronrod15 {
    static constexpr std::array<double, 8> nodes = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.0};
    static constexpr std::array<double, 8> kronrod_weights = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    // Gauss weights for nodes[1], nodes[3], nodes[5], nodes[7].
    static constexpr std::array<double, 4> gauss_weights = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
};

struct PanelEstimate {
    Interval interval;
    complex value;
    double error;
};

template <class F>
PanelEstimate gauss_kronrod_panel(F&& f, Interval iv) {
    using R = GaussKronrod15;
    const double centre = 0.5 * (iv.lo + iv.hi);
    const double half = 0.5 * (iv.hi - iv.lo);

    const complex fc = f(centre);
    complex kronrod = fc * R::kronrod_weights[7];
    complex gauss = fc * R::gauss_weights[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * R::nodes[i];
        const complex pair = f(centre - dx) + f(centre + dx);
        kronrod += pair * R::kronrod_weights[i];
        if (i % 2 == 1) gauss += pair * R::gauss_weights[i / 2];
    }
    return {iv, kronrod * half, std::abs((kronrod - gauss) * half)};
}

struct Result {
    complex value;
    double error_estimate;
    std::vector<PanelEstimate> panels;  // sorted by interval.lo
};

struct Options {
    double abs_tol = 1e-10;
    std::size_t max_panels = 20000;
};

// Globally adaptive bisection: the panel with the largest error estimate is
// split until the summed estimate falls below abs_tol. Throws AccuracyError
// carrying the achieved estimate if the panel budget runs out or panels
// shrink to round-off width.
template <class F>
Result integrate(F&& f, const std::vector<Interval>& start, const Options& opt) {
    auto worse = [](const PanelEstimate& a, const PanelEstimate& b) { return a.error < b.error; };
    std::priority_queue<PanelEstimate, std::vector<PanelEstimate>, decltype(worse)> heap(worse);

    double total_error = 0.0;
    for (const auto& iv : start) {
        auto p = gauss_kronrod_panel(f, iv);
        total_error += p.error;
        heap.push(p);
    }

    while (total_error > opt.abs_tol) {
        if (heap.size() >= opt.max_panels) {
            throw AccuracyError("adaptive quadrature exhausted " + std::to_string(opt.max_panels) +
                                    " panels; achieved error " + std::to_string(total_error),
                                total_error);
        }
        const PanelEstimate worst = heap.top();
        const double mid = 0.5 * (worst.interval.lo + worst.interval.hi);
        if (!(mid > worst.interval.lo && mid < worst.interval.hi)) {
            throw AccuracyError("adaptive quadrature hit round-off panel width; achieved error " +
                                    std::to_string(total_error),
                                total_error);
        }
        heap.pop();
        auto left = gauss_kronrod_panel(f, {worst.interval.lo, mid});
        auto right = gauss_kronrod_panel(f, {mid, worst.interval.hi});
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    Result r{};
    r.panels.reserve(heap.size());
    while (!heap.empty()) {
        r.panels.push_back(heap.top());
        heap.pop();
    }
    std::sort(r.panels.begin(), r.panels.end(),
              [](const PanelEstimate& a, const PanelEstimate& b) { return a.interval.lo < b.interval.lo; });
    // Re-sum in interval order so the result does not depend on heap history.
    r.error_estimate = 0.0;
    for (const auto& p : r.panels) {
        r.value += p.value;
        r.error_estimate += p.error;
    }
    return r;
}

// Splits [lo, hi] into n equal panels.
std::vector<Interval> uniform_partition(double lo, double hi, std::size_t n);

}  // namespace qdsim::quad
