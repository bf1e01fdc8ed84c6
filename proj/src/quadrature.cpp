#include "qdsim/quadrature.hpp"

namespace qdsim::quad {

std::vector<Interval> uniform_partition(double lo, double hi, std::size_t n) {
    std::vector<Interval> out;
    out.reserve(n);
    const double width = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = lo + width * static_cast<double>(i);
        const double b = (i + 1 == n) ? hi : lo + width * static_cast<double>(i + 1);
        out.push_back({a, b});
    }
    return out;
}

}  // namespace qdsim::quad
