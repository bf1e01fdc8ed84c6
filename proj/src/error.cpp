#include "qdsim/error.hpp"

namespace qdsim {

const char* to_string(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::InvalidParameter: return "invalid-parameter";
        case ErrorCategory::Domain: return "domain";
        case ErrorCategory::NumericalAccuracy: return "numerical-accuracy";
        case ErrorCategory::Shape: return "shape";
        case ErrorCategory::IntegrationDiverged: return "integration-diverged";
        case ErrorCategory::Validation: return "validation";
        case ErrorCategory::Io: return "io";
    }
    return "unknown";
}

}  // namespace qdsim
