#include "rhythm/common.hpp"

namespace rhythm {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::IntegrationFailure: return "integration-failure";
        case ErrorKind::HistoryUnderflow: return "history-underflow";
        case ErrorKind::DegenerateTrajectory: return "degenerate-trajectory";
        case ErrorKind::EmptyLinks: return "empty-link-list";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Nilpotent: return "nilpotent-adjacency";
        case ErrorKind::NonConvergence: return "non-convergence";
        case ErrorKind::IndexMismatch: return "index-mismatch";
        case ErrorKind::DimensionMismatch: return "dimension-mismatch";
        case ErrorKind::InsufficientData: return "insufficient-data";
        case ErrorKind::SingularSystem: return "singular-system";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::NoEquilibrium: return "no-equilibrium";
        case ErrorKind::WindowTooLarge: return "window-too-large";
        case ErrorKind::TooShort: return "too-short";
        case ErrorKind::ConfigValidation: return "config-validation";
        case ErrorKind::BundleIncompatible: return "bundle-incompatible";
        case ErrorKind::UnknownSession: return "unknown-session";
        case ErrorKind::InvalidCommand: return "invalid-command";
        case ErrorKind::Io: return "io";
        case ErrorKind::PortInUse: return "port-in-use";
    }
    return "unknown";
}

int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

}  // namespace rhythm
