#ifndef POINTDN_ERROR_HPP
#define POINTDN_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace pointdn {

enum class ErrorKind {
    InvalidArgument,   // precondition or shape violation
    SingularSystem,    // factorization failed or operator not positive definite
    NonConvergence,    // iteration budget exhausted
    BranchEscape,      // Newton iterate left the small-solution ball
    IllConditioned,    // least-squares system too ill-conditioned to trust
    Io,                // file could not be read or written
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid_argument";
        case ErrorKind::SingularSystem: return "singular_system";
        case ErrorKind::NonConvergence: return "non_convergence";
        case ErrorKind::BranchEscape: return "branch_escape";
        case ErrorKind::IllConditioned: return "ill_conditioned";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

// All library failures are reported through this one type; callers switch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(ErrorKind::InvalidArgument, message);
}

}  // namespace pointdn

#endif  // POINTDN_ERROR_HPP
