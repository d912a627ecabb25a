#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace attnmix {

// Build-wide element type. 64-bit by default: the acceptance-level
// finite-difference gradient checks need an fd noise floor that 32-bit
// forward passes cannot reach. Reductions accumulate in double either way.
#ifdef ATTNMIX_REAL32
using real = float;
#else
using real = double;
#endif

// Thrown when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Thrown for malformed input files, bad manifests, and similar runtime errors.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

inline bool is_finite(real v) { return std::isfinite(static_cast<double>(v)); }

}  // namespace attnmix
