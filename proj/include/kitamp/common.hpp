#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kitamp {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018 exact values.
inline constexpr double planck_h = 6.62607015e-34;
inline constexpr double hbar = planck_h / two_pi;
inline constexpr double boltzmann_k = 1.380649e-23;

// Error hierarchy. The CLI maps InputError subclasses to exit code 2 and
// everything else derived from Error to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

class GridError : public InputError {
public:
    using InputError::InputError;
};

class ParseError : public InputError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DomainError(msg);
}

/// Throws GridError unless the grid is non-empty, finite and strictly increasing.
/// With `positive` set, the first point must also be > 0.
inline void validate_grid(std::span<const double> freqs, bool positive = false) {
    if (freqs.empty()) throw GridError("frequency grid is empty");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (!std::isfinite(freqs[i])) throw GridError("non-finite frequency at index " + std::to_string(i));
        if (i > 0 && !(freqs[i] > freqs[i - 1]))
            throw GridError("frequency grid not strictly increasing at index " + std::to_string(i));
    }
    if (positive && !(freqs.front() > 0.0)) throw GridError("frequency grid must be positive");
    if (!positive && freqs.front() < 0.0) throw GridError("frequency grid must be non-negative");
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.back() = hi;
    return out;
}

/// Index i such that xs[i] <= x <= xs[i+1]; xs must be sorted with >= 2 points.
inline std::size_t bracket(std::span<const double> xs, double x) {
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = static_cast<std::size_t>(it - xs.begin());
    if (i == 0) return 0;
    return std::min(i - 1, xs.size() - 2);
}

/// Piecewise-linear interpolation, clamped to the end values outside [xs.front(), xs.back()].
inline double interp_clamped(std::span<const double> xs, std::span<const double> ys, double x) {
    if (xs.size() == 1) return ys[0];
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const std::size_t i = bracket(xs, x);
    const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return ys[i] + t * (ys[i + 1] - ys[i]);
}

/// Shortest round-trip representation of a double ("%.17g").
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double db10(double linear_power) { return 10.0 * std::log10(linear_power); }
inline double from_db10(double db) { return std::pow(10.0, db / 10.0); }

} // namespace kitamp
