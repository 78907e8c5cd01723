#pragma once

// Two-port S-parameter data and wave-cascading (T) matrices.
//
// T-matrix convention: [b1, a1]^T = T [a2, b2]^T, so a chain in which the signal
// traverses A and then B has T = T_A * T_B.

#include <array>
#include <vector>

#include "kitamp/common.hpp"

namespace kitamp::network {

/// Row-major 2x2 complex matrix.
struct Mat2 {
    cplx m11{}, m12{}, m21{}, m22{};

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

    cplx det() const { return m11 * m22 - m12 * m21; }

    friend Mat2 operator*(const Mat2& a, const Mat2& b) {
        return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
                a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
    }
    friend Mat2 operator*(cplx s, const Mat2& a) { return {s * a.m11, s * a.m12, s * a.m21, s * a.m22}; }
    friend Mat2 operator+(const Mat2& a, const Mat2& b) {
        return {a.m11 + b.m11, a.m12 + b.m12, a.m21 + b.m21, a.m22 + b.m22};
    }
    friend Mat2 operator-(const Mat2& a, const Mat2& b) {
        return {a.m11 - b.m11, a.m12 - b.m12, a.m21 - b.m21, a.m22 - b.m22};
    }

    std::array<cplx, 4> entries() const { return {m11, m12, m21, m22}; }
    double max_abs() const {
        return std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
    }
};

inline Mat2 inverse(const Mat2& a, double det_floor = 1e-300) {
    const cplx d = a.det();
    if (!(std::abs(d) > det_floor)) throw SingularError("singular 2x2 matrix");
    return {a.m22 / d, -a.m12 / d, -a.m21 / d, a.m11 / d};
}

/// Largest singular value of a 2x2 complex matrix.
inline double max_singular_value(const Mat2& a) {
    const double fro2 = std::norm(a.m11) + std::norm(a.m12) + std::norm(a.m21) + std::norm(a.m22);
    const double d = std::abs(a.det());
    const double disc = std::max(0.0, fro2 * fro2 - 4.0 * d * d);
    return std::sqrt(0.5 * (fro2 + std::sqrt(disc)));
}

inline constexpr double min_transmission = 1e-15;

/// S (s11, s12, s21, s22 layout) to T. Requires |S21| >= 1e-15.
inline Mat2 s_to_t(const Mat2& s) {
    if (std::abs(s.m21) < min_transmission) throw SingularError("S21 too small for T-matrix conversion");
    const cplx inv = 1.0 / s.m21;
    return {-s.det() * inv, s.m11 * inv, -s.m22 * inv, inv};
}

inline Mat2 t_to_s(const Mat2& t) {
    if (std::abs(t.m22) < min_transmission) throw SingularError("T22 too small for S-matrix conversion");
    const cplx inv = 1.0 / t.m22;
    return {t.m12 * inv, t.det() * inv, inv, -t.m21 * inv};
}

struct TwoPortNetwork {
    std::vector<double> freqs;
    std::vector<Mat2> s; // s11 = m11, s12 = m12, s21 = m21, s22 = m22
    double ref_impedance = 50.0;

    std::size_t size() const { return freqs.size(); }
};

/// Checks grid monotonicity, matching sizes and finite entries; with `passive`,
/// also requires sigma_max(S) <= 1 + 1e-6 at every frequency.
inline void validate(const TwoPortNetwork& n, bool passive = false) {
    validate_grid(n.freqs);
    if (n.s.size() != n.freqs.size()) throw GridError("S-parameter count does not match frequency grid");
    for (std::size_t i = 0; i < n.s.size(); ++i) {
        for (const cplx& v : n.s[i].entries())
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw DomainError("non-finite S-parameter at index " + std::to_string(i));
        if (passive && max_singular_value(n.s[i]) > 1.0 + 1e-6)
            throw DomainError("network is not passive at " + fmt_double(n.freqs[i]) + " Hz");
    }
}

inline void require_same_grid(const TwoPortNetwork& a, const TwoPortNetwork& b) {
    if (a.freqs != b.freqs) throw GridError("frequency grids differ");
}

inline std::vector<Mat2> s_to_t(const TwoPortNetwork& n) {
    std::vector<Mat2> out;
    out.reserve(n.s.size());
    for (const Mat2& s : n.s) out.push_back(s_to_t(s));
    return out;
}

inline TwoPortNetwork t_to_s(const std::vector<double>& freqs, const std::vector<Mat2>& t,
                             double ref_impedance = 50.0) {
    if (freqs.size() != t.size()) throw GridError("T-matrix count does not match frequency grid");
    TwoPortNetwork n{freqs, {}, ref_impedance};
    n.s.reserve(t.size());
    for (const Mat2& m : t) n.s.push_back(t_to_s(m));
    return n;
}

/// Signal traverses `a`, then `b`.
inline TwoPortNetwork cascade(const TwoPortNetwork& a, const TwoPortNetwork& b) {
    require_same_grid(a, b);
    TwoPortNetwork out{a.freqs, {}, a.ref_impedance};
    out.s.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.s.push_back(t_to_s(s_to_t(a.s[i]) * s_to_t(b.s[i])));
    return out;
}

/// Removes a known left factor: returns X such that cascade(left, X) == chain.
inline TwoPortNetwork inverse_embed(const TwoPortNetwork& left, const TwoPortNetwork& chain) {
    require_same_grid(left, chain);
    TwoPortNetwork out{chain.freqs, {}, chain.ref_impedance};
    out.s.reserve(chain.size());
    for (std::size_t i = 0; i < chain.size(); ++i)
        out.s.push_back(t_to_s(inverse(s_to_t(left.s[i])) * s_to_t(chain.s[i])));
    return out;
}

/// Matched line with transmission exp(-i 2 pi f tau) and optional loss (dB, frequency-flat).
inline TwoPortNetwork ideal_line(const std::vector<double>& freqs, double delay_s, double loss_db = 0.0) {
    TwoPortNetwork n{freqs, {}, 50.0};
    const double mag = std::pow(10.0, -loss_db / 20.0);
    for (double f : freqs) {
        const cplx t = std::polar(mag, -two_pi * f * delay_s);
        n.s.push_back({0.0, t, t, 0.0});
    }
    return n;
}

inline TwoPortNetwork identity_network(const std::vector<double>& freqs) { return ideal_line(freqs, 0.0); }

} // namespace kitamp::network
