#pragma once

// Thru-Reflect-Line calibration: closed-form 8-term error model with an optional
// bounded least-squares refinement, plus de-embedding.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kitamp/csv.hpp"
#include "kitamp/levmar.hpp"
#include "kitamp/network.hpp"

namespace kitamp::network {

enum class Normalization { InputT22Unity };

/// Input box A and output box B as T-matrices. The measured chain is A * T_dut * B.
struct ErrorModel {
    std::vector<double> freqs;
    std::vector<Mat2> a;
    std::vector<Mat2> b;
    Normalization normalization = Normalization::InputT22Unity;

    std::size_t size() const { return freqs.size(); }
};

inline constexpr double error_box_det_floor = 1e-12;

inline void validate(const ErrorModel& m) {
    validate_grid(m.freqs);
    if (m.a.size() != m.freqs.size() || m.b.size() != m.freqs.size())
        throw GridError("error model size does not match its frequency grid");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!(std::abs(m.a[i].det()) > error_box_det_floor) || !(std::abs(m.b[i].det()) > error_box_det_floor))
            throw SingularError("singular error box at " + fmt_double(m.freqs[i]) + " Hz");
    }
}

inline ErrorModel identity_error_model(const std::vector<double>& freqs) {
    return {freqs, std::vector<Mat2>(freqs.size(), Mat2::identity()),
            std::vector<Mat2>(freqs.size(), Mat2::identity())};
}

/// Builds an error model from physical error-box networks (input side, output side).
inline ErrorModel error_model_from_boxes(const TwoPortNetwork& input_box, const TwoPortNetwork& output_box) {
    require_same_grid(input_box, output_box);
    ErrorModel m{input_box.freqs, s_to_t(input_box), s_to_t(output_box)};
    for (std::size_t i = 0; i < m.size(); ++i) {
        const cplx scale = m.a[i].m22;
        m.a[i] = (1.0 / scale) * m.a[i];
        m.b[i] = scale * m.b[i];
    }
    return m;
}

/// Measured chain for a device: A * T_dut * B.
inline TwoPortNetwork embed(const ErrorModel& model, const TwoPortNetwork& dut) {
    if (model.freqs != dut.freqs) throw GridError("error model and network grids differ");
    TwoPortNetwork out{dut.freqs, {}, dut.ref_impedance};
    for (std::size_t i = 0; i < dut.size(); ++i)
        out.s.push_back(t_to_s(model.a[i] * s_to_t(dut.s[i]) * model.b[i]));
    return out;
}

/// T_dut = A^-1 * T_meas * B^-1 per frequency.
inline TwoPortNetwork deembed(const ErrorModel& model, const TwoPortNetwork& measured) {
    if (model.freqs != measured.freqs) throw GridError("error model and measurement grids differ");
    TwoPortNetwork out{measured.freqs, {}, measured.ref_impedance};
    out.s.reserve(measured.size());
    for (std::size_t i = 0; i < measured.size(); ++i) {
        const Mat2 ai = inverse(model.a[i], error_box_det_floor);
        const Mat2 bi = inverse(model.b[i], error_box_det_floor);
        out.s.push_back(t_to_s(ai * s_to_t(measured.s[i]) * bi));
    }
    return out;
}

struct CalStandards {
    TwoPortNetwork thru;
    std::vector<cplx> reflect_port1;
    std::vector<cplx> reflect_port2;
    TwoPortNetwork line;
    double line_delay_estimate = 0.0; // s, relative to the thru
    int reflect_sign_estimate = 1;    // +1 open-like, -1 short-like
};

struct TrlOptions {
    bool refine = true;
    double term_bound = 10.0;       // |term| <= bound for every refined complex unknown
    double warn_phase_deg = 20.0;   // warn when the line phase is this close to 0 or 180 deg
    double reject_phase_deg = 1.0;  // fail when closer than this
    optim::LmOptions lm{};
};

struct TrlFrequencyReport {
    double freq_hz{};
    double line_phase_deg{};
    cplx reflect{};
    cplx line_transmission{};
    double closed_form_residual{};
    double residual{};
    bool refined = false;
    std::vector<std::string> warnings;
};

struct TrlResult {
    ErrorModel model;
    std::vector<TrlFrequencyReport> report;
    bool all_converged = true;

    std::size_t warning_count() const {
        std::size_t n = 0;
        for (const auto& r : report) n += r.warnings.size();
        return n;
    }
};

namespace detail_trl {

struct Unknowns {
    Mat2 a, b;
    cplx reflect;
    cplx line; // e^{-gamma l}
};

inline Mat2 line_t(cplx lambda) { return {lambda, 0.0, 0.0, 1.0 / lambda}; }

inline cplx reflect_port1(const Mat2& a, cplx g) { return (a.m11 * g + a.m12) / (a.m21 * g + a.m22); }
inline cplx reflect_port2(const Mat2& b, cplx g) { return (g * b.m11 - b.m21) / (b.m22 - g * b.m12); }

inline Eigen::VectorXd pack(const Unknowns& u) {
    Eigen::VectorXd x(18);
    const cplx v[9] = {u.a.m11, u.a.m12, u.a.m21, u.b.m11, u.b.m12, u.b.m21, u.b.m22, u.reflect, u.line};
    for (int i = 0; i < 9; ++i) {
        x[2 * i] = v[i].real();
        x[2 * i + 1] = v[i].imag();
    }
    return x;
}

inline Unknowns unpack(const Eigen::VectorXd& x) {
    auto c = [&](int i) { return cplx(x[2 * i], x[2 * i + 1]); };
    return {{c(0), c(1), c(2), 1.0}, {c(3), c(4), c(5), c(6)}, c(7), c(8)};
}

struct Measured {
    Mat2 thru, line; // T-matrices
    cplx r1, r2;
    Mat2 thru_s, line_s;
};

inline Measured measured(const Mat2& thru_s, const Mat2& line_s, cplx r1, cplx r2) {
    return {s_to_t(thru_s), s_to_t(line_s), r1, r2, thru_s, line_s};
}

inline Eigen::VectorXd residuals(const Unknowns& u, const Measured& m) {
    Eigen::VectorXd r(20);
    int k = 0;
    auto put = [&](cplx v) {
        r[k++] = v.real();
        r[k++] = v.imag();
    };
    Mat2 st, sl;
    try {
        st = t_to_s(u.a * u.b);
        sl = t_to_s(u.a * line_t(u.line) * u.b);
    } catch (const SingularError&) {
        r.setConstant(1e6);
        return r;
    }
    for (const cplx& v : (st - m.thru_s).entries()) put(v);
    for (const cplx& v : (sl - m.line_s).entries()) put(v);
    put(reflect_port1(u.a, u.reflect) - m.r1);
    put(reflect_port2(u.b, u.reflect) - m.r2);
    return r;
}

/// Eigenvector of a 2x2 matrix for eigenvalue lambda, taken from the better-conditioned row.
inline std::pair<cplx, cplx> eigenvector(const Mat2& x, cplx lambda) {
    const std::pair<cplx, cplx> v1{x.m12, lambda - x.m11};
    const std::pair<cplx, cplx> v2{lambda - x.m22, x.m21};
    const double n1 = std::norm(v1.first) + std::norm(v1.second);
    const double n2 = std::norm(v2.first) + std::norm(v2.second);
    return n1 >= n2 ? v1 : v2;
}

/// Eigenvalues of line * thru^-1, the one closer to exp(-i w tau_est) first.
inline std::pair<cplx, cplx> line_eigenvalues(const Mat2& x, double freq, double delay_estimate) {
    const cplx half_tr = 0.5 * (x.m11 + x.m22);
    const cplx disc = std::sqrt(half_tr * half_tr - x.det());
    cplx l1 = half_tr + disc;
    cplx l2 = half_tr - disc;
    const cplx expected = std::polar(1.0, -two_pi * freq * delay_estimate);
    if (std::abs(l2 - expected) < std::abs(l1 - expected)) std::swap(l1, l2);
    return {l1, l2};
}

inline Unknowns closed_form(const Measured& m, double freq, double delay_estimate, int sign_estimate) {
    const Mat2 x = m.line * inverse(m.thru);
    const auto [l1, l2] = line_eigenvalues(x, freq, delay_estimate);

    const auto [u1, w1] = eigenvector(x, l1);
    const auto [u2, w2] = eigenvector(x, l2);
    if (std::abs(w2) < 1e-300) throw SingularError("degenerate TRL eigenvector");
    const cplx r2 = u2 / w2;
    const Mat2 a0{u1, r2, w1, 1.0};

    // alpha * reflect from port 1, reflect / alpha from port 2.
    const cplx xr = (r2 - m.r1) / (m.r1 * w1 - u1);
    const Mat2 p = inverse(a0) * m.thru;
    const cplx yr = (m.r2 * p.m22 + p.m21) / (p.m11 + m.r2 * p.m12);

    cplx gamma = std::sqrt(xr * yr);
    const double s = sign_estimate >= 0 ? 1.0 : -1.0;
    if (std::abs(-gamma - s) < std::abs(gamma - s)) gamma = -gamma;
    if (std::abs(gamma) < 1e-12) throw SingularError("reflect standard too small to resolve the error model");
    const cplx alpha = xr / gamma;

    Unknowns u;
    u.a = {alpha * u1, r2, alpha * w1, 1.0};
    u.b = inverse(u.a) * m.thru;
    u.reflect = gamma;
    u.line = l1;
    return u;
}

inline bool within_bounds(const Unknowns& u, double bound) {
    for (const cplx& v : u.a.entries())
        if (std::abs(v) > bound) return false;
    for (const cplx& v : u.b.entries())
        if (std::abs(v) > bound) return false;
    return std::abs(u.reflect) <= bound && std::abs(u.line) <= bound;
}

} // namespace detail_trl

inline void validate(const CalStandards& st) {
    validate(st.thru);
    validate(st.line);
    require_same_grid(st.thru, st.line);
    if (st.reflect_port1.size() != st.thru.size() || st.reflect_port2.size() != st.thru.size())
        throw GridError("reflect standard does not share the thru/line frequency grid");
    if (st.reflect_sign_estimate != 1 && st.reflect_sign_estimate != -1)
        throw DomainError("reflect_sign_estimate must be +1 or -1");
}

inline TrlResult trl_solve(const CalStandards& st, const TrlOptions& opt = {}) {
    validate(st);
    TrlResult res;
    res.model.freqs = st.thru.freqs;
    const double warn_sin = std::sin(opt.warn_phase_deg * pi / 180.0);
    const double reject_sin = std::sin(opt.reject_phase_deg * pi / 180.0);

    for (std::size_t i = 0; i < st.thru.size(); ++i) {
        const double f = st.thru.freqs[i];
        const detail_trl::Measured m =
            detail_trl::measured(st.thru.s[i], st.line.s[i], st.reflect_port1[i], st.reflect_port2[i]);
        TrlFrequencyReport rep;
        rep.freq_hz = f;

        const double phase =
            std::arg(detail_trl::line_eigenvalues(m.line * inverse(m.thru), f, st.line_delay_estimate).first);
        rep.line_phase_deg = phase * 180.0 / pi;
        if (std::abs(std::sin(phase)) < reject_sin)
            throw DomainError("line/thru phase difference too close to 0 or 180 deg at " + fmt_double(f) +
                              " Hz (" + fmt_double(rep.line_phase_deg) + " deg)");
        if (std::abs(std::sin(phase)) < warn_sin)
            rep.warnings.push_back("line phase " + fmt_double(rep.line_phase_deg) + " deg near 0/180");
        const detail_trl::Unknowns closed =
            detail_trl::closed_form(m, f, st.line_delay_estimate, st.reflect_sign_estimate);

        detail_trl::Unknowns best = closed;
        const auto r0 = detail_trl::residuals(closed, m);
        rep.closed_form_residual = r0.norm();
        rep.residual = rep.closed_form_residual;

        if (opt.refine) {
            if (!detail_trl::within_bounds(closed, opt.term_bound)) {
                rep.warnings.push_back("closed-form terms exceed refinement bounds; refinement skipped");
            } else {
                auto fn = [&](const Eigen::VectorXd& x) { return detail_trl::residuals(detail_trl::unpack(x), m); };
                const double bound = opt.term_bound;
                optim::Projector proj = [bound](Eigen::VectorXd& x) {
                    for (Eigen::Index k = 0; k + 1 < x.size(); k += 2) {
                        const double mag = std::hypot(x[k], x[k + 1]);
                        if (mag > bound) {
                            x[k] *= bound / mag;
                            x[k + 1] *= bound / mag;
                        }
                    }
                };
                const optim::LmResult lm = optim::levenberg_marquardt(fn, detail_trl::pack(closed), opt.lm, proj);
                if (lm.converged && lm.cost <= 0.5 * r0.squaredNorm()) {
                    best = detail_trl::unpack(lm.x);
                    rep.residual = std::sqrt(2.0 * lm.cost);
                    rep.refined = true;
                } else {
                    res.all_converged = false;
                    rep.warnings.push_back("refinement did not converge; closed-form solution kept");
                }
            }
        }
        rep.reflect = best.reflect;
        rep.line_transmission = best.line;
        res.model.a.push_back(best.a);
        res.model.b.push_back(best.b);
        res.report.push_back(std::move(rep));
    }
    validate(res.model);
    return res;
}

inline const std::vector<std::string>& error_model_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"freq_hz"};
        for (const char* box : {"a", "b"})
            for (const char* idx : {"11", "12", "21", "22"})
                for (const char* part : {"_re", "_im"}) c.push_back(std::string(box) + idx + part);
        return c;
    }();
    return cols;
}

inline void write_error_model(const ErrorModel& m, std::ostream& out) {
    csv::write_header(out, error_model_columns());
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::vector<double> row{m.freqs[i]};
        for (const Mat2* box : {&m.a[i], &m.b[i]})
            for (const cplx& v : box->entries()) {
                row.push_back(v.real());
                row.push_back(v.imag());
            }
        csv::write_row(out, row);
    }
}

inline ErrorModel read_error_model(std::istream& in, const std::string& source = "<error model>") {
    const csv::Table t = csv::read(in, source);
    if (t.header != error_model_columns()) throw ParseError(source, 1, "unexpected error-model header");
    ErrorModel m;
    for (const auto& row : t.rows) {
        m.freqs.push_back(row[0]);
        auto c = [&](int k) { return cplx(row[1 + 2 * k], row[2 + 2 * k]); };
        m.a.push_back({c(0), c(1), c(2), c(3)});
        m.b.push_back({c(4), c(5), c(6), c(7)});
    }
    validate(m);
    return m;
}

} // namespace kitamp::network
