#pragma once

// Single-shot dispersive readout: matched-filter integration of heterodyne
// records, threshold selection and assignment fidelity.

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kitamp/csv.hpp"
#include "kitamp/keyvalue.hpp"
#include "kitamp/random.hpp"

namespace kitamp::readout {

/// N records of M complex samples each, stored row-major. M = 1 holds
/// pre-integrated IQ points.
struct ShotSet {
    int label = 0;
    std::size_t n_shots = 0;
    std::size_t n_samples = 0;
    std::vector<cplx> samples;
    double sample_period = 0.0;
    std::string qubit_id;

    std::span<const cplx> record(std::size_t n) const {
        return std::span<const cplx>(samples).subspan(n * n_samples, n_samples);
    }
};

inline void validate(const ShotSet& s) {
    if (s.label != 0 && s.label != 1) throw DomainError("shot set label must be 0 or 1");
    if (s.n_shots < 2) throw DomainError("shot set needs at least 2 shots");
    if (s.n_samples < 1) throw DomainError("shot records must have at least one sample");
    if (s.samples.size() != s.n_shots * s.n_samples) throw GridError("shot set sample count mismatch");
    for (const cplx& v : s.samples)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw DomainError("non-finite shot sample");
}

struct MatchedFilter {
    std::vector<cplx> weights; // unit norm; outcome = Re <weights, record> - offset
    double rotation = 0.0;     // IQ angle of the time-integrated mean separation
    double offset = 0.0;
};

inline constexpr double variance_floor = 1e-12;

namespace detail {

inline std::vector<cplx> mean_trace(const ShotSet& s) {
    std::vector<cplx> m(s.n_samples, cplx(0.0));
    for (std::size_t n = 0; n < s.n_shots; ++n) {
        auto r = s.record(n);
        for (std::size_t t = 0; t < s.n_samples; ++t) m[t] += r[t];
    }
    for (auto& v : m) v /= static_cast<double>(s.n_shots);
    return m;
}

inline cplx inner(std::span<const cplx> w, std::span<const cplx> x) {
    cplx acc(0.0);
    for (std::size_t t = 0; t < w.size(); ++t) acc += std::conj(w[t]) * x[t];
    return acc;
}

inline void check_pair(const ShotSet& set0, const ShotSet& set1) {
    validate(set0);
    validate(set1);
    if (set0.n_samples != set1.n_samples) throw DomainError("shot sets have different record lengths");
}

inline MatchedFilter finish(std::vector<cplx> h, const std::vector<cplx>& mu0, const std::vector<cplx>& mu1,
                            double rotation) {
    double norm2 = 0.0;
    for (const cplx& v : h) norm2 += std::norm(v);
    if (!(norm2 > 0.0)) throw NumericalError("matched filter weights vanish");
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : h) v *= inv;
    MatchedFilter f{std::move(h), rotation, 0.0};
    const double m0 = inner(f.weights, mu0).real();
    const double m1 = inner(f.weights, mu1).real();
    f.offset = 0.5 * (m0 + m1);
    return f;
}

} // namespace detail

/// Weights proportional to (mean1(t) - mean0(t)) / var(t) with the pooled per-sample
/// variance floored at 1e-12 of its maximum; projected class means land on the real
/// axis with mean1 > mean0 and the offset places their midpoint at zero.
inline MatchedFilter build_matched_filter(const ShotSet& set0, const ShotSet& set1) {
    detail::check_pair(set0, set1);
    const auto mu0 = detail::mean_trace(set0);
    const auto mu1 = detail::mean_trace(set1);
    const std::size_t m = set0.n_samples;

    std::vector<double> var(m, 0.0);
    for (const ShotSet* s : {&set0, &set1}) {
        const auto& mu = s == &set0 ? mu0 : mu1;
        for (std::size_t n = 0; n < s->n_shots; ++n) {
            auto r = s->record(n);
            for (std::size_t t = 0; t < m; ++t) var[t] += std::norm(r[t] - mu[t]);
        }
    }
    const double dof = static_cast<double>(set0.n_shots + set1.n_shots - 2);
    double vmax = 0.0;
    for (auto& v : var) {
        v /= dof;
        vmax = std::max(vmax, v);
    }
    const double floor = variance_floor * vmax;

    std::vector<cplx> h(m);
    cplx integrated(0.0);
    bool separated = false;
    for (std::size_t t = 0; t < m; ++t) {
        const cplx d = mu1[t] - mu0[t];
        const double v = vmax > 0.0 ? std::max(var[t], floor) : 1.0;
        if (std::norm(d) > floor) separated = true;
        h[t] = d / v;
        integrated += d;
    }
    if (!separated) throw NumericalError("mean traces are identical within the variance floor");
    return detail::finish(std::move(h), mu0, mu1, std::arg(integrated));
}

/// Uniform-weight integration along the IQ angle of the integrated separation.
inline MatchedFilter build_boxcar_filter(const ShotSet& set0, const ShotSet& set1) {
    detail::check_pair(set0, set1);
    const auto mu0 = detail::mean_trace(set0);
    const auto mu1 = detail::mean_trace(set1);
    cplx integrated(0.0);
    for (std::size_t t = 0; t < mu0.size(); ++t) integrated += mu1[t] - mu0[t];
    if (std::abs(integrated) == 0.0) throw NumericalError("integrated mean separation is zero");
    const double rot = std::arg(integrated);
    std::vector<cplx> h(mu0.size(), std::polar(1.0, rot));
    return detail::finish(std::move(h), mu0, mu1, rot);
}

inline std::vector<double> project(const MatchedFilter& filter, const ShotSet& set) {
    validate(set);
    if (set.n_samples != filter.weights.size()) throw DomainError("record length does not match the filter");
    std::vector<double> out;
    out.reserve(set.n_shots);
    for (std::size_t n = 0; n < set.n_shots; ++n)
        out.push_back(detail::inner(filter.weights, set.record(n)).real() - filter.offset);
    return out;
}

struct Histogram {
    std::vector<double> edges; // n_bins + 1
    std::vector<std::size_t> counts0;
    std::vector<std::size_t> counts1;
};

struct FidelityReport {
    double fidelity = 0.0;
    double p10 = 0.0; // assigned 1 | prepared 0
    double p01 = 0.0; // assigned 0 | prepared 1
    double threshold = 0.0; // outcome > threshold assigns 1
    Histogram histogram;
    std::size_t n_shots0 = 0;
    std::size_t n_shots1 = 0;
};

inline Histogram histogram(std::span<const double> out0, std::span<const double> out1, std::size_t n_bins) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto s : {out0, out1})
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges = linspace(lo, hi, n_bins + 1);
    h.counts0.assign(n_bins, 0);
    h.counts1.assign(n_bins, 0);
    auto bin = [&](double v) {
        const auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n_bins));
        return std::min(i, n_bins - 1);
    };
    for (double v : out0) ++h.counts0[bin(v)];
    for (double v : out1) ++h.counts1[bin(v)];
    return h;
}

/// Threshold maximising 1 - (p10 + p01)/2 over the pooled sample points (leftmost on
/// ties), i.e. the point of largest F0 - F1 between the empirical CDFs. The histogram
/// is for reporting only.
inline FidelityReport fidelity_from_outcomes(std::span<const double> out0, std::span<const double> out1,
                                             std::size_t n_bins = 200) {
    if (out0.empty() || out1.empty()) throw DomainError("fidelity needs outcomes for both preparations");
    if (n_bins < 2) throw DomainError("n_bins must be >= 2");
    for (auto s : {out0, out1})
        for (double v : s)
            if (!std::isfinite(v)) throw DomainError("non-finite outcome");

    std::vector<double> s0(out0.begin(), out0.end()), s1(out1.begin(), out1.end());
    std::sort(s0.begin(), s0.end());
    std::sort(s1.begin(), s1.end());
    std::vector<double> pooled;
    pooled.reserve(s0.size() + s1.size());
    std::merge(s0.begin(), s0.end(), s1.begin(), s1.end(), std::back_inserter(pooled));
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    const double n0 = static_cast<double>(s0.size());
    const double n1 = static_cast<double>(s1.size());
    FidelityReport rep;
    rep.n_shots0 = s0.size();
    rep.n_shots1 = s1.size();

    // Below every sample: everything is assigned 1.
    rep.threshold = std::nextafter(pooled.front(), -std::numeric_limits<double>::infinity());
    rep.p10 = 1.0;
    rep.p01 = 0.0;
    rep.fidelity = 1.0 - (rep.p10 + rep.p01) / 2.0;

    std::size_t c0 = 0, c1 = 0; // samples <= x
    for (double x : pooled) {
        while (c0 < s0.size() && s0[c0] <= x) ++c0;
        while (c1 < s1.size() && s1[c1] <= x) ++c1;
        const double p10 = static_cast<double>(s0.size() - c0) / n0;
        const double p01 = static_cast<double>(c1) / n1;
        const double f = 1.0 - (p10 + p01) / 2.0;
        if (f > rep.fidelity) {
            rep.fidelity = f;
            rep.p10 = p10;
            rep.p01 = p01;
            rep.threshold = x;
        }
    }
    rep.histogram = histogram(out0, out1, n_bins);
    return rep;
}

struct ShotGeneratorConfig {
    std::uint64_t seed = 1;
    std::size_t n_shots = 1000;
    std::vector<cplx> means0;
    std::vector<cplx> means1;
    double noise_sigma = 1.0;     // per quadrature, per sample
    double t1_decay_prob = 0.0;   // probability of decay within the record
    double sample_period = 1e-7;
    std::string qubit_id = "q";
};

/// Synthetic heterodyne records. Prepared-1 shots jump to the 0 trajectory at an
/// exponentially distributed time whose CDF reaches t1_decay_prob at the record end.
/// Each ShotSet draws from its own stream (seed, label).
inline std::pair<ShotSet, ShotSet> generate_shots(const ShotGeneratorConfig& c) {
    require(c.noise_sigma > 0.0, "noise_sigma must be > 0");
    require(c.t1_decay_prob >= 0.0 && c.t1_decay_prob < 1.0, "t1_decay_prob must lie in [0, 1)");
    require(!c.means0.empty() && c.means0.size() == c.means1.size(), "mean trajectories must have equal length");
    require(c.n_shots >= 2, "need at least 2 shots");
    require(c.sample_period > 0.0, "sample_period must be > 0");
    const std::size_t m = c.means0.size();
    const double record = static_cast<double>(m) * c.sample_period;
    const double rate = c.t1_decay_prob > 0.0 ? -std::log1p(-c.t1_decay_prob) / record : 0.0;

    std::pair<ShotSet, ShotSet> out;
    for (int label : {0, 1}) {
        ShotSet& s = label == 0 ? out.first : out.second;
        s.label = label;
        s.n_shots = c.n_shots;
        s.n_samples = m;
        s.sample_period = c.sample_period;
        s.qubit_id = c.qubit_id;
        s.samples.reserve(c.n_shots * m);
        RandomStream rng(c.seed, static_cast<std::uint64_t>(label));
        for (std::size_t n = 0; n < c.n_shots; ++n) {
            double t_decay = std::numeric_limits<double>::infinity();
            if (label == 1 && rate > 0.0) t_decay = rng.exponential(rate);
            for (std::size_t t = 0; t < m; ++t) {
                const bool excited = label == 1 && static_cast<double>(t) * c.sample_period < t_decay;
                const cplx mean = excited ? c.means1[t] : c.means0[t];
                const double re = rng.normal();
                const double im = rng.normal();
                s.samples.push_back(mean + c.noise_sigma * cplx(re, im));
            }
        }
    }
    return out;
}

// ShotSet CSV `shot,idx,i,q` plus a `<csv>.meta` key=value sidecar.

inline std::string meta_path(const std::string& csv_path) { return csv_path + ".meta"; }

inline void write_shot_set(const ShotSet& s, const std::string& csv_path) {
    validate(s);
    {
        std::ofstream out(csv_path);
        if (!out) throw InputError("cannot write " + csv_path);
        csv::write_header(out, {"shot", "idx", "i", "q"});
        for (std::size_t n = 0; n < s.n_shots; ++n) {
            auto r = s.record(n);
            for (std::size_t t = 0; t < s.n_samples; ++t)
                out << n << ',' << t << ',' << fmt_double(r[t].real()) << ',' << fmt_double(r[t].imag()) << '\n';
        }
    }
    std::ofstream meta(meta_path(csv_path));
    if (!meta) throw InputError("cannot write " + meta_path(csv_path));
    meta << "label = " << s.label << "\n";
    meta << "sample_period = " << fmt_double(s.sample_period) << "\n";
    meta << "qubit_id = " << s.qubit_id << "\n";
}

inline ShotSet read_shot_set(const std::string& csv_path) {
    const csv::Table t = csv::read_file(csv_path);
    const std::size_t cs = t.column("shot", csv_path), ci = t.column("idx", csv_path);
    const std::size_t cre = t.column("i", csv_path), cim = t.column("q", csv_path);
    if (t.rows.empty()) throw InputError(csv_path + ": no shot rows");
    std::size_t n = 0, m = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double a = t.rows[r][cs], b = t.rows[r][ci];
        if (a < 0 || b < 0 || a != std::floor(a) || b != std::floor(b))
            throw ParseError(csv_path, t.line_numbers[r], "shot and idx must be non-negative integers");
        n = std::max(n, static_cast<std::size_t>(a) + 1);
        m = std::max(m, static_cast<std::size_t>(b) + 1);
    }
    if (n * m != t.rows.size()) throw InputError(csv_path + ": shot records are not all the same length");
    ShotSet s;
    s.n_shots = n;
    s.n_samples = m;
    s.samples.assign(n * m, cplx(std::nan(""), 0.0));
    std::vector<bool> seen(n * m, false);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto k = static_cast<std::size_t>(t.rows[r][cs]) * m + static_cast<std::size_t>(t.rows[r][ci]);
        if (seen[k]) throw ParseError(csv_path, t.line_numbers[r], "duplicate (shot, idx)");
        seen[k] = true;
        s.samples[k] = {t.rows[r][cre], t.rows[r][cim]};
    }
    const KeyValueConfig meta = KeyValueConfig::load(meta_path(csv_path));
    meta.check_keys({"label", "sample_period", "qubit_id"});
    s.label = static_cast<int>(meta.int_or("label", -1));
    s.sample_period = meta.double_or("sample_period", 0.0);
    s.qubit_id = meta.string_or("qubit_id", "");
    validate(s);
    return s;
}

} // namespace kitamp::readout
