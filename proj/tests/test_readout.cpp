#include <gtest/gtest.h>

#include <cmath>

#include "kitamp/readout.hpp"
#include "test_support.hpp"

using namespace kitamp;
using namespace kitamp::readout;

namespace {

ShotGeneratorConfig constant_blobs(cplx m0, cplx m1, std::size_t m, std::size_t n, std::uint64_t seed) {
    ShotGeneratorConfig c;
    c.seed = seed;
    c.n_shots = n;
    c.means0.assign(m, m0);
    c.means1.assign(m, m1);
    return c;
}

/// Separation confined to the first `window` samples, zero afterwards.
ShotGeneratorConfig windowed(std::size_t m, std::size_t window, double sep, std::size_t n, std::uint64_t seed) {
    ShotGeneratorConfig c;
    c.seed = seed;
    c.n_shots = n;
    for (std::size_t t = 0; t < m; ++t) {
        const double on = t < window ? 1.0 : 0.0;
        c.means0.push_back(cplx(0.2, -0.1) - 0.5 * on * sep * cplx(0.6, 0.8));
        c.means1.push_back(cplx(0.2, -0.1) + 0.5 * on * sep * cplx(0.6, 0.8));
    }
    return c;
}

std::vector<double> gaussian(std::size_t n, double mean, double sigma, RandomStream& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = mean + sigma * rng.normal();
    return v;
}

double fidelity_of(const MatchedFilter& f, const ShotSet& s0, const ShotSet& s1) {
    const auto o0 = project(f, s0);
    const auto o1 = project(f, s1);
    return fidelity_from_outcomes(o0, o1).fidelity;
}

struct Sweep {
    double fidelity, p10, p01, threshold;
};

/// Direct sweep: every pooled sample point plus "below everything".
Sweep brute_force(const std::vector<double>& o0, const std::vector<double>& o1) {
    std::vector<double> cand(o0);
    cand.insert(cand.end(), o1.begin(), o1.end());
    std::sort(cand.begin(), cand.end());
    cand.insert(cand.begin(), std::nextafter(cand.front(), -INFINITY));
    Sweep best{-1.0, 0, 0, 0};
    for (double x : cand) {
        const double a = static_cast<double>(std::count_if(o0.begin(), o0.end(), [&](double v) { return v > x; }));
        const double b = static_cast<double>(std::count_if(o1.begin(), o1.end(), [&](double v) { return v <= x; }));
        const double p10 = a / static_cast<double>(o0.size());
        const double p01 = b / static_cast<double>(o1.size());
        const double f = 1.0 - (p10 + p01) / 2.0;
        if (f > best.fidelity) best = {f, p10, p01, x};
    }
    return best;
}

} // namespace

TEST(MatchedFilter, SingleSampleIsUnitVectorAlongMeanAxis) {
    auto c = constant_blobs({-1.0, 0.5}, {1.0, 1.5}, 1, 4000, 3);
    const auto [s0, s1] = generate_shots(c);
    const auto f = build_matched_filter(s0, s1);
    ASSERT_EQ(f.weights.size(), 1u);
    EXPECT_NEAR(std::abs(f.weights[0]), 1.0, 1e-15);

    cplx m0(0.0), m1(0.0);
    for (const auto& v : s0.samples) m0 += v;
    for (const auto& v : s1.samples) m1 += v;
    const cplx d = m1 / 4000.0 - m0 / 4000.0;
    EXPECT_NEAR(std::arg(f.weights[0]), std::arg(d), 1e-12);
    EXPECT_NEAR(f.rotation, std::arg(d), 1e-12);
    EXPECT_NEAR(f.rotation, std::atan2(1.0, 2.0), 0.05);
}

TEST(MatchedFilter, UnusedSecondHalfGetsSmallWeights) {
    const auto [s0, s1] = generate_shots(windowed(20, 10, 1.0, 10000, 11));
    const auto f = build_matched_filter(s0, s1);
    double first = 0.0, second = 0.0;
    for (std::size_t t = 0; t < 10; ++t) first = std::max(first, std::abs(f.weights[t]));
    for (std::size_t t = 10; t < 20; ++t) second = std::max(second, std::abs(f.weights[t]));
    EXPECT_LT(second / first, 0.05);
}

TEST(MatchedFilter, WeightsFollowSeparationOverVariance) {
    const auto [s0, s1] = generate_shots(windowed(8, 8, 0.7, 500, 5));
    const auto f = build_matched_filter(s0, s1);
    double norm = 0.0;
    for (const auto& w : f.weights) norm += std::norm(w);
    EXPECT_NEAR(norm, 1.0, 1e-14);

    const std::size_t m = s0.n_samples;
    std::vector<cplx> mu0(m), mu1(m);
    std::vector<double> var(m, 0.0);
    for (std::size_t n = 0; n < s0.n_shots; ++n)
        for (std::size_t t = 0; t < m; ++t) {
            mu0[t] += s0.record(n)[t] / 500.0;
            mu1[t] += s1.record(n)[t] / 500.0;
        }
    for (std::size_t n = 0; n < s0.n_shots; ++n)
        for (std::size_t t = 0; t < m; ++t)
            var[t] += (std::norm(s0.record(n)[t] - mu0[t]) + std::norm(s1.record(n)[t] - mu1[t])) / 998.0;
    std::vector<cplx> h(m);
    double hn = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        h[t] = (mu1[t] - mu0[t]) / var[t];
        hn += std::norm(h[t]);
    }
    for (std::size_t t = 0; t < m; ++t) EXPECT_LT(std::abs(h[t] / std::sqrt(hn) - f.weights[t]), 1e-10);

    // Projected class means sit at -d/2 and +d/2 with d > 0.
    const double p0 = readout::detail::inner(f.weights, mu0).real() - f.offset;
    const double p1 = readout::detail::inner(f.weights, mu1).real() - f.offset;
    EXPECT_GT(p1, 0.0);
    EXPECT_NEAR(p0, -p1, 1e-12);
}

TEST(MatchedFilter, LabelSwapNegatesWeightsAndOutcomes) {
    const auto [s0, s1] = generate_shots(windowed(12, 6, 1.2, 800, 21));
    const auto f = build_matched_filter(s0, s1);
    const auto g = build_matched_filter(s1, s0);
    for (std::size_t t = 0; t < f.weights.size(); ++t) EXPECT_LT(std::abs(f.weights[t] + g.weights[t]), 1e-12);
    EXPECT_NEAR(std::abs(std::remainder(g.rotation - f.rotation - pi, two_pi)), 0.0, 1e-12);
    EXPECT_NEAR(g.offset, -f.offset, 1e-12);

    const auto a = project(f, s0);
    const auto b = project(g, s0);
    for (std::size_t n = 0; n < a.size(); ++n) EXPECT_NEAR(a[n], -b[n], 1e-10);

    const auto rf = fidelity_from_outcomes(project(f, s0), project(f, s1));
    const auto rg = fidelity_from_outcomes(project(g, s1), project(g, s0));
    EXPECT_NEAR(rf.fidelity, rg.fidelity, 1e-12);
}

TEST(MatchedFilter, IdenticalMeansAreDegenerate) {
    ShotSet a{0, 3, 2, {{1, 0}, {2, 0}, {1, 0}, {2, 0}, {1, 0}, {2, 0}}, 1e-7, "q"};
    ShotSet b = a;
    b.label = 1;
    EXPECT_THROW(build_matched_filter(a, b), NumericalError);
    EXPECT_THROW(build_boxcar_filter(a, b), NumericalError);
}

TEST(MatchedFilter, RejectsMismatchedRecordLengths) {
    const auto [s0, s1] = generate_shots(windowed(4, 2, 1.0, 10, 1));
    const auto [t0, t1] = generate_shots(windowed(5, 2, 1.0, 10, 1));
    EXPECT_THROW(build_matched_filter(s0, t1), DomainError);
    const auto f = build_matched_filter(s0, s1);
    EXPECT_THROW(project(f, t0), DomainError);
}

TEST(Project, MeanRecordAndZeroRecord) {
    const auto [s0, s1] = generate_shots(windowed(6, 6, 2.0, 400, 8));
    const auto f = build_matched_filter(s0, s1);
    const auto mu0 = readout::detail::mean_trace(s0);
    const auto mu1 = readout::detail::mean_trace(s1);
    const double d = readout::detail::inner(f.weights, mu1).real() - readout::detail::inner(f.weights, mu0).real();

    ShotSet probe{0, 2, 6, {}, 1e-7, "q"};
    probe.samples = mu0;
    probe.samples.insert(probe.samples.end(), 6, cplx(0.0));
    const auto out = project(f, probe);
    EXPECT_NEAR(out[0], -d / 2.0, 1e-12);
    EXPECT_EQ(out[1], -f.offset);
}

TEST(Project, SeparationMatchesGeneratorSnr) {
    // |separation| 0.3 per sample over 10 samples, unit noise per quadrature.
    const auto c = constant_blobs({-0.15, 0.0}, {0.15, 0.0}, 10, 100000, 17);
    const auto [s0, s1] = generate_shots(c);
    const auto f = build_matched_filter(s0, s1);
    const auto o0 = project(f, s0);
    const auto o1 = project(f, s1);
    double m0 = 0, m1 = 0, v = 0;
    for (double x : o0) m0 += x / 1e5;
    for (double x : o1) m1 += x / 1e5;
    for (double x : o0) v += (x - m0) * (x - m0);
    for (double x : o1) v += (x - m1) * (x - m1);
    const double snr = (m1 - m0) / std::sqrt(v / (2e5 - 2));
    EXPECT_NEAR(snr / (0.3 * std::sqrt(10.0)), 1.0, 0.02);
}

TEST(Fidelity, MatchesBruteForceSweepExactly) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RandomStream rng(seed, 99);
        const std::size_t n0 = 150 + seed * 7, n1 = 200 - seed * 3;
        auto o0 = gaussian(n0, -0.6, 1.0, rng);
        auto o1 = gaussian(n1, 0.6, 1.3, rng);
        // Coarse quantisation produces ties.
        if (seed % 2 == 0) {
            for (auto& x : o0) x = std::round(x * 8.0) / 8.0;
            for (auto& x : o1) x = std::round(x * 8.0) / 8.0;
        }
        const auto rep = fidelity_from_outcomes(o0, o1);
        const auto ref = brute_force(o0, o1);
        EXPECT_EQ(rep.fidelity, ref.fidelity) << seed;
        EXPECT_EQ(rep.p10, ref.p10) << seed;
        EXPECT_EQ(rep.p01, ref.p01) << seed;
        EXPECT_EQ(rep.threshold, ref.threshold) << seed;
    }
}

TEST(Fidelity, GaussianOverlapOracle) {
    RandomStream rng(2024, 0);
    for (double a : {0.5, 1.0, 1.5}) {
        const auto o0 = gaussian(100000, -a, 1.0, rng);
        const auto o1 = gaussian(100000, a, 1.0, rng);
        const double analytic = 1.0 - std::erfc(a / std::sqrt(2.0)) / 2.0;
        const auto rep = fidelity_from_outcomes(o0, o1);
        EXPECT_NEAR(rep.fidelity / analytic, 1.0, 0.005) << a;
        EXPECT_NEAR(rep.threshold, 0.0, 0.1) << a;
    }
}

TEST(Fidelity, ReconstructedErrorRates) {
    std::vector<double> o0, o1;
    for (double x : linspace(-3.0, -1.0, 9299)) o0.push_back(x);
    for (double x : linspace(1.0, 3.0, 701)) o0.push_back(x);
    for (double x : linspace(-3.0, -1.5, 1360)) o1.push_back(x);
    for (double x : linspace(1.0, 3.0, 8640)) o1.push_back(x);
    const auto rep = fidelity_from_outcomes(o0, o1);
    EXPECT_DOUBLE_EQ(rep.p10, 0.0701);
    EXPECT_DOUBLE_EQ(rep.p01, 0.136);
    EXPECT_NEAR(rep.fidelity, 0.89695, 1e-12);
    EXPECT_EQ(rep.threshold, -1.0);
    EXPECT_GE(rep.fidelity, 0.894);
    EXPECT_LE(rep.fidelity, 0.900);
}

TEST(Fidelity, IdenticalDistributionsAreCoinFlip) {
    RandomStream rng(7, 1);
    const auto o0 = gaussian(100000, 0.0, 1.0, rng);
    const auto o1 = gaussian(100000, 0.0, 1.0, rng);
    EXPECT_NEAR(fidelity_from_outcomes(o0, o1).fidelity, 0.5, 0.01);
}

TEST(Fidelity, AffineInvariance) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RandomStream rng(seed, 5);
        auto o0 = gaussian(500, -0.4, 1.0, rng);
        auto o1 = gaussian(700, 0.7, 0.8, rng);
        // Dyadic grid keeps 3x + 5 exact.
        for (auto& x : o0) x = std::round(x * 1024.0) / 1024.0;
        for (auto& x : o1) x = std::round(x * 1024.0) / 1024.0;
        auto t0 = o0, t1 = o1;
        for (auto& x : t0) x = 3.0 * x + 5.0;
        for (auto& x : t1) x = 3.0 * x + 5.0;
        const auto a = fidelity_from_outcomes(o0, o1);
        const auto b = fidelity_from_outcomes(t0, t1);
        EXPECT_EQ(a.fidelity, b.fidelity);
        EXPECT_EQ(a.p10, b.p10);
        EXPECT_EQ(a.p01, b.p01);
        EXPECT_EQ(b.threshold, 3.0 * a.threshold + 5.0);
    }
}

TEST(Fidelity, LabelExchangeSwapsErrorRates) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RandomStream rng(seed, 6);
        auto o0 = gaussian(997, -0.5, 1.0, rng);
        auto o1 = gaussian(1009, 0.5, 1.2, rng);
        std::vector<double> n0, n1;
        for (double x : o1) n0.push_back(-x);
        for (double x : o0) n1.push_back(-x);
        const auto a = fidelity_from_outcomes(o0, o1);
        const auto b = fidelity_from_outcomes(n0, n1);
        EXPECT_EQ(a.fidelity, b.fidelity);
        EXPECT_EQ(a.p10, b.p01);
        EXPECT_EQ(a.p01, b.p10);
    }
}

TEST(Fidelity, ReportInvariants) {
    RandomStream rng(31, 2);
    for (std::size_t bins : {2u, 17u, 200u}) {
        const auto o0 = gaussian(321, -1.0, 1.0, rng);
        const auto o1 = gaussian(123, 1.0, 1.0, rng);
        const auto rep = fidelity_from_outcomes(o0, o1, bins);
        EXPECT_EQ(rep.fidelity, 1.0 - (rep.p10 + rep.p01) / 2.0);
        EXPECT_GE(rep.p10, 0.0);
        EXPECT_LE(rep.p10, 1.0);
        EXPECT_GE(rep.p01, 0.0);
        EXPECT_LE(rep.p01, 1.0);
        EXPECT_EQ(rep.n_shots0, 321u);
        EXPECT_EQ(rep.n_shots1, 123u);
        ASSERT_EQ(rep.histogram.edges.size(), bins + 1);
        std::size_t c0 = 0, c1 = 0;
        for (auto c : rep.histogram.counts0) c0 += c;
        for (auto c : rep.histogram.counts1) c1 += c;
        EXPECT_EQ(c0, 321u);
        EXPECT_EQ(c1, 123u);
    }
}

TEST(Fidelity, DoesNotDependOnBinning) {
    RandomStream rng(4, 4);
    const auto o0 = gaussian(1000, -1.0, 1.0, rng);
    const auto o1 = gaussian(1000, 1.0, 1.0, rng);
    const auto a = fidelity_from_outcomes(o0, o1, 2);
    const auto b = fidelity_from_outcomes(o0, o1, 5000);
    EXPECT_EQ(a.fidelity, b.fidelity);
    EXPECT_EQ(a.threshold, b.threshold);
}

TEST(Fidelity, Validation) {
    const std::vector<double> some{1.0, 2.0}, none;
    EXPECT_THROW(fidelity_from_outcomes(none, some), DomainError);
    EXPECT_THROW(fidelity_from_outcomes(some, none), DomainError);
    EXPECT_THROW(fidelity_from_outcomes(some, some, 1), DomainError);
    const std::vector<double> bad{1.0, NAN};
    EXPECT_THROW(fidelity_from_outcomes(bad, some), DomainError);
}

TEST(Fidelity, MatchedBeatsBoxcar) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto [s0, s1] = generate_shots(windowed(20, 5, 0.6, 2000, seed));
        const double fm = fidelity_of(build_matched_filter(s0, s1), s0, s1);
        const double fb = fidelity_of(build_boxcar_filter(s0, s1), s0, s1);
        EXPECT_GE(fm, fb) << seed;
    }
}

TEST(ShotGenerator, NoiselessIsPerfect) {
    auto c = windowed(10, 10, 1.0, 200, 9);
    c.noise_sigma = 1e-9;
    const auto [s0, s1] = generate_shots(c);
    const auto rep = fidelity_from_outcomes(project(build_matched_filter(s0, s1), s0),
                                            project(build_matched_filter(s0, s1), s1));
    EXPECT_EQ(rep.fidelity, 1.0);
    EXPECT_EQ(rep.p10, 0.0);
    EXPECT_EQ(rep.p01, 0.0);
}

TEST(ShotGenerator, T1DecayMatchesAnalyticIntegral) {
    // Outcome is a mixture over the number k of excited samples before the jump.
    const std::size_t m = 10, n = 100000;
    auto c = constant_blobs({-1.0, 0.0}, {1.0, 0.0}, m, n, 77);
    c.t1_decay_prob = 0.1;
    const auto [s0, s1] = generate_shots(c);
    const auto f = build_matched_filter(s0, s1);
    const auto rep = fidelity_from_outcomes(project(f, s0), project(f, s1));

    // Excited for samples t < k, with P(k) from the exponential decay time.
    const double dt = c.sample_period;
    const double rate = -std::log(1.0 - c.t1_decay_prob) / (static_cast<double>(m) * dt);
    auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    double p01 = 0.0, total = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
        const double pk = k < m ? std::exp(-rate * static_cast<double>(k - 1) * dt) -
                                      std::exp(-rate * static_cast<double>(k) * dt)
                                : std::exp(-rate * static_cast<double>(m - 1) * dt);
        cplx acc(0.0);
        for (std::size_t t = 0; t < m; ++t) acc += std::conj(f.weights[t]) * (t < k ? c.means1[t] : c.means0[t]);
        const double mu = acc.real() - f.offset;
        p01 += pk * phi((rep.threshold - mu) / c.noise_sigma);
        total += pk;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(rep.p01, p01, 3e-3);
    EXPECT_GT(p01, 0.01);
    EXPECT_LT(rep.p01, c.t1_decay_prob);
    cplx a0(0.0);
    for (std::size_t t = 0; t < m; ++t) a0 += std::conj(f.weights[t]) * c.means0[t];
    EXPECT_NEAR(rep.p10, 1.0 - phi((rep.threshold - (a0.real() - f.offset)) / c.noise_sigma), 2e-3);
    EXPECT_LT(rep.p10, 0.01);
}

TEST(ShotGenerator, DeterministicPerSeed) {
    const auto a = generate_shots(windowed(5, 3, 1.0, 50, 123));
    const auto b = generate_shots(windowed(5, 3, 1.0, 50, 123));
    const auto c = generate_shots(windowed(5, 3, 1.0, 50, 124));
    EXPECT_EQ(a.first.samples, b.first.samples);
    EXPECT_EQ(a.second.samples, b.second.samples);
    EXPECT_NE(a.first.samples, c.first.samples);
    EXPECT_NE(a.first.samples, a.second.samples);
    EXPECT_EQ(a.first.label, 0);
    EXPECT_EQ(a.second.label, 1);
}

TEST(ShotGenerator, Validation) {
    auto c = windowed(5, 3, 1.0, 50, 1);
    c.noise_sigma = 0.0;
    EXPECT_THROW(generate_shots(c), DomainError);
    c.noise_sigma = 1.0;
    c.t1_decay_prob = 1.0;
    EXPECT_THROW(generate_shots(c), DomainError);
    c.t1_decay_prob = -0.1;
    EXPECT_THROW(generate_shots(c), DomainError);
    c.t1_decay_prob = 0.0;
    c.means1.pop_back();
    EXPECT_THROW(generate_shots(c), DomainError);
}

TEST(ShotSetFile, RoundTripIsExact) {
    const auto dir = testkit::fresh_dir("readout_roundtrip");
    auto c = windowed(7, 3, 1.0, 40, 55);
    c.qubit_id = "Q9";
    c.sample_period = 1.25e-7;
    const auto [s0, s1] = generate_shots(c);
    const std::string p = (dir / "set1.csv").string();
    write_shot_set(s1, p);
    const auto back = read_shot_set(p);
    EXPECT_EQ(back.samples, s1.samples);
    EXPECT_EQ(back.n_shots, 40u);
    EXPECT_EQ(back.n_samples, 7u);
    EXPECT_EQ(back.label, 1);
    EXPECT_EQ(back.qubit_id, "Q9");
    EXPECT_EQ(back.sample_period, 1.25e-7);

    const std::string q = (dir / "again.csv").string();
    write_shot_set(back, q);
    EXPECT_EQ(testkit::slurp(p), testkit::slurp(q));
}

TEST(ShotSetFile, PreIntegratedPoints) {
    const auto dir = testkit::fresh_dir("readout_m1");
    testkit::spit(dir / "a.csv", "shot,idx,i,q\n0,0,1.5,-2\n1,0,0.5,0.25\n2,0,-1,3\n");
    testkit::spit(dir / "a.csv.meta", "label = 0\nsample_period = 1e-6\nqubit_id = Q1\n");
    const auto s = read_shot_set((dir / "a.csv").string());
    EXPECT_EQ(s.n_shots, 3u);
    EXPECT_EQ(s.n_samples, 1u);
    EXPECT_EQ(s.samples[1], cplx(0.5, 0.25));
}

TEST(ShotSetFile, RejectsMalformedInput) {
    const auto dir = testkit::fresh_dir("readout_bad");
    const std::string meta = "label = 0\nsample_period = 1e-7\nqubit_id = q\n";
    auto load = [&](const std::string& body, const std::string& m) {
        testkit::spit(dir / "s.csv", body);
        testkit::spit(dir / "s.csv.meta", m);
        return read_shot_set((dir / "s.csv").string());
    };
    EXPECT_THROW(load("shot,idx,i,q\n", meta), InputError);
    EXPECT_THROW(load("shot,idx,i,q\n0,0,1,1\n0,0,2,2\n1,0,1,1\n1,1,2,2\n", meta), ParseError);
    EXPECT_THROW(load("shot,idx,i,q\n0,0,1,1\n0,1,1,1\n1,0,1,1\n", meta), InputError);
    EXPECT_THROW(load("shot,idx,i,q\n0,0,1,1\n1,0,1,1\n", "label = 3\nsample_period = 1e-7\nqubit_id = q\n"),
                 DomainError);
    EXPECT_THROW(load("shot,idx,i,q\n0,0,1,1\n1,0,1,1\n", meta + "colour = red\n"), InputError);
    EXPECT_THROW(load("shot,idx,i,q\n0,0,1,1\n", meta), DomainError);
    EXPECT_THROW(load("shot,idx,i\n0,0,1\n1,0,1\n", meta), InputError);
}
