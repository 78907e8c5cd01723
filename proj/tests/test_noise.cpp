#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "kitamp/line_noise.hpp"
#include "kitamp/noise.hpp"
#include "kitamp/twpa.hpp"
#include "test_support.hpp"

using namespace kitamp;
using namespace kitamp::noise;

namespace {

std::vector<double> paper_temps(int n = 28) {
    std::vector<double> t;
    for (int i = 0; i < n; ++i) t.push_back(0.3 + 2.7 * i / (n - 1));
    return t;
}

NoiseSweep add_noise(NoiseSweep s, double rel, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, rel);
    for (auto& row : s.psd)
        for (double& v : row) v *= 1.0 + n(rng);
    return s;
}

// Quantum temperature h f / k_B from the exact SI constants.
double tq(double f) { return 6.62607015e-34 * f / 1.380649e-23; }

} // namespace

TEST(PlanckPsd, Limits) {
    EXPECT_NEAR(planck_psd(1e6, 3.0) / 3.0, 1.0, 1e-4);
    EXPECT_LT(planck_psd(9e9, 0.01), 1e-9);
    const double t0 = tq(9e9);
    EXPECT_NEAR(t0, 0.43193, 1e-5);
    EXPECT_NEAR(planck_psd(9e9, t0), t0 / (std::exp(1.0) - 1.0), 1e-15);
    EXPECT_NEAR(planck_psd(9e9, t0), 0.2513, 1e-4);
    EXPECT_NEAR(planck_psd(9e9, 0.432), 0.2514, 1e-4);
    EXPECT_THROW(planck_psd(0.0, 1.0), DomainError);
    EXPECT_THROW(planck_psd(1e9, 0.0), DomainError);
}

TEST(PlanckPsd, Monotonicity) {
    for (double f = 1e9; f < 20e9; f += 1e9) {
        double prev = 0.0;
        for (double t = 0.02; t < 5.0; t *= 1.2) {
            const double v = planck_psd(f, t);
            EXPECT_GT(v, prev);
            EXPECT_LT(v, planck_psd(0.9 * f, t));
            prev = v;
        }
    }
}

TEST(Photons, Conversion) {
    EXPECT_NEAR(photons_from_tsys(1.5, 9e9), 3.47, 0.005);
    EXPECT_NEAR(photons_from_tsys(1.5, 9e9), 1.5 / tq(9e9), 1e-12);
    EXPECT_NEAR(photons_from_tsys(tq(7e9), 7e9), 1.0, 1e-15);
    EXPECT_NEAR(photons_from_tsys(2.0, 12e9), 0.5 * photons_from_tsys(2.0, 6e9), 1e-15);
    EXPECT_THROW(photons_from_tsys(0.0, 1e9), DomainError);
}

TEST(FitNoise, ExactRoundTrip) {
    const auto s = synthesize_sweep(
        linspace(4e9, 12e9, 33), paper_temps(), [](double) { return 1e6; }, [](double) { return 1.5; });
    const auto r = fit_noise(s);
    for (std::size_t i = 0; i < r.freqs.size(); ++i) {
        EXPECT_NEAR(r.gain[i] / 1e6, 1.0, 1e-10);
        EXPECT_NEAR(r.t_sys[i] / 1.5, 1.0, 1e-10);
        EXPECT_NEAR(r.photons[i], photons_from_tsys(r.t_sys[i], r.freqs[i]), 1e-12);
        EXPECT_FALSE(r.flagged[i]);
    }
    const std::size_t i9 = 20;
    ASSERT_EQ(r.freqs[i9], 9e9);
    EXPECT_NEAR(r.photons[i9], 3.47, 0.05);
}

TEST(FitNoise, RandomRoundTrip) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> lg(3.0, 7.0), ts(0.1, 20.0), ff(1e9, 15e9);
    for (int trial = 0; trial < 200; ++trial) {
        const double g = std::pow(10.0, lg(rng)), t = ts(rng), f = ff(rng);
        const auto s = synthesize_sweep({f}, paper_temps(12), [&](double) { return g; }, [&](double) { return t; });
        const auto r = fit_noise(s);
        EXPECT_NEAR(r.gain[0] / g, 1.0, 1e-10);
        EXPECT_NEAR(r.t_sys[0] / t, 1.0, 1e-10);
    }
}

TEST(FitNoise, StatisticalCoverage) {
    std::mt19937_64 rng(22);
    const auto clean = synthesize_sweep({9e9}, paper_temps(), [](double) { return 1e6; }, [](double) { return 1.5; });
    int covered = 0;
    const int trials = 500;
    for (int trial = 0; trial < trials; ++trial) {
        const auto r = fit_noise(add_noise(clean, 0.01, rng));
        if (std::abs(r.t_sys[0] - 1.5) <= 3.0 * r.t_sys_stderr[0]) ++covered;
    }
    EXPECT_GE(covered, static_cast<int>(0.95 * trials));
}

TEST(FitNoise, StandardErrorAtPaperScale) {
    std::mt19937_64 rng(23);
    const auto clean =
        synthesize_sweep(linspace(4e9, 12e9, 9), paper_temps(), [](double) { return 1e6; }, [](double) { return 1.5; });
    const auto r = fit_noise(add_noise(clean, 0.01, rng));
    for (std::size_t i = 0; i < r.freqs.size(); ++i) {
        EXPECT_GT(r.t_sys_stderr[i], 0.0);
        EXPECT_LE(r.t_sys_stderr[i], 0.17);
    }
}

TEST(FitNoise, FlagsNonPositiveTsys) {
    auto s = synthesize_sweep({5e9, 6e9}, paper_temps(6), [](double) { return 1e5; },
                              [](double f) { return f < 5.5e9 ? -0.05 : 2.0; });
    const auto r = fit_noise(s);
    EXPECT_TRUE(r.flagged[0]);
    EXPECT_NEAR(r.t_sys[0], -0.05, 1e-9); // never clipped
    EXPECT_FALSE(r.flagged[1]);
}

TEST(FitNoise, Validation) {
    NoiseSweep s = synthesize_sweep({5e9}, {1.0, 2.0}, [](double) { return 1.0; }, [](double) { return 1.0; });
    EXPECT_THROW(fit_noise(s), DomainError);
    s = synthesize_sweep({5e9}, {1.0, 1.0, 1.0}, [](double) { return 1.0; }, [](double) { return 1.0; });
    EXPECT_THROW(fit_noise(s), DomainError);
    s = synthesize_sweep({5e9}, {1.0, 2.0, 3.0}, [](double) { return 1.0; }, [](double) { return 1.0; });
    s.psd[0][1] = 0.0;
    EXPECT_THROW(fit_noise(s), DomainError);
    // Temperatures so low that the source term vanishes: degenerate regression.
    s = synthesize_sweep({9e9}, {0.001, 0.0011, 0.0012}, [](double) { return 1.0; }, [](double) { return 1.0; });
    EXPECT_THROW(fit_noise(s), NumericalError);
}

TEST(FitNoise, LossTableRefersGain) {
    auto s = synthesize_sweep({4e9, 8e9}, paper_temps(8), [](double) { return 1e6; }, [](double) { return 1.5; });
    const std::vector<double> tf{4e9, 8e9}, tl{3.0, 6.0};
    apply_loss_table(s, tf, tl);
    const auto r = fit_noise(s);
    EXPECT_NEAR(db10(r.gain[0]), 63.0, 1e-9);
    EXPECT_NEAR(db10(r.gain[1]), 66.0, 1e-9);
    EXPECT_NEAR(r.t_sys[0], 1.5, 1e-9);
}

TEST(SweepCsv, RoundTripAndUnits) {
    const auto s = synthesize_sweep(
        linspace(4e9, 5e9, 3), paper_temps(4), [](double) { return 1e6; }, [](double) { return 1.5; });
    std::stringstream ss;
    write_sweep(s, ss);
    const std::string text = ss.str();
    const auto back = read_sweep(ss, "<sweep>");
    EXPECT_EQ(back.freqs, s.freqs);
    EXPECT_EQ(back.temps, s.temps);
    EXPECT_EQ(back.psd, s.psd);
    std::ostringstream again;
    write_sweep(back, again);
    EXPECT_EQ(again.str(), text);

    std::istringstream dbm("freq_hz,temp_k,psd_dbm_per_hz\n1e9,1,-170\n1e9,2,-169\n1e9,3,-168\n");
    const auto d = read_sweep(dbm, "<dbm>", PsdUnit::DbmPerHz);
    EXPECT_NEAR(d.psd[0][0], 1e-20, 1e-32);

    std::istringstream ragged("freq_hz,temp_k,psd_w_per_hz\n1e9,1,1\n1e9,2,2\n1e9,3,3\n2e9,1,1\n2e9,2,2\n");
    EXPECT_THROW(read_sweep(ragged, "<r>"), InputError);
    std::istringstream empty("");
    EXPECT_THROW(read_sweep(empty, "<e>"), InputError);
    std::istringstream header_only("freq_hz,temp_k,psd_w_per_hz\n");
    EXPECT_THROW(read_sweep(header_only, "<h>"), InputError);
    std::istringstream dup("freq_hz,temp_k,psd_w_per_hz\n1e9,1,1\n1e9,1,2\n1e9,3,3\n");
    EXPECT_THROW(read_sweep(dup, "<d>"), ParseError);
}

TEST(DistributedNoise, QuantumLimit) {
    DistributedAmpSpec s;
    s.n_segments = 50;
    s.gain_per_segment_db = 1.0; // 50 dB total
    s.loss_per_segment_db = 0.0;
    s.segment_temp_k = 0.0;
    EXPECT_NEAR(distributed_added_noise(s, 6e9) / 0.5, 1.0, 0.01);
    s.segment_temp_k = 0.010;
    EXPECT_NEAR(distributed_added_noise(s, 6e9) / 0.5, 1.0, 0.01);
}

TEST(DistributedNoise, SingleSegmentClosedForm) {
    DistributedAmpSpec s;
    s.loss_per_segment_db = 3.0;
    s.segment_temp_k = 0.0;
    const double l = std::pow(10.0, -0.3);
    EXPECT_NEAR(l, 0.501, 1e-3);
    EXPECT_NEAR(distributed_added_noise(s, 6e9), (1.0 / l - 1.0) / 2.0, 1e-12);
    EXPECT_NEAR(distributed_added_noise(s, 6e9), 0.497, 1e-3);

    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> gdb(0.0, 20.0), ldb(0.0, 5.0), tt(0.0, 1.0), ff(1e9, 12e9);
    for (int trial = 0; trial < 100; ++trial) {
        DistributedAmpSpec one;
        one.gain_per_segment_db = gdb(rng);
        one.loss_per_segment_db = ldb(rng);
        one.segment_temp_k = tt(rng);
        const double f = ff(rng);
        const double g = std::pow(10.0, one.gain_per_segment_db / 10.0);
        const double h = std::pow(10.0, -one.loss_per_segment_db / 20.0);
        const double nb = (one.segment_temp_k > 0 ? 1.0 / std::expm1(tq(f) / one.segment_temp_k) : 0.0) + 0.5;
        // Input-referred: vacuum amplified, amplifier idler vacuum, thermal noise of
        // the first half-loss amplified, thermal noise of the second half-loss.
        const double out = h * h * g * 0.5 + h * (g - 1.0) * 0.5 + (1.0 - h) * nb * (h * g + 1.0);
        const double expected = out / (g * h * h) - 0.5;
        EXPECT_NEAR(distributed_added_noise(one, f), expected, 1e-12 * std::max(1.0, expected));
    }
}

TEST(DistributedNoise, SegmentRefinementConverges) {
    DistributedAmpSpec coarse;
    coarse.n_segments = 120;
    coarse.gain_per_segment_db = 0.1;
    coarse.loss_per_segment_db = 0.02;
    coarse.segment_temp_k = 0.3;
    DistributedAmpSpec fine = coarse;
    fine.n_segments *= 2;
    fine.gain_per_segment_db /= 2;
    fine.loss_per_segment_db /= 2;
    const double a = distributed_added_noise(coarse, 7e9), b = distributed_added_noise(fine, 7e9);
    EXPECT_LT(std::abs(a - b) / b, 1e-3);
}

TEST(DistributedNoise, DecreasesWithGain) {
    DistributedAmpSpec s;
    s.n_segments = 100;
    s.loss_per_segment_db = 0.02;
    s.segment_temp_k = 0.5;
    double prev = std::numeric_limits<double>::infinity();
    for (double g = 0.1; g < 0.3; g += 0.02) {
        s.gain_per_segment_db = g;
        const double n = distributed_added_noise(s, 8e9);
        EXPECT_LT(n, prev);
        prev = n;
    }
}

// Device-like chain: the default line's unsaturated gain and insertion loss spread
// over 200 segments at an elevated internal temperature of 0.5 K.
TEST(DistributedNoise, DeviceLikeSpecBracketsMeasuredValues) {
    const auto cfg = KeyValueConfig::load((testkit::source_dir() / "configs/kit_default.cfg").string());
    const auto spec = twpa::line_spec_from_config(cfg);
    const double fp = cfg.require_double("pump.frequency");
    const auto curve = twpa::dispersion(spec, linspace(1e6, 20e9, 20000));
    for (double f = 6e9; f <= 10e9 + 1; f += 0.5e9) {
        const DistributedAmpSpec d = line_noise_spec(spec, curve, fp, f);
        EXPECT_EQ(d.n_segments, 200);
        EXPECT_EQ(d.segment_temp_k, 1.5);
        EXPECT_NEAR(d.n_segments * d.gain_per_segment_db, db10(twpa::analytic_gain(spec, curve, fp, f)), 1e-12);
        EXPECT_NEAR(d.n_segments * d.loss_per_segment_db, spec.loss.db_per_m(f) * spec.length, 1e-12);
        const double n = distributed_added_noise(d, f);
        EXPECT_GE(n, 1.0) << f;
        EXPECT_LE(n, 5.0) << f;
    }
}

TEST(DistributedNoise, Validation) {
    DistributedAmpSpec s;
    s.n_segments = 0;
    EXPECT_THROW(distributed_added_noise(s, 1e9), DomainError);
    s.n_segments = 1;
    s.loss_per_segment_db = -1;
    EXPECT_THROW(distributed_added_noise(s, 1e9), DomainError);
    s.loss_per_segment_db = 0;
    s.segment_temp_k = -1;
    EXPECT_THROW(distributed_added_noise(s, 1e9), DomainError);
    s.segment_temp_k = 0;
    EXPECT_THROW(distributed_added_noise(s, 0.0), DomainError);
}
