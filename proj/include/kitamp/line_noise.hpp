#pragma once

// Distributed-noise parameters derived from a pumped line.

#include "kitamp/noise.hpp"
#include "kitamp/twpa.hpp"

namespace kitamp::noise {

/// Effective temperature of the line under a strong pump (dissipation heats the
/// film above the mixing-chamber temperature).
inline constexpr double pumped_line_temp_k = 1.5;

/// Spreads the line's analytic gain and insertion loss at `f` evenly over
/// `n_segments` segments held at `temp_k`.
inline DistributedAmpSpec line_noise_spec(const twpa::LineSpec& spec, const twpa::DispersionCurve& curve,
                                          double f_pump, double f, int n_segments = 200,
                                          double temp_k = pumped_line_temp_k) {
    require(n_segments >= 1, "n_segments must be >= 1");
    DistributedAmpSpec d;
    d.n_segments = n_segments;
    d.gain_per_segment_db = db10(twpa::analytic_gain(spec, curve, f_pump, f)) / n_segments;
    d.loss_per_segment_db = spec.loss.db_per_m(f) * spec.length / n_segments;
    d.segment_temp_k = temp_k;
    return d;
}

} // namespace kitamp::noise
