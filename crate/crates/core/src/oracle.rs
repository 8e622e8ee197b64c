//! Independent estimates of `Pr[Σ wᵢ vᵢ ≥ V]` that share no code with the
//! analytic paths: Monte Carlo simulation and direct numerical convolution.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::closed_form::validate_weights;
use crate::error::OracleError;

/// Minimum sample count accepted by [`mc_tail`].
pub const MIN_MC_SAMPLES: u64 = 1_000;

/// Samples per substream. Fixed, so that results do not depend on how many
/// worker threads happen to run the shards.
pub const SHARD_SIZE: u64 = 1 << 16;

/// Uniform variates on `(0, 1]` from the ChaCha8 stream `(seed, stream)`.
///
/// ChaCha is counter-based: the output at a given position depends only on
/// the key, the stream id and the block counter.
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// `(m + 1) / 2⁵³` for a uniform 53-bit integer `m`.
    pub fn next_open_closed(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A standard exponential variate by inversion, `-ln u`.
    pub fn next_exp(&mut self) -> f64 {
        -self.next_open_closed().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub p_hat: f64,
    /// `sqrt(p̂ (1 - p̂) / n)`.
    pub std_err: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    /// `(p - p̂) / se`, with the standard error floored at one sample's
    /// worth of probability so a degenerate `p̂ ∈ {0, 1}` stays usable.
    pub fn z_score(&self, p: f64) -> f64 {
        let diff = p - self.p_hat;
        if diff == 0.0 {
            return 0.0;
        }
        diff / self.std_err.max(1.0 / self.n_samples as f64)
    }
}

/// Monte Carlo estimate of the right tail at `v`.
///
/// Sample `s` of shard `b` uses stream `b` of the seed; shards are counted
/// in parallel and summed as integers.
pub fn mc_tail(
    weights: &[f64],
    v: f64,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate, OracleError> {
    validate_weights(weights)?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(OracleError::TooFewSamples {
            got: n_samples,
            min: MIN_MC_SAMPLES,
        });
    }
    let shards = n_samples.div_ceil(SHARD_SIZE);
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let len = SHARD_SIZE.min(n_samples - shard * SHARD_SIZE);
            let mut stream = UniformStream::new(seed, shard);
            let mut hits = 0u64;
            for _ in 0..len {
                let total: f64 = weights.iter().map(|w| w * stream.next_exp()).sum();
                if total >= v {
                    hits += 1;
                }
            }
            hits
        })
        .sum();

    let p_hat = hits as f64 / n_samples as f64;
    Ok(McEstimate {
        p_hat,
        std_err: (p_hat * (1.0 - p_hat) / n_samples as f64).sqrt(),
        n_samples,
        seed,
    })
}

/// Truncation limit for [`conv_tail`]: tail mass beyond the grid.
pub const GRID_TRUNCATION_LIMIT: f64 = 1e-9;

const MAX_GRID_POINTS: usize = 1 << 25;

/// `(step, max)` = `(min w / 400, V + max(40 Σ w, 10 k max w))`; the second
/// term is the shortest grid [`conv_tail`] accepts.
pub fn default_grid(weights: &[f64], v: f64) -> (f64, f64) {
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max = weights.iter().copied().fold(0.0, f64::max);
    let total: f64 = weights.iter().sum();
    (min / 400.0, v + (40.0 * total).max(10.0 * max * weights.len() as f64))
}

/// Chernoff bound `inf_t e^{-tG} ∏ 1/(1 - t wᵢ)` on `Pr[Σ wᵢ vᵢ > G]`.
pub fn truncation_bound(weights: &[f64], grid_max: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    if grid_max <= total {
        return 1.0;
    }
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let slope = |t: f64| -grid_max + weights.iter().map(|w| w / (1.0 - t * w)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0 / w_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = lo;
    let exponent = -t * grid_max - weights.iter().map(|w| (1.0 - t * w).ln()).sum::<f64>();
    exponent.exp().min(1.0)
}

/// Right tail at `v` by discretizing each density `e^{-x/w}/w` on a uniform
/// grid, convolving with the trapezoid rule, then integrating past `v`.
pub fn conv_tail(
    weights: &[f64],
    v: f64,
    grid_step: f64,
    grid_max: f64,
) -> Result<f64, OracleError> {
    validate_weights(weights)?;
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(OracleError::GridStep(grid_step));
    }
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let required = v + 10.0 * w_max * weights.len() as f64;
    if !(grid_max >= required) {
        return Err(OracleError::GridTooShort { grid_max, required });
    }
    let bound = truncation_bound(weights, grid_max);
    if bound > GRID_TRUNCATION_LIMIT {
        return Err(OracleError::GridTruncation {
            bound,
            limit: GRID_TRUNCATION_LIMIT,
        });
    }
    let cells = (grid_max / grid_step).ceil() as usize;
    if cells >= MAX_GRID_POINTS {
        return Err(OracleError::GridTooLarge(cells + 1));
    }
    let points = cells + 1;
    let h = grid_step;

    let sample = |w: f64| -> Vec<f64> {
        (0..points)
            .map(|m| (-(m as f64) * h / w).exp() / w)
            .collect()
    };

    let mut planner = FftPlanner::new();
    let mut density = sample(weights[0]);
    for &w in &weights[1..] {
        density = trapezoid_convolution(&mut planner, &density, &sample(w), h);
    }

    if v >= cells as f64 * h {
        return Ok(0.0);
    }
    let m0 = (v / h).floor() as usize;
    let frac = v / h - m0 as f64;
    let at_v = density[m0] + frac * (density[m0 + 1] - density[m0]);
    let mut tail = 0.5 * (1.0 - frac) * h * (at_v + density[m0 + 1]);
    for m in (m0 + 1)..cells {
        tail += 0.5 * h * (density[m] + density[m + 1]);
    }
    Ok(tail)
}

/// `(a ⋆ b)(x_m) ≈ h [Σ_{l=0}^{m} a_l b_{m-l} - (a_0 b_m + a_m b_0)/2]`,
/// truncated to the input length. The raw sum comes from an FFT.
fn trapezoid_convolution(
    planner: &mut FftPlanner<f64>,
    a: &[f64],
    b: &[f64],
    h: f64,
) -> Vec<f64> {
    let n = a.len();
    let size = (2 * n - 1).next_power_of_two();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let pad = |x: &[f64]| -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &value) in buf.iter_mut().zip(x) {
            slot.re = value;
        }
        buf
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);

    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = (0..n)
        .map(|m| h * (fa[m].re * scale - 0.5 * (a[0] * b[m] + a[m] * b[0])))
        .collect();
    out[0] = 0.0;
    for value in &mut out {
        // FFT round-off can leave tiny negatives far out in the tail
        *value = value.max(0.0);
    }
    out
}
