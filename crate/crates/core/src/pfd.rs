//! Arbitrary weight multisets through the Laplace transform.
//!
//! Grouping the weights into unique values `wᵢ` with multiplicities `nᵢ` and
//! rates `aᵢ = 1/wᵢ`, the transform of the left tail is
//!
//! ```text
//! F(s) = (1/s) ∏ᵢ aᵢ^{nᵢ} / (s + aᵢ)^{nᵢ} = c/s + Σᵢ Σ_{j=1..nᵢ} cᵢⱼ / (s + aᵢ)^j
//! ```
//!
//! and inverting term by term gives
//! `P(V) = c + Σᵢ Σⱼ cᵢⱼ V^{j-1} e^{-aᵢV} / (j-1)!`.
//!
//! The coefficients at each pole come from the Taylor expansion of
//! `φᵢ(s) = (s + aᵢ)^{nᵢ} F(s)` around `s = -aᵢ`: `cᵢⱼ = φᵢ^{(nᵢ-j)}(-aᵢ) / (nᵢ-j)!`.
//! Derivatives follow from `φ' = φψ` with `ψ = (ln φ)'`, whose derivatives
//! are explicit.

use twofloat::TwoFloat;

use crate::closed_form::validate_weights;
use crate::error::{ConditioningError, WeightsError};
use crate::numeric::{ln_factorial, CompensatedSum, ConditioningPolicy, Evaluated};

/// One unique weight with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightGroup {
    pub weight: f64,
    pub multiplicity: usize,
    /// `1 / weight`.
    pub rate: f64,
}

/// Unique weights sorted ascending, pairwise distinct under the grouping
/// tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGroups {
    groups: Vec<WeightGroup>,
}

impl WeightGroups {
    pub fn groups(&self) -> &[WeightGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// `Σ nᵢ`.
    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    pub fn all_singletons(&self) -> bool {
        self.groups.iter().all(|g| g.multiplicity == 1)
    }

    pub fn representatives(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.weight).collect()
    }

    /// Groups from explicit `(weight, multiplicity)` pairs, bypassing
    /// clustering. Weights must already be distinct under `rel_tol`.
    pub fn from_multiplicities(
        pairs: &[(f64, usize)],
        rel_tol: f64,
    ) -> Result<Self, WeightsError> {
        let weights: Vec<f64> = pairs.iter().map(|&(w, _)| w).collect();
        validate_weights(&weights)?;
        let mut groups: Vec<WeightGroup> = pairs
            .iter()
            .filter(|&&(_, n)| n > 0)
            .map(|&(weight, multiplicity)| WeightGroup {
                weight,
                multiplicity,
                rate: 1.0 / weight,
            })
            .collect();
        if groups.is_empty() {
            return Err(WeightsError::Empty);
        }
        groups.sort_by(|a, b| a.weight.total_cmp(&b.weight));
        for pair in groups.windows(2) {
            if pair[1].weight - pair[0].weight <= rel_tol * pair[1].weight {
                return Err(WeightsError::NotDistinct {
                    first: pair[0].weight,
                    second: pair[1].weight,
                    tolerance: rel_tol,
                });
            }
        }
        Ok(Self { groups })
    }
}

/// Single-linkage clustering of sorted weights: neighbours closer than
/// `rel_tol · max` share a group, represented by the cluster mean.
pub fn group_weights(weights: &[f64], rel_tol: f64) -> Result<WeightGroups, WeightsError> {
    validate_weights(weights)?;
    if !(rel_tol > 0.0 && rel_tol.is_finite()) {
        return Err(WeightsError::InvalidTolerance(rel_tol));
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut clusters: Vec<&[f64]> = Vec::new();
    let mut start = 0;
    for i in 1..sorted.len() {
        if sorted[i] - sorted[i - 1] > rel_tol * sorted[i] {
            clusters.push(&sorted[start..i]);
            start = i;
        }
    }
    clusters.push(&sorted[start..]);

    let span_limit = 10.0 * rel_tol;
    let groups = clusters
        .into_iter()
        .map(|cluster| {
            let low = cluster[0];
            let high = cluster[cluster.len() - 1];
            let span = (high - low) / high;
            if span > span_limit {
                return Err(WeightsError::ClusterSpan {
                    low,
                    high,
                    span,
                    limit: span_limit,
                });
            }
            let weight = cluster.iter().copied().collect::<CompensatedSum>().value()
                / cluster.len() as f64;
            Ok(WeightGroup {
                weight,
                multiplicity: cluster.len(),
                rate: 1.0 / weight,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightGroups { groups })
}

/// `2^e` for `e` in the normal exponent range.
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// `e` with `|x| ∈ [2^e, 2^{e+1})`, for finite nonzero `x`.
fn exponent(x: f64) -> i64 {
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i64;
    if biased == 0 {
        exponent(x * pow2(64)) - 64
    } else {
        biased - 1023
    }
}

/// `x · 2^e` with the scaling split into in-range steps.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 && x.is_finite() && x != 0.0 {
        x *= pow2(1000);
        e -= 1000;
    }
    while e < -1000 && x != 0.0 {
        x *= pow2(-1000);
        e += 1000;
    }
    if !(-1000..=1000).contains(&e) {
        return x;
    }
    x * pow2(e)
}

/// Double-double quotient `a / b`: `twofloat`'s own division by a
/// double-double is only `f64`-accurate, so one Newton correction on the
/// exact remainder restores the low word.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q = a / b.hi();
    let remainder = a - q * b;
    q + remainder / b.hi()
}

/// A real number as a double-double mantissa in `[1, 2)` (by magnitude)
/// times an exact power of two: extended precision with unbounded range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WideScalar {
    mantissa: TwoFloat,
    exp2: i64,
}

impl WideScalar {
    pub fn zero() -> Self {
        Self {
            mantissa: TwoFloat::from(0.0),
            exp2: 0,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        Self::from_two_float(TwoFloat::from(x))
    }

    pub fn from_two_float(x: TwoFloat) -> Self {
        Self {
            mantissa: x,
            exp2: 0,
        }
        .normalized()
    }

    fn normalized(self) -> Self {
        let hi = self.mantissa.hi();
        if hi == 0.0 || !hi.is_finite() {
            return self;
        }
        let e = exponent(hi);
        Self {
            mantissa: TwoFloat::new_add(ldexp(hi, -e), ldexp(self.mantissa.lo(), -e)),
            exp2: self.exp2 + e,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.hi() == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.mantissa.hi().is_finite() && self.mantissa.lo().is_finite()
    }

    /// `-1`, `0` or `1`.
    pub fn signum(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.mantissa.hi().signum()
        }
    }

    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (hi, lo) = (self.mantissa.hi(), self.mantissa.lo());
        hi.abs().ln() + (lo / hi).ln_1p() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    /// Nearest `f64`; `±inf` or `0` outside its range.
    pub fn value(&self) -> f64 {
        self.to_two_float().hi()
    }

    pub fn to_two_float(&self) -> TwoFloat {
        let hi = ldexp(self.mantissa.hi(), self.exp2);
        if hi == 0.0 || !hi.is_finite() {
            return TwoFloat::from(hi);
        }
        TwoFloat::new_add(hi, ldexp(self.mantissa.lo(), self.exp2))
    }

    /// `self · e^{ln_factor}`, evaluated without forming `self` alone.
    ///
    /// The nearest multiple of `ln 2` in `ln_factor` goes into the exponent
    /// exactly; only the remainder is exponentiated.
    pub fn scaled_exp(&self, ln_factor: f64) -> f64 {
        // ln 2 split so that `k · LN2_HI` is exact for |k| < 2^20
        const LN2_HI: f64 = 6.931_471_803_691_238e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
        if self.is_zero() {
            return 0.0;
        }
        let (hi, lo) = (self.mantissa.hi(), self.mantissa.lo());
        if !ln_factor.is_finite() || ln_factor.abs() > 7e5 {
            let ln_scale = self.exp2 as f64 * std::f64::consts::LN_2 + ln_factor;
            return hi * ln_scale.exp() * (1.0 + lo / hi);
        }
        let k = (ln_factor / std::f64::consts::LN_2).round();
        let remainder = (ln_factor - k * LN2_HI) - k * LN2_LO;
        ldexp(hi * remainder.exp() * (1.0 + lo / hi), self.exp2 + k as i64)
    }

    /// `self · 2^k`, exactly.
    pub fn scale2(self, k: i64) -> Self {
        Self {
            exp2: self.exp2 + k,
            ..self
        }
    }

    pub fn powu(self, mut n: usize) -> Self {
        let mut result = Self::from_f64(1.0);
        let mut base = self;
        while n > 0 {
            if n & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            n >>= 1;
        }
        result
    }
}

impl std::ops::Mul for WideScalar {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        Self {
            mantissa: self.mantissa * rhs.mantissa,
            exp2: self.exp2 + rhs.exp2,
        }
        .normalized()
    }
}

/// Coefficients at the pole `s = -rate`; `coefficients[j-1]` is `cᵢⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleCoefficients {
    pub rate: f64,
    pub coefficients: Vec<WideScalar>,
}

/// Partial-fraction decomposition of the left-tail transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PfdCoefficients {
    /// Residue at `s = 0`; exactly 1.
    pub c: f64,
    pub poles: Vec<PoleCoefficients>,
    /// `|c_residue - 1|` where `c_residue = lim_{s→0} s F(s)` is evaluated
    /// numerically from the product form.
    pub c_gap: f64,
    /// `|1 + Σᵢ cᵢ₁|`, which must vanish for `P(0) = 0`.
    pub sum_gap: f64,
}

/// Grouping beyond which the coefficient invariants are considered broken.
pub const COEFFICIENT_INVARIANT_TOL: f64 = 1e-8;

/// Largest coefficient magnitude kept in plain `f64` form.
const OVERFLOW_GUARD: f64 = 1e300;

pub fn pfd_coefficients(groups: &WeightGroups) -> Result<PfdCoefficients, ConditioningError> {
    let g = groups.groups();
    let mut poles = Vec::with_capacity(g.len());
    for (i, pole) in g.iter().enumerate() {
        poles.push(PoleCoefficients {
            rate: pole.rate,
            coefficients: pole_coefficients(g, i)?,
        });
    }

    let c_residue = g
        .iter()
        .map(|grp| grp.multiplicity as f64 * (grp.rate.ln() - (0.0 + grp.rate).ln()))
        .sum::<f64>()
        .exp();
    let c_gap = (c_residue - 1.0).abs();

    let mut first_order = TwoFloat::from(1.0);
    for pole in &poles {
        let c1 = pole.coefficients[0];
        if !(c1.ln_abs() <= OVERFLOW_GUARD.ln()) {
            return Err(ConditioningError::CoefficientInvariant {
                invariant: "c + Σ cᵢ₁ = 0",
                gap: f64::INFINITY,
            });
        }
        first_order += c1.to_two_float();
    }
    let sum_gap = first_order.hi().abs();

    if !(c_gap <= COEFFICIENT_INVARIANT_TOL) {
        return Err(ConditioningError::CoefficientInvariant {
            invariant: "c = 1",
            gap: c_gap,
        });
    }
    if !(sum_gap <= COEFFICIENT_INVARIANT_TOL) {
        return Err(ConditioningError::CoefficientInvariant {
            invariant: "c + Σ cᵢ₁ = 0",
            gap: sum_gap,
        });
    }

    Ok(PfdCoefficients {
        c: 1.0,
        poles,
        c_gap,
        sum_gap,
    })
}

/// `cᵢⱼ` for `j = 1..nᵢ` at the pole of group `i`.
///
/// With `d_r = φᵢ^{(r)}(-aᵢ) / r!` and `ψ_u = ψ^{(u)}(-aᵢ) / u!`, Leibniz on
/// `φ' = φψ` gives `d_r = (1/r) Σ_{t<r} d_t ψ_{r-1-t}`, and `cᵢⱼ = d_{nᵢ-j}`.
/// Everything is normalised by `d_0` and by powers of the pole's distance
/// to its nearest neighbour `δ` so the recursion stays in range:
/// `ẽ_r = d_r δ^r / d_0`.
fn pole_coefficients(
    groups: &[WeightGroup],
    i: usize,
) -> Result<Vec<WideScalar>, ConditioningError> {
    let a_i = groups[i].rate;
    let n_i = groups[i].multiplicity;
    let rate = TwoFloat::from(a_i);
    // (a_m - aᵢ, n_m) for the other poles, differences exact in double-double
    let others: Vec<(f64, TwoFloat, usize)> = groups
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != i)
        .map(|(_, g)| (g.rate, TwoFloat::from(g.rate) - rate, g.multiplicity))
        .collect();

    // δ is a power of two so that scaling by δ^r is exact
    let nearest = others
        .iter()
        .map(|(_, gap, _)| gap.hi().abs())
        .fold(a_i, f64::min);
    if !(nearest.is_normal() && a_i.is_finite()) {
        return Err(ConditioningError::Overflow {
            context: "partial-fraction leading coefficient",
        });
    }
    let log2_delta = exponent(nearest);
    let delta = pow2(log2_delta);

    // d_0 = φᵢ(-aᵢ) = -aᵢ^{nᵢ-1} ∏_{m≠i} (a_m / (a_m - aᵢ))^{n_m}
    let mut d0 = WideScalar::from_f64(-1.0) * WideScalar::from_two_float(rate).powu(n_i - 1);
    for &(a_m, gap, n_m) in &others {
        d0 = d0 * WideScalar::from_two_float(dd_div(TwoFloat::from(a_m), gap)).powu(n_m);
    }

    // ψ_u δ^{u+1} = (δ/aᵢ)^{u+1} - (-1)^u Σ_{m≠i} n_m (δ / (a_m - aᵢ))^{u+1}
    let ratios: Vec<(TwoFloat, f64)> = others
        .iter()
        .map(|&(_, gap, n_m)| (dd_div(TwoFloat::from(delta), gap), n_m as f64))
        .collect();
    let own = dd_div(TwoFloat::from(delta), rate);
    let mut own_power = TwoFloat::from(1.0);
    let mut powers: Vec<TwoFloat> = vec![TwoFloat::from(1.0); ratios.len()];
    let mut psi = Vec::with_capacity(n_i.saturating_sub(1));
    for u in 0..n_i.saturating_sub(1) {
        own_power *= own;
        let mut others_sum = TwoFloat::from(0.0);
        for (power, &(ratio, n_m)) in powers.iter_mut().zip(&ratios) {
            *power *= ratio;
            others_sum += *power * n_m;
        }
        psi.push(if u % 2 == 0 {
            own_power - others_sum
        } else {
            own_power + others_sum
        });
    }

    let mut scaled = Vec::with_capacity(n_i);
    scaled.push(TwoFloat::from(1.0));
    for r in 1..n_i {
        let mut acc = TwoFloat::from(0.0);
        for t in 0..r {
            acc += scaled[t] * psi[r - 1 - t];
        }
        scaled.push(acc / r as f64);
    }
    if !d0.is_finite() || scaled.iter().any(|e| !(e.hi().is_finite() && e.lo().is_finite())) {
        return Err(ConditioningError::Overflow {
            context: "partial-fraction derivative recursion",
        });
    }

    Ok((1..=n_i)
        .map(|j| {
            let r = n_i - j;
            (d0 * WideScalar::from_two_float(scaled[r])).scale2(-(r as i64) * log2_delta)
        })
        .collect())
}

/// The exponential terms `cᵢⱼ V^{j-1} e^{-aᵢV} / (j-1)!` of the inverse transform.
fn inverse_terms(v: f64, coeffs: &PfdCoefficients) -> impl Iterator<Item = f64> + '_ {
    let ln_v = v.ln();
    coeffs.poles.iter().flat_map(move |pole| {
        pole.coefficients
            .iter()
            .enumerate()
            .map(move |(power, coefficient)| {
                let polynomial = if power == 0 { 0.0 } else { power as f64 * ln_v };
                coefficient.scaled_exp(polynomial - ln_factorial(power) - pole.rate * v)
            })
    })
}

/// Left tail `P(V) = Pr[V ≤ v]`, as the signed sum `c + Σ` of the inverse
/// transform. Near `V = 0` this sum cancels heavily by construction; for
/// p-values use [`right_tail`].
pub fn left_tail(v: f64, coeffs: &PfdCoefficients) -> Result<Evaluated, ConditioningError> {
    left_tail_with(v, coeffs, &ConditioningPolicy::default())
}

pub fn left_tail_with(
    v: f64,
    coeffs: &PfdCoefficients,
    policy: &ConditioningPolicy,
) -> Result<Evaluated, ConditioningError> {
    debug_assert!(v >= 0.0);
    if v == 0.0 {
        return Ok(Evaluated::exact(0.0));
    }
    let mut sum = CompensatedSum::new();
    sum.add(coeffs.c);
    sum.extend(inverse_terms(v, coeffs));
    policy.check_probability(sum.evaluated(), "partial-fraction left tail")
}

/// Right tail `1 - P(V)`. Since `c = 1` exactly, this is `-Σ cᵢⱼ …` with
/// no subtraction from one.
pub fn right_tail(v: f64, coeffs: &PfdCoefficients) -> Result<Evaluated, ConditioningError> {
    right_tail_with(v, coeffs, &ConditioningPolicy::default())
}

pub fn right_tail_with(
    v: f64,
    coeffs: &PfdCoefficients,
    policy: &ConditioningPolicy,
) -> Result<Evaluated, ConditioningError> {
    debug_assert!(v >= 0.0);
    if v == 0.0 {
        return Ok(Evaluated::exact(1.0));
    }
    let sum: CompensatedSum = inverse_terms(v, coeffs).map(|t| -t).collect();
    policy.check_probability(sum.evaluated(), "partial-fraction right tail")
}

/// Density `dP/dV = Σᵢ Σⱼ cᵢⱼ/(j-1)! · d/dV[V^{j-1} e^{-aᵢV}]`.
pub fn density(v: f64, coeffs: &PfdCoefficients) -> Evaluated {
    let ln_v = v.ln();
    let mut sum = CompensatedSum::new();
    for pole in &coeffs.poles {
        for (power, coefficient) in pole.coefficients.iter().enumerate() {
            let base = -ln_factorial(power) - pole.rate * v;
            // d/dV V^p e^{-aV} = (p V^{p-1} - a V^p) e^{-aV}
            if power > 0 {
                let lead = (power as f64).ln() + (power - 1) as f64 * ln_v;
                sum.add(coefficient.scaled_exp(base + lead));
            }
            let decay = pole.rate.ln() + if power == 0 { 0.0 } else { power as f64 * ln_v };
            sum.add(-coefficient.scaled_exp(base + decay));
        }
    }
    sum.evaluated()
}
