//! Closed forms for the two special weight configurations.
//!
//! With pairwise-distinct weights `V = Σ wᵢ vᵢ` is hypoexponential; with one
//! shared weight it is Erlang. Both densities and right tails are evaluated
//! here, plus two identities used to anchor the tests.

use crate::error::{ConditioningError, WeightsError};
use crate::numeric::{
    ln_binomial, ln_factorial, regularized_gamma_p, regularized_gamma_q, CompensatedSum, ConditioningPolicy, Evaluated,
};

/// Default relative tolerance under which two weights count as identical.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Weights that are pairwise distinct: `|wᵢ - wⱼ| > tol · max(wᵢ, wⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctWeights {
    weights: Vec<f64>,
}

impl DistinctWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, WeightsError> {
        Self::with_tolerance(weights, DEFAULT_REL_TOL)
    }

    pub fn with_tolerance(weights: Vec<f64>, rel_tol: f64) -> Result<Self, WeightsError> {
        validate_weights(&weights)?;
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(WeightsError::InvalidTolerance(rel_tol));
        }
        let mut sorted = weights.clone();
        sorted.sort_by(f64::total_cmp);
        for pair in sorted.windows(2) {
            if pair[1] - pair[0] <= rel_tol * pair[1] {
                return Err(WeightsError::NotDistinct {
                    first: pair[0],
                    second: pair[1],
                    tolerance: rel_tol,
                });
            }
        }
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<(), WeightsError> {
    if weights.is_empty() {
        return Err(WeightsError::Empty);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(WeightsError::Invalid { index, value });
        }
    }
    Ok(())
}

/// Terms `wᵢ^power e^{-V/wᵢ} / ∏_{j≠i}(wᵢ - wⱼ)`, each formed in log space.
fn residue_terms(v: f64, weights: &[f64], power: i32) -> impl Iterator<Item = f64> + '_ {
    weights.iter().enumerate().map(move |(i, &wi)| {
        let mut sign = 1.0;
        let mut ln_den = 0.0;
        for (j, &wj) in weights.iter().enumerate() {
            if j != i {
                let diff = wi - wj;
                if diff < 0.0 {
                    sign = -sign;
                }
                ln_den += diff.abs().ln();
            }
        }
        sign * (f64::from(power) * wi.ln() - ln_den - v / wi).exp()
    })
}

/// Density of `V` for distinct weights: `Σᵢ wᵢ^{k-2} e^{-V/wᵢ} / ∏_{j≠i}(wᵢ - wⱼ)`.
pub fn pdf_distinct(v: f64, weights: &DistinctWeights) -> Result<Evaluated, ConditioningError> {
    pdf_distinct_with(v, weights, &ConditioningPolicy::default())
}

pub fn pdf_distinct_with(
    v: f64,
    weights: &DistinctWeights,
    policy: &ConditioningPolicy,
) -> Result<Evaluated, ConditioningError> {
    debug_assert!(v >= 0.0);
    let k = weights.len();
    if v == 0.0 && k >= 2 {
        return Ok(Evaluated::exact(0.0));
    }
    let sum: CompensatedSum = residue_terms(v, weights.as_slice(), k as i32 - 2).collect();
    let evaluated = policy.check(sum.evaluated(), "distinct-weights density")?;
    Ok(Evaluated {
        value: evaluated.value.max(0.0),
        ..evaluated
    })
}

/// Right tail `Pr[V ≥ v]` for distinct weights:
/// `Σᵢ wᵢ^{k-1} e^{-V/wᵢ} / ∏_{j≠i}(wᵢ - wⱼ)`.
pub fn tail_distinct(v: f64, weights: &DistinctWeights) -> Result<Evaluated, ConditioningError> {
    tail_distinct_with(v, weights, &ConditioningPolicy::default())
}

pub fn tail_distinct_with(
    v: f64,
    weights: &DistinctWeights,
    policy: &ConditioningPolicy,
) -> Result<Evaluated, ConditioningError> {
    debug_assert!(v >= 0.0);
    if v == 0.0 {
        return Ok(Evaluated::exact(1.0));
    }
    let k = weights.len();
    let sum: CompensatedSum = residue_terms(v, weights.as_slice(), k as i32 - 1).collect();
    policy.check_probability(sum.evaluated(), "distinct-weights tail")
}

/// Erlang density `(V/w)^{k-1} e^{-V/w} / ((k-1)! w)`.
pub fn pdf_identical(v: f64, w: f64, k: usize) -> f64 {
    debug_assert!(v >= 0.0 && w > 0.0 && k >= 1);
    if v == 0.0 {
        return if k == 1 { 1.0 / w } else { 0.0 };
    }
    let x = v / w;
    let n = (k - 1) as f64;
    (n * x.ln() - x - ln_factorial(k - 1) - w.ln()).exp()
}

/// Erlang right tail `e^{-V/w} Σ_{i<k} (V/w)^i / i!`.
///
/// While the lower regularized gamma `P(k, V/w)` is below one half the tail
/// is `1 - P` from its power series. Otherwise the finite sum (all terms
/// positive) is used, falling back to log-space terms or the continued
/// fraction for `Q(k, V/w)` once `e^{-V/w}` leaves `f64` range.
pub fn tail_identical(v: f64, w: f64, k: usize) -> Evaluated {
    debug_assert!(v >= 0.0 && w > 0.0 && k >= 1);
    let x = v / w;
    if x == 0.0 {
        return Evaluated::exact(1.0);
    }
    if k == 1 {
        return Evaluated::exact((-x).exp());
    }
    if x < k as f64 + 1.0 {
        // near 1 the complement is small and positive, and 1 - P is monotone in x
        let lower = regularized_gamma_p(k as f64, x);
        if lower <= 0.5 {
            return Evaluated::exact(1.0 - lower);
        }
    }
    // e^{-x} Σ_{i<k} xⁱ/i!: positive terms, formed directly while e^{-x} is
    // representable and the largest term (≈ e^x) cannot overflow
    if x < 700.0 {
        let mut term = 1.0;
        let mut sum = CompensatedSum::new();
        sum.add(term);
        for i in 1..k {
            term *= x / i as f64;
            sum.add(term);
        }
        return Evaluated::exact((sum.value() * (-x).exp()).min(1.0));
    }
    if x >= k as f64 + 1.0 {
        return Evaluated::exact(regularized_gamma_q(k as f64, x));
    }
    let ln_x = x.ln();
    let mut ln_term = -x;
    let mut sum = CompensatedSum::new();
    sum.add(ln_term.exp());
    for i in 1..k {
        ln_term += ln_x - (i as f64).ln();
        sum.add(ln_term.exp());
    }
    Evaluated::exact(sum.value().min(1.0))
}

/// Partial-fraction residue identity: `Σᵢ wᵢ^{m-2} / ∏_{j≠i}(wᵢ - wⱼ)` over
/// `m ≥ 2` distinct weights. Analytically zero; what remains is rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueSum {
    pub sum: f64,
    pub max_abs_term: f64,
}

impl ResidueSum {
    /// `|sum| / max|term|`, the relative size of the rounding residue.
    pub fn scaled(&self) -> f64 {
        self.sum.abs() / self.max_abs_term
    }
}

pub fn residue_sum(weights: &DistinctWeights) -> Option<ResidueSum> {
    let m = weights.len();
    if m < 2 {
        return None;
    }
    let terms: Vec<f64> = residue_terms(0.0, weights.as_slice(), m as i32 - 2).collect();
    let max_abs_term = terms.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
    Some(ResidueSum {
        sum: terms.iter().copied().collect::<CompensatedSum>().value(),
        max_abs_term,
    })
}

/// `∫_c^∞ uⁿ e^{-au} du = cⁿ (Σ_{j≤n} j! C(n,j) (ca)^{-j}) e^{-ca} / a`.
///
/// Rewritten as `Σ_j n!/(n-j)! · c^{n-j} a^{-j-1} e^{-ca}`, all positive, each
/// term in log space. At `c = 0` this is `n! / a^{n+1}`.
pub fn upper_incomplete_integral(c: f64, a: f64, n: usize) -> f64 {
    debug_assert!(c >= 0.0 && a > 0.0);
    let ln_a = a.ln();
    if c == 0.0 {
        return (ln_factorial(n) - (n as f64 + 1.0) * ln_a).exp();
    }
    let ln_c = c.ln();
    let mut sum = CompensatedSum::new();
    for j in 0..=n {
        // j! C(n, j) = n! / (n-j)!
        let ln_coeff = ln_binomial(n, j) + ln_factorial(j);
        let ln_term = ln_coeff + (n - j) as f64 * ln_c - (j as f64 + 1.0) * ln_a - c * a;
        sum.add(ln_term.exp());
    }
    sum.value()
}
