//! Compensated summation, cancellation tracking and the few special
//! functions the tail formulas need.

use crate::error::ConditioningError;

/// Neumaier-compensated running sum that also accumulates `Σ|term|`.
///
/// The ratio `Σ|term| / |Σ term|` is the condition number of the sum: it
/// bounds how much rounding in the individual terms is amplified in the
/// result.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    magnitude: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: f64) {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.compensation += (self.sum - t) + term;
        } else {
            self.compensation += (term - t) + self.sum;
        }
        self.sum = t;
        self.magnitude += term.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// `Σ|term|` over everything added so far.
    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    /// `Σ|term| / |Σ term|`; 1 for an empty or all-zero sum, infinite when
    /// non-zero terms cancel to exactly zero.
    pub fn condition(&self) -> f64 {
        if self.magnitude == 0.0 {
            return 1.0;
        }
        let value = self.value().abs();
        if value == 0.0 {
            f64::INFINITY
        } else {
            (self.magnitude / value).max(1.0)
        }
    }

    pub fn evaluated(&self) -> Evaluated {
        Evaluated {
            value: self.value(),
            condition: self.condition(),
        }
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for term in iter {
            self.add(term);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut sum = CompensatedSum::new();
        sum.extend(iter);
        sum
    }
}

/// A value produced by a (possibly signed) sum, with its condition number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    pub condition: f64,
}

impl Evaluated {
    /// A value obtained without any cancellation.
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            condition: 1.0,
        }
    }
}

/// Cancellation limits applied to every signed exponential sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditioningPolicy {
    /// Above this the result is returned but flagged.
    pub warn_above: f64,
    /// Above this the result is rejected.
    pub fail_above: f64,
}

impl Default for ConditioningPolicy {
    fn default() -> Self {
        Self {
            warn_above: 1e6,
            fail_above: 1e12,
        }
    }
}

impl ConditioningPolicy {
    /// Accepts no cancellation at all; used where a caller wants the raw
    /// condition number without an error.
    pub fn permissive() -> Self {
        Self {
            warn_above: f64::INFINITY,
            fail_above: f64::INFINITY,
        }
    }

    pub fn should_warn(&self, condition: f64) -> bool {
        condition > self.warn_above
    }

    pub fn check(
        &self,
        evaluated: Evaluated,
        context: &'static str,
    ) -> Result<Evaluated, ConditioningError> {
        if !evaluated.value.is_finite() {
            return Err(ConditioningError::Overflow { context });
        }
        if evaluated.condition > self.fail_above || evaluated.condition.is_nan() {
            return Err(ConditioningError::IllConditioned {
                context,
                condition: evaluated.condition,
                limit: self.fail_above,
            });
        }
        Ok(evaluated)
    }

    /// Runs [`check`](Self::check), then clamps to `[0, 1]` if the excursion
    /// is explainable by rounding in the summed terms.
    pub fn check_probability(
        &self,
        evaluated: Evaluated,
        context: &'static str,
    ) -> Result<Evaluated, ConditioningError> {
        let evaluated = self.check(evaluated, context)?;
        let value = evaluated.value;
        let magnitude = if evaluated.condition.is_finite() {
            evaluated.condition * value.abs()
        } else {
            1.0
        };
        let tolerance = 64.0 * f64::EPSILON * magnitude.max(1.0);
        if value < -tolerance || value > 1.0 + tolerance {
            return Err(ConditioningError::OutOfRange {
                context,
                value,
                tolerance,
            });
        }
        Ok(Evaluated {
            value: value.clamp(0.0, 1.0),
            condition: evaluated.condition,
        })
    }
}

/// Kahan–Babuška sum of a slice.
pub fn compensated_sum(terms: &[f64]) -> f64 {
    terms.iter().copied().collect::<CompensatedSum>().value()
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`: recurrence up to `x ≥ 16`, then the Stirling series.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut shift = 0.0;
    let mut y = x;
    while y < 16.0 {
        shift += y.ln();
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    // Bernoulli terms B_{2m} / (2m (2m-1) y^{2m-1}), m = 1..7
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 * (1.0 / 156.0)))))));
    (y - 0.5) * y.ln() - y + LN_SQRT_2PI + series - shift
}

const EXACT_FACTORIALS: usize = 21;

fn factorial_table() -> &'static [f64; EXACT_FACTORIALS] {
    static TABLE: std::sync::OnceLock<[f64; EXACT_FACTORIALS]> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [1.0; EXACT_FACTORIALS];
        for n in 1..EXACT_FACTORIALS {
            table[n] = table[n - 1] * n as f64;
        }
        table
    })
}

/// `n!` as a float; exact for `n ≤ 20`, log-gamma beyond.
pub fn factorial(n: usize) -> f64 {
    match factorial_table().get(n) {
        Some(&f) => f,
        None => ln_gamma(n as f64 + 1.0).exp(),
    }
}

/// `ln n!`; exact table for `n ≤ 20`, log-gamma beyond.
pub fn ln_factorial(n: usize) -> f64 {
    match factorial_table().get(n) {
        Some(&f) => f.ln(),
        None => ln_gamma(n as f64 + 1.0),
    }
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

const GAMMA_EPS: f64 = 1e-17;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
///
/// Power series for the lower function when `x < a + 1`, Lentz continued
/// fraction for the upper one otherwise.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        1.0 - lower_gamma_series(a, x, ln_prefactor)
    } else {
        upper_gamma_fraction(a, x, ln_prefactor)
    }
}

/// Regularized lower incomplete gamma `P(a, x) = 1 - Q(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        lower_gamma_series(a, x, ln_prefactor)
    } else {
        1.0 - upper_gamma_fraction(a, x, ln_prefactor)
    }
}

fn lower_gamma_series(a: f64, x: f64, ln_prefactor: f64) -> f64 {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * ln_prefactor.exp()
}

fn upper_gamma_fraction(a: f64, x: f64, ln_prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (ln_prefactor + h.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let terms = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(compensated_sum(&terms), 2e-16);
    }

    #[test]
    fn condition_of_exact_cancellation_is_infinite() {
        let sum: CompensatedSum = [1.0, -1.0].into_iter().collect();
        assert_eq!(sum.value(), 0.0);
        assert!(sum.condition().is_infinite());
        assert_eq!(CompensatedSum::new().condition(), 1.0);
    }

    #[test]
    fn condition_measures_cancellation() {
        let sum: CompensatedSum = [1e6, -1e6 + 1.0].into_iter().collect();
        assert!((sum.condition() - (2e6 - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        for n in 1..=30usize {
            let exact: f64 = (1..n).map(|i| (i as f64).ln()).sum();
            let got = ln_gamma(n as f64);
            assert!((got - exact).abs() <= 1e-13 * exact.abs().max(1.0), "n = {n}");
        }
        // Γ(1/2) = √π
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn factorial_is_exact_in_integer_range() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(20), 2_432_902_008_176_640_000.0);
        let rel = (factorial(25) - 1.551_121_004_333_098_6e25).abs() / 1.551_121_004_333_098_6e25;
        assert!(rel < 1e-13);
    }

    #[test]
    fn ln_binomial_small() {
        assert!((ln_binomial(10, 3).exp() - 120.0).abs() < 1e-10);
        assert_eq!(ln_binomial(5, 0), 0.0);
    }

    #[test]
    fn gamma_q_reference_values() {
        // Q(2, 2) = 3 e^{-2}; Q(1, x) = e^{-x}
        assert!((regularized_gamma_q(2.0, 2.0) - 0.406_005_849_709_838_1).abs() < 1e-15);
        assert!((regularized_gamma_q(1.0, 7.5) - (-7.5f64).exp()).abs() < 1e-17);
        assert_eq!(regularized_gamma_q(3.0, 0.0), 1.0);
    }

    #[test]
    fn policy_clamps_only_rounding_excursions() {
        let policy = ConditioningPolicy::default();
        let ok = policy
            .check_probability(
                Evaluated {
                    value: 1.0 + 1e-15,
                    condition: 10.0,
                },
                "t",
            )
            .unwrap();
        assert_eq!(ok.value, 1.0);
        let bad = policy.check_probability(
            Evaluated {
                value: 1.01,
                condition: 10.0,
            },
            "t",
        );
        assert!(matches!(bad, Err(ConditioningError::OutOfRange { .. })));
        let ill = policy.check(
            Evaluated {
                value: 0.5,
                condition: 1e13,
            },
            "t",
        );
        assert!(matches!(ill, Err(ConditioningError::IllConditioned { .. })));
    }
}
