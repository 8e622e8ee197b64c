//! Dispatch from validated evidence to the combined p-value.

use std::fmt;

use crate::closed_form::{tail_distinct_with, tail_identical, DistinctWeights, DEFAULT_REL_TOL};
use crate::error::{CombineError, ConditioningError};
use crate::evidence::{compute_statistic, Statistic, WeightedEvidence};
use crate::numeric::{ConditioningPolicy, Evaluated};
use crate::oracle::mc_tail;
use crate::pfd::{group_weights, pfd_coefficients, right_tail_with, WeightGroups};

/// Evaluation path that produced a combined p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Identical,
    Distinct,
    General,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Identical => "identical",
            Method::Distinct => "distinct",
            Method::General => "general",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which path to run: pick automatically, or force one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    #[default]
    Auto,
    Force(Method),
}

/// Monte Carlo settings used when the analytic sum is too ill-conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McFallback {
    pub samples: u64,
    pub seed: u64,
}

impl Default for McFallback {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineOptions {
    /// Relative tolerance under which two weights are merged.
    pub rel_tol: f64,
    pub policy: ConditioningPolicy,
    pub method: MethodChoice,
    /// `None` turns conditioning failures into errors.
    pub fallback: Option<McFallback>,
}

impl Default for CombineOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            policy: ConditioningPolicy::default(),
            method: MethodChoice::Auto,
            fallback: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedResult {
    pub p_combined: f64,
    pub statistic: Statistic,
    pub method: Method,
    /// `Σ|term| / |result|` of the signed sum that produced `p_combined`.
    pub condition: f64,
    pub warning: Option<String>,
}

/// Combined right-tail p-value `Pr[Σ wᵢ vᵢ ≥ V]` of the weighted statistic.
pub fn combine(
    evidence: &WeightedEvidence,
    options: &CombineOptions,
) -> Result<CombinedResult, CombineError> {
    let statistic = compute_statistic(evidence);
    let groups = group_weights(&evidence.weights(), options.rel_tol)?;
    let method = select_method(&groups, options.method)?;

    match evaluate(method, statistic.value, &groups, options) {
        Ok(evaluated) => {
            let warning = options.policy.should_warn(evaluated.condition).then(|| {
                format!(
                    "{method} path: cancellation condition {:.3e} exceeds {:.0e}; result may have lost up to {:.0} significant digits",
                    evaluated.condition,
                    options.policy.warn_above,
                    evaluated.condition.log10().floor(),
                )
            });
            Ok(CombinedResult {
                p_combined: evaluated.value,
                statistic,
                method,
                condition: evaluated.condition,
                warning,
            })
        }
        Err(err) => {
            let Some(fallback) = options.fallback else {
                return Err(err.into());
            };
            let estimate = mc_tail(
                &evidence.weights(),
                statistic.value,
                fallback.samples,
                fallback.seed,
            )?;
            Ok(CombinedResult {
                p_combined: estimate.p_hat,
                statistic,
                method,
                condition: err.condition().unwrap_or(f64::INFINITY),
                warning: Some(format!(
                    "{err}; replaced by Monte Carlo estimate ({} samples, seed {}, std. error {:.3e})",
                    fallback.samples, fallback.seed, estimate.std_err
                )),
            })
        }
    }
}

fn select_method(groups: &WeightGroups, choice: MethodChoice) -> Result<Method, CombineError> {
    let natural = if groups.len() == 1 {
        Method::Identical
    } else if groups.all_singletons() {
        Method::Distinct
    } else {
        Method::General
    };
    match choice {
        MethodChoice::Auto => Ok(natural),
        MethodChoice::Force(Method::General) => Ok(Method::General),
        MethodChoice::Force(Method::Identical) if groups.len() == 1 => Ok(Method::Identical),
        MethodChoice::Force(Method::Identical) => Err(CombineError::MethodNotApplicable {
            method: "identical",
            reason: format!(
                "weights form {} distinct groups under the clustering tolerance",
                groups.len()
            ),
        }),
        MethodChoice::Force(Method::Distinct) if groups.all_singletons() => Ok(Method::Distinct),
        MethodChoice::Force(Method::Distinct) => {
            let repeated = groups
                .groups()
                .iter()
                .find(|g| g.multiplicity > 1)
                .expect("not all singletons");
            Err(CombineError::MethodNotApplicable {
                method: "distinct",
                reason: format!(
                    "weight {} occurs {} times",
                    repeated.weight, repeated.multiplicity
                ),
            })
        }
    }
}

fn evaluate(
    method: Method,
    v: f64,
    groups: &WeightGroups,
    options: &CombineOptions,
) -> Result<Evaluated, ConditioningError> {
    match method {
        Method::Identical => {
            let g = groups.groups()[0];
            Ok(tail_identical(v, g.weight, g.multiplicity))
        }
        Method::Distinct => {
            let weights = DistinctWeights::with_tolerance(groups.representatives(), options.rel_tol)
                .expect("grouped representatives are distinct");
            tail_distinct_with(v, &weights, &options.policy)
        }
        Method::General => {
            let coefficients = pfd_coefficients(groups)?;
            right_tail_with(v, &coefficients, &options.policy)
        }
    }
}
