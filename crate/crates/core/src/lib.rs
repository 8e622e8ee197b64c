//! Weighted Fisher's method: combine independent p-values `pᵢ` carrying
//! confidence weights `wᵢ > 0` into one p-value.
//!
//! The statistic `V = -Σ wᵢ ln pᵢ` is, under the shared null hypothesis, a
//! weighted sum of independent standard exponentials. Its right tail at the
//! observed value is the combined p-value. Three evaluation paths exist:
//!
//! * all weights equal: the Erlang tail ([`closed_form::tail_identical`]),
//! * all weights distinct: the hypoexponential tail ([`closed_form::tail_distinct`]),
//! * anything else: partial fractions of the Laplace transform ([`pfd`]).
//!
//! [`combine()`] picks the path, and [`oracle`] provides simulation and
//! numerical-convolution cross-checks.
//!
//! ```
//! use wfisher::{combine, CombineOptions, WeightedEvidence};
//!
//! let evidence = WeightedEvidence::new([(0.1, 1.0), (0.1, 1.0)]).unwrap();
//! let result = combine(&evidence, &CombineOptions::default()).unwrap();
//! assert!((result.p_combined - 0.0560517).abs() < 1e-6);
//! ```

pub mod cli;
pub mod closed_form;
pub mod combine;
pub mod error;
pub mod evidence;
pub mod numeric;
pub mod oracle;
pub mod pfd;

pub use combine::{combine, CombineOptions, CombinedResult, McFallback, Method, MethodChoice};
pub use error::{CombineError, ConditioningError, EvidenceError, OracleError, WeightsError};
pub use evidence::{compute_statistic, Statistic, WeightedEvidence};
pub use numeric::{ConditioningPolicy, Evaluated};
