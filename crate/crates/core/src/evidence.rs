//! Validated input and the weighted Fisher statistic.

use crate::error::EvidenceError;
use crate::numeric::CompensatedSum;

/// One independent test result: its p-value and confidence weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub p: f64,
    pub weight: f64,
}

/// Non-empty list of `(p, w)` pairs with `0 < p ≤ 1` and finite `w > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEvidence {
    entries: Vec<Entry>,
}

impl WeightedEvidence {
    pub fn new<I>(pairs: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(index, (p, weight))| validate_entry(index, p, weight))
            .collect::<Result<Vec<_>, _>>()?;
        if entries.is_empty() {
            return Err(EvidenceError::Empty);
        }
        Ok(Self { entries })
    }

    /// All entries at unit weight (the classic, unweighted method).
    pub fn unweighted<I: IntoIterator<Item = f64>>(p_values: I) -> Result<Self, EvidenceError> {
        Self::new(p_values.into_iter().map(|p| (p, 1.0)))
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    /// Same p-values with every weight multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self, EvidenceError> {
        Self::new(self.entries.iter().map(|e| (e.p, e.weight * factor)))
    }
}

pub(crate) fn validate_entry(index: usize, p: f64, weight: f64) -> Result<Entry, EvidenceError> {
    if p == 0.0 {
        return Err(EvidenceError::ZeroPValue { index });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(EvidenceError::PValueOutOfRange { index, value: p });
    }
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(EvidenceError::InvalidWeight {
            index,
            value: weight,
        });
    }
    Ok(Entry { p, weight })
}

/// The weighted statistic `V = -Σ wᵢ ln pᵢ` (in nats) over `k` entries.
///
/// Under the null hypothesis each `-ln pᵢ` is a standard exponential
/// variable, so `V` is a weighted sum of independent exponentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistic {
    pub value: f64,
    pub k: usize,
}

pub fn compute_statistic(evidence: &WeightedEvidence) -> Statistic {
    let sum: CompensatedSum = evidence
        .entries()
        .iter()
        .map(|e| -e.weight * e.p.ln())
        .collect();
    Statistic {
        // every term is ≥ 0, so only a -0.0 can sneak in
        value: sum.value().max(0.0),
        k: evidence.len(),
    }
}
