use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ExpError;

/// Mean across seeds with a two-sided 95% Student-t half-width. The
/// half-width is `None` for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub ci95: Option<f64>,
}

impl Aggregate {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci95.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95.unwrap_or(0.0)
    }

    /// Whether both intervals exist and do not touch.
    pub fn disjoint_from(&self, other: &Aggregate) -> bool {
        self.ci95.is_some() && other.ci95.is_some() && (self.upper() < other.lower() || other.upper() < self.lower())
    }
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate, ExpError> {
    if values.is_empty() {
        return Err(ExpError::Run("cannot aggregate zero values".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Ok(Aggregate { n, mean, ci95: None });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.975);
    Ok(Aggregate { n, mean, ci95: Some(t * var.sqrt() / (n as f64).sqrt()) })
}

/// Share of the standard algorithm's ID-to-OOD drop that the causal one
/// avoids, in percent, on absolute gaps.
pub fn gap_reduction(id_causal: f64, ood_causal: f64, id_standard: f64, ood_standard: f64) -> Result<f64, ExpError> {
    let standard_gap = (id_standard - ood_standard).abs();
    if standard_gap == 0.0 {
        return Err(ExpError::Undefined("standard ID-OOD gap is zero".into()));
    }
    Ok(100.0 * (1.0 - (id_causal - ood_causal).abs() / standard_gap))
}

/// Fraction of the standard-to-oracle gap recovered by CAE, in percent.
pub fn gap_closed(standard: f64, oracle: f64, cae: f64) -> Result<f64, ExpError> {
    if oracle == standard {
        return Err(ExpError::Undefined("oracle equals standard".into()));
    }
    Ok(100.0 * (cae - standard) / (oracle - standard))
}
