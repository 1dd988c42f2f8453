//! Measured specificity, generalization and Voronoi-cell diagnostics.
//!
//! Given a training cloud X = {x_i} and a sample cloud Y = {y_mu} drawn from
//! the model, the measured specificity is
//!
//! ```text
//! S_lambda = (1/M) * sum_mu min_i |x_i - y_mu|^lambda
//! ```
//!
//! with standard error `STD_mu{min_i |x_i - y_mu|^lambda} / sqrt(M - 1)`
//! (standard deviation with divisor M - 1). Small values mean the model only
//! generates examples close to the training set. Generalization is the same
//! quantity with the roles of X and Y swapped. The nearest-neighbor search is
//! an exhaustive scan: training sets are small, and exactness keeps the
//! estimator an oracle-checkable quantity rather than an approximation.
//!
//! Every per-sample result is computed independently (safe to parallelize),
//! and all reductions use fixed-block index-ordered sums, so a result never
//! depends on the number of threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reduce::blocked_sum;
use crate::texture_model::ParameterCloud;

/// Keep the per-sample nearest-neighbor distances unless the sample set is
/// enormous.
const RETAIN_MIN_LIMIT: usize = 1_000_000;

/// Distance used in parameter space.
///
/// `L1` is the sum of absolute coordinate differences; it is basis-dependent
/// and intended for the PCA axes, which follow the spread of the data. `L2`
/// is the Euclidean distance and matches image-space distances exactly when
/// all non-zero modes are retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L1,
    L2,
}

impl Metric {
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L1 => {
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    acc += (x - y).abs();
                }
                acc
            }
            Metric::L2 => {
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = x - y;
                    acc += d * d;
                }
                acc.sqrt()
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::L1 => write!(f, "l1"),
            Metric::L2 => write!(f, "l2"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            other => Err(format!("unknown metric {other:?}, expected l1 or l2")),
        }
    }
}

/// Result of a specificity or generalization measurement.
#[derive(Debug, Clone)]
pub struct SpecificityResult {
    /// The measured value, in distance^lambda units.
    pub value: f64,
    /// Standard error of the value.
    pub std_error: f64,
    pub lambda: f64,
    pub metric: Metric,
    /// Number of points averaged over (M for specificity, N for
    /// generalization).
    pub sample_count: usize,
    /// Set when `sample_count == 1`, where the standard error is undefined
    /// and reported as 0.
    pub std_error_degenerate: bool,
    /// Nearest-neighbor distance for each averaged point, kept for
    /// diagnostics when the sample set is not too large.
    pub per_sample_min: Option<Vec<f64>>,
}

/// Per-training-example counts of samples whose nearest neighbor is that
/// example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoronoiHistogram {
    counts: Vec<usize>,
}

impl VoronoiHistogram {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Nearest training point to `point` under `metric`; ties resolve to the
/// lowest index.
pub fn nn_distance(
    point: &[f64],
    training: &ParameterCloud,
    metric: Metric,
) -> Result<(f64, usize)> {
    if training.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if point.len() != training.dim() {
        return Err(Error::PointDim {
            expected: training.dim(),
            got: point.len(),
        });
    }
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (i, x) in training.iter_points().enumerate() {
        let d = metric.distance(point, x);
        if d < best {
            best = d;
            best_idx = i;
        }
    }
    Ok((best, best_idx))
}

fn validate_clouds(training: &ParameterCloud, samples: &ParameterCloud) -> Result<()> {
    if training.is_empty() || samples.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if training.dim() != samples.dim() {
        return Err(Error::PointDim {
            expected: training.dim(),
            got: samples.dim(),
        });
    }
    Ok(())
}

/// Nearest-neighbor distance and index for every sample point.
fn nn_scan(
    training: &ParameterCloud,
    samples: &ParameterCloud,
    metric: Metric,
) -> Vec<(f64, usize)> {
    (0..samples.count())
        .into_par_iter()
        .map(|mu| {
            nn_distance(samples.point(mu), training, metric).expect("clouds validated before scan")
        })
        .collect()
}

/// Measured specificity of the model samples against the training cloud.
pub fn specificity(
    training: &ParameterCloud,
    samples: &ParameterCloud,
    lambda: f64,
    metric: Metric,
) -> Result<SpecificityResult> {
    validate_clouds(training, samples)?;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidLambda(lambda));
    }

    let scan = nn_scan(training, samples, metric);
    let mins: Vec<f64> = scan.iter().map(|&(d, _)| d).collect();
    let terms: Vec<f64> = mins.iter().map(|&d| d.powf(lambda)).collect();

    let m = terms.len();
    let value = blocked_sum(&terms) / m as f64;
    let (std_error, degenerate) = if m == 1 {
        (0.0, true)
    } else {
        let deviations: Vec<f64> = terms.iter().map(|&t| (t - value) * (t - value)).collect();
        let variance = blocked_sum(&deviations) / (m - 1) as f64;
        (variance.sqrt() / ((m - 1) as f64).sqrt(), false)
    };

    Ok(SpecificityResult {
        value,
        std_error,
        lambda,
        metric,
        sample_count: m,
        std_error_degenerate: degenerate,
        per_sample_min: (m <= RETAIN_MIN_LIMIT).then_some(mins),
    })
}

/// Generalization: the role-swapped measure, averaging over training points
/// their distance to the nearest model sample.
pub fn generalization(
    training: &ParameterCloud,
    samples: &ParameterCloud,
    lambda: f64,
    metric: Metric,
) -> Result<SpecificityResult> {
    specificity(samples, training, lambda, metric)
}

/// Populations of the training points' Voronoi cells under the sample cloud.
pub fn voronoi_histogram(
    training: &ParameterCloud,
    samples: &ParameterCloud,
    metric: Metric,
) -> Result<VoronoiHistogram> {
    validate_clouds(training, samples)?;
    let scan = nn_scan(training, samples, metric);
    let mut counts = vec![0usize; training.count()];
    for &(_, idx) in &scan {
        counts[idx] += 1;
    }
    Ok(VoronoiHistogram { counts })
}
