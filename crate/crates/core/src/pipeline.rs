//! Batch experiment orchestration: perturbation sweeps, set evaluation and
//! relative ranking.
//!
//! A validation sweep takes a labeled 2D set and, for each requested mean
//! displacement `d` and repeat index, warps every image (and its labels)
//! with an independent random clamped-plate-spline warp of that magnitude,
//! rebuilds the texture model from the warped set, and records the model
//! specificity next to the ground-truth generalized overlap. Plotted against
//! each other, the two measures should track: overlap degrades and
//! specificity grows as `d` increases.
//!
//! Seeds for every warp and every Monte-Carlo sample cloud are derived from
//! the master seed with the documented mixers below, so a sweep is
//! reproducible end to end and independent of thread count.

use std::time::Instant;

use rayon::prelude::*;

use crate::cps_warp::{apply_warp, apply_warp_labels, make_random_warp};
use crate::dataset::RegisteredSet;
use crate::error::{Error, Result};
use crate::overlap::{generalized_overlap, label_weights, OverlapResult, WeightKind};
use crate::rng::mix_seed;
use crate::specificity::{
    generalization, specificity, voronoi_histogram, Metric, SpecificityResult, VoronoiHistogram,
};
use crate::texture_model::{build_model, project_set, sample_model, ModePolicy};

/// Seed for the warp applied to one image in one sweep cell.
pub fn cell_warp_seed(master: u64, d_index: usize, repeat: usize, image: usize) -> u64 {
    mix_seed(&[master, 1, d_index as u64, repeat as u64, image as u64])
}

/// Seed for the Monte-Carlo sample cloud of one sweep cell.
pub fn cell_sample_seed(master: u64, d_index: usize, repeat: usize) -> u64 {
    mix_seed(&[master, 2, d_index as u64, repeat as u64])
}

/// Seed for the sample cloud of set number `set_index` in a ranking run.
pub fn set_sample_seed(master: u64, set_index: usize) -> u64 {
    mix_seed(&[master, 3, set_index as u64])
}

/// Seed for the warp applied to one image by a standalone perturbation run.
pub fn perturb_warp_seed(master: u64, image: usize) -> u64 {
    mix_seed(&[master, 4, image as u64])
}

/// Configuration of a validation sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Target mean displacements in pixels, strictly increasing.
    pub d_values: Vec<f64>,
    /// Warp instantiations per displacement.
    pub repeats: usize,
    /// Monte-Carlo sample count M.
    pub samples: usize,
    pub lambda: f64,
    pub metric: Metric,
    pub seed: u64,
    pub weight_kind: WeightKind,
    /// Nominal knot count for the random warps.
    pub n_knots: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d_values: vec![0.5, 1.0, 1.5, 2.0, 3.0],
            repeats: 3,
            samples: 50_000,
            lambda: 1.0,
            metric: Metric::L2,
            seed: 0,
            weight_kind: WeightKind::Complexity,
            n_knots: 25,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() {
            return Err(Error::InvalidConfig("empty d list".into()));
        }
        for (i, &d) in self.d_values.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidConfig(format!("d value {d} is invalid")));
            }
            if i > 0 && d <= self.d_values[i - 1] {
                return Err(Error::InvalidConfig(
                    "d values must be strictly increasing".into(),
                ));
            }
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if self.n_knots == 0 {
            return Err(Error::InvalidConfig("n_knots must be at least 1".into()));
        }
        Ok(())
    }
}

/// One completed sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub d: f64,
    pub repeat: usize,
    pub specificity: f64,
    pub std_error: f64,
    pub overlap: f64,
    /// Wall time of the cell. Reported for logging only; it is never
    /// serialized, so emitted CSV stays byte-identical across runs.
    pub wall_secs: f64,
}

/// Runs the full sweep, failing on the first broken cell.
pub fn run_validation_sweep(set: &RegisteredSet, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let (rows, err) = run_validation_sweep_partial(set, cfg);
    match err {
        None => Ok(rows),
        Some(e) => Err(e),
    }
}

/// Runs the sweep and, on failure, also returns the rows completed before
/// the first failing cell (in cell order) so callers can flush them.
pub fn run_validation_sweep_partial(
    set: &RegisteredSet,
    cfg: &SweepConfig,
) -> (Vec<SweepRow>, Option<Error>) {
    if let Err(e) = cfg.validate() {
        return (Vec::new(), Some(e));
    }
    if !set.dims().is_2d() {
        return (Vec::new(), Some(Error::NotTwoDimensional));
    }
    if set.label_maps().is_none() {
        return (Vec::new(), Some(Error::MissingLabels));
    }

    let cells: Vec<(usize, usize)> = (0..cfg.d_values.len())
        .flat_map(|di| (0..cfg.repeats).map(move |rep| (di, rep)))
        .collect();
    let results: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|&(di, rep)| run_cell(set, cfg, di, rep))
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

fn run_cell(
    set: &RegisteredSet,
    cfg: &SweepConfig,
    d_index: usize,
    repeat: usize,
) -> Result<SweepRow> {
    let start = Instant::now();
    let d = cfg.d_values[d_index];
    let maps = set.label_maps().expect("checked by caller");

    let mut warped_images = Vec::with_capacity(set.len());
    let mut warped_maps = Vec::with_capacity(set.len());
    for (i, (image, map)) in set.images().iter().zip(maps).enumerate() {
        let warp = make_random_warp(
            set.dims(),
            d,
            cfg.n_knots,
            cell_warp_seed(cfg.seed, d_index, repeat, i),
        )?;
        warped_images.push(apply_warp(image, &warp)?);
        warped_maps.push(apply_warp_labels(map, &warp)?);
    }
    let warped = set.with_data(warped_images, Some(warped_maps))?;

    let model = build_model(&warped, ModePolicy::All);
    let training = project_set(&model, &warped)?;
    let samples = sample_model(
        &model,
        cfg.samples,
        cell_sample_seed(cfg.seed, d_index, repeat),
    );
    let spec = specificity(&training, &samples, cfg.lambda, cfg.metric)?;

    let weights = label_weights(&warped, cfg.weight_kind)?;
    let overlap = generalized_overlap(
        warped.label_maps().expect("set was built with maps"),
        &weights,
    )?;

    Ok(SweepRow {
        d,
        repeat,
        specificity: spec.value,
        std_error: spec.std_error,
        overlap: overlap.value,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Configuration of a single-set evaluation.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub samples: usize,
    pub lambda: f64,
    pub metric: Metric,
    pub seed: u64,
    /// Weightings to evaluate the generalized overlap under, when the set
    /// has labels.
    pub weight_kinds: Vec<WeightKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 50_000,
            lambda: 1.0,
            metric: Metric::L1,
            seed: 0,
            weight_kinds: vec![WeightKind::InverseVolume],
        }
    }
}

/// Everything measured about one registered set.
#[derive(Debug, Clone)]
pub struct SetEvaluation {
    pub name: String,
    pub training_count: usize,
    pub mode_count: usize,
    pub specificity: SpecificityResult,
    pub generalization: SpecificityResult,
    pub voronoi: VoronoiHistogram,
    /// One entry per requested weighting; empty when the set has no labels.
    pub overlaps: Vec<OverlapResult>,
}

/// Builds the texture model of a set and measures it.
pub fn evaluate_set(set: &RegisteredSet, name: &str, cfg: &EvalConfig) -> Result<SetEvaluation> {
    if cfg.samples == 0 {
        return Err(Error::InvalidConfig("samples must be at least 1".into()));
    }
    let model = build_model(set, ModePolicy::All);
    let training = project_set(&model, set)?;
    let samples = sample_model(&model, cfg.samples, cfg.seed);
    let spec = specificity(&training, &samples, cfg.lambda, cfg.metric)?;
    let gen = generalization(&training, &samples, cfg.lambda, cfg.metric)?;
    let voronoi = voronoi_histogram(&training, &samples, cfg.metric)?;

    let overlaps = match set.label_maps() {
        Some(maps) => cfg
            .weight_kinds
            .iter()
            .map(|&kind| {
                let scheme = label_weights(set, kind)?;
                generalized_overlap(maps, &scheme)
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    Ok(SetEvaluation {
        name: name.to_string(),
        training_count: set.len(),
        mode_count: model.mode_count(),
        specificity: spec,
        generalization: gen,
        voronoi,
        overlaps,
    })
}

/// A set's position in a multi-set comparison.
#[derive(Debug, Clone)]
pub struct RankEntry {
    pub name: String,
    pub specificity: f64,
    /// Competition rank, 1 = best (lowest specificity).
    pub specificity_rank: usize,
    /// 100 for the best set, 0 for the worst, linear in between.
    pub specificity_relrank: f64,
    pub overlap: Option<f64>,
    /// 1 = best (highest overlap).
    pub overlap_rank: Option<usize>,
    pub overlap_relrank: Option<f64>,
}

/// Ranks evaluated sets by specificity (lower is better) and, when every
/// set carries an overlap figure, by overlap (higher is better).
///
/// Relative rank follows the linear 100%/0% scale: the best score maps to
/// 100, the worst to 0. If all scores coincide every set gets 100.
pub fn rank_sets(evals: &[SetEvaluation]) -> Result<Vec<RankEntry>> {
    if evals.len() < 2 {
        return Err(Error::TooFewSets { got: evals.len() });
    }
    let spec_scores: Vec<f64> = evals.iter().map(|e| e.specificity.value).collect();
    let with_overlap = evals.iter().all(|e| !e.overlaps.is_empty());
    let overlap_scores: Option<Vec<f64>> =
        with_overlap.then(|| evals.iter().map(|e| e.overlaps[0].value).collect());

    let entries = evals
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let spec = spec_scores[i];
            let specificity_rank = 1 + spec_scores.iter().filter(|&&s| s < spec).count();
            let specificity_relrank = relative_rank(spec, &spec_scores, true);
            let (overlap, overlap_rank, overlap_relrank) = match &overlap_scores {
                Some(scores) => {
                    let o = scores[i];
                    (
                        Some(o),
                        Some(1 + scores.iter().filter(|&&s| s > o).count()),
                        Some(relative_rank(o, scores, false)),
                    )
                }
                None => (None, None, None),
            };
            RankEntry {
                name: e.name.clone(),
                specificity: spec,
                specificity_rank,
                specificity_relrank,
                overlap,
                overlap_rank,
                overlap_relrank,
            }
        })
        .collect();
    Ok(entries)
}

fn relative_rank(score: f64, scores: &[f64], lower_is_better: bool) -> f64 {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return 100.0;
    }
    if lower_is_better {
        100.0 * ((max - score) / (max - min))
    } else {
        100.0 * ((score - min) / (max - min))
    }
}

/// Ordinary least-squares line y = intercept + slope * x with the Pearson
/// correlation of the points.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
    pub points: usize,
}

/// Fits a line to ≥ 3 points. Errors if the x values are degenerate; a
/// y-constant input yields correlation 0 by convention.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "{} x values for {} y values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooFewPoints { got: x.len() });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = sxy / sxx;
    let correlation = if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    };
    Ok(LineFit {
        slope,
        intercept: mean_y - slope * mean_x,
        correlation,
        points: x.len(),
    })
}

/// Fits specificity against overlap over the sweep rows with `d >= d_floor`.
pub fn fit_sweep(rows: &[SweepRow], d_floor: f64) -> Result<LineFit> {
    let x: Vec<f64> = rows
        .iter()
        .filter(|r| r.d >= d_floor)
        .map(|r| r.overlap)
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .filter(|r| r.d >= d_floor)
        .map(|r| r.specificity)
        .collect();
    fit_line(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridDims;
    use crate::rng::RandomStream;
    use crate::synth::synthetic_set;

    #[test]
    fn fit_collinear_points_exactly() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.correlation.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_noisy_slope() {
        let mut stream = RandomStream::new(4, 0);
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 2.0 - v + 0.01 * stream.standard_normal())
            .collect();
        let fit = fit_line(&x, &y).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.05, "slope {}", fit.slope);
        assert!(fit.correlation < -0.99);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_line(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::TooFewPoints { got: 2 })
        ));
        assert!(matches!(
            fit_line(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateFit)
        ));
    }

    #[test]
    fn sweep_at_zero_displacement_matches_baseline() {
        let set = synthetic_set(4, GridDims::d2(41, 41), 3, 12);
        let cfg = SweepConfig {
            d_values: vec![0.0],
            repeats: 1,
            samples: 500,
            metric: Metric::L2,
            seed: 31,
            ..SweepConfig::default()
        };
        let rows = run_validation_sweep(&set, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].overlap, 1.0);

        // Identity perturbation: the row reproduces a direct measurement on
        // the unperturbed set with the same sampling seed.
        let model = build_model(&set, ModePolicy::All);
        let x = project_set(&model, &set).unwrap();
        let y = sample_model(&model, cfg.samples, cell_sample_seed(cfg.seed, 0, 0));
        let direct = specificity(&x, &y, cfg.lambda, cfg.metric).unwrap();
        assert_eq!(rows[0].specificity, direct.value);
        assert_eq!(rows[0].std_error, direct.std_error);
    }

    #[test]
    fn sweep_is_deterministic() {
        let set = synthetic_set(3, GridDims::d2(41, 41), 2, 5);
        let cfg = SweepConfig {
            d_values: vec![0.5, 1.0],
            repeats: 2,
            samples: 300,
            seed: 77,
            ..SweepConfig::default()
        };
        let a = run_validation_sweep(&set, &cfg).unwrap();
        let b = run_validation_sweep(&set, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.specificity.to_bits(), rb.specificity.to_bits());
            assert_eq!(ra.std_error.to_bits(), rb.std_error.to_bits());
            assert_eq!(ra.overlap.to_bits(), rb.overlap.to_bits());
        }
    }

    #[test]
    fn sweep_validates_config() {
        let set = synthetic_set(3, GridDims::d2(41, 41), 2, 5);
        let bad = SweepConfig {
            d_values: vec![1.0, 0.5],
            ..SweepConfig::default()
        };
        assert!(run_validation_sweep(&set, &bad).is_err());
        let unlabeled = set.with_data(set.images().to_vec(), None).unwrap();
        assert!(matches!(
            run_validation_sweep(&unlabeled, &SweepConfig::default()),
            Err(Error::MissingLabels)
        ));
    }

    #[test]
    fn overlap_degrades_monotonically_with_d() {
        // Small-scale version of the validation property: per-d mean
        // overlap decreases as the perturbation grows, for most seeds.
        let set = synthetic_set(4, GridDims::d2(61, 61), 3, 2);
        let d_values = [0.5, 1.5, 3.0];
        let mut good_seeds = 0;
        for seed in 0..5u64 {
            let cfg = SweepConfig {
                d_values: d_values.to_vec(),
                repeats: 2,
                samples: 200,
                seed,
                ..SweepConfig::default()
            };
            let rows = run_validation_sweep(&set, &cfg).unwrap();
            let mean_overlap: Vec<f64> = d_values
                .iter()
                .map(|&d| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.d == d)
                        .map(|r| r.overlap)
                        .collect();
                    vals.iter().sum::<f64>() / vals.len() as f64
                })
                .collect();
            if mean_overlap.windows(2).all(|w| w[1] < w[0]) {
                good_seeds += 1;
            }
        }
        assert!(good_seeds >= 4, "monotone overlap in {good_seeds}/5 seeds");
    }

    #[test]
    fn ranking_orders_nested_perturbations() {
        let set = synthetic_set(4, GridDims::d2(61, 61), 3, 8);
        let cfg = EvalConfig {
            samples: 2000,
            ..EvalConfig::default()
        };

        // Same warps scaled by increasing factors: 0 (identity), 1, 2.
        let mut evals = Vec::new();
        for (idx, factor) in [0.0, 1.0, 2.0].iter().enumerate() {
            let mut images = Vec::new();
            let mut maps = Vec::new();
            for (i, (img, map)) in set
                .images()
                .iter()
                .zip(set.label_maps().unwrap())
                .enumerate()
            {
                let base =
                    make_random_warp(set.dims(), 1.0, 25, mix_seed(&[50, i as u64])).unwrap();
                let warp = base.with_scale_factor(base.scale_factor() * factor);
                images.push(apply_warp(img, &warp).unwrap());
                maps.push(apply_warp_labels(map, &warp).unwrap());
            }
            let perturbed = set.with_data(images, Some(maps)).unwrap();
            let eval_cfg = EvalConfig {
                seed: set_sample_seed(cfg.seed, idx),
                ..cfg.clone()
            };
            evals.push(evaluate_set(&perturbed, &format!("scale_{factor}"), &eval_cfg).unwrap());
        }

        let ranking = rank_sets(&evals).unwrap();
        // Identity is best on both measures; ranks agree exactly.
        assert_eq!(ranking[0].specificity_rank, 1);
        assert_eq!(ranking[1].specificity_rank, 2);
        assert_eq!(ranking[2].specificity_rank, 3);
        assert_eq!(ranking[0].overlap_rank, Some(1));
        assert_eq!(ranking[1].overlap_rank, Some(2));
        assert_eq!(ranking[2].overlap_rank, Some(3));
        assert_eq!(ranking[0].specificity_relrank, 100.0);
        assert_eq!(ranking[2].specificity_relrank, 0.0);
        let mid = ranking[1].specificity_relrank;
        assert!(mid > 0.0 && mid < 100.0);
        // The middle percentage is the linear interpolation of its score.
        let expect = 100.0 * (ranking[2].specificity - ranking[1].specificity)
            / (ranking[2].specificity - ranking[0].specificity);
        assert!((mid - expect).abs() < 1e-12);
    }

    #[test]
    fn evaluate_without_labels_skips_overlap() {
        let set = synthetic_set(3, GridDims::d2(41, 41), 2, 6);
        let unlabeled = set.with_data(set.images().to_vec(), None).unwrap();
        let eval = evaluate_set(
            &unlabeled,
            "plain",
            &EvalConfig {
                samples: 200,
                ..EvalConfig::default()
            },
        )
        .unwrap();
        assert!(eval.overlaps.is_empty());
        assert_eq!(eval.voronoi.total(), 200);
        assert_eq!(eval.training_count, 3);
    }

    #[test]
    fn rank_requires_two_sets() {
        let set = synthetic_set(3, GridDims::d2(41, 41), 2, 6);
        let eval = evaluate_set(
            &set,
            "only",
            &EvalConfig {
                samples: 100,
                ..EvalConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(
            rank_sets(&[eval]),
            Err(Error::TooFewSets { got: 1 })
        ));
    }
}
