//! Ground-truth reference measure: fuzzy Tanimoto overlap.
//!
//! Single structures are compared with the Jaccard/Tanimoto ratio
//! `sum(min) / sum(max)` over voxels, which handles the fuzzy memberships
//! that arise once binary labels are warped and resampled. Multiple labels
//! across a whole set are aggregated into one figure of merit:
//!
//! ```text
//! value = sum_{pairs k<l} sum_labels alpha_label sum_vox min(v_k, v_l)
//!         ---------------------------------------------------------
//!         sum_{pairs k<l} sum_labels alpha_label sum_vox max(v_k, v_l)
//! ```
//!
//! over all unordered image pairs with equal pair weights. The per-label
//! weights `alpha` are pluggable: implicit volume weighting (all 1), inverse
//! volume (each label carries equal total weight regardless of its size), a
//! boundary complexity weight favoring labels with convoluted outlines, or
//! the product of the last two.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{LabelMap, RegisteredSet};
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::reduce::blocked_sum;

/// Label weighting rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Weight 1 per label: big structures dominate.
    VolumeImplicit,
    /// 1 / mean label volume: every label carries the same total weight.
    InverseVolume,
    /// Mean boundary-to-volume ratio: convoluted labels count for more.
    Complexity,
    /// Product of inverse-volume and complexity weights.
    InverseVolumeComplexity,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightKind::VolumeImplicit => "volume",
            WeightKind::InverseVolume => "inverse",
            WeightKind::Complexity => "complexity",
            WeightKind::InverseVolumeComplexity => "inverse-complexity",
        };
        write!(f, "{s}")
    }
}

impl FromStr for WeightKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "volume" => Ok(WeightKind::VolumeImplicit),
            "inverse" => Ok(WeightKind::InverseVolume),
            "complexity" => Ok(WeightKind::Complexity),
            "inverse-complexity" => Ok(WeightKind::InverseVolumeComplexity),
            other => Err(format!(
                "unknown weighting {other:?}, expected volume|inverse|complexity|inverse-complexity"
            )),
        }
    }
}

/// Per-label weights derived from a set under one of the [`WeightKind`]
/// rules. Only weight ratios matter: the generalized overlap is invariant
/// under a common rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub kind: WeightKind,
    pub weights: Vec<f64>,
}

/// Generalized overlap plus per-label detail.
#[derive(Debug, Clone)]
pub struct OverlapResult {
    /// Weighted overlap in [0, 1].
    pub value: f64,
    /// Unweighted per-label Tanimoto ratios aggregated over all pairs.
    pub per_label: Vec<f64>,
    pub scheme: WeightScheme,
    /// Labels that were empty in every image of every pair (their per-label
    /// overlap is reported as 1 by convention).
    pub empty_labels: Vec<String>,
}

/// Fuzzy Tanimoto overlap of two membership channels on the same grid.
///
/// Returns 1 when both channels are identically zero: two empty regions
/// agree perfectly.
pub fn tanimoto_pair(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    a.check_same_grid(b)?;
    let (num, den) = min_max_sums(a.flatten(), b.flatten());
    if den == 0.0 {
        Ok(1.0)
    } else {
        Ok(num / den)
    }
}

fn min_max_sums(a: &[f64], b: &[f64]) -> (f64, f64) {
    // Blocked like reduce::blocked_sum so results are order-pinned.
    const BLOCK: usize = 1024;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut i = 0;
    while i < a.len() {
        let end = (i + BLOCK).min(a.len());
        let mut pn = 0.0;
        let mut pd = 0.0;
        for k in i..end {
            pn += a[k].min(b[k]);
            pd += a[k].max(b[k]);
        }
        num += pn;
        den += pd;
        i = end;
    }
    (num, den)
}

/// Derives per-label weights from the set's label maps.
pub fn label_weights(set: &RegisteredSet, kind: WeightKind) -> Result<WeightScheme> {
    let maps = set.label_maps().ok_or(Error::MissingLabels)?;
    let labels = maps[0].labels();

    let weights = match kind {
        WeightKind::VolumeImplicit => vec![1.0; labels.len()],
        WeightKind::InverseVolume => inverse_volume_weights(maps, labels)?,
        WeightKind::Complexity => complexity_weights(maps, labels)?,
        WeightKind::InverseVolumeComplexity => {
            let inv = inverse_volume_weights(maps, labels)?;
            let cx = complexity_weights(maps, labels)?;
            inv.iter().zip(&cx).map(|(a, b)| a * b).collect()
        }
    };
    for (label, &w) in labels.iter().zip(&weights) {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::DegenerateWeight {
                label: label.clone(),
            });
        }
    }
    Ok(WeightScheme { kind, weights })
}

fn inverse_volume_weights(maps: &[LabelMap], labels: &[String]) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(labels.len());
    for (l, label) in labels.iter().enumerate() {
        let mean_volume = maps
            .iter()
            .map(|m| blocked_sum(m.channel(l).flatten()))
            .sum::<f64>()
            / maps.len() as f64;
        if mean_volume <= 0.0 {
            return Err(Error::ZeroVolumeLabel {
                label: label.clone(),
            });
        }
        weights.push(1.0 / mean_volume);
    }
    Ok(weights)
}

fn complexity_weights(maps: &[LabelMap], labels: &[String]) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(labels.len());
    for (l, label) in labels.iter().enumerate() {
        let mut ratio_sum = 0.0;
        let mut with_volume = 0usize;
        for map in maps {
            let channel = map.channel(l);
            let volume = blocked_sum(channel.flatten());
            if volume <= 0.0 {
                continue;
            }
            ratio_sum += boundary_voxels(channel) as f64 / volume;
            with_volume += 1;
        }
        if with_volume == 0 {
            return Err(Error::ZeroVolumeLabel {
                label: label.clone(),
            });
        }
        weights.push(ratio_sum / with_volume as f64);
    }
    Ok(weights)
}

/// Counts the label's boundary voxels: voxels with membership above 0.5
/// having at least one face neighbor (4 in 2D, 6 in 3D) at or below 0.5.
/// Neighbors beyond the grid edge are ignored.
pub fn boundary_voxels(channel: &RasterImage) -> usize {
    let dims = channel.dims();
    let (w, h, d) = (dims.width(), dims.height(), dims.depth());
    let mut count = 0usize;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if channel.get(x, y, z) <= 0.5 {
                    continue;
                }
                let mut boundary = false;
                if x > 0 && channel.get(x - 1, y, z) <= 0.5 {
                    boundary = true;
                }
                if !boundary && x + 1 < w && channel.get(x + 1, y, z) <= 0.5 {
                    boundary = true;
                }
                if !boundary && y > 0 && channel.get(x, y - 1, z) <= 0.5 {
                    boundary = true;
                }
                if !boundary && y + 1 < h && channel.get(x, y + 1, z) <= 0.5 {
                    boundary = true;
                }
                if dims.rank() == 3 {
                    if !boundary && z > 0 && channel.get(x, y, z - 1) <= 0.5 {
                        boundary = true;
                    }
                    if !boundary && z + 1 < d && channel.get(x, y, z + 1) <= 0.5 {
                        boundary = true;
                    }
                }
                if boundary {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Generalized overlap of N label maps under the given weighting.
///
/// All unordered image pairs contribute with equal pair weights. Pairs are
/// evaluated in parallel; per-pair sums are folded in pair order, so the
/// result does not depend on thread count.
pub fn generalized_overlap(maps: &[LabelMap], scheme: &WeightScheme) -> Result<OverlapResult> {
    if maps.len() < 2 {
        return Err(Error::TooFewMaps { got: maps.len() });
    }
    let labels = maps[0].labels();
    for map in &maps[1..] {
        maps[0].channel(0).check_same_grid(map.channel(0))?;
        if map.labels() != labels {
            return Err(Error::LabelLayout(format!(
                "label lists differ: {:?} vs {:?}",
                labels,
                map.labels()
            )));
        }
    }
    if scheme.weights.len() != labels.len() {
        return Err(Error::LabelLayout(format!(
            "{} weights for {} labels",
            scheme.weights.len(),
            labels.len()
        )));
    }

    let pairs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|k| ((k + 1)..maps.len()).map(move |l| (k, l)))
        .collect();

    // Per pair: (sum-min, sum-max) for each label.
    let per_pair: Vec<Vec<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(k, l)| {
            (0..labels.len())
                .map(|lab| {
                    min_max_sums(
                        maps[k].channel(lab).flatten(),
                        maps[l].channel(lab).flatten(),
                    )
                })
                .collect()
        })
        .collect();

    let mut label_num = vec![0.0; labels.len()];
    let mut label_den = vec![0.0; labels.len()];
    for pair_sums in &per_pair {
        for (lab, &(num, den)) in pair_sums.iter().enumerate() {
            label_num[lab] += num;
            label_den[lab] += den;
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for lab in 0..labels.len() {
        num += scheme.weights[lab] * label_num[lab];
        den += scheme.weights[lab] * label_den[lab];
    }
    if den == 0.0 {
        return Err(Error::AllLabelsEmpty);
    }

    let mut empty_labels = Vec::new();
    let per_label: Vec<f64> = (0..labels.len())
        .map(|lab| {
            if label_den[lab] == 0.0 {
                empty_labels.push(labels[lab].clone());
                1.0
            } else {
                label_num[lab] / label_den[lab]
            }
        })
        .collect();

    Ok(OverlapResult {
        value: num / den,
        per_label,
        scheme: scheme.clone(),
        empty_labels,
    })
}
