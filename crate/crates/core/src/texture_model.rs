//! Shape-free texture model: PCA over a registered set.
//!
//! The model is the linear family `mean + modes * b` fitted to the flattened
//! training images. Because the number of examples N is far smaller than the
//! number of voxels n, the eigenproblem is solved on the N x N Gram matrix
//! of the centered training vectors rather than on the n x n covariance;
//! the retained modes span the same subspace and there are at most N - 1 of
//! them. With every non-zero mode retained, distances between training
//! images are preserved exactly when measured between their parameter
//! vectors, which is what makes the parameter space a faithful, cheap stand-in
//! for image space.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::RegisteredSet;
use crate::error::{Error, Result};
use crate::io;
use crate::raster::{GridDims, RasterImage};
use crate::rng::RandomStream;

/// Relative eigenvalue floor: Gram eigenvalues at or below
/// `EPS_RANK * max_eigenvalue` count as zero.
pub const EPS_RANK: f64 = 1e-12;

/// How many PCA modes to retain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModePolicy {
    /// Every mode with a non-zero eigenvalue (up to N - 1).
    All,
    /// The strongest `k` non-zero modes.
    TopK(usize),
    /// Modes whose variance is at least `fraction` of the total variance.
    VarianceFloor(f64),
}

/// Mean, orthonormal modes and per-mode variances of the texture PCA.
#[derive(Debug, Clone)]
pub struct TextureModel {
    dims: GridDims,
    spacing: Vec<f64>,
    mean: Vec<f64>,
    modes: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl TextureModel {
    /// Number of retained modes K.
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Voxel count n of the underlying grid.
    pub fn voxel_count(&self) -> usize {
        self.mean.len()
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    /// Per-mode variances (PCA eigenvalues), non-increasing.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// The mean as an image on the model grid.
    pub fn mean_image(&self) -> RasterImage {
        RasterImage::from_values(self.dims, Some(&self.spacing), self.mean.clone())
            .expect("model mean is a valid raster")
    }
}

/// A set of points in the model's parameter space R^K.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCloud {
    dim: usize,
    count: usize,
    coords: Vec<f64>,
}

impl ParameterCloud {
    pub fn new(dim: usize, count: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != dim * count {
            return Err(Error::ValueCount {
                expected: dim * count,
                got: coords.len(),
            });
        }
        if let Some(idx) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: idx });
        }
        Ok(ParameterCloud { dim, count, coords })
    }

    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::PointDim {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        ParameterCloud::new(dim, points.len(), coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.count).map(move |i| self.point(i))
    }

    /// Applies `f` to every coordinate, preserving shape.
    pub fn map_coords(&self, f: impl Fn(f64) -> f64) -> Result<ParameterCloud> {
        ParameterCloud::new(
            self.dim,
            self.count,
            self.coords.iter().map(|&x| f(x)).collect(),
        )
    }
}

/// Builds the texture model of a registered set.
///
/// The mean is the equal-weight average image; variances come from the
/// sample covariance with divisor N - 1. A set of identical images yields a
/// valid degenerate model with zero modes.
pub fn build_model(set: &RegisteredSet, policy: ModePolicy) -> TextureModel {
    let n_examples = set.len();
    let voxels = set.dims().voxel_count();

    let mut mean = vec![0.0; voxels];
    for image in set.images() {
        for (m, v) in mean.iter_mut().zip(image.flatten()) {
            *m += v;
        }
    }
    let inv_n = 1.0 / n_examples as f64;
    for m in mean.iter_mut() {
        *m *= inv_n;
    }

    // Gram matrix of the centered training vectors.
    let pairs: Vec<(usize, usize)> = (0..n_examples)
        .flat_map(|i| (i..n_examples).map(move |j| (i, j)))
        .collect();
    let dots: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let a = set.images()[i].flatten();
            let b = set.images()[j].flatten();
            let mut acc = 0.0;
            for k in 0..voxels {
                acc += (a[k] - mean[k]) * (b[k] - mean[k]);
            }
            acc
        })
        .collect();
    let mut gram = vec![vec![0.0; n_examples]; n_examples];
    for (&(i, j), &d) in pairs.iter().zip(&dots) {
        gram[i][j] = d;
        gram[j][i] = d;
    }

    let (eigenvalues, eigenvectors) = crate::linalg::symmetric_eigen(gram);
    let max_eig = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let divisor = (n_examples - 1) as f64;
    let total_variance: f64 = eigenvalues.iter().map(|&g| g.max(0.0) / divisor).sum();

    // Candidate modes: non-zero eigenvalues, capped at N - 1.
    let mut keep = Vec::new();
    for (k, &gamma) in eigenvalues.iter().enumerate() {
        if k >= n_examples - 1 || gamma <= EPS_RANK * max_eig || gamma <= 0.0 {
            break;
        }
        keep.push(k);
    }
    match policy {
        ModePolicy::All => {}
        ModePolicy::TopK(k) => keep.truncate(k),
        ModePolicy::VarianceFloor(fraction) => {
            keep.retain(|&k| eigenvalues[k] / divisor >= fraction * total_variance);
        }
    }

    let modes: Vec<Vec<f64>> = keep
        .par_iter()
        .map(|&k| {
            let v = &eigenvectors[k];
            let mut mode = vec![0.0; voxels];
            for (i, image) in set.images().iter().enumerate() {
                let w = v[i];
                if w == 0.0 {
                    continue;
                }
                let flat = image.flatten();
                for a in 0..voxels {
                    mode[a] += w * (flat[a] - mean[a]);
                }
            }
            let norm = mode.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in mode.iter_mut() {
                    *x /= norm;
                }
            }
            mode
        })
        .collect();
    let variances: Vec<f64> = keep.iter().map(|&k| eigenvalues[k] / divisor).collect();

    TextureModel {
        dims: set.dims(),
        spacing: set.spacing().to_vec(),
        mean,
        modes,
        variances,
    }
}

/// Projects an image onto the model: `b = modes^T (image - mean)`.
pub fn project(model: &TextureModel, image: &RasterImage) -> Result<Vec<f64>> {
    if image.dims() != model.dims {
        return Err(Error::GridMismatch {
            expected: model.dims.to_string(),
            got: image.dims().to_string(),
        });
    }
    let flat = image.flatten();
    Ok(model
        .modes
        .iter()
        .map(|mode| {
            let mut acc = 0.0;
            for a in 0..flat.len() {
                acc += mode[a] * (flat[a] - model.mean[a]);
            }
            acc
        })
        .collect())
}

/// Reconstructs an image from parameters: `mean + modes * b`.
pub fn reconstruct(model: &TextureModel, params: &[f64]) -> Result<RasterImage> {
    if params.len() != model.mode_count() {
        return Err(Error::PointDim {
            expected: model.mode_count(),
            got: params.len(),
        });
    }
    let mut values = model.mean.clone();
    for (mode, &b) in model.modes.iter().zip(params) {
        if b == 0.0 {
            continue;
        }
        for (v, m) in values.iter_mut().zip(mode) {
            *v += b * m;
        }
    }
    RasterImage::from_values(model.dims, Some(&model.spacing), values)
}

/// Projects every training image, giving the training cloud X.
pub fn project_set(model: &TextureModel, set: &RegisteredSet) -> Result<ParameterCloud> {
    let points: Vec<Vec<f64>> = set
        .images()
        .iter()
        .map(|img| project(model, img))
        .collect::<Result<_>>()?;
    ParameterCloud::from_points(model.mode_count(), &points)
}

/// Draws `count` independent samples from the model distribution.
///
/// Coordinate k of each sample is a zero-mean Gaussian with the k-th mode
/// variance. Each sample point owns its own ChaCha stream keyed by
/// `(seed, point index)`, so results are identical for a fixed seed no
/// matter how the work is scheduled; drawing in parallel equals drawing
/// sequentially.
pub fn sample_model(model: &TextureModel, count: usize, seed: u64) -> ParameterCloud {
    let k = model.mode_count();
    if k == 0 {
        return ParameterCloud::new(0, count, Vec::new()).expect("empty cloud is valid");
    }
    let scales: Vec<f64> = model.variances.iter().map(|v| v.sqrt()).collect();
    let mut coords = vec![0.0; count * k];
    coords.par_chunks_mut(k).enumerate().for_each(|(mu, out)| {
        let mut stream = RandomStream::new(seed, mu as u64);
        for (x, s) in out.iter_mut().zip(&scales) {
            *x = stream.standard_normal() * s;
        }
    });
    ParameterCloud::new(k, count, coords).expect("sampled coordinates are finite")
}

/// Saves a model under `dir`: `mean.hdr`, `mode_0000.hdr`, ... plus a
/// `model.txt` listing the mode count and variances.
pub fn save_model(dir: &Path, model: &TextureModel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_hdr(&dir.join("mean.hdr"), &model.mean_image())?;
    for (k, mode) in model.modes.iter().enumerate() {
        let img = RasterImage::from_values(model.dims, Some(&model.spacing), mode.clone())?;
        io::write_hdr(&dir.join(format!("mode_{k:04}.hdr")), &img)?;
    }
    let mut text = format!("modes {}\n", model.mode_count());
    for v in &model.variances {
        text.push_str(&format!("variance {v}\n"));
    }
    let txt_path = dir.join("model.txt");
    fs::write(&txt_path, text).map_err(|e| Error::io(&txt_path, e))
}

/// Loads a model previously written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<TextureModel> {
    let txt_path = dir.join("model.txt");
    let text = fs::read_to_string(&txt_path).map_err(|e| Error::io(&txt_path, e))?;
    let mut mode_count: Option<usize> = None;
    let mut variances = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("modes") => {
                mode_count = Some(
                    parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::parse(&txt_path, "bad modes line"))?,
                );
            }
            Some("variance") => {
                variances.push(
                    parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::parse(&txt_path, "bad variance line"))?,
                );
            }
            _ => return Err(Error::parse(&txt_path, "unknown model.txt line")),
        }
    }
    let mode_count = mode_count.ok_or_else(|| Error::parse(&txt_path, "missing modes line"))?;
    if variances.len() != mode_count {
        return Err(Error::parse(
            &txt_path,
            format!("{} variances for {} modes", variances.len(), mode_count),
        ));
    }

    let mean_img = io::read_hdr(&dir.join("mean.hdr"))?;
    let dims = mean_img.dims();
    let spacing = mean_img.spacing().to_vec();
    let mut modes = Vec::with_capacity(mode_count);
    for k in 0..mode_count {
        let img = io::read_hdr(&dir.join(format!("mode_{k:04}.hdr")))?;
        if img.dims() != dims {
            return Err(Error::GridMismatch {
                expected: dims.to_string(),
                got: img.dims().to_string(),
            });
        }
        modes.push(img.into_values());
    }
    Ok(TextureModel {
        dims,
        spacing,
        mean: mean_img.into_values(),
        modes,
        variances,
    })
}
