//! Random biharmonic clamped-plate-spline warps.
//!
//! A warp displaces pixels inside the circle inscribed in a 2D image and is
//! exactly zero on and outside that circle, so strong features near the
//! image border (a skull outline, say) are never deformed. The displacement
//! field interpolates prescribed displacements at a set of knot points using
//! the clamped-plate Green's function on the unit disk,
//!
//! ```text
//! G(u, v) = |u - v|^2 (A^2 - 1 - 2 ln A),
//! A(u, v) = sqrt(|u|^2 |v|^2 - 2 u.v + 1) / |u - v|,
//! ```
//!
//! which vanishes whenever either argument reaches the unit circle and has
//! the continuous limit `G(u, u) = (1 - |u|^2)^2`.
//!
//! Random warps are generated with an exact mean pixel displacement: knots
//! are displaced randomly, the resulting mean displacement magnitude `d_hat`
//! over all pixels is measured, and the whole field is rescaled by
//! `d / d_hat`. Images are resampled by backward mapping with the negated
//! field and bilinear interpolation; at the displacement sizes used here
//! (a few pixels) this matches the forward warp convention to second order.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::LabelMap;
use crate::error::{Error, Result};
use crate::raster::{GridDims, RasterImage};
use crate::reduce::blocked_mean;
use crate::rng::RandomStream;

/// Knots are laid on a regular grid spanning this radius inside the unit
/// disk.
const KNOT_RADIUS: f64 = 0.8;
/// Radius of the disk each knot is displaced within before global scaling.
const KNOT_STEP_RADIUS: f64 = 0.1;
/// Slack for points meant to sit exactly on the unit circle.
const DISK_EPS: f64 = 1e-9;

/// The circle inside which a warp may act, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// The circle inscribed in a 2D grid's pixel index extent.
pub fn inscribed_circle(dims: GridDims) -> Result<Circle> {
    if !dims.is_2d() {
        return Err(Error::NotTwoDimensional);
    }
    let w = dims.width();
    let h = dims.height();
    if w < 2 || h < 2 {
        return Err(Error::InvalidGrid(format!(
            "grid {dims} is too small to inscribe a circle"
        )));
    }
    Ok(Circle {
        center: [(w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0],
        radius: (w.min(h) - 1) as f64 / 2.0,
    })
}

/// Clamped-plate Green's function on the closed unit disk.
///
/// Zero whenever either point lies on the circle; errors if a point lies
/// outside it.
pub fn cps_green(u: [f64; 2], v: [f64; 2]) -> Result<f64> {
    let nu = u[0] * u[0] + u[1] * u[1];
    let nv = v[0] * v[0] + v[1] * v[1];
    for n in [nu, nv] {
        if n > 1.0 + DISK_EPS {
            return Err(Error::OutsideUnitDisk { radius: n.sqrt() });
        }
    }
    if nu >= 1.0 || nv >= 1.0 {
        return Ok(0.0);
    }
    let dx = u[0] - v[0];
    let dy = u[1] - v[1];
    let r2 = dx * dx + dy * dy;
    let dot = u[0] * v[0] + u[1] * v[1];
    let b2 = nu * nv - 2.0 * dot + 1.0;
    if r2 == 0.0 {
        // Coincident-point limit: (1 - |u|^2)^2.
        let t = 1.0 - nu;
        return Ok(t * t);
    }
    // r^2 (A^2 - 1 - 2 ln A) with A^2 = b2 / r2.
    Ok(b2 - r2 - r2 * (b2 / r2).ln())
}

/// A clamped-plate-spline warp bound to one 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CpsWarp {
    dims: GridDims,
    circle: Circle,
    knots: Vec<[f64; 2]>,
    knot_displacements: Vec<[f64; 2]>,
    scale_factor: f64,
    /// Interpolation coefficients, one 2-vector per knot, solved from
    /// `G w = knot_displacements`.
    coeffs: Vec<[f64; 2]>,
}

impl CpsWarp {
    /// Builds a warp from knots (normalized coordinates strictly inside the
    /// unit disk) and their displacements in normalized units.
    pub fn new(
        dims: GridDims,
        knots: Vec<[f64; 2]>,
        knot_displacements: Vec<[f64; 2]>,
        scale_factor: f64,
    ) -> Result<Self> {
        let circle = inscribed_circle(dims)?;
        if knots.is_empty() || knots.len() != knot_displacements.len() {
            return Err(Error::InvalidConfig(format!(
                "{} knots with {} displacements",
                knots.len(),
                knot_displacements.len()
            )));
        }
        for k in &knots {
            let n = k[0] * k[0] + k[1] * k[1];
            if n >= 1.0 {
                return Err(Error::OutsideUnitDisk { radius: n.sqrt() });
            }
        }
        if !scale_factor.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "non-finite scale factor {scale_factor}"
            )));
        }

        // Solve the interpolation system once per component.
        let n = knots.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = cps_green(knots[i], knots[j])?;
            }
        }
        let rhs: Vec<Vec<f64>> = (0..2)
            .map(|c| knot_displacements.iter().map(|d| d[c]).collect())
            .collect();
        let solved = crate::linalg::solve_linear(g, &rhs)?;
        let coeffs: Vec<[f64; 2]> = (0..n).map(|i| [solved[0][i], solved[1][i]]).collect();

        Ok(CpsWarp {
            dims,
            circle,
            knots,
            knot_displacements,
            scale_factor,
            coeffs,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn circle(&self) -> Circle {
        self.circle
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    pub fn knot_displacements(&self) -> &[[f64; 2]] {
        &self.knot_displacements
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// The same warp with a different global scale. The field is linear in
    /// the scale factor, so this rescales every displacement exactly.
    pub fn with_scale_factor(&self, scale_factor: f64) -> Self {
        CpsWarp {
            scale_factor,
            ..self.clone()
        }
    }

    /// Displacement at a point given in normalized disk coordinates, in
    /// normalized units. Exactly zero on and outside the unit circle.
    pub fn displacement_normalized(&self, u: [f64; 2]) -> [f64; 2] {
        if u[0] * u[0] + u[1] * u[1] >= 1.0 {
            return [0.0, 0.0];
        }
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (knot, w) in self.knots.iter().zip(&self.coeffs) {
            let g = cps_green(u, *knot).expect("interior point stays inside the disk");
            dx += w[0] * g;
            dy += w[1] * g;
        }
        [self.scale_factor * dx, self.scale_factor * dy]
    }

    /// Displacement at a pixel position, in pixel units.
    pub fn displacement_at(&self, p: [f64; 2]) -> [f64; 2] {
        let r = self.circle.radius;
        let u = [
            (p[0] - self.circle.center[0]) / r,
            (p[1] - self.circle.center[1]) / r,
        ];
        let d = self.displacement_normalized(u);
        [d[0] * r, d[1] * r]
    }
}

/// A dense per-pixel displacement raster in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    dims: GridDims,
    vectors: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.dims.width() + x]
    }
}

/// Evaluates the warp's displacement at every pixel of the grid.
pub fn displacement_field(warp: &CpsWarp, dims: GridDims) -> Result<DisplacementField> {
    if dims != warp.dims() {
        return Err(Error::GridMismatch {
            expected: warp.dims().to_string(),
            got: dims.to_string(),
        });
    }
    let w = dims.width();
    let h = dims.height();
    let mut vectors = vec![[0.0, 0.0]; w * h];
    vectors.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = warp.displacement_at([x as f64, y as f64]);
        }
    });
    Ok(DisplacementField { dims, vectors })
}

/// Mean Euclidean displacement magnitude over all grid pixels, in pixels.
pub fn mean_displacement(warp: &CpsWarp, dims: GridDims) -> Result<f64> {
    let field = displacement_field(warp, dims)?;
    let magnitudes: Vec<f64> = field
        .vectors()
        .iter()
        .map(|d| (d[0] * d[0] + d[1] * d[1]).sqrt())
        .collect();
    Ok(blocked_mean(&magnitudes))
}

/// Generates a random warp whose mean pixel displacement equals `d` exactly
/// (to rounding).
///
/// Knots sit on a `ceil(sqrt(n_knots))`-per-side regular grid spanning
/// radius 0.8, clipped to that radius; each is displaced uniformly within a
/// small disk, then the whole field is rescaled by `d / d_hat`. Zero `d`
/// yields an identity warp.
pub fn make_random_warp(dims: GridDims, d: f64, n_knots: usize, seed: u64) -> Result<CpsWarp> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "target mean displacement {d} must be non-negative"
        )));
    }
    if n_knots == 0 {
        return Err(Error::InvalidConfig("n_knots must be at least 1".into()));
    }

    let side = (n_knots as f64).sqrt().ceil() as usize;
    let mut knots = Vec::new();
    for iy in 0..side {
        for ix in 0..side {
            let (x, y) = if side == 1 {
                (0.0, 0.0)
            } else {
                let step = 2.0 * KNOT_RADIUS / (side - 1) as f64;
                (
                    -KNOT_RADIUS + step * ix as f64,
                    -KNOT_RADIUS + step * iy as f64,
                )
            };
            if x * x + y * y <= KNOT_RADIUS * KNOT_RADIUS + DISK_EPS {
                knots.push([x, y]);
            }
        }
    }
    if knots.is_empty() {
        // A 2x2 grid has all four corners outside the clip radius.
        knots.push([0.0, 0.0]);
    }

    let mut stream = RandomStream::new(seed, 0);
    let displacements: Vec<[f64; 2]> = knots
        .iter()
        .map(|_| {
            let radius = KNOT_STEP_RADIUS * stream.uniform().sqrt();
            let angle = 2.0 * std::f64::consts::PI * stream.uniform();
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect();

    let warp = CpsWarp::new(dims, knots, displacements, 1.0)?;
    if d == 0.0 {
        return Ok(warp.with_scale_factor(0.0));
    }
    let d_hat = mean_displacement(&warp, dims)?;
    if d_hat <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateWarp);
    }
    Ok(warp.with_scale_factor(d / d_hat))
}

/// Bilinear sample with nearest-edge clamping, exact on integer positions
/// and on constant images.
fn bilinear_sample(image: &RasterImage, x: f64, y: f64) -> f64 {
    let w = image.dims().width();
    let h = image.dims().height();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);

    let v00 = image.get(x0, y0, 0);
    let v10 = image.get(x1, y0, 0);
    let v01 = image.get(x0, y1, 0);
    let v11 = image.get(x1, y1, 0);
    let top = v00 + fx * (v10 - v00);
    let bottom = v01 + fx * (v11 - v01);
    top + fy * (bottom - top)
}

fn resample(image: &RasterImage, field: &DisplacementField) -> RasterImage {
    let dims = image.dims();
    let w = dims.width();
    let h = dims.height();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let d = field.at(x, y);
            *v = bilinear_sample(image, x as f64 - d[0], y as f64 - d[1]);
        }
    });
    RasterImage::from_values(dims, Some(image.spacing()), out)
        .expect("resampled values stay finite")
}

/// Warps an image by backward mapping: output pixel `p` takes the value of
/// the input at `p - displacement(p)`, bilinearly interpolated.
pub fn apply_warp(image: &RasterImage, warp: &CpsWarp) -> Result<RasterImage> {
    let field = displacement_field(warp, image.dims())?;
    Ok(resample(image, &field))
}

/// Warps every channel of a label map; outputs are clamped to [0, 1], so
/// binary labels become fuzzy after resampling.
pub fn apply_warp_labels(labels: &LabelMap, warp: &CpsWarp) -> Result<LabelMap> {
    let field = displacement_field(warp, labels.dims())?;
    let channels: Vec<RasterImage> = labels
        .channels()
        .iter()
        .map(|c| {
            let warped = resample(c, &field);
            let clamped: Vec<f64> = warped.flatten().iter().map(|v| v.clamp(0.0, 1.0)).collect();
            RasterImage::from_values(c.dims(), Some(c.spacing()), clamped)
                .expect("clamped values are finite")
        })
        .collect();
    LabelMap::new(labels.labels().to_vec(), channels)
}

/// Writes a warp to a self-contained text file for exact replay.
pub fn save_warp(path: &Path, warp: &CpsWarp) -> Result<()> {
    let mut text = String::from("cps-warp\n");
    text.push_str(&format!(
        "dims {} {}\n",
        warp.dims().width(),
        warp.dims().height()
    ));
    text.push_str(&format!(
        "circle {} {} {}\n",
        warp.circle().center[0],
        warp.circle().center[1],
        warp.circle().radius
    ));
    text.push_str(&format!("scale {}\n", warp.scale_factor()));
    text.push_str(&format!("knots {}\n", warp.knots().len()));
    for (k, d) in warp.knots().iter().zip(warp.knot_displacements()) {
        text.push_str(&format!("{} {} {} {}\n", k[0], k[1], d[0], d[1]));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a warp written by [`save_warp`].
pub fn load_warp(path: &Path) -> Result<CpsWarp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("cps-warp") {
        return Err(Error::parse(path, "missing cps-warp magic line"));
    }

    let mut dims: Option<GridDims> = None;
    let mut circle: Option<Circle> = None;
    let mut scale: Option<f64> = None;
    let mut knot_count: Option<usize> = None;
    let mut knots = Vec::new();
    let mut displacements = Vec::new();

    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        match tokens[0] {
            "dims" if tokens.len() == 3 => {
                let w = tokens[1]
                    .parse()
                    .map_err(|_| Error::parse(path, "bad dims"))?;
                let h = tokens[2]
                    .parse()
                    .map_err(|_| Error::parse(path, "bad dims"))?;
                dims = Some(GridDims::from_extents(&[w, h])?);
            }
            "circle" if tokens.len() == 4 => {
                let vals: Vec<f64> = tokens[1..]
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, "bad circle"))?;
                circle = Some(Circle {
                    center: [vals[0], vals[1]],
                    radius: vals[2],
                });
            }
            "scale" if tokens.len() == 2 => {
                scale = Some(
                    tokens[1]
                        .parse()
                        .map_err(|_| Error::parse(path, "bad scale"))?,
                );
            }
            "knots" if tokens.len() == 2 => {
                knot_count = Some(
                    tokens[1]
                        .parse()
                        .map_err(|_| Error::parse(path, "bad knot count"))?,
                );
            }
            _ if tokens.len() == 4 => {
                let vals: Vec<f64> = tokens
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, "bad knot line"))?;
                knots.push([vals[0], vals[1]]);
                displacements.push([vals[2], vals[3]]);
            }
            _ => return Err(Error::parse(path, format!("unrecognized line {line:?}"))),
        }
    }

    let dims = dims.ok_or_else(|| Error::parse(path, "missing dims"))?;
    let scale = scale.ok_or_else(|| Error::parse(path, "missing scale"))?;
    let expected = knot_count.ok_or_else(|| Error::parse(path, "missing knot count"))?;
    if knots.len() != expected {
        return Err(Error::parse(
            path,
            format!("expected {expected} knots, found {}", knots.len()),
        ));
    }
    let warp = CpsWarp::new(dims, knots, displacements, scale)?;
    if let Some(c) = circle {
        let derived = warp.circle();
        if (c.center[0] - derived.center[0]).abs() > 1e-9
            || (c.center[1] - derived.center[1]).abs() > 1e-9
            || (c.radius - derived.radius).abs() > 1e-9
        {
            return Err(Error::parse(path, "circle does not match dims"));
        }
    }
    Ok(warp)
}
