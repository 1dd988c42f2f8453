//! Synthetic structured image sets with binary anatomical-style labels.
//!
//! Each generated set shares one geometry: a bright outer ring sitting on
//! the circle inscribed in the grid (which perturbation warps never move), a
//! large central disk, and up to seven smaller internal structures. Images
//! differ only in per-structure intensity jitter and a weak smooth bias
//! field, so the unperturbed set behaves like a perfectly registered one:
//! its label maps are identical across examples and only texture varies.
//! That makes these sets the natural substrate for perturbation studies,
//! where controlled warps then degrade both the label overlap and the
//! texture-model measures from a known-good baseline.

use crate::dataset::{LabelMap, RegisteredSet};
use crate::raster::{GridDims, RasterImage};
use crate::rng::RandomStream;

#[derive(Clone, Copy)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    Annulus {
        r_in: f64,
        r_out: f64,
    },
    /// Two disks mirrored across the y axis.
    Twin {
        cx: f64,
        cy: f64,
        r: f64,
    },
}

struct Structure {
    name: &'static str,
    shape: Shape,
    delta: f64,
}

/// Up to seven labeled structures, ordered so file-name sorting preserves
/// this order on reload.
const STRUCTURES: [Structure; 7] = [
    Structure {
        name: "l0_ventricle",
        shape: Shape::Ellipse {
            cx: 0.0,
            cy: -0.05,
            rx: 0.10,
            ry: 0.18,
        },
        delta: -0.28,
    },
    Structure {
        name: "l1_cortex",
        shape: Shape::Annulus {
            r_in: 0.60,
            r_out: 0.80,
        },
        delta: 0.18,
    },
    Structure {
        name: "l2_thalamus",
        shape: Shape::Ellipse {
            cx: 0.0,
            cy: 0.30,
            rx: 0.16,
            ry: 0.09,
        },
        delta: 0.14,
    },
    Structure {
        name: "l3_caudate",
        shape: Shape::Twin {
            cx: 0.28,
            cy: 0.12,
            r: 0.06,
        },
        delta: 0.30,
    },
    Structure {
        name: "l4_putamen",
        shape: Shape::Twin {
            cx: 0.42,
            cy: -0.18,
            r: 0.075,
        },
        delta: 0.22,
    },
    Structure {
        name: "l5_stem",
        shape: Shape::Ellipse {
            cx: 0.0,
            cy: -0.45,
            rx: 0.10,
            ry: 0.13,
        },
        delta: -0.12,
    },
    Structure {
        name: "l6_rim",
        shape: Shape::Annulus {
            r_in: 0.85,
            r_out: 0.92,
        },
        delta: 0.10,
    },
];

/// Maximum number of distinct labels [`synthetic_set`] can produce.
pub const MAX_LABELS: usize = STRUCTURES.len();

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl Shape {
    /// Hard indicator for the binary label.
    fn contains(&self, u: [f64; 2]) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (u[0] - cx) / rx;
                let dy = (u[1] - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
            Shape::Annulus { r_in, r_out } => {
                let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
                (r_in..=r_out).contains(&r)
            }
            Shape::Twin { cx, cy, r } => {
                for sx in [-1.0, 1.0] {
                    let dx = u[0] - sx * cx;
                    let dy = u[1] - cy;
                    if dx * dx + dy * dy <= r * r {
                        return true;
                    }
                }
                false
            }
        }
    }

    /// Smooth 0..1 bump used for the intensity rendering.
    fn bump(&self, u: [f64; 2]) -> f64 {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (u[0] - cx) / rx;
                let dy = (u[1] - cy) / ry;
                let rho = (dx * dx + dy * dy).sqrt();
                let w = (0.03 / rx.min(ry)).min(0.25);
                smoothstep((1.0 - rho) / w + 0.5)
            }
            Shape::Annulus { r_in, r_out } => {
                let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let w = 0.03;
                smoothstep((r - r_in) / w + 0.5) * smoothstep((r_out - r) / w + 0.5)
            }
            Shape::Twin { cx, cy, r } => {
                let mut best: f64 = 0.0;
                for sx in [-1.0, 1.0] {
                    let dx = u[0] - sx * cx;
                    let dy = u[1] - cy;
                    let rho = (dx * dx + dy * dy).sqrt() / r;
                    let w = (0.03 / r).min(0.25);
                    best = best.max(smoothstep((1.0 - rho) / w + 0.5));
                }
                best
            }
        }
    }
}

/// Generates a deterministic synthetic registered set.
///
/// All examples share the same geometry and identical binary label maps
/// (the first `n_labels` structures); only intensities vary from example to
/// example. Panics if `n_labels` is 0 or exceeds [`MAX_LABELS`], if the grid
/// is not 2D, or if `n_images < 2`.
pub fn synthetic_set(n_images: usize, dims: GridDims, n_labels: usize, seed: u64) -> RegisteredSet {
    assert!(dims.is_2d(), "synthetic sets are 2D");
    assert!(n_images >= 2, "a registered set needs at least 2 examples");
    assert!(
        (1..=MAX_LABELS).contains(&n_labels),
        "n_labels must be in 1..={MAX_LABELS}"
    );

    let w = dims.width();
    let h = dims.height();
    let center = [(w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0];
    let radius = (w.min(h) - 1) as f64 / 2.0;

    // Shared binary labels.
    let mut label_names = Vec::with_capacity(n_labels);
    let mut channels = Vec::with_capacity(n_labels);
    for s in STRUCTURES.iter().take(n_labels) {
        let mut values = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let u = [
                    (x as f64 - center[0]) / radius,
                    (y as f64 - center[1]) / radius,
                ];
                if s.shape.contains(u) {
                    values[y * w + x] = 1.0;
                }
            }
        }
        label_names.push(s.name.to_string());
        channels.push(RasterImage::from_values(dims, None, values).expect("binary channel"));
    }
    let label_map = LabelMap::new(label_names, channels).expect("synthetic labels are valid");

    let mut names = Vec::with_capacity(n_images);
    let mut images = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let mut stream = RandomStream::new(seed, i as u64);
        let disk_jitter = 0.02 * stream.standard_normal();
        let skull_jitter = 0.02 * stream.standard_normal();
        let structure_jitter: Vec<f64> = (0..STRUCTURES.len())
            .map(|_| 1.0 + 0.12 * stream.standard_normal())
            .collect();
        // Two low-frequency cosine bias terms.
        let bias: Vec<(f64, f64, f64)> = (0..2)
            .map(|_| {
                let fx = 0.4 + 1.2 * stream.uniform();
                let fy = 0.4 + 1.2 * stream.uniform();
                let phase = 2.0 * std::f64::consts::PI * stream.uniform();
                (fx, fy, phase)
            })
            .collect();

        let mut values = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let u = [
                    (x as f64 - center[0]) / radius,
                    (y as f64 - center[1]) / radius,
                ];
                let r = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let mut v = 0.12;
                // Head disk and a skull ring centered on the warp circle.
                v += (0.45 + disk_jitter) * smoothstep((0.97 - r) / 0.03 + 0.5);
                v += (0.35 + skull_jitter)
                    * smoothstep((r - 0.97) / 0.02 + 0.5)
                    * smoothstep((1.06 - r) / 0.02 + 0.5);
                for (s, jitter) in STRUCTURES.iter().zip(&structure_jitter) {
                    v += s.delta * jitter * s.shape.bump(u);
                }
                for &(fx, fy, phase) in &bias {
                    v += 0.01 * (std::f64::consts::PI * (fx * u[0] + fy * u[1]) + phase).cos();
                }
                values[y * w + x] = v;
            }
        }
        names.push(format!("synth_{i:03}"));
        images.push(RasterImage::from_values(dims, None, values).expect("finite intensities"));
    }

    let maps = vec![label_map; n_images];
    RegisteredSet::new(names, images, Some(maps)).expect("synthetic set is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn produces_requested_shape() {
        let set = synthetic_set(5, GridDims::d2(61, 61), 4, 3);
        assert_eq!(set.len(), 5);
        assert_eq!(set.dims(), GridDims::d2(61, 61));
        let maps = set.label_maps().unwrap();
        assert_eq!(maps.len(), 5);
        assert_eq!(maps[0].len(), 4);
        assert_eq!(maps[0].labels()[0], "l0_ventricle");
    }

    #[test]
    fn labels_are_binary_identical_and_nonempty() {
        let set = synthetic_set(3, GridDims::d2(81, 81), MAX_LABELS, 9);
        let maps = set.label_maps().unwrap();
        for map in maps {
            assert_eq!(map, &maps[0]);
            for ch in map.channels() {
                let volume: f64 = ch.flatten().iter().sum();
                assert!(volume > 0.0);
                assert!(ch.flatten().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn images_vary_but_generation_is_deterministic() {
        let a = synthetic_set(4, GridDims::d2(41, 41), 3, 7);
        let b = synthetic_set(4, GridDims::d2(41, 41), 3, 7);
        for (x, y) in a.images().iter().zip(b.images()) {
            assert_eq!(x, y);
        }
        assert_ne!(a.images()[0], a.images()[1]);
        let c = synthetic_set(4, GridDims::d2(41, 41), 3, 8);
        assert_ne!(a.images()[0], c.images()[0]);
    }

    #[test]
    fn label_count_does_not_change_intensities() {
        let few = synthetic_set(3, GridDims::d2(41, 41), 2, 5);
        let many = synthetic_set(3, GridDims::d2(41, 41), 6, 5);
        assert_eq!(few.images(), many.images());
    }
}
