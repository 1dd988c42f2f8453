//! Registered image sets: label maps, set validation, manifest i/o.
//!
//! A set is described on disk by a plain-text manifest. The first
//! non-comment line declares the common grid; every following line names one
//! example: an image path and, optionally, a directory of label rasters (one
//! file per label, label name = file stem, ordered by file name):
//!
//! ```text
//! dims 141 141 spacing 1 1
//! images/subj_000.hdr labels/subj_000
//! images/subj_001.hdr labels/subj_001
//! ```
//!
//! Paths are relative to the manifest. Either every example carries a label
//! directory or none does. Label membership values must lie in [0, 1];
//! ground-truth labels are binary on disk and only become fuzzy through
//! in-memory warping.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{GridDims, RasterImage};

/// Per-voxel fuzzy membership rasters for a list of named labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    labels: Vec<String>,
    channels: Vec<RasterImage>,
}

impl LabelMap {
    /// Validates that channels share one grid and all memberships are in
    /// [0, 1].
    pub fn new(labels: Vec<String>, channels: Vec<RasterImage>) -> Result<Self> {
        if labels.len() != channels.len() {
            return Err(Error::LabelLayout(format!(
                "{} label names for {} channels",
                labels.len(),
                channels.len()
            )));
        }
        if channels.is_empty() {
            return Err(Error::LabelLayout("label map with no labels".into()));
        }
        for (label, channel) in labels.iter().zip(&channels) {
            channels[0].check_same_grid(channel)?;
            if let Some(&v) = channel.flatten().iter().find(|v| **v < 0.0 || **v > 1.0) {
                return Err(Error::MembershipRange {
                    label: label.clone(),
                    value: v,
                });
            }
        }
        Ok(LabelMap { labels, channels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn channels(&self) -> &[RasterImage] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &RasterImage {
        &self.channels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> GridDims {
        self.channels[0].dims()
    }
}

/// N images registered onto one common grid, with optional label maps.
#[derive(Debug, Clone)]
pub struct RegisteredSet {
    names: Vec<String>,
    images: Vec<RasterImage>,
    label_maps: Option<Vec<LabelMap>>,
}

impl RegisteredSet {
    pub fn new(
        names: Vec<String>,
        images: Vec<RasterImage>,
        label_maps: Option<Vec<LabelMap>>,
    ) -> Result<Self> {
        if images.len() < 2 {
            return Err(Error::TooFewExamples { got: images.len() });
        }
        if names.len() != images.len() {
            return Err(Error::LabelLayout(format!(
                "{} names for {} images",
                names.len(),
                images.len()
            )));
        }
        for img in &images[1..] {
            images[0].check_same_grid(img)?;
        }
        if let Some(maps) = &label_maps {
            if maps.len() != images.len() {
                return Err(Error::LabelLayout(format!(
                    "{} label maps for {} images",
                    maps.len(),
                    images.len()
                )));
            }
            for map in maps {
                images[0].check_same_grid(&map.channels()[0])?;
                if map.labels() != maps[0].labels() {
                    return Err(Error::LabelLayout(format!(
                        "label lists differ: {:?} vs {:?}",
                        maps[0].labels(),
                        map.labels()
                    )));
                }
            }
        }
        Ok(RegisteredSet {
            names,
            images,
            label_maps,
        })
    }

    /// Number of examples N.
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= 2 by construction
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn images(&self) -> &[RasterImage] {
        &self.images
    }

    pub fn label_maps(&self) -> Option<&[LabelMap]> {
        self.label_maps.as_deref()
    }

    pub fn dims(&self) -> GridDims {
        self.images[0].dims()
    }

    pub fn spacing(&self) -> &[f64] {
        self.images[0].spacing()
    }

    /// Replaces images and label maps, keeping names; used by warping code.
    pub fn with_data(
        &self,
        images: Vec<RasterImage>,
        label_maps: Option<Vec<LabelMap>>,
    ) -> Result<Self> {
        RegisteredSet::new(self.names.clone(), images, label_maps)
    }
}

/// Loads and validates a registered set from a manifest file.
pub fn load_set(manifest_path: &Path) -> Result<RegisteredSet> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));

    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());

    let header = lines
        .next()
        .ok_or_else(|| Error::parse(manifest_path, "empty manifest"))?;
    let (dims, spacing) = parse_header(manifest_path, header)?;

    let mut names = Vec::new();
    let mut images = Vec::new();
    let mut label_dirs: Vec<Option<PathBuf>> = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        let image_rel = parts
            .next()
            .ok_or_else(|| Error::parse(manifest_path, "missing image path"))?;
        let image_path = base.join(image_rel);
        let mut image = io::read_raster(&image_path)?;
        if image.dims() != dims {
            return Err(Error::GridMismatch {
                expected: dims.to_string(),
                got: format!("{} in {}", image.dims(), image_path.display()),
            });
        }
        if image_path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("pgm"))
            .unwrap_or(false)
        {
            // PGM carries no spacing; it adopts the manifest's.
            image.set_spacing(&spacing)?;
        } else if image.spacing() != spacing.as_slice() {
            return Err(Error::GridMismatch {
                expected: format!("spacing {:?}", spacing),
                got: format!("spacing {:?} in {}", image.spacing(), image_path.display()),
            });
        }
        let name = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("example")
            .to_string();
        names.push(name);
        images.push(image);
        label_dirs.push(parts.next().map(|d| base.join(d)));
    }

    let with_labels = label_dirs.iter().filter(|d| d.is_some()).count();
    let label_maps = if with_labels == 0 {
        None
    } else if with_labels == label_dirs.len() {
        let mut maps = Vec::with_capacity(label_dirs.len());
        for dir in label_dirs.iter().flatten() {
            maps.push(load_label_dir(dir, dims, &spacing)?);
        }
        Some(maps)
    } else {
        return Err(Error::LabelLayout(
            "some examples have label directories and some do not".into(),
        ));
    };

    RegisteredSet::new(names, images, label_maps)
}

fn parse_header(path: &Path, header: &str) -> Result<(GridDims, Vec<f64>)> {
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"dims") {
        return Err(Error::parse(path, "manifest must start with a dims line"));
    }
    let spacing_at = tokens.iter().position(|t| *t == "spacing");
    let dim_tokens = &tokens[1..spacing_at.unwrap_or(tokens.len())];
    let extents: Vec<usize> = dim_tokens
        .iter()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(path, "bad dims in manifest header"))?;
    let dims = GridDims::from_extents(&extents)?;
    let spacing = match spacing_at {
        Some(i) => tokens[i + 1..]
            .iter()
            .map(|t| t.parse())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| Error::parse(path, "bad spacing in manifest header"))?,
        None => vec![1.0; dims.rank()],
    };
    if spacing.len() != dims.rank() {
        return Err(Error::parse(
            path,
            format!(
                "spacing has {} entries for a rank-{} grid",
                spacing.len(),
                dims.rank()
            ),
        ));
    }
    Ok((dims, spacing))
}

fn load_label_dir(dir: &Path, dims: GridDims, spacing: &[f64]) -> Result<LabelMap> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some(ext) if ext.eq_ignore_ascii_case("pgm") || ext.eq_ignore_ascii_case("hdr")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::LabelLayout(format!(
            "label directory {} holds no .pgm or .hdr files",
            dir.display()
        )));
    }

    let mut labels = Vec::with_capacity(files.len());
    let mut channels = Vec::with_capacity(files.len());
    for file in &files {
        let mut channel = io::read_raster(file)?;
        if channel.dims() != dims {
            return Err(Error::GridMismatch {
                expected: dims.to_string(),
                got: format!("{} in {}", channel.dims(), file.display()),
            });
        }
        let is_pgm = file
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("pgm"))
            .unwrap_or(false);
        if is_pgm {
            channel.set_spacing(spacing)?;
        } else if channel.spacing() != spacing {
            return Err(Error::GridMismatch {
                expected: format!("spacing {spacing:?}"),
                got: format!("spacing {:?} in {}", channel.spacing(), file.display()),
            });
        }
        labels.push(
            file.file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("label")
                .to_string(),
        );
        channels.push(channel);
    }
    LabelMap::new(labels, channels)
}

/// Writes a set under `dir` (images, label directories, manifest) and
/// returns the manifest path. Everything is stored in the header + raw
/// format, so a reload reproduces the set bit for bit.
pub fn save_set(dir: &Path, set: &RegisteredSet) -> Result<PathBuf> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut manifest = String::new();
    manifest.push_str("dims");
    for e in set.dims().extents() {
        manifest.push_str(&format!(" {e}"));
    }
    manifest.push_str(" spacing");
    for s in set.spacing() {
        manifest.push_str(&format!(" {s}"));
    }
    manifest.push('\n');

    for (i, (name, image)) in set.names().iter().zip(set.images()).enumerate() {
        let image_rel = format!("images/{name}.hdr");
        io::write_hdr(&dir.join(&image_rel), image)?;
        match set.label_maps() {
            Some(maps) => {
                let label_rel = format!("labels/{name}");
                let label_dir = dir.join(&label_rel);
                fs::create_dir_all(&label_dir).map_err(|e| Error::io(&label_dir, e))?;
                for (label, channel) in maps[i].labels().iter().zip(maps[i].channels()) {
                    io::write_hdr(&label_dir.join(format!("{label}.hdr")), channel)?;
                }
                manifest.push_str(&format!("{image_rel} {label_rel}\n"));
            }
            None => manifest.push_str(&format!("{image_rel}\n")),
        }
    }

    let manifest_path = dir.join("set.manifest");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pgm(path: &Path, w: usize, h: usize, values: &[u8]) {
        let mut text = format!("P2\n{w} {h}\n255\n");
        for v in values {
            text.push_str(&format!("{v} "));
        }
        fs::write(path, text).unwrap();
    }

    #[test]
    fn minimal_two_image_set() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 4, 4, &[10; 16]);
        write_pgm(&dir.path().join("b.pgm"), 4, 4, &[10; 16]);
        fs::write(dir.path().join("set.manifest"), "dims 4 4\na.pgm\nb.pgm\n").unwrap();
        let set = load_set(&dir.path().join("set.manifest")).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dims(), GridDims::d2(4, 4));
        assert!(set.label_maps().is_none());
        assert_eq!(set.names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 4, 4, &[0; 16]);
        write_pgm(&dir.path().join("b.pgm"), 5, 4, &[0; 20]);
        fs::write(dir.path().join("set.manifest"), "dims 4 4\na.pgm\nb.pgm\n").unwrap();
        let err = load_set(&dir.path().join("set.manifest")).unwrap_err();
        assert!(matches!(err, Error::GridMismatch { .. }), "{err}");
    }

    #[test]
    fn single_example_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 2, 2, &[0; 4]);
        fs::write(dir.path().join("set.manifest"), "dims 2 2\na.pgm\n").unwrap();
        let err = load_set(&dir.path().join("set.manifest")).unwrap_err();
        assert!(matches!(err, Error::TooFewExamples { got: 1 }));
    }

    #[test]
    fn mixed_label_presence_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 2, 2, &[0; 4]);
        write_pgm(&dir.path().join("b.pgm"), 2, 2, &[0; 4]);
        fs::create_dir(dir.path().join("la")).unwrap();
        write_pgm(&dir.path().join("la/l.pgm"), 2, 2, &[1, 0, 0, 1]);
        fs::write(
            dir.path().join("set.manifest"),
            "dims 2 2\na.pgm la\nb.pgm\n",
        )
        .unwrap();
        let err = load_set(&dir.path().join("set.manifest")).unwrap_err();
        assert!(matches!(err, Error::LabelLayout(_)), "{err}");
    }

    #[test]
    fn membership_outside_unit_interval_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(&dir.path().join("a.pgm"), 2, 2, &[0; 4]);
        write_pgm(&dir.path().join("b.pgm"), 2, 2, &[0; 4]);
        for sub in ["la", "lb"] {
            fs::create_dir(dir.path().join(sub)).unwrap();
            // Value 2 > 1: not a valid membership.
            write_pgm(&dir.path().join(sub).join("l.pgm"), 2, 2, &[1, 0, 2, 1]);
        }
        fs::write(
            dir.path().join("set.manifest"),
            "dims 2 2\na.pgm la\nb.pgm lb\n",
        )
        .unwrap();
        let err = load_set(&dir.path().join("set.manifest")).unwrap_err();
        assert!(matches!(err, Error::MembershipRange { .. }), "{err}");
    }

    #[test]
    fn save_then_load_roundtrips() {
        let dims = GridDims::d2(3, 2);
        let imgs: Vec<RasterImage> = (0..2)
            .map(|i| {
                RasterImage::from_values(
                    dims,
                    Some(&[0.5, 2.0]),
                    (0..6).map(|v| (v + i) as f64 * 0.25).collect(),
                )
                .unwrap()
            })
            .collect();
        let maps: Vec<LabelMap> = (0..2)
            .map(|_| {
                LabelMap::new(
                    vec!["l0".into(), "l1".into()],
                    vec![
                        RasterImage::from_values(
                            dims,
                            Some(&[0.5, 2.0]),
                            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.0],
                        )
                        .unwrap(),
                        RasterImage::from_values(
                            dims,
                            Some(&[0.5, 2.0]),
                            vec![0.0, 1.0, 0.0, 0.0, 0.25, 1.0],
                        )
                        .unwrap(),
                    ],
                )
                .unwrap()
            })
            .collect();
        let set = RegisteredSet::new(vec!["x".into(), "y".into()], imgs, Some(maps)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let manifest = save_set(dir.path(), &set).unwrap();
        let back = load_set(&manifest).unwrap();
        assert_eq!(back.len(), set.len());
        assert_eq!(back.names(), set.names());
        assert_eq!(back.images(), set.images());
        assert_eq!(back.label_maps().unwrap(), set.label_maps().unwrap());
    }

    #[test]
    fn synthetic_brain_scale_set_roundtrips_through_manifest() {
        let set = crate::synth::synthetic_set(10, GridDims::d2(141, 141), 7, 42);
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_set(dir.path(), &set).unwrap();
        let back = load_set(&manifest).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back.dims(), GridDims::d2(141, 141));
        let maps = back.label_maps().unwrap();
        assert_eq!(maps.len(), 10);
        for map in maps {
            assert_eq!(map.len(), 7);
        }
        assert_eq!(back.images(), set.images());
        assert_eq!(maps[0].labels(), set.label_maps().unwrap()[0].labels());
    }

    #[test]
    fn label_lists_must_match_across_examples() {
        let dims = GridDims::d2(2, 1);
        let img = RasterImage::constant(dims, None, 0.0).unwrap();
        let ch = RasterImage::constant(dims, None, 1.0).unwrap();
        let m0 = LabelMap::new(vec!["a".into()], vec![ch.clone()]).unwrap();
        let m1 = LabelMap::new(vec!["b".into()], vec![ch]).unwrap();
        let err = RegisteredSet::new(
            vec!["i".into(), "j".into()],
            vec![img.clone(), img],
            Some(vec![m0, m1]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LabelLayout(_)));
    }
}
