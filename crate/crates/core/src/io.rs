//! Raster file formats.
//!
//! Two formats are supported:
//!
//! * **PGM** (`P2` ASCII or `P5` binary, maxval up to 65535) for plain 2D
//!   images; sample values are promoted to `f64` unchanged.
//! * **header + raw**: a small text header describing `dims`, `spacing`,
//!   `dtype` (`float32` or `float64`) and the name of a sibling binary file
//!   holding the values little-endian, row-major with x fastest. This is the
//!   native format for real-valued 2D/3D rasters and is what the writers in
//!   this crate emit.
//!
//! Header example (`slice_000.hdr`, with values in `slice_000.raw`):
//!
//! ```text
//! dims 141 141
//! spacing 1 1
//! dtype float64
//! data slice_000.raw
//! ```
//!
//! The `data` line is optional and defaults to the header file name with its
//! extension replaced by `.raw`. `spacing` is optional and defaults to 1 per
//! axis. Lines starting with `#` are comments.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{GridDims, RasterImage};

/// Reads a raster, dispatching on the file extension: `.pgm` is parsed as
/// PGM, anything else as a header + raw pair.
pub fn read_raster(path: &Path) -> Result<RasterImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => read_pgm(path),
        _ => read_hdr(path),
    }
}

/// Reads a PGM image (P2 or P5). Spacing defaults to 1 per axis.
pub fn read_pgm(path: &Path) -> Result<RasterImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse = |msg: &str| Error::parse(path, msg);

    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Result<String> {
        // Skip whitespace and '#' comments.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::parse(path, "unexpected end of file"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = next_token(&mut pos)?;
    if magic != "P2" && magic != "P5" {
        return Err(parse(&format!("unsupported PGM magic {magic:?}")));
    }
    let width: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| parse("bad width"))?;
    let height: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| parse("bad height"))?;
    let maxval: u32 = next_token(&mut pos)?
        .parse()
        .map_err(|_| parse("bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse(&format!("maxval {maxval} outside 1..=65535")));
    }
    if width == 0 || height == 0 {
        return Err(parse("zero image extent"));
    }
    let count = width * height;

    let values: Vec<f64> = if magic == "P2" {
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            let v: u32 = next_token(&mut pos)?
                .parse()
                .map_err(|_| parse("bad sample value"))?;
            if v > maxval {
                return Err(parse(&format!("sample {v} exceeds maxval {maxval}")));
            }
            vals.push(v as f64);
        }
        vals
    } else {
        // One whitespace byte separates the maxval from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(parse("missing separator before P5 raster"));
        }
        pos += 1;
        let bytes_per = if maxval < 256 { 1 } else { 2 };
        let need = count * bytes_per;
        if bytes.len() - pos < need {
            return Err(parse(&format!(
                "raster truncated: need {need} bytes, have {}",
                bytes.len() - pos
            )));
        }
        let data = &bytes[pos..pos + need];
        if bytes_per == 1 {
            data.iter().map(|&b| b as f64).collect()
        } else {
            data.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect()
        }
    };

    RasterImage::from_values(GridDims::d2(width, height), None, values)
}

/// Reads a header + raw raster pair given the header path.
pub fn read_hdr(path: &Path) -> Result<RasterImage> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dims: Option<GridDims> = None;
    let mut spacing: Option<Vec<f64>> = None;
    let mut dtype: Option<String> = None;
    let mut data: Option<String> = None;

    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match key {
            "dims" => {
                let extents: Vec<usize> = rest
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, "bad dims line"))?;
                dims = Some(GridDims::from_extents(&extents)?);
            }
            "spacing" => {
                let sp: Vec<f64> = rest
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, "bad spacing line"))?;
                spacing = Some(sp);
            }
            "dtype" => {
                dtype = Some(
                    rest.first()
                        .ok_or_else(|| Error::parse(path, "empty dtype line"))?
                        .to_string(),
                );
            }
            "data" => {
                data = Some(
                    rest.first()
                        .ok_or_else(|| Error::parse(path, "empty data line"))?
                        .to_string(),
                );
            }
            other => {
                return Err(Error::parse(path, format!("unknown header key {other:?}")));
            }
        }
    }

    let dims = dims.ok_or_else(|| Error::parse(path, "missing dims line"))?;
    let dtype = dtype.ok_or_else(|| Error::parse(path, "missing dtype line"))?;
    let raw_path = match data {
        Some(name) => path.parent().unwrap_or(Path::new("")).join(name),
        None => default_raw_path(path),
    };

    let raw = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let count = dims.voxel_count();
    let values: Vec<f64> = match dtype.as_str() {
        "float64" => {
            if raw.len() != count * 8 {
                return Err(Error::parse(
                    &raw_path,
                    format!("expected {} bytes, found {}", count * 8, raw.len()),
                ));
            }
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        "float32" => {
            if raw.len() != count * 4 {
                return Err(Error::parse(
                    &raw_path,
                    format!("expected {} bytes, found {}", count * 4, raw.len()),
                ));
            }
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        other => {
            return Err(Error::parse(path, format!("unsupported dtype {other:?}")));
        }
    };

    RasterImage::from_values(dims, spacing.as_deref(), values)
}

/// Writes a raster as a float64 header + raw pair. The raw file sits next to
/// the header with the extension replaced by `.raw`.
pub fn write_hdr(path: &Path, image: &RasterImage) -> Result<()> {
    let raw_path = default_raw_path(path);
    let raw_name = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::parse(path, "header path has no file name"))?;

    let mut header = String::new();
    header.push_str("dims");
    for e in image.dims().extents() {
        header.push_str(&format!(" {e}"));
    }
    header.push('\n');
    header.push_str("spacing");
    for s in image.spacing() {
        header.push_str(&format!(" {s}"));
    }
    header.push('\n');
    header.push_str("dtype float64\n");
    header.push_str(&format!("data {raw_name}\n"));

    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(image.flatten().len() * 8);
    for v in image.flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))
}

fn default_raw_path(hdr: &Path) -> PathBuf {
    hdr.with_extension("raw")
}
