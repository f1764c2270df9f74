//! `<name>.hdr.json` + raw-file containers and a small CSV fixture loader.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HyperCube, LabelMap};
use crate::error::{Error, Result};

const CUBE_DTYPE: &str = "f32le";
const LABEL_DTYPE: &str = "u16le";
const INTERLEAVE: &str = "bip";
const CSV_MAX_SIDE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub interleave: String,
    /// Raw file name, resolved relative to the header's directory.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelHeader {
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub data: String,
    /// Class count; when absent the largest label present is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<u16>,
}

fn read_header<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn raw_path(header_path: &Path, data: &str) -> PathBuf {
    header_path
        .parent()
        .map(|dir| dir.join(data))
        .unwrap_or_else(|| PathBuf::from(data))
}

fn read_raw(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{}: expected {expected} bytes from header, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

pub fn load_cube(header_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header_path = header_path.as_ref();
    let header: CubeHeader = read_header(header_path)?;
    if header.dtype != CUBE_DTYPE {
        return Err(Error::Data(format!(
            "unsupported cube dtype `{}` (expected `{CUBE_DTYPE}`)",
            header.dtype
        )));
    }
    if header.interleave != INTERLEAVE {
        return Err(Error::Data(format!(
            "unsupported interleave `{}` (expected `{INTERLEAVE}`)",
            header.interleave
        )));
    }
    let count = header.height * header.width * header.bands;
    let bytes = read_raw(&raw_path(header_path, &header.data), count * 4)?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    HyperCube::new(header.height, header.width, header.bands, values)
}

pub fn load_labels(header_path: impl AsRef<Path>) -> Result<LabelMap> {
    let header_path = header_path.as_ref();
    let header: LabelHeader = read_header(header_path)?;
    if header.dtype != LABEL_DTYPE {
        return Err(Error::Data(format!(
            "unsupported label dtype `{}` (expected `{LABEL_DTYPE}`)",
            header.dtype
        )));
    }
    let count = header.height * header.width;
    let bytes = read_raw(&raw_path(header_path, &header.data), count * 2)?;
    let labels: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    let classes = match header.classes {
        Some(c) => c,
        None => labels.iter().copied().max().unwrap_or(0),
    };
    if classes == 0 {
        return Err(Error::Data(format!(
            "{}: label map has no labeled pixels",
            header_path.display()
        )));
    }
    LabelMap::new(header.height, header.width, classes, labels)
}

fn header_stem(header_path: &Path) -> Result<String> {
    let name = header_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad header path {}", header_path.display())))?;
    let stem = name
        .strip_suffix(".hdr.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(name);
    Ok(format!("{stem}.raw"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `header_path` plus a sibling raw file. Values are narrowed to f32.
pub fn save_cube(cube: &HyperCube, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let data = header_stem(header_path)?;
    let bytes: Vec<u8> = cube
        .values()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    let raw = raw_path(header_path, &data);
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    write_json(
        header_path,
        &CubeHeader {
            height: cube.height(),
            width: cube.width(),
            bands: cube.bands(),
            dtype: CUBE_DTYPE.into(),
            interleave: INTERLEAVE.into(),
            data,
        },
    )
}

pub fn save_labels(labels: &LabelMap, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let data = header_stem(header_path)?;
    let bytes: Vec<u8> = labels
        .labels()
        .iter()
        .flat_map(|l| l.to_le_bytes())
        .collect();
    let raw = raw_path(header_path, &data);
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    write_json(
        header_path,
        &LabelHeader {
            height: labels.height(),
            width: labels.width(),
            dtype: LABEL_DTYPE.into(),
            data,
            classes: Some(labels.num_classes()),
        },
    )
}

/// One pixel per line (row-major), `bands` comma-separated reals per line.
/// Only meant for fixtures up to 64×64 pixels.
pub fn load_cube_csv(path: impl AsRef<Path>, height: usize, width: usize) -> Result<HyperCube> {
    let path = path.as_ref();
    if height > CSV_MAX_SIDE || width > CSV_MAX_SIDE {
        return Err(Error::Config(format!(
            "CSV cubes are limited to {CSV_MAX_SIDE}x{CSV_MAX_SIDE} pixels"
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut bands = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = values.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}:{}: `{}` is not a number",
                    path.display(),
                    lineno + 1,
                    field.trim()
                ))
            })?;
            values.push(v);
        }
        let n = values.len() - start;
        match bands {
            None => bands = Some(n),
            Some(b) if b != n => {
                return Err(Error::Shape(format!(
                    "{}:{}: expected {b} columns, found {n}",
                    path.display(),
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != height * width {
        return Err(Error::Shape(format!(
            "{}: expected {} pixel rows, found {rows}",
            path.display(),
            height * width
        )));
    }
    HyperCube::new(height, width, bands.unwrap_or(0), values)
}
