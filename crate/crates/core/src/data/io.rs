//! Raster and label file formats.
//!
//! Native raster file (little-endian):
//!
//! ```text
//! magic    b"RTRS"
//! version  u16 (1)
//! channels u32, height u32, width u32
//! dtype    u8  (1 = float32)
//! flags    u8  (bit 0: mask section follows the payload)
//! payload  channels*height*width f32, band-sequential
//! mask     height*width u8 (0 = not evaluable), only if flagged
//! ```
//!
//! The flat-array alternative is a bare band-sequential f32 file next to a
//! `<file>.hdr` text sidecar with `channels`, `height`, `width` and `dtype`
//! keys. Label sidecars hold one `raster_id row col label` record per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RTRS";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;
const FLAG_MASK: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 3 + 1 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RasterFormat {
    NativeBinary,
    FlatArrayWithSidecar,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn encode_native(raster: &Raster) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + raster.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(raster.channels as u32).to_le_bytes());
    out.extend_from_slice(&(raster.height as u32).to_le_bytes());
    out.extend_from_slice(&(raster.width as u32).to_le_bytes());
    out.push(DTYPE_F32);
    out.push(if raster.mask.is_some() { FLAG_MASK } else { 0 });
    for v in &raster.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(mask) = &raster.mask {
        out.extend(mask.iter().map(|&m| m as u8));
    }
    out
}

pub fn decode_native(id: &str, bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{id}: file shorter than the {HEADER_LEN}-byte header")));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{id}: bad magic")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("{id}: unsupported version {version}")));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (c, h, w) = (dim(6), dim(10), dim(14));
    let (dtype, flags) = (bytes[18], bytes[19]);
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("{id}: unsupported dtype code {dtype}")));
    }
    if flags & !FLAG_MASK != 0 {
        return Err(Error::Format(format!("{id}: unknown flags {flags:#x}")));
    }
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!("{id}: zero dimension in header {c}x{h}x{w}")));
    }
    let n = c * h * w;
    let has_mask = flags & FLAG_MASK != 0;
    let expected = n * 4 + if has_mask { h * w } else { 0 };
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Integrity(format!(
            "{id}: header declares {c}x{h}x{w} ({expected} payload bytes) but file has {}",
            body.len()
        )));
    }
    let values = body[..n * 4]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let raster = Raster::new(id, c, h, w, values)?;
    if has_mask {
        let mask = body[n * 4..]
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Format(format!("{id}: mask byte {other} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        raster.with_mask(mask)
    } else {
        Ok(raster)
    }
}

pub fn write_native(raster: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_native(raster)).map_err(|e| Error::io(path, e))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

pub fn write_flat(raster: &Raster, path: &Path) -> Result<()> {
    let payload: Vec<u8> = raster.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let header = format!(
        "channels = {}\nheight = {}\nwidth = {}\ndtype = float32\ninterleave = bsq\n",
        raster.channels, raster.height, raster.width
    );
    let hdr = sidecar_path(path);
    std::fs::write(&hdr, header).map_err(|e| Error::io(&hdr, e))
}

fn read_flat(path: &Path) -> Result<Raster> {
    let id = stem(path);
    let hdr_path = sidecar_path(path);
    let text = std::fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let mut keys = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("{id}: sidecar line without '=': {line}")))?;
        keys.insert(k.trim().to_string(), v.trim().to_string());
    }
    let dim = |k: &str| -> Result<usize> {
        keys.get(k)
            .ok_or_else(|| Error::Format(format!("{id}: sidecar lacks `{k}`")))?
            .parse()
            .map_err(|_| Error::Format(format!("{id}: sidecar `{k}` is not an integer")))
    };
    let (c, h, w) = (dim("channels")?, dim("height")?, dim("width")?);
    match keys.get("dtype").map(String::as_str) {
        Some("float32") | None => {}
        Some(other) => return Err(Error::Format(format!("{id}: unsupported dtype {other}"))),
    }
    if let Some(il) = keys.get("interleave") {
        if il != "bsq" {
            return Err(Error::Format(format!("{id}: unsupported interleave {il}")));
        }
    }
    let bytes = read_file(path)?;
    if bytes.len() != c * h * w * 4 {
        return Err(Error::Integrity(format!(
            "{id}: sidecar declares {c}x{h}x{w} ({} bytes) but file has {}",
            c * h * w * 4,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Raster::new(id, c, h, w, values)
}

/// Read a raster in its original units; the raster id is the file stem.
pub fn load_raster(path: &Path, format: RasterFormat) -> Result<Raster> {
    match format {
        RasterFormat::NativeBinary => decode_native(&stem(path), &read_file(path)?),
        RasterFormat::FlatArrayWithSidecar => read_flat(path),
    }
}

/// One line of a label sidecar.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabelRecord {
    pub raster_id: String,
    pub row: usize,
    pub col: usize,
    pub label: usize,
}

pub fn format_label_records(records: &[LabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        writeln!(out, "{} {} {} {}", r.raster_id, r.row, r.col, r.label).expect("string write");
    }
    out
}

pub fn parse_label_records(text: &str) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "label line {}: expected `raster_id row col label`, got {line:?}",
                lineno + 1
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("label line {}: {s:?} is not a non-negative integer", lineno + 1)))
        };
        out.push(LabelRecord {
            raster_id: fields[0].to_string(),
            row: num(fields[1])?,
            col: num(fields[2])?,
            label: num(fields[3])?,
        });
    }
    Ok(out)
}

pub fn read_label_records(path: &Path) -> Result<Vec<LabelRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_records(&text)
}
