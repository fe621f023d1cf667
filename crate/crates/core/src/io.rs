//! On-disk formats: raw voxel volumes with a text header, JSON score
//! reports, and CSV score tables.
//!
//! A volume file is a MetaImage-style header followed immediately by the
//! raw little-endian payload in x-fastest order:
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! DimSize = 64 64 32
//! ElementSpacing = 1 1 1
//! ElementType = MET_UCHAR
//! ElementDataFile = LOCAL
//! <payload bytes>
//! ```
//!
//! Headers are strict both ways: keys appear in exactly that order on write,
//! and reads reject unknown keys, duplicates, malformed values, and payloads
//! whose length disagrees with `DimSize`. Spacing values survive a
//! write/read round trip bit for bit because they are printed with Rust's
//! shortest-round-trip float formatting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dims, ProbabilityField, Spacing, VoxelGrid};
use crate::region::AnatomyLabelMap;
use crate::report::{AspectsReport, ScorePair, ScorePairTable};

/// Voxel element types that the volume format can carry.
pub trait Element: Copy + sealed::Sealed {
    /// `ElementType` header value for this type.
    const NAME: &'static str;
    /// Payload bytes per voxel.
    const BYTES: usize;
    fn write_payload(data: &[Self], out: &mut Vec<u8>);
    fn read_payload(bytes: &[u8]) -> Vec<Self>;
}

mod sealed {
    pub trait Sealed {}
    impl Sealed for u8 {}
    impl Sealed for f32 {}
}

impl Element for u8 {
    const NAME: &'static str = "MET_UCHAR";
    const BYTES: usize = 1;

    fn write_payload(data: &[Self], out: &mut Vec<u8>) {
        out.extend_from_slice(data);
    }

    fn read_payload(bytes: &[u8]) -> Vec<Self> {
        bytes.to_vec()
    }
}

impl Element for f32 {
    const NAME: &'static str = "MET_FLOAT";
    const BYTES: usize = 4;

    fn write_payload(data: &[Self], out: &mut Vec<u8>) {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_payload(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

/// A volume as read from disk, before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Labels(VoxelGrid<u8>),
    Values(VoxelGrid<f32>),
}

impl Volume {
    pub fn dims(&self) -> Dims {
        match self {
            Volume::Labels(g) => g.dims(),
            Volume::Values(g) => g.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            Volume::Labels(g) => g.spacing(),
            Volume::Values(g) => g.spacing(),
        }
    }

    /// Interprets the volume as a binary mask; values must be 0 or 1.
    pub fn into_binary_mask(self) -> Result<BinaryMask> {
        match self {
            Volume::Labels(g) => BinaryMask::new(g),
            Volume::Values(_) => Err(Error::domain(
                "expected a MET_UCHAR mask volume, found MET_FLOAT",
            )),
        }
    }

    /// Interprets the volume as an anatomy label map.
    pub fn into_anatomy(self) -> Result<AnatomyLabelMap> {
        match self {
            Volume::Labels(g) => AnatomyLabelMap::new(g),
            Volume::Values(_) => Err(Error::domain(
                "expected a MET_UCHAR label volume, found MET_FLOAT",
            )),
        }
    }

    /// Interprets the volume as a probability field; values must lie in
    /// `[0, 1]`.
    pub fn into_probability(self) -> Result<ProbabilityField> {
        match self {
            Volume::Values(g) => ProbabilityField::from_float_grid(&g),
            Volume::Labels(_) => Err(Error::domain(
                "expected a MET_FLOAT probability volume, found MET_UCHAR",
            )),
        }
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> Error {
    Error::InvalidHeaderValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

/// Serializes a grid to the volume format.
pub fn encode_volume<T: Element>(grid: &VoxelGrid<T>) -> Vec<u8> {
    let dims = grid.dims();
    let spacing = grid.spacing();
    let header = format!(
        "ObjectType = Image\nNDims = 3\nDimSize = {} {} {}\nElementSpacing = {} {} {}\nElementType = {}\nElementDataFile = LOCAL\n",
        dims.nx, dims.ny, dims.nz, spacing.sx, spacing.sy, spacing.sz, T::NAME,
    );
    let mut out = header.into_bytes();
    T::write_payload(grid.data(), &mut out);
    out
}

pub fn write_volume<T: Element>(grid: &VoxelGrid<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_volume(grid))?;
    Ok(())
}

/// Header fields collected during the scan, each at most once.
#[derive(Default)]
struct RawHeader {
    object_type: Option<String>,
    ndims: Option<String>,
    dim_size: Option<String>,
    spacing: Option<String>,
    element_type: Option<String>,
}

fn store(slot: &mut Option<String>, key: &str, value: &str) -> Result<()> {
    if slot.is_some() {
        return Err(invalid(key, value, "key appears more than once"));
    }
    *slot = Some(value.to_string());
    Ok(())
}

/// Parses the volume format from raw bytes.
pub fn parse_volume(bytes: &[u8]) -> Result<Volume> {
    let mut raw = RawHeader::default();
    let mut pos = 0usize;
    let payload_start = loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(Error::MissingKey { key: "ElementDataFile" })?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| invalid("header", "<non-UTF-8>", "header line is not UTF-8"))?;
        pos += end + 1;

        let (key, value) = line
            .split_once(" = ")
            .ok_or_else(|| invalid("header", line, "expected `key = value`"))?;
        match key {
            "ObjectType" => store(&mut raw.object_type, key, value)?,
            "NDims" => store(&mut raw.ndims, key, value)?,
            "DimSize" => store(&mut raw.dim_size, key, value)?,
            "ElementSpacing" => store(&mut raw.spacing, key, value)?,
            "ElementType" => store(&mut raw.element_type, key, value)?,
            "ElementDataFile" => {
                if value != "LOCAL" {
                    return Err(invalid(key, value, "only LOCAL payloads are supported"));
                }
                break pos;
            }
            _ => return Err(invalid(key, value, "unknown header key")),
        }
    };

    let object_type = raw.object_type.ok_or(Error::MissingKey { key: "ObjectType" })?;
    if object_type != "Image" {
        return Err(invalid("ObjectType", &object_type, "expected Image"));
    }
    let ndims = raw.ndims.ok_or(Error::MissingKey { key: "NDims" })?;
    if ndims != "3" {
        return Err(invalid("NDims", &ndims, "only 3-dimensional volumes are supported"));
    }

    let dim_size = raw.dim_size.ok_or(Error::MissingKey { key: "DimSize" })?;
    let sizes: Vec<usize> = dim_size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| invalid("DimSize", &dim_size, "expected three positive integers"))?;
    if sizes.len() != 3 {
        return Err(invalid("DimSize", &dim_size, "expected three positive integers"));
    }
    let dims = Dims::new(sizes[0], sizes[1], sizes[2])
        .map_err(|e| invalid("DimSize", &dim_size, &e.to_string()))?;

    let spacing_str = raw.spacing.ok_or(Error::MissingKey { key: "ElementSpacing" })?;
    let parts: Vec<f64> = spacing_str
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| invalid("ElementSpacing", &spacing_str, "expected three numbers"))?;
    if parts.len() != 3 {
        return Err(invalid("ElementSpacing", &spacing_str, "expected three numbers"));
    }
    let spacing = Spacing::new(parts[0], parts[1], parts[2])
        .map_err(|e| invalid("ElementSpacing", &spacing_str, &e.to_string()))?;

    let element_type = raw.element_type.ok_or(Error::MissingKey { key: "ElementType" })?;
    let payload = &bytes[payload_start..];
    match element_type.as_str() {
        "MET_UCHAR" => {
            expect_payload_len(payload.len(), dims.len(), u8::BYTES)?;
            Ok(Volume::Labels(VoxelGrid::new(dims, spacing, u8::read_payload(payload))?))
        }
        "MET_FLOAT" => {
            expect_payload_len(payload.len(), dims.len(), f32::BYTES)?;
            Ok(Volume::Values(VoxelGrid::new(dims, spacing, f32::read_payload(payload))?))
        }
        _ => Err(invalid(
            "ElementType",
            &element_type,
            "expected MET_UCHAR or MET_FLOAT",
        )),
    }
}

fn expect_payload_len(found: usize, voxels: usize, bytes_per: usize) -> Result<()> {
    let expected = voxels * bytes_per;
    if found != expected {
        return Err(Error::PayloadLength { expected, found });
    }
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    parse_volume(&fs::read(path)?)
}

/// Serializes a report as indented JSON; numbers print with enough digits to
/// round-trip exactly.
pub fn report_to_json(report: &AspectsReport) -> Result<String> {
    report.validate()?;
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates a report from JSON text.
pub fn report_from_json(text: &str) -> Result<AspectsReport> {
    let report: AspectsReport = serde_json::from_str(text)?;
    report.validate()?;
    Ok(report)
}

pub fn write_report(report: &AspectsReport, path: &Path) -> Result<()> {
    fs::write(path, report_to_json(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<AspectsReport> {
    report_from_json(&fs::read_to_string(path)?)
}

const TABLE_HEADER: [&str; 3] = ["scan_id", "score_a", "score_b"];

/// Writes a score table as CSV with a `scan_id,score_a,score_b` header.
pub fn write_score_table(table: &ScorePairTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(table_err)?;
    w.write_record(TABLE_HEADER).map_err(table_err)?;
    for row in table.rows() {
        w.write_record([
            row.scan_id.as_str(),
            &row.score_a.to_string(),
            &row.score_b.to_string(),
        ])
        .map_err(table_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a score table, insisting on the exact header and on scores in
/// `0..=10`.
pub fn read_score_table(path: &Path) -> Result<ScorePairTable> {
    let mut r = csv::Reader::from_path(path).map_err(table_err)?;
    let headers = r.headers().map_err(table_err)?;
    if headers != TABLE_HEADER.as_slice() {
        return Err(Error::Table(format!(
            "expected header scan_id,score_a,score_b, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(table_err)?;
        let line = i + 2; // 1-based, after the header
        if record.len() != 3 {
            return Err(Error::Table(format!(
                "line {line}: expected 3 fields, found {}",
                record.len()
            )));
        }
        let parse_score = |field: &str, name: &str| -> Result<u8> {
            field.parse::<u8>().map_err(|_| {
                Error::Table(format!("line {line}: {name} {field:?} is not a score"))
            })
        };
        rows.push(ScorePair {
            scan_id: record[0].to_string(),
            score_a: parse_score(&record[1], "score_a")?,
            score_b: parse_score(&record[2], "score_b")?,
        });
    }
    ScorePairTable::new(rows)
}

fn table_err(e: csv::Error) -> Error {
    Error::Table(e.to_string())
}
