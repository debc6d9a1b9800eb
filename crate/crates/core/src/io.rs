//! File formats.
//!
//! # EMBF container
//!
//! Every binary file (embedding sequences, sort profiles, factorized maps)
//! is a 24-byte little-endian header followed by a row-major `T x D` matrix
//! of little-endian `f32`:
//!
//! | offset | size | field                                                  |
//! |--------|------|--------------------------------------------------------|
//! | 0      | 4    | magic `EMBF`                                           |
//! | 4      | 2    | version, `u16` = 1                                     |
//! | 6      | 2    | payload kind, `u16`: 0 sequence, 1 profile, 2 map      |
//! | 8      | 4    | `T`, `u32`                                             |
//! | 12     | 4    | `D`, `u32`                                             |
//! | 16     | 1    | dtype, `u8`: 0 = f32 LE                                |
//! | 17     | 7    | reserved, zero                                         |
//!
//! Storage is 32-bit; everything is widened to `f64` on read and all
//! computation happens in `f64`. Values are narrowed back to `f32` only
//! when written.
//!
//! Payload layouts by kind:
//!
//! * **sequence** (0): `T` frames of `D` values.
//! * **profile** (1): `T = 2`; row 0 holds the per-dimension std, row 1 the
//!   descending-std permutation as integral floats.
//! * **map** (2): `T = 4 + K` for block size `K`; row 0 permutation, row 1
//!   source means, row 2 target means, row 3 affine offsets (rows 1-3 in
//!   sorted-dimension order, block after block), then `K` rows where
//!   column `b*K + c` of row `4 + r` is entry `(r, c)` of block `b`'s
//!   matrix.
//!
//! Writes go to a temporary file in the destination directory and are
//! renamed into place, so a failed run never leaves a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::stats::{EmbeddingSequence, SortProfile};
use crate::transport::{AffineMap, FactorizedMap};

pub const MAGIC: [u8; 4] = *b"EMBF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const DTYPE_F32_LE: u8 = 0;

/// What an EMBF payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Sequence = 0,
    Profile = 1,
    Map = 2,
}

impl PayloadKind {
    fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(PayloadKind::Sequence),
            1 => Some(PayloadKind::Profile),
            2 => Some(PayloadKind::Map),
            _ => None,
        }
    }
}

/// Structured decode failures. Offsets are byte offsets into the file.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("truncated header: expected {expected} bytes, got {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("bad magic at offset 0: {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {found} at offset 4 (expected {VERSION})")]
    UnsupportedVersion { found: u16 },
    #[error("unknown payload kind {found} at offset 6")]
    UnknownPayloadKind { found: u16 },
    #[error("payload kind {found:?} where {expected:?} was expected (offset 6)")]
    WrongPayloadKind { expected: PayloadKind, found: PayloadKind },
    #[error("zero-sized shape {rows}x{cols} at offset 8")]
    EmptyShape { rows: u32, cols: u32 },
    #[error("unsupported dtype code {found} at offset 16")]
    UnsupportedDtype { found: u8 },
    #[error("non-zero reserved byte at offset {offset}")]
    NonzeroReserved { offset: usize },
    #[error("payload size {rows}x{cols} overflows")]
    SizeOverflow { rows: u32, cols: u32 },
    #[error("truncated payload: expected {expected} bytes in total, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing data: expected {expected} bytes in total, got {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("non-finite value at offset {offset} (row {row}, column {col})")]
    NonFinite { offset: usize, row: usize, col: usize },
    #[error("value {value} at row {row}, column {col} does not fit in f32")]
    Unrepresentable { row: usize, col: usize, value: f64 },
    #[error("invalid payload at offset {offset}: {message}")]
    InvalidPayload { offset: usize, message: String },
}

/// A decoded EMBF file before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub kind: PayloadKind,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn offset_of(&self, row: usize, col: usize) -> usize {
        HEADER_LEN + 4 * (row * self.cols + col)
    }
}

/// Serializes a tensor. Panics if `data.len() != rows * cols`.
pub fn encode(t: &RawTensor) -> Vec<u8> {
    assert_eq!(t.data.len(), t.rows * t.cols, "tensor shape does not match data");
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.kind as u16).to_le_bytes());
    out.extend_from_slice(&(t.rows as u32).to_le_bytes());
    out.extend_from_slice(&(t.cols as u32).to_le_bytes());
    out.push(DTYPE_F32_LE);
    out.extend_from_slice(&[0u8; 7]);
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses and validates an EMBF byte buffer, including finiteness of every
/// value.
pub fn decode(bytes: &[u8]) -> std::result::Result<RawTensor, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedHeader {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);

    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic });
    }
    let version = u16_at(4);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let kind_code = u16_at(6);
    let kind = PayloadKind::from_code(kind_code).ok_or(FormatError::UnknownPayloadKind { found: kind_code })?;
    let (rows, cols) = (u32_at(8), u32_at(12));
    if rows == 0 || cols == 0 {
        return Err(FormatError::EmptyShape { rows, cols });
    }
    if bytes[16] != DTYPE_F32_LE {
        return Err(FormatError::UnsupportedDtype { found: bytes[16] });
    }
    if let Some(i) = bytes[17..HEADER_LEN].iter().position(|&b| b != 0) {
        return Err(FormatError::NonzeroReserved { offset: 17 + i });
    }

    let expected = (rows as usize)
        .checked_mul(cols as usize)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(FormatError::SizeOverflow { rows, cols })?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            expected,
            actual: bytes.len(),
        });
    }

    let cols = cols as usize;
    let mut data = Vec::with_capacity((expected - HEADER_LEN) / 4);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                offset: HEADER_LEN + 4 * i,
                row: i / cols,
                col: i % cols,
            });
        }
        data.push(v);
    }
    Ok(RawTensor {
        kind,
        rows: rows as usize,
        cols,
        data,
    })
}

fn narrow(values: &[f64], cols: usize) -> std::result::Result<Vec<f32>, FormatError> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = v as f32;
            if f.is_finite() {
                Ok(f)
            } else {
                Err(FormatError::Unrepresentable {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                })
            }
        })
        .collect()
}

fn expect_kind(t: &RawTensor, expected: PayloadKind) -> std::result::Result<(), FormatError> {
    if t.kind != expected {
        return Err(FormatError::WrongPayloadKind { expected, found: t.kind });
    }
    Ok(())
}

fn decode_permutation(t: &RawTensor, row: usize) -> std::result::Result<Vec<usize>, FormatError> {
    let mut seen = vec![false; t.cols];
    t.row(row)
        .iter()
        .enumerate()
        .map(|(col, &v)| {
            let idx = v as usize;
            if v < 0.0 || v.fract() != 0.0 || idx >= t.cols || seen[idx] {
                return Err(FormatError::InvalidPayload {
                    offset: t.offset_of(row, col),
                    message: format!("{v} is not a valid permutation entry"),
                });
            }
            seen[idx] = true;
            Ok(idx)
        })
        .collect()
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_raw(path: &Path) -> Result<RawTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}

pub fn sequence_to_tensor(x: &EmbeddingSequence) -> Result<RawTensor> {
    Ok(RawTensor {
        kind: PayloadKind::Sequence,
        rows: x.frames(),
        cols: x.dim(),
        data: narrow(x.as_slice(), x.dim())?,
    })
}

pub fn tensor_to_sequence(t: &RawTensor) -> Result<EmbeddingSequence> {
    expect_kind(t, PayloadKind::Sequence)?;
    EmbeddingSequence::new(t.data.iter().map(|&v| v as f64).collect(), t.rows, t.cols)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    tensor_to_sequence(&read_raw(path.as_ref())?)
}

pub fn write_embeddings(path: impl AsRef<Path>, x: &EmbeddingSequence) -> Result<()> {
    write_atomic(path.as_ref(), &encode(&sequence_to_tensor(x)?))
}

pub fn profile_to_tensor(p: &SortProfile) -> Result<RawTensor> {
    p.validate()?;
    let d = p.dim();
    let mut values = p.std.clone();
    values.extend(p.permutation.iter().map(|&i| i as f64));
    Ok(RawTensor {
        kind: PayloadKind::Profile,
        rows: 2,
        cols: d,
        data: narrow(&values, d)?,
    })
}

/// Decodes a profile. The file does not store a source tag; `source_tag`
/// is attached by the caller.
pub fn tensor_to_profile(t: &RawTensor, source_tag: String) -> Result<SortProfile> {
    expect_kind(t, PayloadKind::Profile)?;
    if t.rows != 2 {
        return Err(FormatError::InvalidPayload {
            offset: 8,
            message: format!("profile must have 2 rows, found {}", t.rows),
        }
        .into());
    }
    let std: Vec<f64> = t.row(0).iter().map(|&v| v as f64).collect();
    if let Some(col) = std.iter().position(|&s| s < 0.0) {
        return Err(FormatError::InvalidPayload {
            offset: t.offset_of(0, col),
            message: "negative standard deviation".into(),
        }
        .into());
    }
    let permutation = decode_permutation(t, 1)?;
    let profile = SortProfile {
        std,
        permutation,
        source_tag,
    };
    profile.validate()?;
    Ok(profile)
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<SortProfile> {
    let path = path.as_ref();
    tensor_to_profile(&read_raw(path)?, format!("file:{}", path.display()))
}

pub fn write_profile(path: impl AsRef<Path>, p: &SortProfile) -> Result<()> {
    write_atomic(path.as_ref(), &encode(&profile_to_tensor(p)?))
}

pub fn map_to_tensor(map: &FactorizedMap) -> Result<RawTensor> {
    let d = map.dim();
    let k = map.block_dim();
    let rows = 4 + k;
    let mut values = vec![0.0; rows * d];
    for (i, &p) in map.permutation().iter().enumerate() {
        values[i] = p as f64;
    }
    for b in 0..map.num_blocks() {
        for c in 0..k {
            let col = b * k + c;
            values[d + col] = map.source_means()[b][c];
            values[2 * d + col] = map.target_means()[b][c];
            values[3 * d + col] = map.blocks()[b].offset()[c];
            for r in 0..k {
                values[(4 + r) * d + col] = map.blocks()[b].matrix()[(r, c)];
            }
        }
    }
    Ok(RawTensor {
        kind: PayloadKind::Map,
        rows,
        cols: d,
        data: narrow(&values, d)?,
    })
}

pub fn tensor_to_map(t: &RawTensor) -> Result<FactorizedMap> {
    expect_kind(t, PayloadKind::Map)?;
    let d = t.cols;
    if t.rows < 5 || !d.is_multiple_of(t.rows - 4) {
        return Err(FormatError::InvalidPayload {
            offset: 8,
            message: format!("{} rows do not describe a block size dividing {d}", t.rows),
        }
        .into());
    }
    let k = t.rows - 4;
    let permutation = decode_permutation(t, 0)?;
    let segment = |row: usize, b: usize| DVector::from_iterator(k, t.row(row)[b * k..(b + 1) * k].iter().map(|&v| v as f64));
    let mut blocks = Vec::new();
    let mut source_means = Vec::new();
    let mut target_means = Vec::new();
    for b in 0..d / k {
        let matrix = DMatrix::from_fn(k, k, |r, c| t.row(4 + r)[b * k + c] as f64);
        blocks.push(AffineMap::from_stored(matrix, segment(3, b)).map_err(|e| {
            Error::Format(FormatError::InvalidPayload {
                offset: t.offset_of(4, b * k),
                message: format!("block {b}: {e}"),
            })
        })?);
        source_means.push(segment(1, b));
        target_means.push(segment(2, b));
    }
    FactorizedMap::from_parts(k, permutation, blocks, source_means, target_means)
}

pub fn read_map(path: impl AsRef<Path>) -> Result<FactorizedMap> {
    tensor_to_map(&read_raw(path.as_ref())?)
}

pub fn write_map(path: impl AsRef<Path>, map: &FactorizedMap) -> Result<()> {
    write_atomic(path.as_ref(), &encode(&map_to_tensor(map)?))
}

/// Formats with 6 significant digits, like C's `%g`.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders `(index, value)` rows as a tab-separated table, preceded by
/// `# key: value` metadata comments.
pub fn index_value_table(meta: &[(&str, String)], header: (&str, &str), rows: impl IntoIterator<Item = (usize, f64)>) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    let _ = writeln!(out, "{}\t{}", header.0, header.1);
    for (i, v) in rows {
        let _ = writeln!(out, "{i}\t{}", fmt_sig(v));
    }
    out
}

/// A batch conversion job: one line `source<TAB>reference<TAB>output`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub source: String,
    pub reference: String,
    pub output: String,
}

/// Parses a manifest. Blank lines and `#` comments are skipped; fields are
/// tab-separated, or whitespace-separated when no tab is present.
pub fn parse_manifest(text: &str, path: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                message: format!("expected 3 fields (source, reference, output), found {}", fields.len()),
            });
        }
        entries.push(ManifestEntry {
            source: fields[0].into(),
            reference: fields[1].into(),
            output: fields[2].into(),
        });
    }
    Ok(entries)
}

/// One line of a `score` input file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreRecord {
    /// `method, pair_id, reference text, hypothesis text, converted-speaker
    /// vector path, reference-speaker vector path`.
    Raw {
        method: String,
        pair_id: String,
        reference_text: String,
        hypothesis_text: String,
        converted_vector: String,
        reference_vector: String,
    },
    /// `method, pair_id, wer, cer, sim` with rates already computed (as
    /// fractions in [0, 1]).
    Precomputed {
        method: String,
        pair_id: String,
        wer: f64,
        cer: f64,
        sim: f64,
    },
}

/// Parses tab-separated score records (6 fields raw, 5 fields precomputed).
pub fn parse_score_records(text: &str, path: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.into(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        match f.len() {
            6 => out.push(ScoreRecord::Raw {
                method: f[0].trim().into(),
                pair_id: f[1].trim().into(),
                reference_text: f[2].into(),
                hypothesis_text: f[3].into(),
                converted_vector: f[4].trim().into(),
                reference_vector: f[5].trim().into(),
            }),
            5 => {
                let num = |s: &str, name: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| err(format!("{name} '{}' is not a number", s.trim())))
                };
                out.push(ScoreRecord::Precomputed {
                    method: f[0].trim().into(),
                    pair_id: f[1].trim().into(),
                    wer: num(f[2], "wer")?,
                    cer: num(f[3], "cer")?,
                    sim: num(f[4], "sim")?,
                });
            }
            k => return Err(err(format!("expected 5 or 6 tab-separated fields, found {k}"))),
        }
    }
    Ok(out)
}

/// Reads a speaker vector: the first frame of an EMBF sequence file, or
/// whitespace-separated numbers in a text file.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&MAGIC) {
        let seq = tensor_to_sequence(&decode(&bytes)?)?;
        return Ok(seq.frame(0).to_vec());
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: "neither EMBF nor UTF-8 text".into(),
    })?;
    let values = text
        .split_whitespace()
        .map(|tok| tok.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: "vector must be non-empty and finite".into(),
        });
    }
    Ok(values)
}
