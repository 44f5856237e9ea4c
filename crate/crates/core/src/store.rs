//! On-disk formats.
//!
//! A dataset is a directory holding `manifest.json`, `data.f32` (raw
//! little-endian `f32`, samples in index order, each row-major) and
//! `labels.csv` (`index,identity,behavior`). Pair sets are `pairs.csv`
//! (`idx_a,idx_b,y_s,id_label`), reports are JSON, confusion matrices CSV.
//! Every reader re-validates what it loads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::SignalDataset;
use crate::error::{Error, Result};
use crate::pairing::{PairRecord, NO_IDENTITY};
use crate::preprocess::Normalizer;
use crate::validators::EvalReport;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.f32";
pub const LABELS_FILE: &str = "labels.csv";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub sample_shape: Vec<usize>,
    pub num_samples: usize,
    pub dtype: String,
    pub data_file: String,
    pub labels_file: String,
    pub provenance: Value,
    pub seed: Option<u64>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f32_from_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect()
}

pub fn write_dataset(ds: &SignalDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        sample_shape: ds.sample_shape().to_vec(),
        num_samples: ds.len(),
        dtype: DTYPE.into(),
        data_file: DATA_FILE.into(),
        labels_file: LABELS_FILE.into(),
        provenance: ds.provenance.clone(),
        seed: ds.seed,
    };
    write_file(&dir.join(DATA_FILE), &f32_bytes(ds.data()))?;
    let mut labels = String::from("index,identity,behavior\n");
    for (i, (id, beh)) in ds
        .identity_labels()
        .iter()
        .zip(ds.behavior_labels())
        .enumerate()
    {
        labels.push_str(&format!("{i},{id},{beh}\n"));
    }
    write_file(&dir.join(LABELS_FILE), labels.as_bytes())?;
    write_file(&dir.join(MANIFEST_FILE), &to_json_bytes(&manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let raw: Value = serde_json::from_slice(&read_file(&path)?)?;
    // Check the version before the shape so future layouts fail with the right error.
    if let Some(v) = raw.get("version").and_then(Value::as_u64) {
        if v != MANIFEST_VERSION as u64 {
            return Err(Error::Version {
                found: v as u32,
                supported: MANIFEST_VERSION,
            });
        }
    }
    let m: DatasetManifest = serde_json::from_value(raw)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.dtype != DTYPE {
        return Err(Error::Format(format!(
            "unsupported dtype '{}' (expected {DTYPE})",
            m.dtype
        )));
    }
    Ok(m)
}

fn parse_cell<T: std::str::FromStr>(cell: &str, row: usize, column: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cell.trim().parse().map_err(|e: T::Err| Error::Parse {
        row,
        column,
        detail: format!("'{cell}': {e}"),
    })
}

/// Opens a headered CSV with a fixed header, returning data records with their
/// 1-based row numbers (the header is row 1).
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let bytes = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Format(format!(
            "{}: header is {found:?}, expected {header:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        out.push((i + 2, rec?));
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<SignalDataset> {
    let m = read_manifest(dir)?;
    let data_path = dir.join(&m.data_file);
    let per: usize = m.sample_shape.iter().product();
    let expected = (m.num_samples * per * 4) as u64;
    let actual = fs::metadata(&data_path)
        .map_err(|e| Error::io(&data_path, e))?
        .len();
    if actual != expected {
        return Err(Error::SizeMismatch {
            file: data_path,
            expected,
            actual,
        });
    }
    let data = f32_from_bytes(&read_file(&data_path)?);
    let labels_path = dir.join(&m.labels_file);
    let rows = read_csv(&labels_path, &["index", "identity", "behavior"])?;
    if rows.len() != m.num_samples {
        return Err(Error::Integrity(format!(
            "{} has {} label rows, manifest declares {} samples",
            labels_path.display(),
            rows.len(),
            m.num_samples
        )));
    }
    let mut identity = Vec::with_capacity(rows.len());
    let mut behavior = Vec::with_capacity(rows.len());
    for (expected_index, (row, rec)) in rows.iter().enumerate() {
        let index: usize = parse_cell(&rec[0], *row, 1)?;
        if index != expected_index {
            return Err(Error::Integrity(format!(
                "{} row {row}: index {index}, expected {expected_index}",
                labels_path.display()
            )));
        }
        identity.push(parse_cell(&rec[1], *row, 2)?);
        behavior.push(parse_cell(&rec[2], *row, 3)?);
    }
    Ok(SignalDataset::new(m.sample_shape, data, identity, behavior)?.with_provenance(m.provenance, m.seed))
}

pub fn write_pairs(records: &[PairRecord], path: &Path) -> Result<()> {
    let mut out = String::from("idx_a,idx_b,y_s,id_label\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.idx_a, r.idx_b, r.y_s, r.id_label));
    }
    write_file(path, out.as_bytes())
}

/// Reads `pairs.csv`, enforcing `y_s` in {0, 1} and `id_label = -1` on dissimilar rows.
pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let rows = read_csv(path, &["idx_a", "idx_b", "y_s", "id_label"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        let r = PairRecord {
            idx_a: parse_cell(&rec[0], row, 1)?,
            idx_b: parse_cell(&rec[1], row, 2)?,
            y_s: parse_cell(&rec[2], row, 3)?,
            id_label: parse_cell(&rec[3], row, 4)?,
        };
        if r.y_s > 1 {
            return Err(Error::Integrity(format!(
                "{} row {row}: y_s = {} is not 0 or 1",
                path.display(),
                r.y_s
            )));
        }
        if r.y_s == 1 && r.id_label != NO_IDENTITY {
            return Err(Error::Integrity(format!(
                "{} row {row}: dissimilar pair carries identity label {}",
                path.display(),
                r.id_label
            )));
        }
        if r.y_s == 0 && r.id_label < 0 {
            return Err(Error::Integrity(format!(
                "{} row {row}: similar pair has no identity label",
                path.display()
            )));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_file(path, &to_json_bytes(value)?)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    report.validate()?;
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let r: EvalReport = read_json(path)?;
    r.validate()?;
    Ok(r)
}

/// Rows are actual classes, columns predicted classes.
pub fn write_confusion_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = String::from("actual");
    for c in 0..report.num_classes {
        out.push_str(&format!(",pred_{c}"));
    }
    out.push('\n');
    for (c, row) in report.confusion.iter().enumerate() {
        out.push_str(&c.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NormalizerHeader {
    sample_shape: Vec<usize>,
    /// Binary file with all minima followed by all maxima.
    extrema_file: String,
}

/// Writes `<stem>.json` and `<stem>.f32` into `dir`.
pub fn write_normalizer(norm: &Normalizer, dir: &Path, stem: &str) -> Result<()> {
    let bin = format!("{stem}.f32");
    let mut values = norm.x_min.clone();
    values.extend_from_slice(&norm.x_max);
    write_file(&dir.join(&bin), &f32_bytes(&values))?;
    write_json(
        &NormalizerHeader {
            sample_shape: norm.sample_shape.clone(),
            extrema_file: bin,
        },
        &dir.join(format!("{stem}.json")),
    )
}

pub fn read_normalizer(dir: &Path, stem: &str) -> Result<Normalizer> {
    let header: NormalizerHeader = read_json(&dir.join(format!("{stem}.json")))?;
    let path = dir.join(&header.extrema_file);
    let len: usize = header.sample_shape.iter().product();
    let bytes = read_file(&path)?;
    if bytes.len() != len * 8 {
        return Err(Error::SizeMismatch {
            file: path,
            expected: (len * 8) as u64,
            actual: bytes.len() as u64,
        });
    }
    let values = f32_from_bytes(&bytes);
    let (x_min, x_max) = values.split_at(len);
    if x_min.iter().zip(x_max).any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::Integrity(format!(
            "{}: a minimum exceeds its maximum",
            path.display()
        )));
    }
    Ok(Normalizer {
        sample_shape: header.sample_shape,
        x_min: x_min.to_vec(),
        x_max: x_max.to_vec(),
    })
}

/// Reads a header-less CSV whose rows are a flattened sample followed by the
/// identity and behavior labels.
pub fn import_csv(path: &Path, shape: &[usize]) -> Result<SignalDataset> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Config(format!("import shape must have positive dims, got {shape:?}")));
    }
    let per: usize = shape.iter().product();
    let width = per + 2;
    let bytes = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut data = Vec::new();
    let mut identity = Vec::new();
    let mut behavior = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != width {
            return Err(Error::Format(format!(
                "{} row {row}: {} columns, expected {width} ({per} values + 2 labels)",
                path.display(),
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().take(per).enumerate() {
            let v: f32 = parse_cell(cell, row, j + 1)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    detail: format!("non-finite value '{cell}'"),
                });
            }
            data.push(v);
        }
        identity.push(parse_cell(&rec[per], row, per + 1)?);
        behavior.push(parse_cell(&rec[per + 1], row, per + 2)?);
    }
    let source: PathBuf = path.to_path_buf();
    Ok(SignalDataset::new(shape.to_vec(), data, identity, behavior)?.with_provenance(
        json!({ "generator": "import_csv", "source": source.display().to_string() }),
        None,
    ))
}

/// Inverse of [`import_csv`].
pub fn export_csv(ds: &SignalDataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for i in 0..ds.len() {
        let mut line = String::new();
        for v in ds.sample(i) {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&format!(
            "{},{}\n",
            ds.identity_labels()[i],
            ds.behavior_labels()[i]
        ));
        out.write_all(line.as_bytes()).expect("writing to a Vec");
    }
    write_file(path, &out)
}
