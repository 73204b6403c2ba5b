//! File formats: IDX image/label archives, numeric CSV, and a directory
//! layout for [`DataModel`]s.
//!
//! Matrices are stored as two little-endian `u64` (rows, cols) followed by
//! `rows * cols` little-endian `f64` in row-major order. A model directory
//! holds one such file per matrix plus `manifest.json` with the spec, the
//! spectra and a SHA-256 digest of every matrix file.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataModel, SpectralSpec};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn truncated(path: &Path, detail: impl Into<String>) -> Error {
    Error::TruncatedFile { path: path.to_path_buf(), detail: detail.into() }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| truncated(path, format!("header ends before byte {}", offset + 4)))
}

/// Reads an IDX file with the given magic; returns its dimensions and payload.
fn read_idx(path: &Path, magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let found = be_u32(&bytes, 0, path)?;
    if found != magic {
        return Err(Error::BadMagic { path: path.to_path_buf(), found, expected: magic });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank).map(|i| be_u32(&bytes, 4 + 4 * i, path).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * rank;
    let len: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() < len {
        return Err(truncated(path, format!("expected {len} data bytes, found {}", payload.len())));
    }
    Ok((dims, payload[..len].to_vec()))
}

/// Parses an IDX image file and its label file.
///
/// Images are flattened row-major and scaled to `[0, 1]`.
pub fn ingest_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let (dims, pixels) = read_idx(images_path.as_ref(), IDX_IMAGES_MAGIC)?;
    let (ldims, labels) = read_idx(labels_path.as_ref(), IDX_LABELS_MAGIC)?;
    let (n, p) = (dims[0], dims[1] * dims[2]);
    if ldims[0] != n {
        return Err(Error::CountMismatch { images: n, labels: ldims[0] });
    }
    let raw = DMatrix::from_fn(n, p, |i, j| f64::from(pixels[i * p + j]) / 255.0);
    Ok((raw, labels.into_iter().map(usize::from).collect()))
}

/// Reads a numeric CSV with a header row. `label_column` (a header name)
/// is integer-encoded by order of first appearance; all other columns
/// become features.
pub fn ingest_csv(path: impl AsRef<Path>, label_column: &str) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Format(format!("no column named {label_column:?}")))?;
    let width = headers.len();

    let mut codes: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::RaggedRows { row: row + 1, expected: width, found: record.len() });
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                let next = codes.len();
                labels.push(*codes.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let value = cell.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row: row + 1,
                column: headers[col].to_string(),
                value: cell.to_string(),
            })?;
            values.push(value);
        }
    }
    let n = labels.len();
    Ok((DMatrix::from_row_slice(n, width - 1, &values), labels))
}

/// Writes features plus a trailing `label` column. Values use the shortest
/// representation that round-trips.
pub fn write_csv(path: impl AsRef<Path>, features: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch(format!("{} rows but {} labels", features.nrows(), labels.len())));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..features.ncols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row: Vec<String> = features.row(i).iter().map(|v| v.to_string()).collect();
        row.push(label.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for v in m.row(i).iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<DMatrix<f64>> {
    if bytes.len() < 16 {
        return Err(truncated(path, "missing shape header"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(0) as usize, word(8) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("{}: shape {rows}x{cols} overflows", path.display())))?;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(truncated(path, format!("expected {expected} data bytes, found {}", body.len())));
    }
    let data: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut file = BufWriter::new(fs::File::create(path.as_ref())?);
    file.write_all(&encode_matrix(m))?;
    file.flush()?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_matrix(&bytes, path)
}

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub spec: SpectralSpec,
    pub seed: u64,
    pub kappa: Vec<f64>,
    pub lambda_theta: Vec<f64>,
    pub lambda_gamma: Vec<f64>,
    pub matrices: Vec<(String, MatrixEntry)>,
}

const MATRIX_NAMES: [&str; 6] = ["x_clean", "x_corrupt", "q", "gamma", "theta", "labels"];

/// Saves `model` into `dir` (created if missing).
pub fn save_model(model: &DataModel, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut matrices = Vec::new();
    for name in MATRIX_NAMES {
        let m = match name {
            "x_clean" => &model.x_clean,
            "x_corrupt" => &model.x_corrupt,
            "q" => &model.q,
            "gamma" => &model.gamma,
            "theta" => &model.theta,
            _ => match &model.labels {
                Some(y) => y,
                None => continue,
            },
        };
        let bytes = encode_matrix(m);
        let file = format!("{name}.bin");
        fs::write(dir.join(&file), &bytes)?;
        let entry = MatrixEntry { file, rows: m.nrows(), cols: m.ncols(), sha256: hex::encode(Sha256::digest(&bytes)) };
        matrices.push((name.to_string(), entry));
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        spec: model.spec.clone(),
        seed: model.spec.seed,
        kappa: model.kappa.clone(),
        lambda_theta: model.spec.lambda_theta.clone(),
        lambda_gamma: model.spec.lambda_gamma.clone(),
        matrices,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

/// Loads a model written by [`save_model`], verifying every digest.
pub fn load_model(dir: impl AsRef<Path>) -> Result<DataModel> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported manifest version {}", manifest.version)));
    }
    let mut loaded: HashMap<String, DMatrix<f64>> = HashMap::new();
    for (name, entry) in &manifest.matrices {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path)?;
        let digest = hex::encode(Sha256::digest(&bytes));
        if digest != entry.sha256 {
            return Err(Error::Format(format!("{}: checksum mismatch", path.display())));
        }
        let m = decode_matrix(&bytes, &path)?;
        if (m.nrows(), m.ncols()) != (entry.rows, entry.cols) {
            return Err(Error::Format(format!("{}: shape disagrees with manifest", path.display())));
        }
        loaded.insert(name.clone(), m);
    }
    let mut take = |name: &str| loaded.remove(name).ok_or_else(|| Error::Format(format!("manifest lacks {name}")));
    Ok(DataModel {
        x_clean: take("x_clean")?,
        x_corrupt: take("x_corrupt")?,
        q: take("q")?,
        gamma: take("gamma")?,
        theta: take("theta")?,
        labels: take("labels").ok(),
        spec: manifest.spec,
        kappa: manifest.kappa,
    })
}
