//! Deterministic dataset output: CSV tables of floats printed with 17
//! significant digits (so a read-back is bit-exact), a JSON sidecar per
//! table carrying the generating configuration and its SHA-256 hash, and a
//! binary cache for dense eigendecompositions keyed by the model hash.

use std::fs;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::hamiltonian::ModelSpec;
use crate::motion::{diagonalize_h0, EigenSystem};
use crate::{Error, Result};

/// SHA-256 hex digest of the canonical JSON form of a configuration.
/// Struct fields serialize in declaration order and unset optional fields
/// are omitted, so equal configurations hash equally.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A rectangular table of named float columns, the common shape of every
/// emitted dataset (spectra in long form, level curves, critical curves,
/// scaling points, densities).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }
}

/// Long-form spectrum rows `(t, omega_b, p)`, time-major.
pub fn spectrum_table(times: &[f64], omega: &[f64], p: &ndarray::Array2<f64>) -> Table {
    assert_eq!(p.shape(), [times.len(), omega.len()]);
    let mut table = Table::new(&["t", "omega_b", "p"]);
    for (i, &t) in times.iter().enumerate() {
        for (j, &w) in omega.iter().enumerate() {
            table.push(vec![t, w, p[[i, j]]]);
        }
    }
    table
}

/// Long-form density rows `(t, x, density)`, time-major.
pub fn density_table(times: &[f64], xs: &[f64], frames: &[Vec<f64>]) -> Table {
    assert_eq!(times.len(), frames.len());
    let mut table = Table::new(&["t", "x", "density"]);
    for (i, &t) in times.iter().enumerate() {
        assert_eq!(frames[i].len(), xs.len());
        for (j, &x) in xs.iter().enumerate() {
            table.push(vec![t, x, frames[i][j]]);
        }
    }
    table
}

fn guard_overwrite(path: &Path, overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(Error::Dataset(format!(
            "refusing to overwrite existing {}; pass the overwrite flag to replace it",
            path.display()
        )));
    }
    Ok(())
}

/// Writes the table as UTF-8 CSV with LF line endings and every value
/// printed as `{:.16e}`, plus a `.json` sidecar holding the configuration,
/// its hash, and the table shape. Refuses to replace existing files unless
/// `overwrite` is set. Returns the sidecar path.
pub fn write_table<T: Serialize>(
    path: &Path,
    table: &Table,
    config: &T,
    overwrite: bool,
) -> Result<PathBuf> {
    let sidecar = path.with_extension("json");
    guard_overwrite(path, overwrite)?;
    guard_overwrite(&sidecar, overwrite)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(fs::File::create(path)?));
    writer
        .write_record(&table.columns)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    for row in &table.rows {
        let record: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writer.write_record(&record).map_err(|e| Error::Dataset(e.to_string()))?;
    }
    writer.flush()?;

    let meta = serde_json::json!({
        "config_hash": config_hash(config)?,
        "config": serde_json::to_value(config).map_err(|e| Error::Dataset(e.to_string()))?,
        "columns": table.columns,
        "rows": table.rows.len(),
    });
    write_json(&sidecar, &meta, true)?;
    Ok(sidecar)
}

/// Writes a JSON document with a trailing newline, guarded like
/// [`write_table`].
pub fn write_json<T: Serialize>(path: &Path, value: &T, overwrite: bool) -> Result<()> {
    guard_overwrite(path, overwrite)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut body =
        serde_json::to_string_pretty(value).map_err(|e| Error::Dataset(e.to_string()))?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

/// Reads a CSV written by [`write_table`] back into a [`Table`].
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Dataset(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(e.to_string()))?;
        let mut row = Vec::with_capacity(columns.len());
        for field in record.iter() {
            row.push(field.parse::<f64>().map_err(|e| {
                Error::Dataset(format!("row {}: bad float {field:?}: {e}", line + 1))
            })?);
        }
        if row.len() != columns.len() {
            return Err(Error::Dataset(format!("row {} width mismatch", line + 1)));
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// SHA-256 hex digest of a model description.
pub fn model_hash(spec: &ModelSpec) -> Result<String> {
    config_hash(spec)
}

const EIGEN_MAGIC: &[u8; 8] = b"FLEIG001";

/// Diagonalizes the moving-atom reference generator, memoized on disk. The
/// cache file name and an embedded digest are both derived from the full
/// model description, so any parameter change misses and recomputes; a
/// stale or damaged file is silently replaced.
pub fn cached_diagonalize_h0(spec: &ModelSpec, cache_dir: &Path) -> Result<EigenSystem> {
    let hash = model_hash(spec)?;
    let path = cache_dir.join(format!("eigh-{}.bin", &hash[..16]));
    if let Some(eigen) = try_load_eigen(&path, &hash, spec) {
        return Ok(eigen);
    }
    let eigen = diagonalize_h0(spec)?;
    fs::create_dir_all(cache_dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(EIGEN_MAGIC)?;
        w.write_all(hash.as_bytes())?;
        let dim = eigen.energies.len() as u64;
        w.write_all(&dim.to_le_bytes())?;
        for &e in &eigen.energies {
            w.write_all(&e.to_le_bytes())?;
        }
        for &v in eigen.states.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(eigen)
}

fn try_load_eigen(path: &Path, hash: &str, spec: &ModelSpec) -> Option<EigenSystem> {
    let mut r = BufReader::new(fs::File::open(path).ok()?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).ok()?;
    if &magic != EIGEN_MAGIC {
        return None;
    }
    let mut stored_hash = vec![0u8; hash.len()];
    r.read_exact(&mut stored_hash).ok()?;
    if stored_hash != hash.as_bytes() {
        return None;
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8).ok()?;
    let dim = u64::from_le_bytes(buf8) as usize;
    let layout = crate::fock::build_basis_with(spec, false).ok()?;
    if layout.total_dim() != dim {
        return None;
    }
    let mut energies = Vec::with_capacity(dim);
    for _ in 0..dim {
        r.read_exact(&mut buf8).ok()?;
        energies.push(f64::from_le_bytes(buf8));
    }
    let mut flat = Vec::with_capacity(dim * dim);
    for _ in 0..dim * dim {
        r.read_exact(&mut buf8).ok()?;
        flat.push(f64::from_le_bytes(buf8));
    }
    // Trailing bytes mean the file was not produced by this writer.
    if r.read(&mut [0u8; 1]).ok()? != 0 {
        return None;
    }
    let states = ndarray::Array2::from_shape_vec((dim, dim), flat).ok()?;
    Some(EigenSystem { layout, energies, states })
}
