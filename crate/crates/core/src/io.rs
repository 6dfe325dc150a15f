//! File formats for matrices, vectors and problem metadata.
//!
//! The binary container is `b"HMX1"`, then `rows` and `cols` as little-endian
//! `u64`, then `rows * cols` little-endian `f64` values in row-major order.
//! Small objects can also be written as CSV (one row per line). Problem
//! metadata travels in a JSON sidecar.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{NormalizationFlags, Problem};

pub const HMX_MAGIC: &[u8; 4] = b"HMX1";

pub fn write_hmx<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(HMX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_hmx<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != HMX_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected HMX1")));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format(format!("matrix shape {rows} x {cols} overflows")))?;
    let mut data = Vec::new();
    r.take(len as u64).read_to_end(&mut data)?;
    if data.len() != len {
        return Err(Error::Format(format!(
            "truncated payload: expected {len} bytes, got {}",
            data.len()
        )));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_hmx(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_hmx(std::io::BufWriter::new(fs::File::create(path)?), m)
}

pub fn load_hmx(path: &Path) -> Result<DMatrix<f64>> {
    read_hmx(std::io::BufReader::new(fs::File::open(path)?))
}

/// Comma-separated rows; values printed in round-trip precision.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: `{}`: {e}", lineno + 1, c.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// One value per line.
pub fn vector_to_csv(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:?}\n")).collect()
}

pub fn vector_from_csv(text: &str) -> Result<DVector<f64>> {
    let m = matrix_from_csv(text)?;
    if m.ncols() > 1 && m.nrows() > 1 {
        return Err(Error::Format(format!("expected a vector, got {} x {}", m.nrows(), m.ncols())));
    }
    Ok(DVector::from_iterator(m.len(), m.iter().copied()))
}

/// Load a matrix by extension: `.hmx` (binary container) or `.csv`.
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => matrix_from_csv(&fs::read_to_string(path)?),
        _ => load_hmx(path),
    }
}

pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    let m = load_matrix(path)?;
    if m.ncols() > 1 && m.nrows() > 1 {
        return Err(Error::Format(format!(
            "{}: expected a vector, got {} x {}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(DVector::from_iterator(m.len(), m.iter().copied()))
}

pub fn vector_as_column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// JSON sidecar describing a stored problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub n: usize,
    pub d: usize,
    pub seed: Option<u64>,
    /// Free-form generator description (typically a serialized spec).
    pub spec: serde_json::Value,
    pub flags: NormalizationFlags,
}

/// Write `A.hmx`, `y.hmx`, optional `u_star.hmx`, `eps.hmx` and `meta.json`
/// into `dir`.
pub fn save_problem(dir: &Path, p: &Problem, seed: Option<u64>, spec: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_hmx(&dir.join("A.hmx"), p.a())?;
    save_hmx(&dir.join("y.hmx"), &vector_as_column(p.y()))?;
    if let Some(u) = p.u_star() {
        save_hmx(&dir.join("u_star.hmx"), &vector_as_column(u))?;
    }
    if let Some(e) = p.eps() {
        save_hmx(&dir.join("eps.hmx"), &vector_as_column(e))?;
    }
    let meta = ProblemMeta {
        n: p.n(),
        d: p.d(),
        seed,
        spec,
        flags: p.flags(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_problem(dir: &Path) -> Result<(Problem, ProblemMeta)> {
    let meta: ProblemMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let a = load_hmx(&dir.join("A.hmx"))?;
    let y = load_vector(&dir.join("y.hmx"))?;
    let u_path = dir.join("u_star.hmx");
    let e_path = dir.join("eps.hmx");
    let u_star = u_path.exists().then(|| load_vector(&u_path)).transpose()?;
    let eps = e_path.exists().then(|| load_vector(&e_path)).transpose()?;
    if a.nrows() != meta.n || a.ncols() != meta.d {
        return Err(Error::Format(format!(
            "A is {} x {} but meta.json says {} x {}",
            a.nrows(),
            a.ncols(),
            meta.n,
            meta.d
        )));
    }
    let p = Problem::new(a, y)?;
    let p = match (u_star, eps) {
        (Some(u), Some(e)) => Problem::with_truth(p.a().clone(), u, e)?,
        _ => p,
    };
    Ok((p, meta))
}
