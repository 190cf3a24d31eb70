//! CSV tables, checkpoints and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::{FieldPair, GridSpec};

/// Floats are written with 17 significant digits so they read back exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: vec![],
        }
    }

    pub fn push_floats(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt_float(*v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Read a CSV written by [`Table`]: header and numeric columns (blank → NaN).
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut cols = vec![vec![]; header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (k, field) in rec.iter().enumerate().take(header.len()) {
            cols[k].push(field.parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    Ok((header, cols))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub grid: GridSpec,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
}

impl Checkpoint {
    pub fn new(t: f64, grid: GridSpec, state: &FieldPair) -> Self {
        Checkpoint {
            t,
            grid,
            u: state.u.clone(),
            udot: state.udot.clone(),
        }
    }

    pub fn state(&self) -> Result<FieldPair> {
        FieldPair::new(self.u.clone(), self.udot.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Collects files for a run directory and records their hashes.
#[derive(Debug)]
pub struct ArtifactWriter {
    pub dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            artifacts: vec![],
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        std::fs::write(&path, bytes)?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn table(&mut self, rel: &str, t: &Table) -> Result<()> {
        self.write(rel, &t.to_bytes()?)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 1.0 - f64::EPSILON] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(["t", "x"]);
        t.push_floats(&[0.0, 0.1]);
        t.push(vec![fmt_float(1.0), String::new()]);
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.table("a.csv", &t).unwrap();
        let (h, cols) = read_columns(&dir.path().join("a.csv")).unwrap();
        assert_eq!(h, vec!["t", "x"]);
        assert_eq!(cols[1][0], 0.1);
        assert!(cols[1][1].is_nan());
        assert_eq!(w.artifacts.len(), 1);
    }
}
