//! Artifact files.
//!
//! Outputs are assembled in memory and only written once an experiment has
//! finished, so a failed run leaves nothing behind.
//!
//! Binary dumps are little-endian: `u64 N` (columns), `u64 K` (rows), then,
//! for trajectories only, `K` `f64` times, then `K × N` `f64` values row by
//! row.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub format: &'static str,
    pub description: String,
    pub bytes: usize,
}

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(ManifestEntry, Vec<u8>)>,
}

impl Artifacts {
    pub fn csv<S: AsRef<str>>(
        &mut self,
        name: &str,
        description: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<S>>,
    ) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|s| s.as_ref()))?;
        }
        let bytes = w.into_inner().context("flushing CSV buffer")?;
        self.push(name, "csv", description, bytes);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.push(name, "json", description, bytes);
        Ok(())
    }

    /// Row-major `rows`, all of length `columns`.
    pub fn binary(&mut self, name: &str, description: &str, columns: usize, rows: &[Vec<f64>], times: Option<&[f64]>) {
        let mut bytes = Vec::with_capacity(16 + 8 * rows.len() * (columns + 1));
        bytes.extend((columns as u64).to_le_bytes());
        bytes.extend((rows.len() as u64).to_le_bytes());
        if let Some(t) = times {
            debug_assert_eq!(t.len(), rows.len());
            for x in t {
                bytes.extend(x.to_le_bytes());
            }
        }
        for row in rows {
            debug_assert_eq!(row.len(), columns);
            for x in row {
                bytes.extend(x.to_le_bytes());
            }
        }
        let format = if times.is_some() { "binary-trajectory" } else { "binary-samples" };
        self.push(name, format, description, bytes);
    }

    fn push(&mut self, name: &str, format: &'static str, description: &str, bytes: Vec<u8>) {
        let entry = ManifestEntry {
            file: name.into(),
            format,
            description: description.into(),
            bytes: bytes.len(),
        };
        self.files.push((entry, bytes));
    }

    pub fn entries(&self) -> Vec<ManifestEntry> {
        self.files.iter().map(|(e, _)| e.clone()).collect()
    }

    pub fn write_all(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (e, bytes) in &self.files {
            let path = dir.join(&e.file);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// Shortest representation that round-trips.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
