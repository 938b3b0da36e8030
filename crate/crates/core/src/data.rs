//! Dataset ingestion and synthesis for desk-scale experiments.
//!
//! CSV format: UTF-8, comma-separated, an optional single header line,
//! p feature columns followed by one integer label column.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::{rng, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic,
    Csv,
}

/// An in-memory dataset: n rows of p features with integer labels in
/// [0, C). Rows are assumed i.i.d. draws from the data distribution; that
/// assumption is documented, not checkable.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub provenance: Provenance,
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |c| c + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(CoreError::invalid("dataset is empty"));
        }
        if self.features.len() != self.labels.len() {
            return Err(CoreError::DimensionMismatch {
                expected: self.features.len(),
                got: self.labels.len(),
            });
        }
        let p = self.feature_dim();
        if self.features.iter().any(|row| row.len() != p) {
            return Err(CoreError::invalid("feature rows have inconsistent lengths"));
        }
        Ok(())
    }
}

/// Synthetic task families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Two class-conditional unit Gaussians with mean separation
    /// `separation` (split evenly across coordinates).
    TwoGaussians { separation: f64 },
    /// The 2-D XOR pattern with unit Gaussian jitter; labels are the sign
    /// product of the first two center coordinates.
    Xor,
}

/// Deterministic synthetic dataset with labels balanced up to rounding.
pub fn synth_dataset(kind: SynthKind, n: u32, p: u32, seed: u64) -> Result<DatasetHandle> {
    if n < 2 {
        return Err(CoreError::invalid("synthetic datasets need n >= 2"));
    }
    if p == 0 {
        return Err(CoreError::invalid("feature dimension must be >= 1"));
    }
    if let SynthKind::Xor = kind {
        if p < 2 {
            return Err(CoreError::invalid("xor needs at least 2 features"));
        }
    }
    let mut gen = rng::stream(seed, "synth-dataset");
    let p = p as usize;
    let mut features = Vec::with_capacity(n as usize);
    let mut labels = Vec::with_capacity(n as usize);
    for i in 0..n as usize {
        let label = i % 2;
        let mut row = vec![0.0f64; p];
        for x in row.iter_mut() {
            *x = StandardNormal.sample(&mut gen);
        }
        match kind {
            SynthKind::TwoGaussians { separation } => {
                let shift = separation / 2.0 / (p as f64).sqrt();
                let sign = if label == 0 { -1.0 } else { 1.0 };
                for x in row.iter_mut() {
                    *x += sign * shift;
                }
            }
            SynthKind::Xor => {
                let corner = [gen.random_range(0..2), gen.random_range(0..2)];
                for (j, c) in corner.iter().enumerate() {
                    row[j] += if *c == 0 { -2.0 } else { 2.0 };
                }
                let cls = usize::from(corner[0] != corner[1]);
                features.push(row);
                labels.push(cls);
                continue;
            }
        }
        features.push(row);
        labels.push(label);
    }
    let ds = DatasetHandle { features, labels, provenance: Provenance::Synthetic };
    ds.validate()?;
    Ok(ds)
}

/// Load a CSV dataset. Rejects empty files; a single leading line whose
/// first cell does not parse as a number is treated as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let raw = std::fs::read_to_string(path.as_ref())?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| CoreError::Parse { line, message: e.to_string() })?;
        if record.len() < 2 {
            return Err(CoreError::Parse {
                line,
                message: format!("expected at least 2 columns, got {}", record.len()),
            });
        }
        // Header tolerance: skip the first line if its first cell is not
        // numeric.
        if idx == 0 && record.get(0).map(|c| c.parse::<f64>().is_err()).unwrap_or(true) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len() - 1);
        for cell in record.iter().take(record.len() - 1) {
            let v: f64 = cell.parse().map_err(|_| CoreError::Parse {
                line,
                message: format!("non-numeric feature cell `{cell}`"),
            })?;
            row.push(v);
        }
        let label_cell = record.get(record.len() - 1).unwrap();
        let label: usize = label_cell.parse().map_err(|_| CoreError::Parse {
            line,
            message: format!("non-integer label cell `{label_cell}`"),
        })?;
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(CoreError::invalid("CSV contains no data rows"));
    }
    let ds = DatasetHandle { features, labels, provenance: Provenance::Csv };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset in the same CSV format (used by tests and tooling).
pub fn write_csv(ds: &DatasetHandle, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (row, label) in ds.features.iter().zip(&ds.labels) {
        for x in row {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{label}\r\n"));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}
