//! Per-node reading streams, from a CSV dataset column or a synthetic signal.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::domain::Reading;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset file not found: {0}")]
    FileNotFound(String),
    #[error("column {0} not found in dataset header")]
    ColumnNotFound(ColumnSpec),
    #[error("no numeric values in column {0}")]
    EmptySeries(ColumnSpec),
    #[error("failed to read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse dataset: {0}")]
    Csv(#[from] csv::Error),
    #[error("noise standard deviation must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSpec {
    Name(String),
    Index(usize),
}

impl ColumnSpec {
    /// All-digit strings select by position, anything else by header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ColumnSpec::Index(i),
            Err(_) => ColumnSpec::Name(s.to_string()),
        }
    }
}

impl fmt::Display for ColumnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSpec::Name(n) => write!(f, "`{n}`"),
            ColumnSpec::Index(i) => write!(f, "#{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Vec<f64>,
    /// Rows whose cell in the column was missing or not a finite number.
    pub skipped: usize,
}

pub fn load_dataset(path: &Path, column: &ColumnSpec) -> Result<Dataset, IngestError> {
    if !path.exists() {
        return Err(IngestError::FileNotFound(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = match column {
        ColumnSpec::Name(name) => headers.iter().position(|h| h == name),
        ColumnSpec::Index(i) => (*i < headers.len()).then_some(*i),
    }
    .ok_or_else(|| IngestError::ColumnNotFound(column.clone()))?;

    let mut values = Vec::new();
    let mut skipped = 0;
    for record in reader.records() {
        let record = record?;
        match record.get(col).and_then(|c| c.parse::<f64>().ok()) {
            Some(v) if v.is_finite() => values.push(v),
            _ => skipped += 1,
        }
    }
    if values.is_empty() {
        return Err(IngestError::EmptySeries(column.clone()));
    }
    Ok(Dataset { values, skipped })
}

#[derive(Debug, Clone)]
pub enum ReadingSource {
    /// Shared series, read from `node_offset` onwards and wrapping at the end.
    Dataset {
        series: Arc<[f64]>,
        node_offset: usize,
    },
    /// `base + drift_per_s · now + N(0, noise_sd)`.
    Synthetic {
        base: f64,
        drift_per_s: f64,
        noise: Option<Normal<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct ReadingStream {
    source: ReadingSource,
    cursor: usize,
    rows_per_read: usize,
}

impl ReadingStream {
    pub fn dataset(series: Arc<[f64]>, node_offset: usize) -> Self {
        assert!(
            !series.is_empty(),
            "dataset streams need at least one value"
        );
        ReadingStream {
            source: ReadingSource::Dataset {
                series,
                node_offset,
            },
            cursor: 0,
            rows_per_read: 1,
        }
    }

    /// Advance `rows` dataset rows per reading (maps dataset time onto the
    /// send period). Ignored by synthetic sources.
    pub fn with_rows_per_read(mut self, rows: usize) -> Self {
        self.rows_per_read = rows.max(1);
        self
    }

    pub fn synthetic(base: f64, drift_per_s: f64, noise_sd: f64) -> Result<Self, IngestError> {
        if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
            return Err(IngestError::InvalidNoise(noise_sd));
        }
        let noise = if noise_sd > 0.0 {
            Some(Normal::new(0.0, noise_sd).map_err(|_| IngestError::InvalidNoise(noise_sd))?)
        } else {
            None
        };
        Ok(ReadingStream {
            source: ReadingSource::Synthetic {
                base,
                drift_per_s,
                noise,
            },
            cursor: 0,
            rows_per_read: 1,
        })
    }

    /// A constant signal; handy for scripted scenarios.
    pub fn constant(value: f64) -> Self {
        ReadingStream::synthetic(value, 0.0, 0.0).expect("zero noise is valid")
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn next_reading<R: Rng + ?Sized>(&mut self, now: f64, rng: &mut R) -> Reading {
        let value = match &self.source {
            ReadingSource::Dataset {
                series,
                node_offset,
            } => series[(node_offset + self.cursor * self.rows_per_read) % series.len()],
            ReadingSource::Synthetic {
                base,
                drift_per_s,
                noise,
            } => {
                let eps = noise.as_ref().map_or(0.0, |n| n.sample(rng));
                base + drift_per_s * now + eps
            }
        };
        self.cursor += 1;
        Reading::new(value, now.max(0.0)).expect("stream values are finite")
    }
}
