//! Report tables: raw measurements, their aggregates, and CSV/JSON output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MeanStd;

/// Significance threshold for rank-sum comparisons.
pub const SIGNIFICANCE: f64 = 0.05;

/// Version of the report JSON layout.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// One measured value. `index` orders values within a (row, metric, sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMeasurement {
    pub row: String,
    pub metric: String,
    pub sample: String,
    pub index: usize,
    pub value: f64,
}

/// Aggregate of the raw values sharing a (row, metric, sample) key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub row: String,
    pub metric: String,
    pub sample: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
}

/// A report table. Entries are always derived from `raw`; significance
/// tests are attached afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub format_version: u32,
    pub title: String,
    /// Free-form notes on the conventions behind the numbers.
    pub notes: Vec<String>,
    pub entries: Vec<ReportEntry>,
    pub raw: Vec<RawMeasurement>,
}

impl ReportTable {
    pub fn new(title: impl Into<String>) -> Self {
        ReportTable {
            format_version: REPORT_FORMAT_VERSION,
            title: title.into(),
            notes: Vec::new(),
            entries: Vec::new(),
            raw: Vec::new(),
        }
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Appends raw values under one key and refreshes its aggregate entry.
    pub fn record(&mut self, row: &str, metric: &str, sample: &str, values: &[f64]) {
        let start = self.raw_values(row, metric, sample).len();
        for (i, &value) in values.iter().enumerate() {
            self.raw.push(RawMeasurement {
                row: row.into(),
                metric: metric.into(),
                sample: sample.into(),
                index: start + i,
                value,
            });
        }
        let stats = MeanStd::of(&self.raw_values(row, metric, sample));
        match self.entry_mut(row, metric, sample) {
            Some(e) => {
                e.mean = stats.mean;
                e.std = stats.std;
                e.n = stats.n;
            }
            None => self.entries.push(ReportEntry {
                row: row.into(),
                metric: metric.into(),
                sample: sample.into(),
                mean: stats.mean,
                std: stats.std,
                n: stats.n,
                p_value: None,
                significant: None,
            }),
        }
    }

    pub fn raw_values(&self, row: &str, metric: &str, sample: &str) -> Vec<f64> {
        self.raw
            .iter()
            .filter(|r| r.row == row && r.metric == metric && r.sample == sample)
            .map(|r| r.value)
            .collect()
    }

    pub fn entry(&self, row: &str, metric: &str, sample: &str) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.row == row && e.metric == metric && e.sample == sample)
    }

    fn entry_mut(&mut self, row: &str, metric: &str, sample: &str) -> Option<&mut ReportEntry> {
        self.entries
            .iter_mut()
            .find(|e| e.row == row && e.metric == metric && e.sample == sample)
    }

    /// Attaches a p-value (and the p <= 0.05 marker) to an existing entry.
    pub fn set_p_value(&mut self, row: &str, metric: &str, sample: &str, p: f64) {
        let e = self
            .entry_mut(row, metric, sample)
            .expect("p-value attached to a recorded entry");
        e.p_value = Some(p);
        e.significant = Some(p <= SIGNIFICANCE);
    }

    /// Appends another table's entries, raw values and notes.
    pub fn extend(&mut self, other: ReportTable) {
        self.entries.extend(other.entries);
        self.raw.extend(other.raw);
        for n in other.notes {
            if !self.notes.contains(&n) {
                self.notes.push(n);
            }
        }
    }

    /// Recomputes every aggregate from the raw values, keyed as in `entries`.
    pub fn reaggregate(&self) -> BTreeMap<(String, String, String), MeanStd> {
        let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
        for r in &self.raw {
            groups
                .entry((r.row.clone(), r.metric.clone(), r.sample.clone()))
                .or_default()
                .push(r.value);
        }
        groups.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("report", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvEntry {
    row: String,
    metric: String,
    sample: String,
    mean: f64,
    std: f64,
    n: usize,
    p_value: Option<f64>,
    significant: Option<bool>,
}

/// Writes the table. CSV output is two files, `<stem>.csv` with the
/// aggregates and `<stem>_raw.csv` with every measurement; JSON output is
/// `<stem>.json` holding both. Returns the paths written.
pub fn emit_report(table: &ReportTable, format: ReportFormat, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ReportFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            std::fs::write(&path, table.to_json()).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
            for e in &table.entries {
                w.serialize(CsvEntry {
                    row: e.row.clone(),
                    metric: e.metric.clone(),
                    sample: e.sample.clone(),
                    mean: e.mean,
                    std: e.std,
                    n: e.n,
                    p_value: e.p_value,
                    significant: e.significant,
                })?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            let raw_path = dir.join(format!("{stem}_raw.csv"));
            let mut w = csv::Writer::from_path(&raw_path).map_err(|e| Error::io(&raw_path, e.into()))?;
            for r in &table.raw {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(&raw_path, e))?;
            Ok(vec![path, raw_path])
        }
    }
}

/// Reads an aggregate CSV written by [`emit_report`].
pub fn read_report_csv(path: &Path) -> Result<Vec<ReportEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize::<CsvEntry>()
        .map(|row| {
            let e = row?;
            Ok(ReportEntry {
                row: e.row,
                metric: e.metric,
                sample: e.sample,
                mean: e.mean,
                std: e.std,
                n: e.n,
                p_value: e.p_value,
                significant: e.significant,
            })
        })
        .collect()
}

/// Reads a raw-measurement CSV written by [`emit_report`].
pub fn read_raw_csv(path: &Path) -> Result<Vec<RawMeasurement>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn read_report_json(path: &Path) -> Result<ReportTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ReportTable::from_json(&text)
}
