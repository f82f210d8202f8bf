use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RepairError, Result};

/// Outcome of one Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub curve: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub eps: f64,
    pub k_index: Option<usize>,
    pub mu: f64,
    pub trial: usize,
    pub seed: u64,
    pub exact: bool,
    pub per_coord_match_rate: f64,
    pub mse_w: Option<f64>,
    pub mse_beta: Option<f64>,
    /// Per-layer exactness (network experiments).
    pub exact_w: Option<bool>,
    pub exact_beta: Option<bool>,
    /// Solver error or non-optimal status; counted, never dropped.
    pub failure: Option<String>,
    /// Excluded from CSV output so tables stay byte-reproducible.
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Aggregate of one cell. Column order of the CSV is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub curve: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub k_index: Option<usize>,
    pub mu: f64,
    pub eps: f64,
    pub eps_adjusted: Option<f64>,
    pub trials: usize,
    pub successes: usize,
    pub repair_prob: f64,
    /// `sqrt(p (1 - p) / trials)`.
    pub mc_stderr: f64,
    pub failures: usize,
    pub mean_match_rate: f64,
    pub mse_w: Option<f64>,
    pub mse_beta: Option<f64>,
}

impl CurveRow {
    pub(crate) fn aggregate(records: &[TrialRecord], eps_adjusted: Option<f64>) -> Self {
        let first = &records[0];
        let trials = records.len();
        let successes = records.iter().filter(|r| r.exact).count();
        let prob = successes as f64 / trials as f64;
        let mean_opt = |f: fn(&TrialRecord) -> Option<f64>| {
            let vals: Vec<f64> = records.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        CurveRow {
            curve: first.curve.clone(),
            n: first.n,
            p: first.p,
            d: first.d,
            k_index: first.k_index,
            mu: first.mu,
            eps: first.eps,
            eps_adjusted,
            trials,
            successes,
            repair_prob: prob,
            mc_stderr: (prob * (1.0 - prob) / trials as f64).sqrt(),
            failures: records.iter().filter(|r| r.failure.is_some()).count(),
            mean_match_rate: records.iter().map(|r| r.per_coord_match_rate).sum::<f64>() / trials as f64,
            mse_w: mean_opt(|r| r.mse_w),
            mse_beta: mean_opt(|r| r.mse_beta),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    /// Rows grouped by curve label, in first-appearance order.
    pub fn curves(&self) -> Vec<(String, Vec<&CurveRow>)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<&CurveRow>> = BTreeMap::new();
        for row in &self.rows {
            if !groups.contains_key(&row.curve) {
                order.push(row.curve.clone());
            }
            groups.entry(row.curve.clone()).or_default().push(row);
        }
        order
            .into_iter()
            .map(|c| {
                let rows = groups.remove(&c).unwrap_or_default();
                (c, rows)
            })
            .collect()
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// Rows of one curve at one epsilon.
    pub fn find(&self, curve: &str, eps: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.curve == curve && (r.eps - eps).abs() < 1e-12)
    }

    /// Points where a curve rises along epsilon by more than two combined
    /// standard errors. Reported, never corrected.
    pub fn epsilon_monotonicity_flags(&self) -> Vec<String> {
        let mut flags = Vec::new();
        for (curve, rows) in self.curves() {
            let mut rows = rows;
            rows.sort_by(|a, b| a.eps.total_cmp(&b.eps));
            for w in rows.windows(2) {
                let slack = 2.0 * w[0].mc_stderr.max(w[1].mc_stderr);
                if w[1].repair_prob > w[0].repair_prob + slack {
                    flags.push(format!(
                        "{curve}: repair_prob rises from {} at eps={} to {} at eps={}",
                        w[0].repair_prob, w[0].eps, w[1].repair_prob, w[1].eps
                    ));
                }
            }
        }
        flags
    }

    /// Points where, at a fixed epsilon and design shape, a smaller `p`
    /// repairs more often than a larger one beyond two standard errors.
    pub fn dimension_monotonicity_flags(&self) -> Vec<String> {
        let mut by_eps: BTreeMap<u64, Vec<&CurveRow>> = BTreeMap::new();
        for r in &self.rows {
            if r.mu == 0.0 {
                by_eps.entry(r.eps.to_bits()).or_default().push(r);
            }
        }
        let mut flags = Vec::new();
        for rows in by_eps.values() {
            let mut rows = rows.clone();
            rows.sort_by_key(|r| r.p);
            for w in rows.windows(2) {
                let slack = 2.0 * w[0].mc_stderr.max(w[1].mc_stderr);
                if w[1].p > w[0].p && w[0].repair_prob > w[1].repair_prob + slack {
                    flags.push(format!(
                        "eps={}: p={} repairs at {} but p={} at {}",
                        w[0].eps, w[0].p, w[0].repair_prob, w[1].p, w[1].repair_prob
                    ));
                }
            }
        }
        flags
    }
}

pub fn write_rows<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(table: &CurveTable, path: impl AsRef<Path>) -> Result<()> {
    if table.rows.is_empty() {
        return Err(RepairError::Parameter("refusing to write an empty table".into()));
    }
    write_rows(std::io::BufWriter::new(std::fs::File::create(path)?), &table.rows)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<CurveTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<CurveRow>, _>>()?;
    Ok(CurveTable { rows })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CurveTable> {
    parse_csv(std::fs::File::open(path)?)
}
