//! Report types and their CSV/JSON serialization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain_model::HypothesisReport;
use crate::error::Result;
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::stats::SampleSummary;
use crate::regeneration::Diagnostics;
use crate::schedule::AdmissibilityWindow;

/// Serializes infinite values as the strings `"inf"` / `"-inf"` so they
/// survive a JSON round trip.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Schedule and admissibility information echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// Configured exponent, or `ln(m) / k` when `m` was given directly.
    pub alpha: f64,
    pub m: usize,
    pub delta: f64,
    #[serde(with = "extended_f64")]
    pub c: f64,
    pub delta_underbar: f64,
    pub window: AdmissibilityWindow,
    /// `alpha` inside the window that applies to the chosen mode.
    pub alpha_admissible: bool,
    /// The upper bound `c - ln(1/delta)` and the `c > 18 ln(1/delta)`
    /// requirement are reported as stated, without reconciling them.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReplicateReport {
    pub replicate: usize,
    pub trajectory_len: usize,
    /// `R_m - 1`.
    pub segment_len: usize,
    pub blocks: usize,
    pub mu_hat: f64,
    pub mu: f64,
    pub summary: SampleSummary,
    pub diagnostics: Diagnostics,
    /// Largest gap between the assembled and reduced forms of the statistic
    /// over the spot-checked replicates.
    pub identity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub mode: Mode,
    pub window: WindowReport,
    pub hypotheses: HypothesisReport,
    pub replicates: Vec<CltReplicateReport>,
    pub ks_threshold: f64,
    /// Every replicate's KS distance is below the threshold.
    pub ks_pass: bool,
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub r: u32,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMomentTables {
    pub k: usize,
    pub delta_underbar: f64,
    pub replicates: usize,
    pub tail: Vec<TailRow>,
    pub moments: Vec<MomentRow>,
}

/// `m E[(mu_hat - mu)^2]`; should stay bounded along the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: usize,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub tables: TailMomentTables,
    pub mu: f64,
    pub scaling: Vec<ScalingRow>,
    pub conventions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub k: usize,
    /// Discrepancy rate of one coupled step from a shared past.
    pub single_rate: f64,
    pub single_se: f64,
    pub beta_k: f64,
    /// `single_rate > beta_k + 4 se`.
    pub violation: bool,
    pub horizon: usize,
    pub horizon_rate: f64,
    pub horizon_se: f64,
    /// `horizon_rate / (horizon beta_k)`; absent when `beta_k = 0`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rows: Vec<CouplingRow>,
    pub conventions: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Single-column CSV with header `statistic`.
pub fn write_statistics_csv<W: Write>(writer: W, statistics: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["statistic"])?;
    for s in statistics {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
