//! Optimization trajectories and their JSON-lines encoding.

use std::io::{BufRead, Write};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::diagnostics::{serialize_extended_f64, StabilityReport};

/// Inner products of the update taken from a record's state; enough to check
/// the descent bound `L(θₜ) − L(θₜ₊₁) ≥ α⟨∇L, r⟩ − α²Λ/2 ‖r‖²` offline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateStats {
    /// `⟨G w, r⟩` for the shared-parameter direction `r`.
    pub g0_dot_r: f64,
    /// `‖r‖²`.
    pub r_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Number of updates applied before this record.
    pub step: usize,
    /// Shared parameters.
    pub theta: Vec<f64>,
    pub losses: Vec<f64>,
    /// Weighted cumulative loss `Σ wₜ Lₜ`.
    pub l0: f64,
    /// `None` when some task gradient vanished.
    pub report: Option<StabilityReport>,
    /// Statistics of the update applied from this state, if one was applied.
    pub update: Option<UpdateStats>,
}

struct Extended(f64);

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_extended_f64(&self.0, s)
    }
}

impl Serialize for Record {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("step", &self.step)?;
        m.serialize_entry("theta", &self.theta)?;
        m.serialize_entry("losses", &self.losses)?;
        m.serialize_entry("l0", &self.l0)?;
        let r = self.report.as_ref();
        m.serialize_entry("kappa", &r.map(|r| Extended(r.kappa)))?;
        m.serialize_entry("gms_min", &r.map(|r| r.gms_min))?;
        m.serialize_entry("cos_min", &r.map(|r| r.cos_min))?;
        m.serialize_entry("norm_ratio_max", &r.map(|r| r.norm_ratio_max))?;
        if let Some(u) = &self.update {
            m.serialize_entry("g0_dot_r", &u.g0_dot_r)?;
            m.serialize_entry("r_norm_sq", &u.r_norm_sq)?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// The aggregator reported an all-zero gradient matrix.
    ZeroGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn first(&self) -> &Record {
        &self.records[0]
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory always holds the initial record")
    }

    /// Writes one JSON object per record.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Reads back the loss-related fields of a JSON-lines trajectory as
/// `(step, l0, update)` triples, for offline checks.
pub fn read_l0_series<R: BufRead>(input: R) -> std::io::Result<Vec<(usize, f64, Option<UpdateStats>)>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "missing field");
        let step = v["step"].as_u64().ok_or_else(bad)? as usize;
        let l0 = v["l0"].as_f64().ok_or_else(bad)?;
        let update = match (v["g0_dot_r"].as_f64(), v["r_norm_sq"].as_f64()) {
            (Some(g0_dot_r), Some(r_norm_sq)) => Some(UpdateStats { g0_dot_r, r_norm_sq }),
            _ => None,
        };
        out.push((step, l0, update));
    }
    Ok(out)
}

/// Whether a record is due at `step` (0-based update count).
pub(crate) fn due(step: usize, stride: usize, total: usize) -> bool {
    step == 0 || step == total || (stride > 0 && step.is_multiple_of(stride))
}
