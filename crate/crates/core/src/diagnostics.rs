//! Per-step stability measurements of a gradient system.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::linalg::{condition_number, dot, norm, Matrix};
use crate::{Error, Result};

/// Gradient magnitude similarity `2‖a‖‖b‖ / (‖a‖² + ‖b‖²)`.
///
/// Lies in `(0, 1]` and equals one iff the norms match.
pub fn gms(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 {
        return Err(Error::ZeroColumn { task: 0 });
    }
    if nb == 0.0 {
        return Err(Error::ZeroColumn { task: 1 });
    }
    Ok(gms_from_norms(na, nb))
}

fn gms_from_norms(na: f64, nb: f64) -> f64 {
    // divide through by the larger norm so huge ratios do not overflow
    let (hi, lo) = if na >= nb { (na, nb) } else { (nb, na) };
    let r = lo / hi;
    2.0 * r / (1.0 + r * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    pub gms: f64,
    pub cosine: f64,
}

/// Stability of a gradient system at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Condition number; `f64::INFINITY` when the gradients are linearly
    /// dependent.
    pub kappa: f64,
    pub gms_min: f64,
    /// Minimum pairwise cosine similarity; negative means conflict.
    pub cos_min: f64,
    /// Largest ratio between two task gradient norms.
    pub norm_ratio_max: f64,
    pub per_pair: Vec<PairStat>,
}

/// Builds a [`StabilityReport`] from the columns of `G`.
///
/// Pairwise statistics are minimised (GMS, cosine) or maximised (norm ratio)
/// over unordered task pairs; with a single task they are 1, 1 and 1.
pub fn stability_report(g: &Matrix) -> Result<StabilityReport> {
    let cols = g.columns();
    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    if let Some(task) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn { task });
    }
    let kappa = condition_number(g)?;
    let mut per_pair = Vec::new();
    let mut gms_min: f64 = 1.0;
    let mut cos_min: f64 = 1.0;
    let mut norm_ratio_max: f64 = 1.0;
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            let gms = gms_from_norms(norms[i], norms[j]);
            let cosine = (dot(&cols[i], &cols[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            let ratio = norms[i].max(norms[j]) / norms[i].min(norms[j]);
            gms_min = gms_min.min(gms);
            cos_min = cos_min.min(cosine);
            norm_ratio_max = norm_ratio_max.max(ratio);
            per_pair.push(PairStat { i, j, gms, cosine });
        }
    }
    Ok(StabilityReport {
        kappa,
        gms_min,
        cos_min,
        norm_ratio_max,
        per_pair,
    })
}

/// Serialises a float, writing infinities as the string `"inf"` (or
/// `"-inf"`) and NaN as `null`.
pub fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_none()
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

struct Extended(f64);

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serialize_extended_f64(&self.0, s)
    }
}

impl Serialize for StabilityReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("StabilityReport", 5)?;
        st.serialize_field("kappa", &Extended(self.kappa))?;
        st.serialize_field("gms_min", &self.gms_min)?;
        st.serialize_field("cos_min", &self.cos_min)?;
        st.serialize_field("norm_ratio_max", &self.norm_ratio_max)?;
        st.serialize_field("per_pair", &self.per_pair)?;
        st.end()
    }
}
