//! Relative performance drop `Δm` against single-task baselines.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub task: String,
    pub metric: String,
    pub higher_is_better: bool,
    pub baseline: f64,
    pub model: f64,
}

impl MetricEntry {
    /// `(−1)^σ (M_m − M_b) / M_b`, with `σ = 1` for higher-is-better.
    fn relative_drop(&self) -> Result<f64> {
        if self.baseline == 0.0 {
            return Err(Error::ZeroBaseline {
                task: self.task.clone(),
                metric: self.metric.clone(),
            });
        }
        let sign = if self.higher_is_better { -1.0 } else { 1.0 };
        Ok(sign * (self.model - self.baseline) / self.baseline)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub entries: Vec<MetricEntry>,
}

impl MetricTable {
    /// Task names in order of first appearance.
    pub fn tasks(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.task.as_str()) {
                out.push(&e.task);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// `(1/T) Σₜ Σₖ (−1)^σₜₖ (M_m,tk − M_b,tk) / M_b,tk`.
    ///
    /// Metrics of one task are summed, not averaged, so a task with more
    /// metrics carries more weight.
    Task,
    /// The same relative drop averaged over every (task, metric) pair.
    Metric,
}

/// `Δm` in percent. Positive values mean the model is worse than the
/// baselines.
pub fn delta_m(table: &MetricTable, mode: DeltaMode) -> Result<f64> {
    if table.entries.is_empty() {
        return Err(Error::InvalidArgument("empty metric table".into()));
    }
    let mut total = 0.0;
    for e in &table.entries {
        total += e.relative_drop()?;
    }
    let denom = match mode {
        DeltaMode::Task => table.tasks().len(),
        DeltaMode::Metric => table.entries.len(),
    };
    Ok(100.0 * total / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(task: &str, metric: &str, higher: bool, baseline: f64, model: f64) -> MetricEntry {
        MetricEntry {
            task: task.into(),
            metric: metric.into(),
            higher_is_better: higher,
            baseline,
            model,
        }
    }

    #[test]
    fn single_metric_signs() {
        let lower = MetricTable {
            entries: vec![entry("depth", "abs_err", false, 10.0, 11.0)],
        };
        let higher = MetricTable {
            entries: vec![entry("seg", "miou", true, 10.0, 11.0)],
        };
        for mode in [DeltaMode::Task, DeltaMode::Metric] {
            assert!((delta_m(&lower, mode).unwrap() - 10.0).abs() < 1e-12);
            assert!((delta_m(&higher, mode).unwrap() + 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_scores_give_zero() {
        let t = MetricTable {
            entries: vec![entry("a", "x", true, 3.0, 3.0), entry("b", "y", false, 0.5, 0.5)],
        };
        assert_eq!(delta_m(&t, DeltaMode::Task).unwrap(), 0.0);
    }

    #[test]
    fn task_mode_sums_metrics_within_a_task() {
        // task a: +10% and +20%; task b: −10%
        let t = MetricTable {
            entries: vec![
                entry("a", "x", false, 10.0, 11.0),
                entry("a", "y", false, 10.0, 12.0),
                entry("b", "z", true, 10.0, 11.0),
            ],
        };
        assert!((delta_m(&t, DeltaMode::Task).unwrap() - 10.0).abs() < 1e-12);
        assert!((delta_m(&t, DeltaMode::Metric).unwrap() - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_baseline_is_rejected() {
        let t = MetricTable {
            entries: vec![entry("a", "x", true, 0.0, 1.0)],
        };
        assert!(matches!(delta_m(&t, DeltaMode::Task), Err(Error::ZeroBaseline { .. })));
    }
}
