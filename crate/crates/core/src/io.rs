//! On-disk formats.
//!
//! Gradient matrices are CSV files with a header of task names and one row
//! per shared parameter. Numbers are written with 17 significant digits, so
//! reading a dump back reproduces every `f64` exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::linalg::Matrix;
use crate::toy::metrics::{MetricEntry, MetricTable};
use crate::{Error, Result};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A gradient matrix together with the names of its tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDump {
    pub task_names: Vec<String>,
    pub matrix: Matrix,
}

impl GradientDump {
    /// Names the tasks `task0`, `task1`, ...
    pub fn unnamed(matrix: Matrix) -> Self {
        let task_names = (0..matrix.cols()).map(|t| format!("task{t}")).collect();
        Self { task_names, matrix }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// `origin` only labels error messages.
    pub fn from_reader<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let task_names: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(csv_line(&e).unwrap_or(1), e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if task_names.is_empty() || task_names.iter().all(String::is_empty) {
            return Err(parse_err(1, "missing header row of task names".into()));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err(csv_line(&e).unwrap_or(0), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            for (k, field) in rec.iter().enumerate() {
                let x: f64 = field
                    .parse()
                    .map_err(|_| parse_err(line, format!("column {}: `{field}` is not a number", k + 1)))?;
                if !x.is_finite() {
                    return Err(parse_err(line, format!("column {}: non-finite value `{field}`", k + 1)));
                }
                data.push(x);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(parse_err(1, "no data rows".into()));
        }
        let matrix = Matrix::from_row_major(rows, task_names.len(), data)?;
        Ok(Self { task_names, matrix })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file).map_err(|e| Error::io(path, e))
    }

    pub fn to_writer<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.task_names)?;
        for i in 0..self.matrix.rows() {
            w.write_record(self.matrix.row(i).iter().map(|&x| fmt_f64(x)))?;
        }
        w.flush()
    }
}

fn csv_line(e: &csv::Error) -> Option<u64> {
    e.position().map(|p| p.line())
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    task: String,
    metric: String,
    direction: String,
    baseline: f64,
    model: f64,
}

/// Reads a metric table with columns `task, metric, direction, baseline,
/// model`. `direction` is `higher` or `lower` (also `1` / `0`).
pub fn read_metric_table(path: impl AsRef<Path>) -> Result<MetricTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut entries = Vec::new();
    for rec in rdr.deserialize::<MetricRow>() {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row = rec.map_err(|e| parse_err(csv_line(&e).unwrap_or(0), e.to_string()))?;
        let higher_is_better = match row.direction.to_ascii_lowercase().as_str() {
            "higher" | "1" => true,
            "lower" | "0" => false,
            other => {
                let line = entries.len() as u64 + 2;
                return Err(parse_err(line, format!("direction must be `higher` or `lower`, got `{other}`")));
            }
        };
        entries.push(MetricEntry {
            task: row.task,
            metric: row.metric,
            higher_is_better,
            baseline: row.baseline,
            model: row.model,
        });
    }
    Ok(MetricTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips_exactly() {
        let m = Matrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 123456789.12345679]]).unwrap();
        let dump = GradientDump {
            task_names: vec!["seg".into(), "depth".into()],
            matrix: m,
        };
        let mut buf = Vec::new();
        dump.to_writer(&mut buf).unwrap();
        let back = GradientDump::from_reader(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, dump);
    }

    #[test]
    fn bad_cell_reports_line() {
        let text = "a,b\n1,2\n3,x\n";
        let err = GradientDump::from_reader(text.as_bytes(), Path::new("g.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let ragged = "a,b\n1,2\n3\n";
        assert!(matches!(
            GradientDump::from_reader(ragged.as_bytes(), Path::new("g.csv")),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(GradientDump::from_reader("a,b\n".as_bytes(), Path::new("g.csv")).is_err());
    }
}
