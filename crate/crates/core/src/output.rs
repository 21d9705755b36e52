//! Trajectory CSV files and JSON run summaries.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::MetricTable;
use crate::optimizer::{Termination, TrajectoryRecord};

/// Formats `x` in positional notation with 17 significant digits, independent
/// of locale. Non-finite values are written as `NaN`, `inf` or `-inf`.
pub fn format_decimal(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::with_capacity(24);
    if x < 0.0 {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    out
}

pub fn trajectory_header(dim: usize, tasks: usize) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend((0..dim).map(|i| format!("theta_{i}")));
    cols.extend((0..tasks).map(|i| format!("loss_{i}")));
    cols.extend((0..tasks).map(|i| format!("alpha_{i}")));
    cols.extend(["step_size", "stationarity", "sigma_k"].map(String::from));
    cols.join(",")
}

pub fn write_trajectory<W: Write>(mut w: W, records: &[TrajectoryRecord], dim: usize, tasks: usize) -> io::Result<()> {
    writeln!(w, "{}", trajectory_header(dim, tasks))?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&r.step.to_string());
        let tail = [r.step_size, r.stationarity, r.sigma_k];
        let values = r.theta.iter().chain(r.losses.iter()).chain(r.alpha.iter()).chain(tail.iter());
        for v in values {
            line.push(',');
            line.push_str(&format_decimal(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_trajectory_file(path: &Path, records: &[TrajectoryRecord], dim: usize, tasks: usize) -> io::Result<()> {
    write_trajectory(BufWriter::new(fs::File::create(path)?), records, dim, tasks)
}

/// Trajectory read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub dim: usize,
    pub tasks: usize,
    pub steps: Vec<usize>,
    pub theta: Vec<Vec<f64>>,
    pub losses: Vec<Vec<f64>>,
}

pub fn read_trajectory_file(path: &Path) -> io::Result<TrajectoryTable> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {m}", path.display()));
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols.iter().filter(|c| c.starts_with("theta_")).count();
    let tasks = cols.iter().filter(|c| c.starts_with("loss_")).count();
    if cols.first() != Some(&"step") || cols.len() != 1 + dim + 2 * tasks + 3 {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut t = TrajectoryTable {
        dim,
        tasks,
        steps: Vec::new(),
        theta: Vec::new(),
        losses: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(format!("row {} has {} fields", n + 1, fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", n + 1)));
        t.steps
            .push(fields[0].parse().map_err(|e| bad(format!("row {}: {e}", n + 1)))?);
        t.theta.push(fields[1..1 + dim].iter().map(|s| num(s)).collect::<Result<_, _>>()?);
        t.losses
            .push(fields[1 + dim..1 + dim + tasks].iter().map(|s| num(s)).collect::<Result<_, _>>()?);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub aggregator: String,
    pub init_index: usize,
    pub init: Vec<f64>,
    pub trajectory_file: String,
    pub steps: usize,
    pub final_theta: Vec<f64>,
    pub final_losses: Vec<f64>,
    pub final_stationarity: f64,
    pub termination: Termination,
    pub solver_calls: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    /// Rows are per-aggregator mean final losses over the initial points.
    pub table: MetricTable,
    pub delta_m: std::collections::BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_rank: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub dim: usize,
    pub num_tasks: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub aggregator: String,
    pub init_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureManifest {
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub weight_update_every: usize,
    pub solver_calls: u64,
    pub steps: usize,
    pub calls_per_step: f64,
    /// `calls_per_step` relative to the first configured interval.
    pub call_ratio: f64,
    pub wall_time_s: f64,
    /// Wall time relative to the first configured interval; informational.
    pub wall_ratio: f64,
    pub max_final_stationarity: f64,
    pub final_stationarity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub problem: String,
    pub runs: Vec<BenchRun>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;

    #[test]
    fn decimal_format_examples() {
        assert_eq!(format_decimal(0.0), "0");
        assert_eq!(format_decimal(1.0), "1.0000000000000000");
        assert_eq!(format_decimal(-2.5), "-2.5000000000000000");
        assert_eq!(format_decimal(0.1), "0.10000000000000001");
        assert_eq!(format_decimal(1.5e-5), "0.000015000000000000000");
        assert_eq!(format_decimal(1e20), "100000000000000000000");
        assert_eq!(format_decimal(123456.789), "123456.78900000000");
    }

    #[test]
    fn decimal_format_round_trips() {
        for x in [std::f64::consts::PI, -1e-300, 6.02214076e23, 1.0 / 3.0, f64::MIN_POSITIVE, 9.999999999999999e-5] {
            let s = format_decimal(x);
            assert!(!s.contains('e'), "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let rec = |step: usize, t: f64| TrajectoryRecord {
            step,
            theta: Vector::from([t, -t]),
            losses: Vector::from([1.0 + t, 2.0]),
            alpha: Vector::from([0.5, 0.25]),
            step_size: 1e-3,
            stationarity: 0.1,
            sigma_k: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory_file(&path, &[rec(0, 0.5), rec(1, 0.25)], 2, 2).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,theta_0,theta_1,loss_0,loss_1,alpha_0,alpha_1,step_size,stationarity,sigma_k\n"));
        assert!(text.ends_with('\n'));
        let t = read_trajectory_file(&path).unwrap();
        assert_eq!((t.dim, t.tasks), (2, 2));
        assert_eq!(t.steps, vec![0, 1]);
        assert_eq!(t.theta[1], vec![0.25, -0.25]);
        assert_eq!(t.losses[0], vec![1.5, 2.0]);
    }
}
