//! Multi-task evaluation metrics and Pareto-front utilities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("baseline value for task {task:?} is zero")]
    ZeroBaseline { task: String },
    #[error("malformed table: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub higher_is_better: bool,
}

impl TaskSpec {
    pub fn new(name: impl Into<String>, higher_is_better: bool) -> Self {
        TaskSpec {
            name: name.into(),
            higher_is_better,
        }
    }
}

/// Per-method, per-task results with a single-task reference row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub tasks: Vec<TaskSpec>,
    pub methods: Vec<String>,
    /// `values[m][k]` is method `m` on task `k`.
    pub values: Vec<Vec<f64>>,
    pub baseline: Vec<f64>,
}

impl MetricTable {
    pub fn new(tasks: Vec<TaskSpec>, baseline: Vec<f64>) -> Result<Self, MetricError> {
        if baseline.len() != tasks.len() {
            return Err(MetricError::Malformed(format!(
                "baseline has {} values for {} tasks",
                baseline.len(),
                tasks.len()
            )));
        }
        if baseline.iter().any(|v| v.is_nan()) {
            return Err(MetricError::Malformed("baseline contains NaN".into()));
        }
        Ok(MetricTable {
            tasks,
            methods: Vec::new(),
            values: Vec::new(),
            baseline,
        })
    }

    pub fn push(&mut self, method: impl Into<String>, row: Vec<f64>) -> Result<(), MetricError> {
        let method = method.into();
        if row.len() != self.tasks.len() {
            return Err(MetricError::Malformed(format!(
                "row for {method:?} has {} values for {} tasks",
                row.len(),
                self.tasks.len()
            )));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(MetricError::Malformed(format!("row for {method:?} contains NaN")));
        }
        if self.methods.contains(&method) {
            return Err(MetricError::Malformed(format!("duplicate method {method:?}")));
        }
        self.methods.push(method);
        self.values.push(row);
        Ok(())
    }

    pub fn with(mut self, method: impl Into<String>, row: Vec<f64>) -> Result<Self, MetricError> {
        self.push(method, row)?;
        Ok(self)
    }

    pub fn row(&self, method: &str) -> Result<&[f64], MetricError> {
        self.methods
            .iter()
            .position(|m| m == method)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| MetricError::UnknownMethod(method.to_string()))
    }
}

/// Mean signed relative change versus the baseline row, in percent; positive
/// means worse.
pub fn delta_m(table: &MetricTable, method: &str) -> Result<f64, MetricError> {
    let row = table.row(method)?;
    let k = table.tasks.len();
    if k == 0 {
        return Err(MetricError::Malformed("no tasks".into()));
    }
    let mut total = 0.0;
    for ((task, &m), &b) in table.tasks.iter().zip(row).zip(&table.baseline) {
        if b == 0.0 {
            return Err(MetricError::ZeroBaseline { task: task.name.clone() });
        }
        let sign = if task.higher_is_better { -1.0 } else { 1.0 };
        total += sign * (m - b) / b;
    }
    Ok(100.0 * total / k as f64)
}

/// Average per-task rank (1 = best), tied values sharing the mean of their
/// ranks.
pub fn mean_rank(table: &MetricTable) -> Result<BTreeMap<String, f64>, MetricError> {
    let n = table.methods.len();
    if n < 2 {
        return Err(MetricError::Malformed(format!("mean rank needs at least two methods, got {n}")));
    }
    let mut sums = vec![0.0; n];
    for (k, task) in table.tasks.iter().enumerate() {
        let key = |m: usize| {
            let v = table.values[m][k];
            if task.higher_is_better {
                -v
            } else {
                v
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && key(order[j + 1]) == key(order[i]) {
                j += 1;
            }
            // positions i..=j hold ranks i+1..=j+1
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &m in &order[i..=j] {
                sums[m] += rank;
            }
            i = j + 1;
        }
    }
    let k = table.tasks.len().max(1) as f64;
    Ok(table.methods.iter().cloned().zip(sums.into_iter().map(|s| s / k)).collect())
}

/// Whether `a` Pareto-dominates `b` under minimization.
///
/// Panics on length mismatch.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len(), "loss vectors differ in length");
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the points not dominated by any other point.
pub fn non_dominated(points: &[Vector]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|p| dominates(p.as_slice(), points[i].as_slice())))
        .collect()
}

/// Largest pairwise distance among mutually non-dominated points; zero with
/// fewer than two.
pub fn front_spread(points: &[Vector]) -> f64 {
    let front = non_dominated(points);
    let mut best: f64 = 0.0;
    for (a, &i) in front.iter().enumerate() {
        for &j in &front[a + 1..] {
            best = best.max(points[i].sub(&points[j]).norm());
        }
    }
    best
}

/// Number of distinct non-dominated points, treating points closer than
/// `tol` as one.
pub fn distinct_front_points(points: &[Vector], tol: f64) -> usize {
    let mut reps: Vec<&Vector> = Vec::new();
    for i in non_dominated(points) {
        if reps.iter().all(|r| r.sub(&points[i]).norm() > tol) {
            reps.push(&points[i]);
        }
    }
    reps.len()
}
