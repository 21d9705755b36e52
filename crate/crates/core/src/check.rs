//! Quick self-checks behind `nash-mtl check`: gradient oracles and solver
//! properties on random instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines;
use crate::linalg::{self, Matrix, Vector};
use crate::nash::{self, NashConfig, SolveStatus};
use crate::problems::{self, ToyProblem};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// `d x k` matrix of i.i.d. standard normal entries.
pub fn gaussian_matrix(rng: &mut impl Rng, d: usize, k: usize) -> Matrix {
    Matrix::from_col_major(d, k, (0..d * k).map(|_| rng.sample(StandardNormal)).collect()).expect("shape")
}

/// Whether the unit-normalized columns of `g` are numerically dependent by
/// the solver's criterion.
pub fn is_degenerate(g: &Matrix, cfg: &NashConfig) -> bool {
    let mut unit = g.clone();
    for j in 0..g.cols() {
        let n = linalg::dot(g.col(j), g.col(j)).sqrt();
        if !(n > 0.0) {
            return true;
        }
        for x in unit.col_mut(j) {
            *x /= n;
        }
    }
    let corr = linalg::gram(&unit).expect("non-empty");
    let s = linalg::smallest_singular_value(&corr).expect("square");
    s <= cfg.sigma_k_threshold * corr.trace() / g.cols() as f64
}

/// Gaussian gradient matrix with `K` in `[2, 10]` and `d` in `[K, 64]`,
/// redrawn while degenerate.
pub fn random_instance(rng: &mut impl Rng) -> Matrix {
    loop {
        let k = rng.random_range(2..=10);
        let d = rng.random_range(k..=64);
        let g = gaussian_matrix(rng, d, k);
        if !is_degenerate(&g, &NashConfig::default()) {
            return g;
        }
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Runs the check suite; `samples` scales the number of random instances.
pub fn run_checks(seed: u64, samples: usize) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NashConfig::default();
    let mut out = Vec::new();

    let toy = problems::finite_diff_check(&ToyProblem::new(), 100, seed, &[]);
    out.push(outcome(
        "toy gradients vs finite differences",
        toy.max_error <= 1e-4,
        format!("max error {:.2e} over {} points", toy.max_error, toy.points_checked),
    ));
    let quad = problems::random_quadratics(3, 8, 20.0, seed).expect("valid parameters");
    let q = problems::finite_diff_check(&quad, 100, seed, &[]);
    out.push(outcome(
        "quadratic gradients vs finite differences",
        q.max_error <= 1e-7,
        format!("max error {:.2e}", q.max_error),
    ));

    let instances: Vec<Matrix> = (0..samples).map(|_| random_instance(&mut rng)).collect();
    let sols: Vec<_> = instances.iter().map(|g| nash::solve(g, &cfg)).collect();
    let exact = sols
        .iter()
        .filter(|s| matches!(s, Ok(s) if s.residual_inf <= cfg.residual_tol))
        .count();
    out.push(outcome(
        "bargaining fixed point residual",
        exact * 100 >= 99 * samples,
        format!("{exact}/{samples} within {:.0e}", cfg.residual_tol),
    ));

    let mut worst_norm: f64 = 0.0;
    let mut norm_ok = true;
    for (g, s) in instances.iter().zip(&sols) {
        if let Ok(s) = s {
            if s.status != SolveStatus::Degenerate {
                let k = g.cols() as f64;
                let gap = (s.direction.dot(&s.direction) - k).abs();
                norm_ok &= gap <= k * s.residual_inf + 1e-12 * k;
                worst_norm = worst_norm.max(gap);
            }
        }
    }
    out.push(outcome(
        "direction norm identity",
        norm_ok,
        format!("largest | |d|^2 - K | = {worst_norm:.2e}"),
    ));

    let mut drift: f64 = 0.0;
    let mut perm_err: f64 = 0.0;
    for (g, s) in instances.iter().zip(&sols).take(samples.min(100)) {
        let Ok(s) = s else { continue };
        let k = g.cols();
        let c: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        let mut scaled = g.clone();
        for (j, cj) in c.iter().enumerate() {
            for x in scaled.col_mut(j) {
                *x *= cj;
            }
        }
        if let Ok(t) = nash::solve(&scaled, &cfg) {
            drift = drift.max(t.direction.sub(&s.direction).norm_inf());
        }
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        if let Ok(t) = nash::solve(&g.permute_columns(&perm), &cfg) {
            for (i, &p) in perm.iter().enumerate() {
                perm_err = perm_err.max((t.alpha[i] - s.alpha[p]).abs() / s.alpha[p]);
            }
            perm_err = perm_err.max(t.direction.sub(&s.direction).norm_inf());
        }
    }
    out.push(outcome("scale invariance", drift <= 1e-6, format!("max direction drift {drift:.2e}")));
    out.push(outcome("permutation symmetry", perm_err <= 1e-8, format!("max deviation {perm_err:.2e}")));

    let mut mgda_gap: f64 = 0.0;
    for _ in 0..samples.min(50) {
        let g = gaussian_matrix(&mut rng, 4, 3);
        let got = baselines::mgda(&g).norm();
        mgda_gap = mgda_gap.max(got - grid_min_norm(&g, 100));
    }
    out.push(outcome(
        "min-norm point vs simplex grid",
        mgda_gap <= 1e-6,
        format!("max excess over grid {mgda_gap:.2e}"),
    ));

    let mut proj: f64 = 0.0;
    for _ in 0..samples.min(50) {
        let k = rng.random_range(2..=5);
        let g = gaussian_matrix(&mut rng, 8, k);
        if let Ok((_, d)) = baselines::imtl_g(&g) {
            let p: Vec<f64> = (0..k).map(|j| linalg::dot(d.as_slice(), g.col(j)) / linalg::dot(g.col(j), g.col(j)).sqrt()).collect();
            let spread = p.iter().copied().fold(f64::NEG_INFINITY, f64::max) - p.iter().copied().fold(f64::INFINITY, f64::min);
            proj = proj.max(spread / p[0].abs().max(1.0));
        }
    }
    out.push(outcome("equal projections", proj <= 1e-8, format!("max spread {proj:.2e}")));
    out
}

/// Smallest `||G w||` over the simplex grid with step `1/n` (K = 3).
pub fn grid_min_norm(g: &Matrix, n: usize) -> f64 {
    assert_eq!(g.cols(), 3, "grid search is for three tasks");
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let w = Vector::from([i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64]);
            best = best.min(g.mul_vec(&w).expect("dims").norm());
        }
    }
    best
}

/// Renders outcomes as an aligned pass/fail table.
pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    outcomes
        .iter()
        .map(|o| format!("{:<width$}  {}  {}\n", o.name, if o.passed { "PASS" } else { "FAIL" }, o.detail))
        .collect()
}
