//! Nash bargaining task weights.
//!
//! Given task gradients `g_1..g_K` (columns of `G`), the bargaining solution
//! is the positive weight vector `alpha` with `G^T G alpha = 1/alpha`
//! (element-wise). The joint update is `G alpha`, it has squared norm `K`,
//! and every task receives the positive utility `beta_i = g_i^T G alpha`.
//!
//! The fixed point is found through a sequence of convex programs in
//! `alpha`:
//!
//! 1. a feasibility phase producing `alpha` with `alpha_i * beta_i >= 1`;
//! 2. the convex surrogate `min sum_i beta_i  s.t. phi_i(alpha) >= 0`, where
//!    `phi_i(alpha) = log(alpha_i) + log(beta_i)`;
//! 3. concave-convex refinement of `min sum_i beta_i + phi(alpha)` under the
//!    same constraints, linearizing the concave `phi` at each iterate.
//!
//! Every convex program is solved by a log-barrier method with damped Newton
//! steps. The solver works on the Gram matrix of the unit-normalized
//! gradients; the weights for the raw gradients follow from
//! `alpha_i = alpha_hat_i / ||g_i||`, which is exact because the fixed point
//! is equivariant under per-task rescaling.

use thiserror::Error;

use crate::baselines;
use crate::linalg::{self, LinalgError, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NashError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("starting point is not strictly feasible (min phi_i = {min_phi:e})")]
    Infeasible { min_phi: f64 },
    #[error("no strictly positive weighting gives every task a positive utility: {0}")]
    Degenerate(String),
    #[error("subproblem solver failed during {stage}: {reason}")]
    SolverFailure {
        stage: &'static str,
        reason: String,
        last_iterate: Vector,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashConfig {
    /// Maximum number of concave-convex refinement rounds.
    pub ccp_max_iters: usize,
    /// Fixed-point residual `||(G^T G alpha) * alpha - 1||_inf` accepted as exact.
    pub residual_tol: f64,
    /// The barrier parameter is driven down to this value.
    pub subproblem_tol: f64,
    pub barrier_mu_init: f64,
    pub barrier_shrink: f64,
    /// Lower clamp applied inside logarithms when reporting `phi`.
    pub alpha_floor: f64,
    /// Relative smallest-eigenvalue threshold below which gradients are
    /// treated as linearly dependent.
    pub sigma_k_threshold: f64,
}

impl Default for NashConfig {
    fn default() -> Self {
        NashConfig {
            ccp_max_iters: 20,
            residual_tol: 1e-6,
            subproblem_tol: 1e-8,
            barrier_mu_init: 1.0,
            barrier_shrink: 0.1,
            alpha_floor: 1e-12,
            sigma_k_threshold: 1e-10,
        }
    }
}

impl NashConfig {
    pub fn validate(&self) -> Result<(), NashError> {
        let positive = [
            ("residual_tol", self.residual_tol),
            ("subproblem_tol", self.subproblem_tol),
            ("barrier_mu_init", self.barrier_mu_init),
            ("alpha_floor", self.alpha_floor),
            ("sigma_k_threshold", self.sigma_k_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NashError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.barrier_shrink > 0.0 && self.barrier_shrink < 1.0) {
            return Err(NashError::Config(format!(
                "barrier_shrink must lie in (0, 1), got {}",
                self.barrier_shrink
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    /// Fixed-point residual within `residual_tol`.
    Exact,
    /// Best iterate after the refinement budget was spent.
    Approximate,
    /// Gradients are (numerically) linearly dependent; the direction is the
    /// minimum-norm convex combination and `alpha` is all zeros.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    pub alpha: Vector,
    pub direction: Vector,
    /// `||(G^T G alpha) * alpha - 1||_inf`; infinite when degenerate.
    pub residual_inf: f64,
    /// `sum_i log(alpha_i) + log(beta_i)`; negative infinity when degenerate.
    pub phi_value: f64,
    pub ccp_iters_used: usize,
    pub status: SolveStatus,
}

impl NashSolution {
    /// Per-task utilities `beta_i = g_i^T direction`.
    pub fn utilities(&self, g: &Matrix) -> Vector {
        g.tr_mul_vec(&self.direction).expect("direction length matches gradient rows")
    }
}

/// `beta = gram * alpha`
fn betas(gram: &Matrix, alpha: &[f64]) -> Vec<f64> {
    let k = alpha.len();
    (0..k).map(|i| linalg::dot(gram.col(i), alpha)).collect()
}

/// `phi_i = log(alpha_i * beta_i)`, or `None` outside the domain.
fn phis(alpha: &[f64], beta: &[f64]) -> Option<Vec<f64>> {
    alpha
        .iter()
        .zip(beta)
        .map(|(&a, &b)| {
            if a > 0.0 && b > 0.0 {
                let p = a * b;
                Some((p - 1.0).ln_1p())
            } else {
                None
            }
        })
        .collect()
}

/// Fixed-point residual `||(gram * alpha) * alpha - 1||_inf`.
pub fn fixed_point_residual(gram: &Matrix, alpha: &Vector) -> f64 {
    let beta = betas(gram, alpha.as_slice());
    alpha
        .iter()
        .zip(&beta)
        .fold(0.0, |m, (a, b)| m.max((a * b - 1.0).abs()))
}

/// `phi(alpha) = sum_i log(alpha_i) + log(beta_i)`, with both arguments
/// clamped below at `floor`.
pub fn phi(gram: &Matrix, alpha: &Vector, floor: f64) -> f64 {
    let beta = betas(gram, alpha.as_slice());
    alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.max(floor).ln() + b.max(floor).ln())
        .sum()
}

/// The refinement objective `sum_i beta_i + phi(alpha)`, which is
/// non-increasing along the concave-convex iterates.
pub fn ccp_objective(gram: &Matrix, alpha: &Vector, floor: f64) -> f64 {
    let beta = betas(gram, alpha.as_slice());
    beta.iter().sum::<f64>() + phi(gram, alpha, floor)
}

/// Smallest `phi_i` over tasks, `-inf` when some `alpha_i` or `beta_i` is
/// non-positive.
pub fn min_phi(gram: &Matrix, alpha: &Vector) -> f64 {
    let beta = betas(gram, alpha.as_slice());
    match phis(alpha.as_slice(), &beta) {
        Some(p) => p.into_iter().fold(f64::INFINITY, f64::min),
        None => f64::NEG_INFINITY,
    }
}

/// Gradient of `phi` at `alpha`: `1/alpha_j + sum_i gram_ij / beta_i`.
fn phi_gradient(gram: &Matrix, alpha: &[f64]) -> Vec<f64> {
    let beta = betas(gram, alpha);
    let k = alpha.len();
    (0..k)
        .map(|j| 1.0 / alpha[j] + (0..k).map(|i| gram[(i, j)] / beta[i]).sum::<f64>())
        .collect()
}

/// Minimizes `linear^T alpha` subject to `phi_i(alpha) >= 0`, `alpha > 0`
/// with a log-barrier path-following method.
struct Barrier<'a> {
    gram: &'a Matrix,
    linear: Vec<f64>,
    cfg: &'a NashConfig,
    stage: &'static str,
}

const NEWTON_MAX_ITERS: usize = 200;
const NEWTON_DECREMENT_TOL: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;

impl Barrier<'_> {
    fn failure(&self, reason: impl Into<String>, alpha: &[f64]) -> NashError {
        NashError::SolverFailure {
            stage: self.stage,
            reason: reason.into(),
            last_iterate: Vector::from(alpha),
        }
    }

    fn run(&self, alpha0: &[f64]) -> Result<Vec<f64>, NashError> {
        let mut alpha = alpha0.to_vec();
        let mut mu = self.cfg.barrier_mu_init;
        loop {
            self.center(&mut alpha, 1.0 / mu)?;
            if mu <= self.cfg.subproblem_tol {
                return Ok(polish_active(self.gram, &alpha).unwrap_or(alpha));
            }
            mu = (mu * self.cfg.barrier_shrink).max(self.cfg.subproblem_tol * 0.999_999);
        }
    }

    /// Damped Newton on `t * linear^T a - sum log phi_i - sum log a_i`.
    fn center(&self, alpha: &mut [f64], t: f64) -> Result<(), NashError> {
        let k = alpha.len();
        let gram = self.gram;
        for _ in 0..NEWTON_MAX_ITERS {
            let beta = betas(gram, alpha);
            let phi = phis(alpha, &beta).ok_or_else(|| self.failure("iterate left the domain", alpha))?;
            if phi.iter().any(|p| *p <= 0.0) {
                return Err(self.failure("iterate reached the constraint boundary", alpha));
            }

            let mut grad: Vec<f64> = (0..k).map(|j| t * self.linear[j] - 1.0 / alpha[j]).collect();
            let mut hess = Matrix::zeros(k, k);
            for j in 0..k {
                hess[(j, j)] += 1.0 / (alpha[j] * alpha[j]);
            }
            let mut dphi = vec![0.0; k];
            for i in 0..k {
                let ci = gram.col(i);
                for j in 0..k {
                    dphi[j] = ci[j] / beta[i];
                }
                dphi[i] += 1.0 / alpha[i];
                let inv_phi = 1.0 / phi[i];
                for j in 0..k {
                    grad[j] -= dphi[j] * inv_phi;
                }
                // -hess(phi_i) / phi_i + grad(phi_i) grad(phi_i)^T / phi_i^2
                let inv_b2 = inv_phi / (beta[i] * beta[i]);
                let inv_p2 = inv_phi * inv_phi;
                for c in 0..k {
                    for r in 0..k {
                        hess[(r, c)] += ci[r] * ci[c] * inv_b2 + dphi[r] * dphi[c] * inv_p2;
                    }
                }
                hess[(i, i)] += inv_phi / (alpha[i] * alpha[i]);
            }

            let neg_grad = Vector::from(grad.iter().map(|g| -g).collect::<Vec<_>>());
            let step = newton_step(&hess, &neg_grad).map_err(|e| self.failure(format!("Newton system: {e}"), alpha))?;
            let step = step.as_slice();
            let decrement = -linalg::dot(&grad, step);
            if !decrement.is_finite() {
                return Err(self.failure("non-finite Newton decrement", alpha));
            }
            if decrement * 0.5 <= NEWTON_DECREMENT_TOL {
                return Ok(());
            }

            let slope = -decrement;
            let mut s = 1.0;
            let mut accepted = None;
            while s > 1e-16 {
                let trial: Vec<f64> = alpha.iter().zip(step).map(|(a, d)| a + s * d).collect();
                if let Some(change) = self.objective_change(alpha, &phi, &trial, t) {
                    if change <= ARMIJO * s * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                s *= 0.5;
            }
            match accepted {
                Some(next) => alpha.copy_from_slice(&next),
                // Round-off floor: no representable decrease along the Newton direction.
                None => return Ok(()),
            }
        }
        Ok(())
    }

    /// `f(trial) - f(alpha)` for the barrier objective, computed from ratios
    /// to avoid cancellation at large `t`. `None` outside the domain.
    fn objective_change(&self, alpha: &[f64], phi: &[f64], trial: &[f64], t: f64) -> Option<f64> {
        if trial.iter().any(|a| !(*a > 0.0)) {
            return None;
        }
        let beta = betas(self.gram, trial);
        let trial_phi = phis(trial, &beta)?;
        if trial_phi.iter().any(|p| !(*p > 0.0)) {
            return None;
        }
        let mut change = 0.0;
        for j in 0..alpha.len() {
            change += t * self.linear[j] * (trial[j] - alpha[j]);
            change -= (trial[j] / alpha[j]).ln();
            change -= (trial_phi[j] / phi[j]).ln();
        }
        change.is_finite().then_some(change)
    }
}

/// Solves the Newton system, adding a growing ridge when rounding has made
/// the Hessian numerically indefinite (nearly parallel gradients).
fn newton_step(hess: &Matrix, rhs: &Vector) -> Result<Vector, linalg::LinalgError> {
    let err = match linalg::solve_spd(hess, rhs) {
        Ok(x) => return Ok(x),
        Err(e) => e,
    };
    let k = hess.rows();
    let scale = (0..k).map(|i| hess[(i, i)].abs()).fold(0.0f64, f64::max);
    let mut ridge = 1e-14 * scale;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..k {
            h[(i, i)] += ridge;
        }
        if let Ok(x) = linalg::solve_spd(&h, rhs) {
            return Ok(x);
        }
        ridge *= 100.0;
    }
    Err(err)
}

/// Constraints with `phi_i` below this at the end of the barrier path are
/// treated as active.
const ACTIVE_PHI: f64 = 1e-5;

/// When every constraint is active at the barrier solution, the optimum lies
/// on `phi_i = 0` for all `i`; Newton's method on that square system removes
/// the `O(mu)` offset the barrier leaves behind. Returns `None` when some
/// constraint is inactive or Newton does not converge.
fn polish_active(gram: &Matrix, alpha: &[f64]) -> Option<Vec<f64>> {
    let k = alpha.len();
    let beta = betas(gram, alpha);
    if phis(alpha, &beta)?.iter().any(|p| *p > ACTIVE_PHI) {
        return None;
    }
    let mut a = alpha.to_vec();
    for _ in 0..30 {
        let beta = betas(gram, &a);
        let f = phis(&a, &beta)?;
        if f.iter().all(|x| x.abs() <= 1e-15) {
            break;
        }
        let mut jac = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                jac[(i, j)] = gram[(i, j)] / beta[i];
            }
            jac[(i, i)] += 1.0 / a[i];
        }
        let rhs = Vector::from(f.iter().map(|x| -x).collect::<Vec<_>>());
        let step = linalg::solve_general(&jac, &rhs).ok()?;
        for (ai, s) in a.iter_mut().zip(step.iter()) {
            *ai += s;
        }
        if a.iter().any(|x| !(*x > 0.0)) {
            return None;
        }
    }
    let beta = betas(gram, &a);
    let done = phis(&a, &beta)?.iter().all(|x| x.abs() <= 1e-12);
    done.then_some(a)
}

/// Returns a strictly positive `alpha` with `alpha_i * beta_i >= 1` for every
/// task.
///
/// Starts from `alpha_i = 1/sqrt(gram_ii)`, the exact answer for orthogonal
/// gradients. When that leaves some `beta_i <= 0` it is blended with the
/// minimum-norm convex combination, whose utilities are all at least its
/// squared norm. A single global rescale then moves `min_i phi_i` to zero,
/// using `phi_i(c * alpha) = 2 log c + phi_i(alpha)`.
pub fn feasibility_init(gram: &Matrix) -> Result<Vector, NashError> {
    let k = gram.rows();
    if k == 0 || gram.cols() != k {
        return Err(NashError::InvalidInput(format!("gram must be square and non-empty, got {}x{}", k, gram.cols())));
    }
    let mut alpha = Vec::with_capacity(k);
    for i in 0..k {
        let d = gram[(i, i)];
        if !(d > 0.0) {
            return Err(NashError::Degenerate(format!("task {i} has a zero gradient")));
        }
        alpha.push(1.0 / d.sqrt());
    }
    let beta = betas(gram, &alpha);
    if beta.iter().any(|b| !(*b > 0.0)) {
        let w = baselines::min_norm_weights_from_gram(gram);
        let beta_w = betas(gram, w.as_slice());
        let floor = beta_w.iter().copied().fold(f64::INFINITY, f64::min);
        if !(floor > 1e-14 * gram.trace()) {
            return Err(NashError::Degenerate(
                "the minimum-norm convex combination vanishes (Pareto stationary)".into(),
            ));
        }
        // beta(w + delta a) = beta_w + delta beta_a stays positive for this delta.
        let mut delta: f64 = 1.0;
        for i in 0..k {
            if beta[i] < 0.0 {
                delta = delta.min(0.5 * beta_w[i] / -beta[i]);
            }
        }
        alpha = w.iter().zip(&alpha).map(|(wi, ai)| wi + delta * ai).collect();
    }
    lift_to_feasible(gram, &Vector::from(alpha))
        .ok_or_else(|| NashError::Degenerate("could not find weights with positive utilities".into()))
}

/// Global rescale putting `min_i phi_i` just above zero when all utilities
/// are positive. The margin grows when rounding in nearly cancelling
/// utilities defeats the exact rescale.
fn lift_to_feasible(gram: &Matrix, alpha: &Vector) -> Option<Vector> {
    let m = min_phi(gram, alpha);
    if !m.is_finite() {
        return None;
    }
    nudge_feasible(gram, &if m == 0.0 { alpha.clone() } else { alpha.scale((-m / 2.0).exp()) })
}

/// Smallest upward rescale (starting a few ulps above exact) that makes
/// `min_i phi_i >= 0` hold in floating point; feasible input is returned as is.
fn nudge_feasible(gram: &Matrix, alpha: &Vector) -> Option<Vector> {
    let mut alpha = alpha.clone();
    let mut margin = 4.0 * f64::EPSILON;
    for _ in 0..24 {
        let m = min_phi(gram, &alpha);
        if m >= 0.0 {
            return Some(alpha);
        }
        if !m.is_finite() {
            return None;
        }
        alpha = alpha.scale((-m / 2.0).exp() * (1.0 + margin));
        margin *= 8.0;
    }
    None
}

/// Scales a feasible point so that `min_i phi_i >= 1`, giving the barrier a
/// start well inside the feasible region.
fn interior_start(gram: &Matrix, alpha: &Vector) -> Result<Vector, NashError> {
    let m = min_phi(gram, alpha);
    if !(m >= 0.0) {
        return Err(NashError::Infeasible { min_phi: m });
    }
    Ok(if m < 1.0 { alpha.scale(((1.0 - m) / 2.0).exp()) } else { alpha.clone() })
}

/// Solves `min sum_i beta_i(alpha)  s.t.  phi_i(alpha) >= 0, alpha > 0`
/// from a feasible `alpha0`.
pub fn solve_convex_surrogate(gram: &Matrix, alpha0: &Vector, cfg: &NashConfig) -> Result<Vector, NashError> {
    cfg.validate()?;
    check_square(gram, alpha0)?;
    let start = interior_start(gram, alpha0)?;
    let k = gram.rows();
    let ones = vec![1.0; k];
    let barrier = Barrier {
        gram,
        linear: betas(gram, &ones),
        cfg,
        stage: "convex surrogate",
    };
    barrier.run(start.as_slice()).map(Vector::from)
}

fn check_square(gram: &Matrix, alpha: &Vector) -> Result<(), NashError> {
    if gram.rows() != gram.cols() || gram.rows() != alpha.len() || alpha.is_empty() {
        return Err(NashError::InvalidInput(format!(
            "gram {}x{} incompatible with alpha of length {}",
            gram.rows(),
            gram.cols(),
            alpha.len()
        )));
    }
    if !gram.is_finite() || !alpha.is_finite() {
        return Err(NashError::InvalidInput("non-finite entries".into()));
    }
    Ok(())
}

/// Iterates of a concave-convex refinement run, starting with the input.
#[derive(Debug, Clone)]
pub struct CcpTrace {
    pub iterates: Vec<Vector>,
    /// Refinement objective at each iterate.
    pub objective: Vec<f64>,
    /// Number of convex programs solved.
    pub rounds: usize,
}

/// Concave-convex refinement: each round minimizes
/// `sum_i beta_i + phi(a_tau) + grad phi(a_tau)^T (alpha - a_tau)` under the
/// original constraints. Stops at the first iterate within `residual_tol`.
pub fn ccp_refine(gram: &Matrix, alpha: &Vector, cfg: &NashConfig) -> Result<Vector, NashError> {
    ccp_refine_traced(gram, alpha, cfg).map(|t| t.iterates.last().cloned().unwrap_or_else(|| alpha.clone()))
}

pub fn ccp_refine_traced(gram: &Matrix, alpha: &Vector, cfg: &NashConfig) -> Result<CcpTrace, NashError> {
    cfg.validate()?;
    check_square(gram, alpha)?;
    let k = gram.rows();
    let floor = cfg.alpha_floor;
    let mut trace = CcpTrace {
        iterates: vec![alpha.clone()],
        objective: vec![ccp_objective(gram, alpha, floor)],
        rounds: 0,
    };
    if cfg.ccp_max_iters == 0 {
        return Ok(trace);
    }
    let m = min_phi(gram, alpha);
    if !(m >= 0.0) {
        return Err(NashError::Infeasible { min_phi: m });
    }
    let ones = vec![1.0; k];
    let sum_beta = betas(gram, &ones);
    let mut current = alpha.clone();
    let mut current_obj = trace.objective[0];
    for _ in 0..cfg.ccp_max_iters {
        if fixed_point_residual(gram, &current) <= cfg.residual_tol {
            break;
        }
        let grad = phi_gradient(gram, current.as_slice());
        let barrier = Barrier {
            gram,
            linear: sum_beta.iter().zip(&grad).map(|(a, b)| a + b).collect(),
            cfg,
            stage: "concave-convex refinement",
        };
        let start = if min_phi(gram, &current) > 0.0 { current.clone() } else { interior_start(gram, &current)? };
        let raw = Vector::from(barrier.run(start.as_slice())?);
        // Polished iterates sit on the constraint boundary up to rounding.
        let next = nudge_feasible(gram, &raw).ok_or(NashError::Infeasible {
            min_phi: min_phi(gram, &raw),
        })?;
        trace.rounds += 1;
        let next_obj = ccp_objective(gram, &next, floor);
        // An inexact subproblem solution can land above the previous iterate
        // once the sequence has converged to within the barrier's accuracy.
        if !(next_obj <= current_obj) {
            break;
        }
        trace.iterates.push(next.clone());
        trace.objective.push(next_obj);
        current = next;
        current_obj = next_obj;
    }
    Ok(trace)
}

/// Bargaining weights and joint direction for the columns of `g`.
pub fn solve(g: &Matrix, cfg: &NashConfig) -> Result<NashSolution, NashError> {
    solve_warm(g, cfg, None)
}

/// Like [`solve`], seeding the feasibility phase with a previous `alpha`
/// when it still yields positive utilities.
pub fn solve_warm(g: &Matrix, cfg: &NashConfig, warm: Option<&Vector>) -> Result<NashSolution, NashError> {
    cfg.validate()?;
    let (d, k) = (g.rows(), g.cols());
    if k == 0 || d == 0 {
        return Err(NashError::InvalidInput(format!("gradient matrix must be non-empty, got {d}x{k}")));
    }
    if !g.is_finite() {
        return Err(NashError::InvalidInput("gradient matrix has non-finite entries".into()));
    }

    let norms: Vec<f64> = (0..k).map(|j| linalg::dot(g.col(j), g.col(j)).sqrt()).collect();
    if norms.iter().any(|n| !(*n > 0.0) || !n.is_finite()) {
        return Ok(degenerate(g));
    }
    let mut unit = g.clone();
    for (j, n) in norms.iter().enumerate() {
        for x in unit.col_mut(j) {
            *x /= n;
        }
    }
    let corr = linalg::gram(&unit)?;
    let sigma = linalg::smallest_singular_value(&corr)?;
    if sigma <= cfg.sigma_k_threshold * corr.trace() / k as f64 {
        return Ok(degenerate(g));
    }

    let warm_hat = warm
        .filter(|w| w.len() == k && w.iter().all(|x| *x > 0.0 && x.is_finite()))
        .map(|w| Vector::from(w.iter().zip(&norms).map(|(a, n)| a * n).collect::<Vec<_>>()))
        .filter(|w| min_phi(&corr, w).is_finite());
    // A start already within tolerance of the fixed point is returned as is;
    // the cold start is exact for orthogonal gradients and for two tasks.
    let converged = |a: &Vector| fixed_point_residual(&corr, a) <= cfg.residual_tol;
    let cold = match feasibility_init(&corr) {
        Ok(a) => a,
        Err(NashError::Degenerate(_)) => return Ok(degenerate(g)),
        Err(e) => return Err(e),
    };
    let warm_solution = if converged(&cold) {
        Some(cold.clone())
    } else {
        warm_hat.and_then(|w| lift_to_feasible(&corr, &w)).and_then(|w| {
            if converged(&w) {
                return Some(w);
            }
            match solve_surrogate_with_restarts(&corr, &w, cfg) {
                Ok(a) => Some(a),
                Err(e) => {
                    log::debug!("warm-started solve failed, retrying from scratch: {e}");
                    None
                }
            }
        })
    };
    let mut hat = match warm_solution {
        Some(a) => a,
        None => solve_surrogate_with_restarts(&corr, &cold, cfg)?,
    };
    let mut ccp_iters = 0;
    if fixed_point_residual(&corr, &hat) > cfg.residual_tol {
        let trace = ccp_refine_traced(&corr, &hat, cfg)?;
        ccp_iters = trace.rounds;
        hat = trace.iterates.last().cloned().unwrap_or(hat);
    }

    let alpha = Vector::from(hat.iter().zip(&norms).map(|(a, n)| a / n).collect::<Vec<_>>());
    let direction = g.mul_vec(&alpha)?;
    let beta = g.tr_mul_vec(&direction)?;
    let residual_inf = alpha.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a * b - 1.0).abs()));
    let phi_value = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.max(cfg.alpha_floor).ln() + b.max(cfg.alpha_floor).ln())
        .sum();
    let status = if residual_inf <= cfg.residual_tol { SolveStatus::Exact } else { SolveStatus::Approximate };
    Ok(NashSolution {
        alpha,
        direction,
        residual_inf,
        phi_value,
        ccp_iters_used: ccp_iters,
        status,
    })
}

fn solve_surrogate_with_restarts(corr: &Matrix, start: &Vector, cfg: &NashConfig) -> Result<Vector, NashError> {
    let mut start = start.clone();
    let mut last_err = None;
    for _ in 0..3 {
        match solve_convex_surrogate(corr, &start, cfg) {
            Ok(a) => return Ok(a),
            Err(e @ NashError::SolverFailure { .. }) => {
                log::debug!("surrogate solve failed, restarting further inside: {e}");
                last_err = Some(e);
                start = start.scale(std::f64::consts::E);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn degenerate(g: &Matrix) -> NashSolution {
    let mn = baselines::mgda(g);
    NashSolution {
        alpha: Vector::zeros(g.cols()),
        direction: mn.direction,
        residual_inf: f64::INFINITY,
        phi_value: f64::NEG_INFINITY,
        ccp_iters_used: 0,
        status: SolveStatus::Degenerate,
    }
}
