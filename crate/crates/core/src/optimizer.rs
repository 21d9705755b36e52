//! The outer optimization loop: gradients, aggregation, step size, stale
//! weights and termination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, AggregateError, AggregatorKind, AggregatorState};
use crate::linalg::{self, Matrix, Vector};
use crate::nash::{NashConfig, SolveStatus};
use crate::problems::Problem;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step} (theta = {theta:?})")]
    NonFinite { step: usize, what: &'static str, theta: Vec<f64> },
    #[error("aggregation failed at step {step}: {source}")]
    Aggregate {
        step: usize,
        #[source]
        source: AggregateError,
    },
}

/// How the aggregated direction becomes a parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    /// `mu = min_i 1 / (L K alpha_i)`; bargaining aggregator only.
    Theorem { lipschitz: f64 },
    Fixed { lr: f64 },
    /// The direction is fed to Adam as a pseudo-gradient.
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

fn default_beta1() -> f64 {
    ADAM_BETA1
}
fn default_beta2() -> f64 {
    ADAM_BETA2
}
fn default_eps() -> f64 {
    ADAM_EPS
}

impl StepRule {
    pub fn adam(lr: f64) -> Self {
        StepRule::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub step_rule: StepRule,
    pub max_steps: usize,
    /// Recompute weights every `T` steps; in between the last weights are
    /// applied to fresh gradients.
    pub weight_update_every: usize,
    pub stationarity_tol: f64,
    /// Early-stop cadence for the stationarity test.
    pub stationarity_check_every: usize,
    /// Keep every `n`-th record in the returned trajectory; the last record
    /// is always kept.
    pub record_every: usize,
    pub seed: u64,
    pub nash: NashConfig,
}

impl OptimizerConfig {
    pub fn new(step_rule: StepRule, max_steps: usize) -> Self {
        OptimizerConfig {
            step_rule,
            max_steps,
            weight_update_every: 1,
            stationarity_tol: 1e-8,
            stationarity_check_every: 100,
            record_every: 1,
            seed: 0,
            nash: NashConfig::default(),
        }
    }

    pub fn validate(&self, aggregator: &AggregatorKind) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        match self.step_rule {
            StepRule::Theorem { lipschitz } => {
                if !(lipschitz > 0.0 && lipschitz.is_finite()) {
                    return bad(format!("lipschitz must be positive and finite, got {lipschitz}"));
                }
                if *aggregator != AggregatorKind::Nash {
                    return bad(format!("theorem step rule needs the nash aggregator, got {}", aggregator.name()));
                }
            }
            StepRule::Fixed { lr } => {
                if !(lr > 0.0 && lr.is_finite()) {
                    return bad(format!("lr must be positive and finite, got {lr}"));
                }
            }
            StepRule::Adam { lr, beta1, beta2, eps } => {
                if !(lr > 0.0 && lr.is_finite()) {
                    return bad(format!("lr must be positive and finite, got {lr}"));
                }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
                    return bad(format!("adam betas must lie in [0, 1), got ({beta1}, {beta2})"));
                }
                if !(eps > 0.0) {
                    return bad(format!("adam eps must be positive, got {eps}"));
                }
            }
        }
        if self.weight_update_every == 0 {
            return bad("weight_update_every must be >= 1".into());
        }
        if self.stationarity_check_every == 0 {
            return bad("stationarity_check_every must be >= 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        if !(self.stationarity_tol >= 0.0) {
            return bad(format!("stationarity_tol must be >= 0, got {}", self.stationarity_tol));
        }
        aggregator.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.nash.validate().map_err(|e| RunError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxSteps,
    Stationary,
    Degenerate,
}

/// State at one step; `alpha` is zero when the weights were stale or the
/// aggregator has none.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub theta: Vector,
    pub losses: Vector,
    pub alpha: Vector,
    pub step_size: f64,
    /// Norm of the min-norm convex combination of the gradients.
    pub stationarity: f64,
    /// Smallest singular value of the gradient Gram matrix.
    pub sigma_k: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Vec<TrajectoryRecord>,
    pub final_theta: Vector,
    pub final_losses: Vector,
    pub termination: Termination,
    pub solver_calls: u64,
}

impl RunResult {
    pub fn final_stationarity(&self) -> f64 {
        self.trajectory.last().map_or(f64::NAN, |r| r.stationarity)
    }
}

/// `min_i 1 / (L K alpha_i)`.
///
/// Panics if `alpha` has a non-positive entry or `lipschitz <= 0`.
pub fn theorem_step_size(alpha: &Vector, lipschitz: f64) -> f64 {
    assert!(lipschitz > 0.0, "lipschitz must be positive");
    assert!(!alpha.is_empty() && alpha.iter().all(|a| *a > 0.0), "alpha must be strictly positive: {alpha:?}");
    let k = alpha.len() as f64;
    1.0 / (lipschitz * k * alpha.max())
}

/// Norm of the min-norm point of the convex hull of the gradient columns.
pub fn pareto_stationarity(g: &Matrix) -> f64 {
    baselines::mgda(g).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vector,
    pub v: Vector,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState::with_params(dim, default_beta1(), default_beta2(), default_eps())
    }

    pub fn with_params(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            m: Vector::zeros(dim),
            v: Vector::zeros(dim),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// Advances the moments with `direction` and returns the update to
    /// subtract from the parameters.
    pub fn step(&mut self, direction: &Vector, lr: f64) -> Vector {
        assert_eq!(direction.len(), self.m.len(), "adam state dimension mismatch");
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        let mut update = Vector::zeros(direction.len());
        for i in 0..direction.len() {
            let g = direction[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            update[i] = lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        update
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, direction: &Vector, lr: f64) -> (Vector, AdamState) {
    let mut next = state.clone();
    let u = next.step(direction, lr);
    (u, next)
}

fn evaluate(problem: &dyn Problem, theta: &Vector, step: usize) -> Result<(Vector, Matrix), RunError> {
    let losses = problem.losses(theta);
    if !losses.is_finite() {
        return Err(RunError::NonFinite {
            step,
            what: "loss",
            theta: theta.as_slice().to_vec(),
        });
    }
    let g = problem.gradients(theta);
    if !g.is_finite() {
        return Err(RunError::NonFinite {
            step,
            what: "gradient",
            theta: theta.as_slice().to_vec(),
        });
    }
    Ok((losses, g))
}

fn sigma_k(g: &Matrix) -> f64 {
    linalg::gram(g)
        .and_then(|m| linalg::smallest_singular_value(&m))
        .unwrap_or(0.0)
}

/// Runs the optimizer from `init`.
pub fn run(
    problem: &dyn Problem,
    aggregator: &AggregatorKind,
    init: &Vector,
    cfg: &OptimizerConfig,
) -> Result<RunResult, RunError> {
    run_observed(problem, aggregator, init, cfg, |_| {})
}

/// Like [`run`], passing every record to `observe` regardless of
/// `record_every`.
pub fn run_observed(
    problem: &dyn Problem,
    aggregator: &AggregatorKind,
    init: &Vector,
    cfg: &OptimizerConfig,
    mut observe: impl FnMut(&TrajectoryRecord),
) -> Result<RunResult, RunError> {
    cfg.validate(aggregator)?;
    if init.len() != problem.dim() {
        return Err(RunError::Config(format!(
            "init has dimension {}, problem has {}",
            init.len(),
            problem.dim()
        )));
    }
    let k = problem.num_tasks();
    let mut state = AggregatorState::new(cfg.seed).with_nash_config(cfg.nash.clone());
    let mut adam = match cfg.step_rule {
        StepRule::Adam { beta1, beta2, eps, .. } => Some(AdamState::with_params(problem.dim(), beta1, beta2, eps)),
        _ => None,
    };
    let mut theta = init.clone();
    let mut stale: Option<(Vector, bool)> = None;
    let mut trajectory = Vec::with_capacity((cfg.max_steps / cfg.record_every).min(1 << 20) + 1);
    let mut keep = |rec: TrajectoryRecord, last: bool, trajectory: &mut Vec<TrajectoryRecord>| {
        observe(&rec);
        if last || rec.step.is_multiple_of(cfg.record_every) {
            trajectory.push(rec);
        }
    };
    let mut termination = Termination::MaxSteps;
    let mut step = 0;

    loop {
        let (losses, g) = evaluate(problem, &theta, step)?;
        let min_norm = baselines::mgda(&g);
        let stationarity = min_norm.norm();
        let record = |alpha: Vector, step_size: f64, theta: &Vector, losses: &Vector| TrajectoryRecord {
            step,
            theta: theta.clone(),
            losses: losses.clone(),
            alpha,
            step_size,
            stationarity,
            sigma_k: sigma_k(&g),
        };

        if step == cfg.max_steps {
            keep(record(Vector::zeros(k), 0.0, &theta, &losses), true, &mut trajectory);
            break;
        }
        if step % cfg.stationarity_check_every == 0 && stationarity <= cfg.stationarity_tol {
            termination = Termination::Stationary;
            keep(record(Vector::zeros(k), 0.0, &theta, &losses), true, &mut trajectory);
            break;
        }

        // Stale weights carry a flag marking the min-norm fallback taken
        // when the bargaining problem was degenerate.
        let refresh = step % cfg.weight_update_every == 0 || stale.is_none();
        let (direction, weights, recorded_alpha, degenerate, fallback) = if refresh {
            let agg = baselines::aggregate(aggregator, &g, &losses, &mut state)
                .map_err(|source| RunError::Aggregate { step, source })?;
            let degenerate = agg.nash.as_ref().is_some_and(|s| s.status == SolveStatus::Degenerate);
            stale = if degenerate {
                Some((min_norm.weights.clone(), true))
            } else {
                agg.weights.clone().map(|w| (w, false))
            };
            let shown = agg.weights.clone().unwrap_or_else(|| Vector::zeros(k));
            (agg.direction, agg.weights, shown, degenerate, degenerate)
        } else {
            let (w, fallback) = stale.clone().expect("stale weights present");
            (g.mul_vec(&w).expect("dims"), Some(w), Vector::zeros(k), false, fallback)
        };

        if degenerate && stationarity <= cfg.stationarity_tol {
            termination = Termination::Degenerate;
            keep(record(Vector::zeros(k), 0.0, &theta, &losses), true, &mut trajectory);
            break;
        }

        let (update, step_size) = match cfg.step_rule {
            StepRule::Theorem { lipschitz } => {
                let mu = match weights.as_ref() {
                    Some(a) if !fallback => theorem_step_size(a, lipschitz),
                    _ => 1.0 / lipschitz,
                };
                (direction.scale(mu), mu)
            }
            StepRule::Fixed { lr } => (direction.scale(lr), lr),
            StepRule::Adam { lr, .. } => (adam.as_mut().expect("adam state").step(&direction, lr), lr),
        };
        keep(record(recorded_alpha, step_size, &theta, &losses), false, &mut trajectory);
        theta = theta.sub(&update);
        if !theta.is_finite() {
            return Err(RunError::NonFinite {
                step,
                what: "parameter update",
                theta: theta.as_slice().to_vec(),
            });
        }
        step += 1;
    }

    let last = trajectory.last().expect("at least one record");
    Ok(RunResult {
        final_theta: last.theta.clone(),
        final_losses: last.losses.clone(),
        trajectory,
        termination,
        solver_calls: state.solver_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Quadratic, QuadraticProblem};

    fn isotropic(l: f64, centers: &[&[f64]]) -> QuadraticProblem {
        let d = centers[0].len();
        let mut h = Matrix::identity(d);
        for i in 0..d {
            h[(i, i)] = l;
        }
        let tasks = centers
            .iter()
            .map(|c| Quadratic {
                hessian: h.clone(),
                center: Vector::from(c.to_vec()),
                offset: 0.0,
            })
            .collect();
        QuadraticProblem::new("iso", tasks).unwrap()
    }

    #[test]
    fn theorem_step_examples() {
        assert_eq!(theorem_step_size(&Vector::from([2.0, 4.0]), 0.5), 0.25);
        let g = 3.7;
        assert!((theorem_step_size(&Vector::from([1.0 / g]), 1.0) - g).abs() < 1e-15);
        let a = Vector::from([0.3, 1.2, 0.7]);
        let s = theorem_step_size(&a, 2.0);
        assert!((theorem_step_size(&a.scale(4.0), 2.0) - s / 4.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic]
    fn theorem_step_rejects_nonpositive_alpha() {
        theorem_step_size(&Vector::from([1.0, 0.0]), 1.0);
    }

    #[test]
    fn stationarity_examples() {
        let g = Matrix::from_columns(&[Vector::from([1.0, 2.0]), Vector::from([-1.0, -2.0])]).unwrap();
        assert!(pareto_stationarity(&g) <= 1e-12);
        let e = Matrix::identity(2);
        assert!((pareto_stationarity(&e) - 0.5f64.sqrt()).abs() < 1e-12);
        let one = Matrix::from_columns(&[Vector::from([3.0, 4.0])]).unwrap();
        assert!((pareto_stationarity(&one) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        let mut s = AdamState::new(3);
        let u = s.step(&Vector::from([2.0, -0.5, 0.0]), 1e-3);
        assert!((u[0] - 1e-3).abs() < 1e-10);
        assert!((u[1] + 1e-3).abs() < 1e-10);
        assert_eq!(u[2], 0.0);
    }

    #[test]
    fn adam_zero_direction_decays_moments() {
        let mut s = AdamState::new(2);
        s.step(&Vector::from([1.0, 1.0]), 0.1);
        let (m, v) = (s.m.clone(), s.v.clone());
        let u = s.step(&Vector::zeros(2), 0.1);
        assert!(u.iter().all(|x| *x >= 0.0));
        assert!(s.m[0] < m[0] && s.v[0] < v[0]);
        let fresh = adam_step(&AdamState::new(2), &Vector::zeros(2), 0.1).0;
        assert_eq!(fresh.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn adam_repeated_direction_does_not_grow() {
        let mut s = AdamState::new(2);
        let d = Vector::from([0.7, -3.0]);
        let u1 = s.step(&d, 1e-2);
        let u2 = s.step(&d, 1e-2);
        for i in 0..2 {
            assert!(u2[i].abs() <= u1[i].abs() + 1e-12);
        }
    }

    #[test]
    fn single_task_theorem_rule_is_gradient_descent() {
        let l = 2.0;
        let p = isotropic(l, &[&[0.0, 0.0, 0.0]]);
        let mut cfg = OptimizerConfig::new(StepRule::Theorem { lipschitz: l }, 50);
        cfg.stationarity_check_every = 1;
        let r = run(&p, &AggregatorKind::Nash, &Vector::from([1.0, -2.0, 0.5]), &cfg).unwrap();
        // one exact gradient step reaches the minimizer of an isotropic quadratic
        assert!(r.trajectory[1].theta.norm() < 1e-12, "{:?}", r.trajectory[1].theta);
        assert_eq!(r.termination, Termination::Stationary);
    }

    #[test]
    fn theorem_rule_descends_every_task() {
        let p = crate::problems::random_quadratics(2, 6, 10.0, 4).unwrap();
        let cfg = OptimizerConfig::new(StepRule::Theorem { lipschitz: p.lipschitz }, 2000);
        let r = run(&p, &AggregatorKind::Nash, &Vector::from_elem(6, 3.0), &cfg).unwrap();
        for w in r.trajectory.windows(2) {
            for i in 0..2 {
                assert!(w[1].losses[i] <= w[0].losses[i] + 1e-12, "step {}", w[1].step);
            }
        }
    }

    #[test]
    fn isotropic_pair_ends_on_segment() {
        let p = isotropic(1.0, &[&[0.0, 0.0], &[1.0, 0.0]]);
        let cfg = OptimizerConfig::new(StepRule::Theorem { lipschitz: 1.0 }, 20_000);
        let r = run(&p, &AggregatorKind::Nash, &Vector::from([0.3, 2.0]), &cfg).unwrap();
        let t = &r.final_theta;
        let off = t[1].abs() + (-t[0]).max(0.0) + (t[0] - 1.0).max(0.0);
        assert!(off <= 1e-4, "{t:?}");
    }

    #[test]
    fn stale_weights_count_solver_calls() {
        let p = crate::problems::random_quadratics(2, 5, 5.0, 2).unwrap();
        let mut cfg = OptimizerConfig::new(StepRule::Fixed { lr: 1e-3 }, 100);
        cfg.stationarity_tol = 0.0;
        cfg.weight_update_every = 10;
        let r = run(&p, &AggregatorKind::Nash, &Vector::from_elem(5, 1.0), &cfg).unwrap();
        assert_eq!(r.solver_calls, 10);
        assert_eq!(r.trajectory.len(), 101);
        assert!(r.trajectory[1].alpha.iter().all(|a| *a == 0.0));
        assert!(r.trajectory[10].alpha.iter().all(|a| *a > 0.0));
        assert_eq!(r.trajectory[100].step_size, 0.0);
    }

    #[test]
    fn thinned_recording_keeps_last_and_observes_all() {
        let p = crate::problems::random_quadratics(2, 3, 4.0, 6).unwrap();
        let mut cfg = OptimizerConfig::new(StepRule::Fixed { lr: 1e-3 }, 25);
        cfg.stationarity_tol = 0.0;
        cfg.record_every = 10;
        let mut seen = 0;
        let r = run_observed(&p, &AggregatorKind::Mgda, &Vector::zeros(3), &cfg, |_| seen += 1).unwrap();
        assert_eq!(seen, 26);
        let steps: Vec<usize> = r.trajectory.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn sigma_k_matches_tensor_routine() {
        let p = crate::problems::random_quadratics(3, 4, 5.0, 8).unwrap();
        let cfg = OptimizerConfig::new(StepRule::adam(1e-2), 20);
        let r = run(&p, &AggregatorKind::Ls, &Vector::zeros(4), &cfg).unwrap();
        for rec in &r.trajectory {
            let g = p.gradients(&rec.theta);
            let s = linalg::smallest_singular_value(&linalg::gram(&g).unwrap()).unwrap();
            assert_eq!(rec.sigma_k, s);
            assert!(rec.sigma_k >= 0.0);
        }
    }

    #[test]
    fn theorem_rule_rejected_for_baselines() {
        let cfg = OptimizerConfig::new(StepRule::Theorem { lipschitz: 1.0 }, 10);
        assert!(matches!(cfg.validate(&AggregatorKind::Mgda), Err(RunError::Config(_))));
        let mut bad = OptimizerConfig::new(StepRule::Fixed { lr: 1.0 }, 10);
        bad.weight_update_every = 0;
        assert!(bad.validate(&AggregatorKind::Ls).is_err());
    }

    #[test]
    fn non_finite_loss_aborts_with_step() {
        struct Blowup;
        impl Problem for Blowup {
            fn name(&self) -> &str {
                "blowup"
            }
            fn dim(&self) -> usize {
                1
            }
            fn num_tasks(&self) -> usize {
                1
            }
            fn losses(&self, t: &Vector) -> Vector {
                Vector::from([if t[0] < -2.5 { f64::NAN } else { t[0] }])
            }
            fn gradients(&self, _: &Vector) -> Matrix {
                Matrix::from_col_major(1, 1, vec![1.0]).unwrap()
            }
            fn domain(&self) -> crate::problems::Bounds {
                crate::problems::Bounds::cube(1, -1.0, 1.0)
            }
        }
        let cfg = OptimizerConfig::new(StepRule::Fixed { lr: 1.0 }, 10);
        let err = run(&Blowup, &AggregatorKind::Ls, &Vector::from([0.0]), &cfg).unwrap_err();
        assert!(matches!(err, RunError::NonFinite { step: 3, what: "loss", .. }), "{err}");
    }
}
