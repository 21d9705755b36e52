//! Multi-loss problem instances with analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem parameters: {0}")]
    InvalidParams(String),
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Bounds {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| v >= l && v <= h)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect::<Vec<_>>(),
        )
    }
}

/// `K` differentiable losses over `R^d`.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn num_tasks(&self) -> usize;
    fn losses(&self, theta: &Vector) -> Vector;
    /// `d x K` matrix whose column `i` is the gradient of loss `i`.
    fn gradients(&self, theta: &Vector) -> Matrix;
    /// Region used for smoothness estimation, gradient checks and plotting.
    fn domain(&self) -> Bounds;
    /// Known gradient Lipschitz constant, when available.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
    /// Whether `theta` lies within `margin` of a point where some loss is not
    /// differentiable.
    fn near_kink(&self, _theta: &Vector, _margin: f64) -> bool {
        false
    }
}

/// Constants of the two-task illustrative benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLossParams {
    pub scale_l1: f64,
    pub clamp_floor: f64,
    pub log_offset: f64,
    /// `f_1` valley offset: `0.5 * (-theta_1 - 7)`.
    pub f1_shift: f64,
    /// `f_2`: `0.5 * (-theta_1 + 3) - tanh(-theta_2) + 2`.
    pub f2_shift: f64,
    pub f2_offset: f64,
    /// Minimizers of the quadratic branches in `theta_1` (`g_1`, `g_2`).
    pub g1_center: f64,
    pub g2_center: f64,
    pub g_theta2_center: f64,
    pub g_theta2_weight: f64,
    pub g_divisor: f64,
    pub g_offset: f64,
    /// Slope inside the `tanh` of the branch selectors `c_1`, `c_2`.
    pub selector_slope: f64,
}

impl Default for ToyLossParams {
    fn default() -> Self {
        ToyLossParams {
            scale_l1: 0.1,
            clamp_floor: 5e-6,
            log_offset: 6.0,
            f1_shift: -7.0,
            f2_shift: 3.0,
            f2_offset: 2.0,
            g1_center: 7.0,
            g2_center: -7.0,
            g_theta2_center: -8.0,
            g_theta2_weight: 0.1,
            g_divisor: 10.0,
            g_offset: 20.0,
            selector_slope: 0.5,
        }
    }
}

/// The two-task benchmark with losses of very different scale:
///
/// ```text
/// l1 = 0.1 * (c1 f1 + c2 g1),   l2 = c1 f2 + c2 g2
/// f1 = log(max(|0.5(-t1 - 7) - tanh(-t2)|, 5e-6)) + 6
/// f2 = log(max(|0.5(-t1 + 3) - tanh(-t2) + 2|, 5e-6)) + 6
/// g1 = ((-t1 + 7)^2 + 0.1 (-t2 - 8)^2) / 10 - 20
/// g2 = ((-t1 - 7)^2 + 0.1 (-t2 - 8)^2) / 10 - 20
/// c1 = max(tanh(0.5 t2), 0),    c2 = max(tanh(-0.5 t2), 0)
/// ```
///
/// At kinks the gradient is the one-sided derivative from the positive side.
#[derive(Debug, Clone, Default)]
pub struct ToyProblem {
    pub params: ToyLossParams,
}

/// Pieces of the benchmark evaluated at one point.
struct ToyParts {
    x1: f64,
    x2: f64,
    f1: f64,
    f2: f64,
    g1: f64,
    g2: f64,
    c1: f64,
    c2: f64,
}

impl ToyProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn parts(&self, t1: f64, t2: f64) -> ToyParts {
        let p = &self.params;
        let x1 = 0.5 * (-t1 + p.f1_shift) - (-t2).tanh();
        let x2 = 0.5 * (-t1 + p.f2_shift) - (-t2).tanh() + p.f2_offset;
        let quad = |center: f64| {
            ((-t1 + center).powi(2) + p.g_theta2_weight * (-t2 + p.g_theta2_center).powi(2)) / p.g_divisor - p.g_offset
        };
        ToyParts {
            x1,
            x2,
            f1: x1.abs().max(p.clamp_floor).ln() + p.log_offset,
            f2: x2.abs().max(p.clamp_floor).ln() + p.log_offset,
            g1: quad(p.g1_center),
            g2: quad(p.g2_center),
            c1: (p.selector_slope * t2).tanh().max(0.0),
            c2: (-p.selector_slope * t2).tanh().max(0.0),
        }
    }

    fn check_dim(theta: &Vector) {
        assert_eq!(theta.len(), 2, "the toy benchmark is two-dimensional");
    }
}

/// `d/dx log(max(|x|, floor))`; zero where the clamp is active.
fn dlog_clamped(x: f64, floor: f64) -> f64 {
    if x.abs() >= floor {
        1.0 / x
    } else {
        0.0
    }
}

/// The five starting points of the benchmark, in order.
pub fn toy_inits() -> Vec<Vector> {
    [(-8.5, 7.5), (0.0, 0.0), (9.0, 9.0), (-7.5, -0.5), (9.0, -1.0)]
        .iter()
        .map(|&(a, b)| Vector::from([a, b]))
        .collect()
}

impl Problem for ToyProblem {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        2
    }

    fn num_tasks(&self) -> usize {
        2
    }

    fn losses(&self, theta: &Vector) -> Vector {
        Self::check_dim(theta);
        let q = self.parts(theta[0], theta[1]);
        Vector::from([
            self.params.scale_l1 * (q.c1 * q.f1 + q.c2 * q.g1),
            q.c1 * q.f2 + q.c2 * q.g2,
        ])
    }

    fn gradients(&self, theta: &Vector) -> Matrix {
        Self::check_dim(theta);
        let p = &self.params;
        let (t1, t2) = (theta[0], theta[1]);
        let q = self.parts(t1, t2);
        let sech2 = |v: f64| 1.0 - v.tanh().powi(2);
        // dx/dt1 = -0.5, dx/dt2 = sech^2(t2) for both log arguments
        let dx2 = sech2(t2);
        let df1 = dlog_clamped(q.x1, p.clamp_floor);
        let df2 = dlog_clamped(q.x2, p.clamp_floor);
        let (f1_t1, f1_t2) = (-0.5 * df1, dx2 * df1);
        let (f2_t1, f2_t2) = (-0.5 * df2, dx2 * df2);
        let g_t2 = 2.0 * p.g_theta2_weight * (t2 - p.g_theta2_center) / p.g_divisor;
        let g1_t1 = 2.0 * (t1 - p.g1_center) / p.g_divisor;
        let g2_t1 = 2.0 * (t1 - p.g2_center) / p.g_divisor;
        let s = p.selector_slope;
        let c1_t2 = if t2 >= 0.0 { s * sech2(s * t2) } else { 0.0 };
        let c2_t2 = if t2 < 0.0 { -s * sech2(s * t2) } else { 0.0 };

        let l1 = [
            p.scale_l1 * (q.c1 * f1_t1 + q.c2 * g1_t1),
            p.scale_l1 * (c1_t2 * q.f1 + q.c1 * f1_t2 + c2_t2 * q.g1 + q.c2 * g_t2),
        ];
        let l2 = [
            q.c1 * f2_t1 + q.c2 * g2_t1,
            c1_t2 * q.f2 + q.c1 * f2_t2 + c2_t2 * q.g2 + q.c2 * g_t2,
        ];
        Matrix::from_col_major(2, 2, vec![l1[0], l1[1], l2[0], l2[1]]).expect("2x2")
    }

    fn domain(&self) -> Bounds {
        Bounds::cube(2, -10.0, 10.0)
    }

    fn near_kink(&self, theta: &Vector, margin: f64) -> bool {
        let q = self.parts(theta[0], theta[1]);
        let floor = self.params.clamp_floor;
        // the log arguments move at rate >= 0.5 per unit of theta_1
        theta[1].abs() <= margin || (q.x1.abs() - floor).abs() <= margin || (q.x2.abs() - floor).abs() <= margin
    }
}

/// One convex quadratic `0.5 (x - m)^T A (x - m) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub hessian: Matrix,
    pub center: Vector,
    pub offset: f64,
}

impl Quadratic {
    fn value(&self, x: &Vector) -> f64 {
        let r = x.sub(&self.center);
        0.5 * r.dot(&self.hessian.mul_vec(&r).expect("dims")) + self.offset
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.hessian.mul_vec(&x.sub(&self.center)).expect("dims")
    }
}

/// A set of convex quadratic losses sharing the parameter space.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub name: String,
    pub tasks: Vec<Quadratic>,
    /// Largest Hessian eigenvalue over tasks.
    pub lipschitz: f64,
    dim: usize,
}

impl QuadraticProblem {
    pub fn new(name: impl Into<String>, tasks: Vec<Quadratic>) -> Result<Self, ProblemError> {
        let dim = tasks
            .first()
            .map(|q| q.center.len())
            .ok_or_else(|| ProblemError::InvalidParams("at least one task required".into()))?;
        let mut lipschitz: f64 = 0.0;
        for (i, q) in tasks.iter().enumerate() {
            if q.center.len() != dim || q.hessian.rows() != dim || q.hessian.cols() != dim {
                return Err(ProblemError::InvalidParams(format!("task {i} has inconsistent dimensions")));
            }
            let ev = linalg::symmetric_eigenvalues(&q.hessian)
                .map_err(|e| ProblemError::InvalidParams(format!("task {i} Hessian: {e}")))?;
            if ev[0] < 0.0 {
                return Err(ProblemError::InvalidParams(format!("task {i} Hessian is not PSD")));
            }
            lipschitz = lipschitz.max(*ev.last().unwrap_or(&0.0));
        }
        Ok(QuadraticProblem {
            name: name.into(),
            tasks,
            lipschitz,
            dim,
        })
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    fn losses(&self, theta: &Vector) -> Vector {
        Vector::from(self.tasks.iter().map(|q| q.value(theta)).collect::<Vec<_>>())
    }

    fn gradients(&self, theta: &Vector) -> Matrix {
        Matrix::from_columns(&self.tasks.iter().map(|q| q.gradient(theta)).collect::<Vec<_>>()).expect("dims")
    }

    fn domain(&self) -> Bounds {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for q in &self.tasks {
            for (j, c) in q.center.iter().enumerate() {
                lo[j] = lo[j].min(*c);
                hi[j] = hi[j].max(*c);
            }
        }
        Bounds {
            lo: lo.iter().map(|v| v - 2.0).collect(),
            hi: hi.iter().map(|v| v + 2.0).collect(),
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian columns.
fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let c = linalg::dot(&v, u);
            linalg::axpy(&mut v, -c, u);
        }
        let n = linalg::dot(&v, &v).sqrt();
        if n > 1e-8 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_col_major(d, d, q.concat()).expect("square")
}

/// `K` random convex quadratics on `R^d` whose Hessians have eigenvalues in
/// `[1, cond_max]` (both ends attained when `d >= 2`), distinct Gaussian
/// centers and offsets in `[0, 1)`.
pub fn random_quadratics(k: usize, d: usize, cond_max: f64, seed: u64) -> Result<QuadraticProblem, ProblemError> {
    if k == 0 || d < k {
        return Err(ProblemError::InvalidParams(format!("need 1 <= K <= d, got K={k}, d={d}")));
    }
    if !(cond_max >= 1.0 && cond_max.is_finite()) {
        return Err(ProblemError::InvalidParams(format!("cond_max must be >= 1, got {cond_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(k);
    for _ in 0..k {
        let q = random_orthogonal(d, &mut rng);
        let eig: Vec<f64> = (0..d)
            .map(|j| match j {
                0 => 1.0,
                j if j == d - 1 => cond_max,
                _ => cond_max.powf(rng.random::<f64>()),
            })
            .collect();
        let scaled = {
            let mut s = q.clone();
            for (j, e) in eig.iter().enumerate() {
                for x in s.col_mut(j) {
                    *x *= e;
                }
            }
            s
        };
        let mut hessian = scaled.matmul(&q.transpose()).expect("square");
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (hessian[(i, j)] + hessian[(j, i)]);
                hessian[(i, j)] = v;
                hessian[(j, i)] = v;
            }
        }
        let center = Vector::from((0..d).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>());
        tasks.push(Quadratic {
            hessian,
            center,
            offset: rng.random::<f64>(),
        });
    }
    QuadraticProblem::new(format!("quadratics(K={k},d={d},cond={cond_max},seed={seed})"), tasks)
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    /// Largest per-task error: relative `||fd - g|| / ||g||`, or absolute
    /// when `||g|| < 1e-8`.
    pub max_error: f64,
    pub worst_point: Option<Vector>,
    pub worst_task: usize,
    pub points_checked: usize,
    pub points_skipped: usize,
}

pub const FD_STEP: f64 = 1e-6;
pub const KINK_MARGIN: f64 = 1e-5;

/// Central-difference gradient of every loss at `theta`.
pub fn central_difference(p: &dyn Problem, theta: &Vector, h: f64) -> Matrix {
    let (d, k) = (p.dim(), p.num_tasks());
    let mut out = Matrix::zeros(d, k);
    for j in 0..d {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += h;
        minus[j] -= h;
        let lp = p.losses(&plus);
        let lm = p.losses(&minus);
        for i in 0..k {
            out[(j, i)] = (lp[i] - lm[i]) / (2.0 * h);
        }
    }
    out
}

fn gradient_error(p: &dyn Problem, theta: &Vector) -> (f64, usize) {
    let an = p.gradients(theta);
    let fd = central_difference(p, theta, FD_STEP);
    let mut worst = (0.0, 0);
    for i in 0..p.num_tasks() {
        let a = an.column(i);
        let diff = a.sub(&fd.column(i)).norm();
        let n = a.norm();
        let e = if n < 1e-8 { diff } else { diff / n };
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

/// Compares analytic and central-difference gradients at `samples` random
/// points of the problem's domain, skipping points near kinks. `extra` points
/// are always checked.
pub fn finite_diff_check(p: &dyn Problem, samples: usize, seed: u64, extra: &[Vector]) -> FiniteDiffReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = p.domain();
    let mut report = FiniteDiffReport {
        max_error: 0.0,
        worst_point: None,
        worst_task: 0,
        points_checked: 0,
        points_skipped: 0,
    };
    let points = (0..samples).map(|_| domain.sample(&mut rng)).chain(extra.iter().cloned());
    for theta in points {
        if p.near_kink(&theta, KINK_MARGIN) {
            report.points_skipped += 1;
            continue;
        }
        let (e, task) = gradient_error(p, &theta);
        report.points_checked += 1;
        if e > report.max_error || report.worst_point.is_none() {
            report.max_error = report.max_error.max(e);
            report.worst_point = Some(theta);
            report.worst_task = task;
        }
    }
    report
}

/// Gradient Lipschitz estimate: the largest observed secant ratio
/// `||grad l_i(x) - grad l_i(y)|| / ||x - y||` over `pairs` independent
/// uniform draws from the domain, times `safety`.
pub fn estimate_lipschitz(p: &dyn Problem, pairs: usize, safety: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = p.domain();
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let x = domain.sample(&mut rng);
        let y = domain.sample(&mut rng);
        let dist = x.sub(&y).norm();
        if !(dist > 0.0) {
            continue;
        }
        let gx = p.gradients(&x);
        let gy = p.gradients(&y);
        for i in 0..p.num_tasks() {
            best = best.max(gx.column(i).sub(&gy.column(i)).norm() / dist);
        }
    }
    best * safety
}

/// Pinned smoothness estimate for the toy benchmark.
pub fn toy_lipschitz_estimate() -> f64 {
    estimate_lipschitz(&ToyProblem::new(), 10_000, 1.5, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Second transcription of the benchmark, written directly from the
    /// formulas without shared helpers.
    fn toy_oracle(t1: f64, t2: f64) -> [f64; 2] {
        let f1 = (0.5 * (-t1 - 7.0) - (-t2).tanh()).abs().max(5e-6).ln() + 6.0;
        let f2 = (0.5 * (-t1 + 3.0) - (-t2).tanh() + 2.0).abs().max(5e-6).ln() + 6.0;
        let g1 = ((-t1 + 7.0).powi(2) + 0.1 * (-t2 - 8.0).powi(2)) / 10.0 - 20.0;
        let g2 = ((-t1 - 7.0).powi(2) + 0.1 * (-t2 - 8.0).powi(2)) / 10.0 - 20.0;
        let c1 = (0.5 * t2).tanh().max(0.0);
        let c2 = (-0.5 * t2).tanh().max(0.0);
        [0.1 * (c1 * f1 + c2 * g1), c1 * f2 + c2 * g2]
    }

    #[test]
    fn toy_origin_is_zero() {
        let l = ToyProblem::new().losses(&Vector::from([0.0, 0.0]));
        assert_eq!(l.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn toy_upper_branch() {
        let p = ToyProblem::new();
        let l = p.losses(&Vector::from([0.0, 10.0]));
        let f2 = (0.5 * 3.0 - (-10f64).tanh() + 2.0).abs().ln() + 6.0;
        assert!((l[1] - 5f64.tanh() * f2).abs() < 1e-14);
        assert_eq!(l.as_slice(), &toy_oracle(0.0, 10.0));
    }

    #[test]
    fn toy_lower_branch() {
        let p = ToyProblem::new();
        let l = p.losses(&Vector::from([0.0, -10.0]));
        let c2 = 5f64.tanh();
        let g1 = (49.0 + 0.1 * 4.0) / 10.0 - 20.0;
        let g2 = (49.0 + 0.1 * 4.0) / 10.0 - 20.0;
        assert!((l[0] - 0.1 * c2 * g1).abs() < 1e-14);
        assert!((l[1] - c2 * g2).abs() < 1e-14);
    }

    #[test]
    fn toy_matches_oracle_on_random_points() {
        let p = ToyProblem::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let t1 = rng.random_range(-10.0..10.0);
            let t2 = rng.random_range(-10.0..10.0);
            let l = p.losses(&Vector::from([t1, t2]));
            let o = toy_oracle(t1, t2);
            for i in 0..2 {
                assert!((l[i] - o[i]).abs() <= 1e-12 * o[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn toy_gradient_at_origin_has_no_theta1_component() {
        let g = ToyProblem::new().gradients(&Vector::from([0.0, 0.0]));
        assert_eq!(g[(0, 0)], 0.0);
        // positive-side derivative of c1 is 0.5 and f1(0, 0) = log 3.5 + 6
        assert!((g[(1, 0)] - 0.1 * 0.5 * (3.5f64.ln() + 6.0)).abs() < 1e-14);
    }

    #[test]
    fn toy_upper_region_has_no_quadratic_branch() {
        let p = ToyProblem::new();
        for t1 in [-5.0, 0.0, 3.0] {
            let theta = Vector::from([t1, 4.0]);
            let g = p.gradients(&theta);
            let mut only_f = ToyProblem::new();
            only_f.params.g_offset = 1e6;
            assert_eq!(g, only_f.gradients(&theta));
        }
    }

    #[test]
    fn toy_gradients_match_finite_differences() {
        let p = ToyProblem::new();
        let r = finite_diff_check(&p, 100, 5, &[]);
        assert!(r.points_checked >= 95);
        assert!(r.max_error <= 1e-4, "{r:?}");
    }

    #[test]
    fn toy_inits_are_the_five_points() {
        let inits = toy_inits();
        assert_eq!(inits.len(), 5);
        assert_eq!(inits[0].as_slice(), &[-8.5, 7.5]);
        assert_eq!(inits[4].as_slice(), &[9.0, -1.0]);
        let b = ToyProblem::new().domain();
        assert!(inits.iter().all(|x| b.contains(x)));
    }

    #[test]
    fn toy_loss_scale_gap() {
        let p = ToyProblem::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..100 {
            for j in 0..100 {
                let t = Vector::from([-10.0 + 20.0 * (i as f64 + 0.5) / 100.0, -10.0 + 20.0 * (j as f64 + 0.5) / 100.0]);
                let l = p.losses(&t);
                s1 += l[0].abs();
                s2 += l[1].abs();
            }
        }
        // ratio of mean magnitudes; per-point ratios blow up where l2 crosses zero
        let mean = s1 / s2;
        assert!((0.05..=0.2).contains(&mean), "mean ratio {mean}");
    }

    #[test]
    fn lipschitz_estimate_bounds_quadratic_constant() {
        let p = random_quadratics(2, 3, 8.0, 5).unwrap();
        let est = estimate_lipschitz(&p, 2000, 1.0, 1);
        assert!(est <= p.lipschitz * (1.0 + 1e-9));
        assert!(est >= 0.5 * p.lipschitz);
    }

    #[test]
    fn quadratic_gradients_are_exact() {
        let p = random_quadratics(3, 6, 20.0, 1).unwrap();
        let r = finite_diff_check(&p, 50, 2, &[]);
        assert!(r.max_error <= 1e-7, "{r:?}");
    }

    #[test]
    fn zero_gradient_point_uses_absolute_error() {
        let p = random_quadratics(2, 4, 10.0, 3).unwrap();
        let m = p.tasks[0].center.clone();
        let r = finite_diff_check(&p, 0, 0, &[m]);
        assert_eq!(r.points_checked, 1);
        assert!(r.max_error < 1e-8, "{r:?}");
    }

    #[test]
    fn random_quadratics_are_deterministic_and_conditioned() {
        let a = random_quadratics(2, 5, 50.0, 9).unwrap();
        let b = random_quadratics(2, 5, 50.0, 9).unwrap();
        assert_eq!(a.tasks, b.tasks);
        for q in &a.tasks {
            let ev = linalg::symmetric_eigenvalues(&q.hessian).unwrap();
            assert!(ev[0] > 0.0);
            assert!(ev[ev.len() - 1] / ev[0] <= 50.0 * (1.0 + 1e-9));
        }
        assert!((a.lipschitz - 50.0).abs() < 1e-9);
        assert_ne!(a.tasks[0].center, a.tasks[1].center);
    }

    #[test]
    fn random_quadratics_validates_shape() {
        assert!(random_quadratics(3, 2, 10.0, 0).is_err());
        assert!(random_quadratics(0, 2, 10.0, 0).is_err());
        assert!(random_quadratics(2, 2, 0.5, 0).is_err());
    }
}
