//! Gradient and loss aggregators compared against the bargaining solution.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector};
use crate::nash::{self, NashConfig, NashError, NashSolution, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("unknown aggregator `{0}`")]
    UnknownKind(String),
    #[error("invalid aggregator parameter: {0}")]
    InvalidParam(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("loss of task {task} is {value}; this aggregator needs strictly positive losses")]
    NonPositiveLoss { task: usize, value: f64 },
    #[error("degenerate gradients: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Aggregation rule together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregatorKind {
    /// Linear scalarization: unit weights.
    Ls,
    /// Scale-invariant: weights `1/loss_k`, the gradient of `sum_k log loss_k`.
    Si,
    /// Random loss weighting: softmax of standard normal draws.
    Rlw,
    /// Dynamic weight averaging from the rate of loss change.
    Dwa { temperature: f64 },
    /// Minimum-norm convex combination of the gradients.
    Mgda,
    /// Projection of conflicting gradient components.
    PcGrad,
    /// Conflict-averse direction around the mean gradient.
    CaGrad { c: f64 },
    /// Equal projection onto every unit task gradient.
    ImtlG,
    /// Nash bargaining weights.
    Nash,
}

pub const DEFAULT_CAGRAD_C: f64 = 0.4;
pub const DEFAULT_DWA_TEMPERATURE: f64 = 2.0;

impl AggregatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregatorKind::Ls => "ls",
            AggregatorKind::Si => "si",
            AggregatorKind::Rlw => "rlw",
            AggregatorKind::Dwa { .. } => "dwa",
            AggregatorKind::Mgda => "mgda",
            AggregatorKind::PcGrad => "pcgrad",
            AggregatorKind::CaGrad { .. } => "cagrad",
            AggregatorKind::ImtlG => "imtlg",
            AggregatorKind::Nash => "nash",
        }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        match *self {
            AggregatorKind::CaGrad { c } if !(0.0..1.0).contains(&c) => {
                Err(AggregateError::InvalidParam(format!("CAGrad c must lie in [0, 1), got {c}")))
            }
            AggregatorKind::Dwa { temperature } if !(temperature > 0.0 && temperature.is_finite()) => Err(
                AggregateError::InvalidParam(format!("DWA temperature must be positive, got {temperature}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorKind {
    type Err = AggregateError;

    /// Parses a method name with default hyperparameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ls" => AggregatorKind::Ls,
            "si" => AggregatorKind::Si,
            "rlw" => AggregatorKind::Rlw,
            "dwa" => AggregatorKind::Dwa {
                temperature: DEFAULT_DWA_TEMPERATURE,
            },
            "mgda" => AggregatorKind::Mgda,
            "pcgrad" => AggregatorKind::PcGrad,
            "cagrad" => AggregatorKind::CaGrad { c: DEFAULT_CAGRAD_C },
            "imtlg" => AggregatorKind::ImtlG,
            "nash" | "nashmtl" => AggregatorKind::Nash,
            _ => return Err(AggregateError::UnknownKind(s.to_string())),
        })
    }
}

/// Memory carried between calls by the stateful aggregators.
#[derive(Debug, Clone)]
pub struct AggregatorState {
    pub seed: u64,
    pub step: u64,
    /// The two most recent loss vectors, oldest first.
    pub loss_history: VecDeque<Vector>,
    pub nash: NashConfig,
    /// Last bargaining weights, used to warm-start the next solve.
    pub last_alpha: Option<Vector>,
    /// Number of bargaining solves performed.
    pub solver_calls: u64,
}

impl AggregatorState {
    pub fn new(seed: u64) -> Self {
        AggregatorState {
            seed,
            step: 0,
            loss_history: VecDeque::with_capacity(2),
            nash: NashConfig::default(),
            last_alpha: None,
            solver_calls: 0,
        }
    }

    pub fn with_nash_config(mut self, cfg: NashConfig) -> Self {
        self.nash = cfg;
        self
    }

    fn push_losses(&mut self, losses: &Vector) {
        if self.loss_history.len() == 2 {
            self.loss_history.pop_front();
        }
        self.loss_history.push_back(losses.clone());
    }

    /// Deterministic stream for the current step; `domain` separates users.
    fn rng(&self, domain: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(self.step);
        rng
    }
}

const RLW_STREAM: u64 = 1;
const PCGRAD_STREAM: u64 = 2;

/// Output of one aggregation call.
#[derive(Debug, Clone)]
pub struct Aggregation {
    pub direction: Vector,
    /// Per-task weights when the direction is `G * weights`; reused for
    /// stale-weight steps.
    pub weights: Option<Vector>,
    pub nash: Option<NashSolution>,
}

impl Aggregation {
    fn weighted(g: &Matrix, w: Vector) -> Result<Self, AggregateError> {
        Ok(Aggregation {
            direction: g.mul_vec(&w)?,
            weights: Some(w),
            nash: None,
        })
    }
}

fn check_input(g: &Matrix, losses: &Vector) -> Result<(), AggregateError> {
    if g.cols() == 0 || g.rows() == 0 {
        return Err(AggregateError::InvalidInput("empty gradient matrix".into()));
    }
    if losses.len() != g.cols() {
        return Err(AggregateError::InvalidInput(format!(
            "{} losses for {} gradient columns",
            losses.len(),
            g.cols()
        )));
    }
    if !g.is_finite() || !losses.is_finite() {
        return Err(AggregateError::InvalidInput("non-finite gradients or losses".into()));
    }
    Ok(())
}

/// Computes the joint direction for `kind` and advances `state`.
pub fn aggregate(
    kind: &AggregatorKind,
    g: &Matrix,
    losses: &Vector,
    state: &mut AggregatorState,
) -> Result<Aggregation, AggregateError> {
    kind.validate()?;
    check_input(g, losses)?;
    let k = g.cols();
    let out = match *kind {
        AggregatorKind::Ls => Aggregation::weighted(g, Vector::from_elem(k, 1.0)),
        AggregatorKind::Si => {
            if let Some((task, &value)) = losses.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
                return Err(AggregateError::NonPositiveLoss { task, value });
            }
            Aggregation::weighted(g, losses.recip())
        }
        AggregatorKind::Rlw => Aggregation::weighted(g, rlw_weights(k, state)),
        AggregatorKind::Dwa { temperature } => {
            let w = match (state.loss_history.front(), state.loss_history.get(1)) {
                (Some(older), Some(newer)) => dwa_weights(older, newer, temperature),
                _ => Vector::from_elem(k, 1.0),
            };
            Aggregation::weighted(g, w)
        }
        AggregatorKind::Mgda => {
            let mn = mgda(g);
            Ok(Aggregation {
                direction: mn.direction,
                weights: Some(mn.weights),
                nash: None,
            })
        }
        AggregatorKind::PcGrad => Ok(Aggregation {
            direction: pcgrad(g, state),
            weights: None,
            nash: None,
        }),
        AggregatorKind::CaGrad { c } => Ok(Aggregation {
            direction: cagrad(g, c)?,
            weights: None,
            nash: None,
        }),
        AggregatorKind::ImtlG => {
            let (w, direction) = imtl_g(g)?;
            Ok(Aggregation {
                direction,
                weights: Some(w),
                nash: None,
            })
        }
        AggregatorKind::Nash => {
            let sol = nash::solve_warm(g, &state.nash, state.last_alpha.as_ref())?;
            state.solver_calls += 1;
            let weights = if sol.status == SolveStatus::Degenerate {
                state.last_alpha = None;
                None
            } else {
                state.last_alpha = Some(sol.alpha.clone());
                Some(sol.alpha.clone())
            };
            Ok(Aggregation {
                direction: sol.direction.clone(),
                weights,
                nash: Some(sol),
            })
        }
    }?;
    state.push_losses(losses);
    state.step += 1;
    Ok(out)
}

/// Minimum-norm point of the convex hull of the gradients.
#[derive(Debug, Clone)]
pub struct MinNorm {
    pub weights: Vector,
    pub direction: Vector,
    /// Final Frank-Wolfe duality gap `w^T M w - min_i (M w)_i`.
    pub gap: f64,
}

impl MinNorm {
    pub fn norm(&self) -> f64 {
        self.direction.norm()
    }
}

/// `argmin_{w in simplex} ||G w||^2` with its direction `G w`.
pub fn mgda(g: &Matrix) -> MinNorm {
    let gram = linalg::gram(g).expect("mgda requires a non-empty finite gradient matrix");
    let (weights, gap) = min_norm_on_gram(&gram);
    let direction = g.mul_vec(&weights).expect("weights match columns");
    MinNorm { weights, direction, gap }
}

/// Min-norm simplex weights computed from a Gram matrix alone.
pub fn min_norm_weights_from_gram(gram: &Matrix) -> Vector {
    min_norm_on_gram(gram).0
}

const MGDA_MAX_ITERS: usize = 100_000;

/// Pairwise Frank-Wolfe: mass moves from the support vertex with the largest
/// correlation `(M w)_s` to the vertex with the smallest `(M w)_t`, with an
/// exact line search along `e_t - e_s`.
fn min_norm_on_gram(gram: &Matrix) -> (Vector, f64) {
    let k = gram.rows();
    if k == 1 {
        return (Vector::from([1.0]), 0.0);
    }
    let scale = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let tol = (1e-15 * scale).min(1e-8);
    let mut w = vec![1.0 / k as f64; k];
    let mut gap = f64::INFINITY;
    for _ in 0..MGDA_MAX_ITERS {
        let mw: Vec<f64> = (0..k).map(|i| linalg::dot(gram.col(i), &w)).collect();
        let f2 = linalg::dot(&w, &mw);
        let t = (0..k).min_by(|&a, &b| mw[a].total_cmp(&mw[b])).unwrap_or(0);
        gap = f2 - mw[t];
        if gap <= tol {
            break;
        }
        let s = (0..k)
            .filter(|&i| w[i] > 0.0)
            .max_by(|&a, &b| mw[a].total_cmp(&mw[b]))
            .unwrap_or(t);
        if s == t {
            break;
        }
        let curv = gram[(t, t)] - 2.0 * gram[(t, s)] + gram[(s, s)];
        let gamma = if curv > 0.0 { ((mw[s] - mw[t]) / curv).clamp(0.0, w[s]) } else { w[s] };
        if gamma <= 0.0 {
            break;
        }
        w[t] += gamma;
        w[s] -= gamma;
        if w[s] < 1e-300 {
            w[s] = 0.0;
        }
    }
    (Vector::from(w), gap.max(0.0))
}

/// Softmax of `K` standard normal draws from the stream for `state.step`.
pub fn rlw_weights(k: usize, state: &AggregatorState) -> Vector {
    let mut rng = state.rng(RLW_STREAM);
    let draws: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    softmax(&draws)
}

fn softmax(x: &[f64]) -> Vector {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Vector::from(e.into_iter().map(|v| v / s).collect::<Vec<_>>())
}

/// `K * softmax(r / temperature)` with `r_k = newer_k / older_k`. Falls back
/// to unit weights when a historical loss is not strictly positive.
pub fn dwa_weights(older: &Vector, newer: &Vector, temperature: f64) -> Vector {
    let k = newer.len();
    if older.len() != k || older.iter().chain(newer.iter()).any(|l| !(*l > 0.0)) {
        log::warn!("DWA needs strictly positive loss history; using unit weights");
        return Vector::from_elem(k, 1.0);
    }
    let r: Vec<f64> = newer.iter().zip(older).map(|(n, o)| n / o / temperature).collect();
    softmax(&r).scale(k as f64)
}

/// DWA weights from an explicit ratio vector.
pub fn dwa_weights_from_ratios(ratios: &Vector, temperature: f64) -> Vector {
    let r: Vec<f64> = ratios.iter().map(|x| x / temperature).collect();
    softmax(&r).scale(ratios.len() as f64)
}

/// PCGrad with a freshly shuffled order of the other tasks for every task.
pub fn pcgrad(g: &Matrix, state: &AggregatorState) -> Vector {
    let k = g.cols();
    let mut rng = state.rng(PCGRAD_STREAM);
    let orders: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            let mut o: Vec<usize> = (0..k).filter(|&j| j != i).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    pcgrad_with_orders(g, &orders)
}

/// PCGrad with explicit per-task projection orders: `orders[i]` lists the
/// tasks that gradient `i` is projected against, in sequence.
pub fn pcgrad_with_orders(g: &Matrix, orders: &[Vec<usize>]) -> Vector {
    let mut total = Vector::zeros(g.rows());
    for gi in pcgrad_projections(g, orders) {
        total.axpy(1.0, &gi);
    }
    total
}

/// The individually projected gradients `g_i'` that PCGrad sums.
pub fn pcgrad_projections(g: &Matrix, orders: &[Vec<usize>]) -> Vec<Vector> {
    let k = g.cols();
    let sq: Vec<f64> = (0..k).map(|j| linalg::dot(g.col(j), g.col(j))).collect();
    (0..k)
        .map(|i| {
            let mut gi = g.col(i).to_vec();
            for &j in &orders[i] {
                if sq[j] == 0.0 {
                    log::debug!("pcgrad: task {j} has a zero gradient, skipping projection");
                    continue;
                }
                let c = linalg::dot(&gi, g.col(j));
                if c < 0.0 {
                    linalg::axpy(&mut gi, -c / sq[j], g.col(j));
                }
            }
            Vector::from(gi)
        })
        .collect()
}

const CAGRAD_ITERS: usize = 500;

/// CAGrad: `g0 + (c ||g0|| / ||g_w||) g_w`, where `w` minimizes
/// `g_w^T g0 + c ||g0|| ||g_w||` over the simplex and `g0` is the mean
/// gradient.
pub fn cagrad(g: &Matrix, c: f64) -> Result<Vector, AggregateError> {
    AggregatorKind::CaGrad { c }.validate()?;
    let k = g.cols();
    let g0 = g.mul_vec(&Vector::from_elem(k, 1.0 / k as f64))?;
    let radius = c * g0.norm();
    if radius == 0.0 {
        return Ok(g0);
    }
    let gram = linalg::gram(g)?;
    let b = g.tr_mul_vec(&g0)?;
    let objective = |w: &[f64]| -> f64 {
        let mw: Vec<f64> = (0..k).map(|i| linalg::dot(gram.col(i), w)).collect();
        linalg::dot(b.as_slice(), w) + radius * linalg::dot(w, &mw).max(0.0).sqrt()
    };
    let trace = gram.trace().max(f64::MIN_POSITIVE);

    let mut w = vec![1.0 / k as f64; k];
    let mut f = objective(&w);
    for _ in 0..CAGRAD_ITERS {
        let mw: Vec<f64> = (0..k).map(|i| linalg::dot(gram.col(i), &w)).collect();
        let nw = linalg::dot(&w, &mw).max(0.0).sqrt();
        if nw < 1e-12 {
            break;
        }
        let grad: Vec<f64> = (0..k).map(|i| b[i] + radius * mw[i] / nw).collect();
        let lipschitz = radius * trace / nw;
        let mut step = 1.0 / (2.0 * lipschitz);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = project_simplex(&w.iter().zip(&grad).map(|(x, gr)| x - step * gr).collect::<Vec<_>>());
            let diff: Vec<f64> = trial.iter().zip(&w).map(|(a, b)| a - b).collect();
            let ft = objective(&trial);
            let bound = f + linalg::dot(&grad, &diff) + linalg::dot(&diff, &diff) / (2.0 * step);
            if ft <= bound + 1e-15 * f.abs() {
                accepted = Some((trial, ft, diff));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, diff)) = accepted else { break };
        let moved = diff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        w = trial;
        f = ft;
        if moved <= 1e-8 {
            break;
        }
    }
    let gw = g.mul_vec(&Vector::from(w))?;
    let nw = gw.norm();
    if nw < 1e-12 {
        return Ok(g0);
    }
    let mut out = g0;
    out.axpy(radius / nw, &gw);
    Ok(out)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// IMTL-G: weights summing to one such that the joint direction has equal
/// projections on all unit task gradients. Returns `(weights, direction)`.
pub fn imtl_g(g: &Matrix) -> Result<(Vector, Vector), AggregateError> {
    let (d, k) = (g.rows(), g.cols());
    let norms: Vec<f64> = (0..k).map(|j| linalg::dot(g.col(j), g.col(j)).sqrt()).collect();
    if let Some(j) = norms.iter().position(|n| !(*n > 1e-12)) {
        return Err(AggregateError::Degenerate(format!("task {j} gradient has near-zero norm")));
    }
    if k == 1 {
        return Ok((Vector::from([1.0]), g.column(0)));
    }
    let u = |j: usize| -> Vec<f64> { g.col(j).iter().map(|x| x / norms[j]).collect() };
    let u0 = u(0);
    let mut udiff = Matrix::zeros(d, k - 1);
    let mut gdiff = Matrix::zeros(d, k - 1);
    for j in 1..k {
        let uj = u(j);
        for r in 0..d {
            udiff[(r, j - 1)] = u0[r] - uj[r];
            gdiff[(r, j - 1)] = g[(r, 0)] - g[(r, j)];
        }
    }
    let system = udiff.transpose().matmul(&gdiff)?;
    let rhs = udiff.tr_mul_vec(&g.column(0))?;
    let rest = linalg::solve_general(&system, &rhs)
        .map_err(|e| AggregateError::Degenerate(format!("equal-projection system: {e}")))?;
    let mut w = Vec::with_capacity(k);
    w.push(1.0 - rest.sum());
    w.extend(rest.iter());
    let w = Vector::from(w);
    let direction = g.mul_vec(&w)?;
    Ok((w, direction))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(c: &[&[f64]]) -> Matrix {
        Matrix::from_columns(&c.iter().map(|x| Vector::from(*x)).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &Vector, b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ls_and_si() {
        let g = cols(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let mut st = AggregatorState::new(0);
        let ls = aggregate(&AggregatorKind::Ls, &g, &Vector::from([1.0, 1.0]), &mut st).unwrap();
        assert!(close(&ls.direction, &[4.0, 1.0], 0.0));
        let si = aggregate(&AggregatorKind::Si, &g, &Vector::from([2.0, 0.5]), &mut st).unwrap();
        // g1/2 + 2 g2
        assert!(close(&si.direction, &[0.5 + 6.0, 1.0 - 2.0], 1e-15));
        let bad = aggregate(&AggregatorKind::Si, &g, &Vector::from([2.0, -0.5]), &mut st);
        assert!(matches!(bad, Err(AggregateError::NonPositiveLoss { task: 1, .. })));
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("gradnorm".parse::<AggregatorKind>(), Err(AggregateError::UnknownKind(_))));
        assert_eq!("Nash-MTL".parse::<AggregatorKind>().unwrap(), AggregatorKind::Nash);
        assert_eq!("IMTL-G".parse::<AggregatorKind>().unwrap(), AggregatorKind::ImtlG);
    }

    #[test]
    fn parameter_validation() {
        assert!(AggregatorKind::CaGrad { c: 1.0 }.validate().is_err());
        assert!(AggregatorKind::CaGrad { c: -0.1 }.validate().is_err());
        assert!(AggregatorKind::Dwa { temperature: 0.0 }.validate().is_err());
        assert!(AggregatorKind::CaGrad { c: 0.4 }.validate().is_ok());
    }

    #[test]
    fn dwa_examples() {
        let w = dwa_weights(&Vector::from([2.0, 4.0]), &Vector::from([1.0, 2.0]), 2.0);
        assert!(close(&w, &[1.0, 1.0], 1e-15));
        let w = dwa_weights_from_ratios(&Vector::from([1.0, 1.0]), 2.0);
        assert!(close(&w, &[1.0, 1.0], 1e-15));
        let w = dwa_weights_from_ratios(&Vector::from([2.0, 1.0]), 2.0);
        let e1 = 1f64.exp();
        let e5 = 0.5f64.exp();
        assert!(close(&w, &[2.0 * e1 / (e1 + e5), 2.0 * e5 / (e1 + e5)], 1e-14));
        assert!((w[0] - 1.245).abs() < 1e-3 && (w[1] - 0.755).abs() < 1e-3);
        let fallback = dwa_weights(&Vector::from([0.0, 1.0]), &Vector::from([1.0, 1.0]), 2.0);
        assert!(close(&fallback, &[1.0, 1.0], 0.0));
    }

    #[test]
    fn dwa_first_two_steps_use_unit_weights() {
        let g = cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let kind = AggregatorKind::Dwa { temperature: 2.0 };
        let mut st = AggregatorState::new(0);
        for losses in [[1.0, 1.0], [2.0, 1.0]] {
            let a = aggregate(&kind, &g, &Vector::from(losses), &mut st).unwrap();
            assert!(close(a.weights.as_ref().unwrap(), &[1.0, 1.0], 0.0));
        }
        // ratios now (2/1, 1/1)
        let a = aggregate(&kind, &g, &Vector::from([3.0, 3.0]), &mut st).unwrap();
        assert!((a.weights.unwrap()[0] - 1.245).abs() < 1e-3);
    }

    #[test]
    fn rlw_is_deterministic_positive_and_normalized() {
        let st = AggregatorState::new(42);
        let a = rlw_weights(5, &st);
        let b = rlw_weights(5, &st);
        assert_eq!(a, b);
        assert!(a.iter().all(|w| *w > 0.0));
        assert!((a.sum() - 1.0).abs() < 1e-12);
        assert_eq!(rlw_weights(1, &st).as_slice(), &[1.0]);
        let mut next = st.clone();
        next.step += 1;
        assert_ne!(rlw_weights(5, &next), a);
    }

    #[test]
    fn mgda_examples() {
        let m = mgda(&cols(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert!(close(&m.weights, &[0.5, 0.5], 1e-12));
        assert!(close(&m.direction, &[0.5, 0.5], 1e-12));

        let m = mgda(&cols(&[&[1.0, 0.0], &[2.0, 0.0]]));
        assert!(close(&m.weights, &[1.0, 0.0], 1e-12));
        assert!(close(&m.direction, &[1.0, 0.0], 1e-12));

        let m = mgda(&cols(&[&[1.0, -2.0, 0.5], &[-1.0, 2.0, -0.5]]));
        assert!(m.norm() < 1e-12);
    }

    #[test]
    fn mgda_three_tasks_against_grid() {
        let g = cols(&[&[1.0, 0.3, 0.0], &[-0.2, 1.0, 0.4], &[0.5, -0.6, 1.0]]);
        let m = mgda(&g);
        let mut best = f64::INFINITY;
        let n = 400;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let w = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                best = best.min(g.mul_vec(&Vector::from(w)).unwrap().norm());
            }
        }
        assert!(m.norm() <= best + 1e-9);
        assert!(m.gap <= 1e-8);
    }

    #[test]
    fn pcgrad_examples() {
        let st = AggregatorState::new(3);
        let g = cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(close(&pcgrad(&g, &st), &[1.0, 1.0], 0.0));

        let g = cols(&[&[1.0, 0.0], &[-1.0, 1.0]]);
        let d = pcgrad(&g, &st);
        assert!(close(&d, &[0.5, 1.5], 1e-15));
        // each projected gradient has a non-negative inner product with the other original
        let p1 = Vector::from([0.5, 0.5]);
        let p2 = Vector::from([0.0, 1.0]);
        assert!(p1.dot(&g.column(1)) >= 0.0 && p2.dot(&g.column(0)) >= 0.0);

        let g = cols(&[&[2.0, -1.0]]);
        assert!(close(&pcgrad(&g, &st), &[2.0, -1.0], 0.0));
    }

    #[test]
    fn pcgrad_skips_zero_columns() {
        let g = cols(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert!(close(&pcgrad(&g, &AggregatorState::new(0)), &[1.0, 1.0], 0.0));
    }

    #[test]
    fn cagrad_examples() {
        let g = cols(&[&[1.0, 2.0], &[3.0, -4.0]]);
        assert!(close(&cagrad(&g, 0.0).unwrap(), &[2.0, -1.0], 1e-15));

        let g = cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = cagrad(&g, 0.4).unwrap();
        assert!((d[0] - d[1]).abs() < 1e-9);

        let g = cols(&[&[1.0, 0.0], &[-1.0, 1.0]]);
        let d = cagrad(&g, 0.4).unwrap();
        let g0 = Vector::from([0.0, 0.5]);
        let worst = |v: &Vector| g.columns().iter().map(|gi| gi.dot(v)).fold(f64::INFINITY, f64::min);
        assert!(worst(&d) >= worst(&g0) - 1e-12);
        // stays within the ball of radius c ||g0||
        assert!((d.sub(&g0).norm() - 0.4 * g0.norm()).abs() < 1e-12);
    }

    #[test]
    fn imtl_examples() {
        let g = cols(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (w, d) = imtl_g(&g).unwrap();
        assert!(close(&w, &[0.5, 0.5], 1e-14) && close(&d, &[0.5, 0.5], 1e-14));

        let g = cols(&[&[1.0, 0.0], &[0.0, 10.0]]);
        let (w, d) = imtl_g(&g).unwrap();
        assert!((d[0] - d[1]).abs() < 1e-12 * d.norm());
        assert!((w.sum() - 1.0).abs() < 1e-14);

        let g = cols(&[&[3.0, 1.0]]);
        assert!(close(&imtl_g(&g).unwrap().1, &[3.0, 1.0], 0.0));

        let g = cols(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(imtl_g(&g), Err(AggregateError::Degenerate(_))));
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        assert!(close(&Vector::from(p), &[0.2, 0.3, 0.5], 1e-15));
        let p = project_simplex(&[2.0, 0.0]);
        assert!(close(&Vector::from(p), &[1.0, 0.0], 1e-15));
        let p = project_simplex(&[-1.0, -1.0, -1.0]);
        assert!(close(&Vector::from(p), &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn nash_counts_solver_calls() {
        let g = cols(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let mut st = AggregatorState::new(0);
        let a = aggregate(&AggregatorKind::Nash, &g, &Vector::from([1.0, 1.0]), &mut st).unwrap();
        assert_eq!(st.solver_calls, 1);
        assert!(a.nash.is_some());
        assert!(st.last_alpha.is_some());
    }
}
