//! Dual-side solvers.
//!
//! [`maximize_dual_positive`] runs a feasibility-preserving damped Newton
//! ascent on `Pᵈ` over the region where `G(ς) ≻ 0`; a stationary point there
//! certifies `x̄ = G⁺F` as a global minimizer of the primal.
//! [`find_critical_points`] hunts for every other stationary point with
//! multistart Newton root finding on `∇Pᵈ = 0` and classifies what it finds.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{DualState, DualVector, Region, TOL_EIG};
use crate::error::Error;
use crate::quartic::QuarticProgram;

/// Per-coordinate bounds for multistart sampling in dual space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    /// The same interval on every coordinate.
    pub fn uniform(m: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; m],
            upper: vec![upper; m],
        }
    }

    /// `ςᵢ ∈ [−10|αᵢcᵢ| − 1, 10|αᵢcᵢ| + 1]`.
    pub fn default_for(prog: &QuarticProgram) -> Self {
        let (lower, upper) = prog
            .terms()
            .iter()
            .map(|t| {
                let r = 10.0 * (t.alpha * t.quad.c()).abs() + 1.0;
                (-r, r)
            })
            .unzip();
        Self { lower, upper }
    }

    fn contains(&self, s: &DVector<f64>, slack: f64) -> bool {
        s.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack)
    }

    /// Largest `t ≤ 1` keeping `s + t·d` inside the box.
    fn step_limit(&self, s: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut t: f64 = 1.0;
        for i in 0..s.len() {
            let room = if d[i] > 0.0 {
                (self.upper[i] - s[i]) / d[i]
            } else if d[i] < 0.0 {
                (self.lower[i] - s[i]) / d[i]
            } else {
                continue;
            };
            t = t.min(room.max(0.0));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub multistart_count: usize,
    pub seed: u64,
    pub step_shrink: f64,
    pub dedupe_tol: f64,
    /// `None` selects [`SearchBox::default_for`].
    pub search_box: Option<SearchBox>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 200,
            multistart_count: 64,
            seed: 0,
            step_shrink: 0.5,
            dedupe_tol: 1e-6,
            search_box: None,
        }
    }
}

impl SolverConfig {
    pub fn check(&self, m: usize) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if !(self.grad_tol > 0.0) || !(self.dedupe_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.multistart_count == 0 {
            return bad("multistart_count must be at least 1");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        if let Some(b) = &self.search_box {
            if b.lower.len() != m || b.upper.len() != m {
                return bad("search_box dimension does not match the term count");
            }
            if b.lower.iter().zip(&b.upper).any(|(lo, hi)| !(lo <= hi)) {
                return bad("search_box lower bound exceeds upper bound");
            }
        }
        Ok(())
    }

    fn gap_tol(value: f64) -> f64 {
        1e-6 * (1.0 + value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    CertifiedGlobalMin,
    LocalMin,
    LocalMax,
    Unclassified,
}

/// A stationary (or best-effort) dual point with its primal partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub sigma: DualVector,
    pub x: DVector<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub region: Region,
    pub kind: PointKind,
    pub grad_norm: f64,
}

impl CriticalPoint {
    pub fn gap(&self) -> f64 {
        (self.primal_value - self.dual_value).abs()
    }

    fn from_state(prog: &QuarticProgram, sigma: DualVector, st: &DualState) -> Result<Self, Error> {
        Ok(Self {
            primal_value: prog.eval_primal(&st.x)?,
            dual_value: st.value,
            region: st.geometry.region,
            kind: PointKind::Unclassified,
            grad_norm: st.grad.norm(),
            x: st.x.clone(),
            sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Present only when a certified global minimizer was found.
    pub best: Option<CriticalPoint>,
    /// Sorted by dual value, descending.
    pub all_points: Vec<CriticalPoint>,
    /// Index into `all_points` of the local minimizer with the largest
    /// primal value among those found.
    pub biggest_local_min: Option<usize>,
    /// Index into `all_points` of the local maximizer with the largest
    /// primal value among those found.
    pub biggest_local_max: Option<usize>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("no feasible start found in the positive-definite dual region")]
    NoFeasibleStart,

    #[error("iteration limit reached (gradient norm {:.3e})", .0.grad_norm)]
    IterationLimit(Box<CriticalPoint>),

    #[error("alpha nonpositive at index {0}")]
    AlphaNonpositive(usize),

    #[error("point is not stationary: gradient norm {0:.3e}")]
    NonStationary(f64),

    #[error("invalid solver config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Model(#[from] Error),
}

fn solve_spd(neg_h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    neg_h.cholesky().map(|c| c.solve(rhs))
}

fn is_pd(st: &DualState) -> bool {
    st.geometry.region == Region::PositiveDefinite
}

/// Damped Newton ascent of `Pᵈ` inside `{ς : G(ς) ≻ 0}`.
pub fn maximize_dual_positive(
    prog: &QuarticProgram,
    cfg: &SolverConfig,
) -> Result<CriticalPoint, SolverError> {
    let m = prog.term_count();
    cfg.check(m)?;
    if let Some(i) = prog.alphas().position(|a| !(a > 0.0)) {
        return Err(SolverError::AlphaNonpositive(i));
    }
    let (mut sigma, mut st) = feasible_start(prog, cfg)?;

    for _ in 0..cfg.max_iter {
        let gnorm = st.grad.norm();
        if gnorm <= cfg.grad_tol {
            return finish(prog, cfg, sigma, &st);
        }
        let dir = st
            .hessian(prog)
            .ok()
            .and_then(|h| solve_spd(-h, &st.grad))
            .filter(|d| d.iter().all(|v| v.is_finite()) && d.dot(&st.grad) > 0.0)
            .unwrap_or_else(|| st.grad.clone());
        let slope = dir.dot(&st.grad);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..100 {
            let trial = DualVector::new(&sigma.0 + &dir * t);
            if let Ok(next) = DualState::evaluate(prog, &trial) {
                if is_pd(&next) {
                    let armijo = next.value >= st.value + 1e-4 * t * slope;
                    // Near the maximizer the increase drops below rounding in
                    // Pᵈ; a shrinking gradient is then the only usable signal.
                    let flat = next.value >= st.value - 1e-12 * (1.0 + st.value.abs())
                        && next.grad.norm() < gnorm;
                    if armijo || flat {
                        accepted = Some((trial, next));
                        break;
                    }
                }
            }
            t *= cfg.step_shrink;
        }
        match accepted {
            Some((s, n)) => {
                sigma = s;
                st = n;
            }
            None => break,
        }
    }

    let point = finish(prog, cfg, sigma, &st)?;
    if point.grad_norm <= cfg.grad_tol {
        Ok(point)
    } else {
        Err(SolverError::IterationLimit(Box::new(point)))
    }
}

fn finish(
    prog: &QuarticProgram,
    cfg: &SolverConfig,
    sigma: DualVector,
    st: &DualState,
) -> Result<CriticalPoint, SolverError> {
    let mut p = CriticalPoint::from_state(prog, sigma, st)?;
    if p.grad_norm <= cfg.grad_tol {
        p.kind = classify_point(prog, &p, cfg)?;
    }
    Ok(p)
}

/// `ς⁰ᵢ = max(αᵢ ξᵢ(x⁰), 0.1)` from random `x⁰`, doubled until `G ≻ 0`.
fn feasible_start(
    prog: &QuarticProgram,
    cfg: &SolverConfig,
) -> Result<(DualVector, DualState), SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = prog.dim();
    for _ in 0..8 {
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let xi = prog.canonical_measure(&x0)?;
        let mut s0 = DVector::from_fn(prog.term_count(), |i, _| {
            (prog.terms()[i].alpha * xi[i]).max(0.1)
        });
        for _ in 0..=60 {
            let sigma = DualVector::new(s0.clone());
            if let Ok(st) = DualState::evaluate(prog, &sigma) {
                if is_pd(&st) {
                    return Ok((sigma, st));
                }
            }
            s0 *= 2.0;
        }
    }
    Err(SolverError::NoFeasibleStart)
}

/// Classifies a stationary point.
///
/// Positive-definite `G` with zero gap and all `αᵢ > 0` is a certified
/// global minimizer. For negative-definite `G` the primal Hessian at `x̄`
/// separates local minima from local maxima. Anything else stays
/// unclassified.
pub fn classify_point(
    prog: &QuarticProgram,
    point: &CriticalPoint,
    cfg: &SolverConfig,
) -> Result<PointKind, SolverError> {
    if !(point.grad_norm <= cfg.grad_tol) {
        return Err(SolverError::NonStationary(point.grad_norm));
    }
    let kind = match point.region {
        Region::PositiveDefinite => {
            let convex_dual = prog.alphas().all(|a| a > 0.0);
            if convex_dual && point.gap() <= SolverConfig::gap_tol(point.dual_value) {
                PointKind::CertifiedGlobalMin
            } else {
                PointKind::Unclassified
            }
        }
        Region::NegativeDefinite => {
            let h = prog.hess_primal(&point.x)?;
            if h.nrows() == 0 {
                return Ok(PointKind::Unclassified);
            }
            let eig = SymmetricEigen::new(h).eigenvalues;
            let tol = TOL_EIG * eig.amax().max(1.0);
            if eig.iter().all(|&l| l > tol) {
                PointKind::LocalMin
            } else if eig.iter().all(|&l| l < -tol) {
                PointKind::LocalMax
            } else {
                PointKind::Unclassified
            }
        }
        Region::Indefinite | Region::Singular => PointKind::Unclassified,
    };
    Ok(kind)
}

struct RootRun {
    point: Option<CriticalPoint>,
    iterations: usize,
}

/// Damped Newton on `∇Pᵈ = 0` with `‖∇Pᵈ‖` as merit. Steps are clipped
/// to the search box.
fn newton_root(
    prog: &QuarticProgram,
    start: DualVector,
    bounds: &SearchBox,
    cfg: &SolverConfig,
) -> RootRun {
    let mut sigma = start;
    let Ok(mut st) = DualState::evaluate(prog, &sigma) else {
        return RootRun {
            point: None,
            iterations: 0,
        };
    };
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let gnorm = st.grad.norm();
        if gnorm <= cfg.grad_tol {
            break;
        }
        iterations += 1;
        let Some(dir) = st
            .hessian(prog)
            .ok()
            .and_then(|h| h.lu().solve(&st.grad))
            .map(|d| -d)
            .filter(|d| d.iter().all(|v| v.is_finite()))
        else {
            break;
        };
        let mut t = bounds.step_limit(&sigma.0, &dir);
        let mut accepted = None;
        for _ in 0..60 {
            let trial = DualVector::new(&sigma.0 + &dir * t);
            if let Ok(next) = DualState::evaluate(prog, &trial) {
                if next.grad.norm() < (1.0 - 1e-4 * t) * gnorm {
                    accepted = Some((trial, next));
                    break;
                }
            }
            t *= cfg.step_shrink;
        }
        match accepted {
            Some((s, n)) => {
                sigma = s;
                st = n;
            }
            None => break,
        }
    }
    let point = (st.grad.norm() <= cfg.grad_tol)
        .then(|| finish(prog, cfg, sigma, &st).ok())
        .flatten()
        .filter(|p| p.x.iter().all(|v| v.is_finite()));
    RootRun { point, iterations }
}

fn sample_starts(prog: &QuarticProgram, bounds: &SearchBox, cfg: &SolverConfig) -> Vec<DualVector> {
    let m = prog.term_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let draw = |rng: &mut ChaCha8Rng| {
        DualVector::new(DVector::from_fn(m, |i, _| {
            let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
            if lo < hi {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        }))
    };
    (0..cfg.multistart_count)
        .map(|_| {
            let mut s = draw(&mut rng);
            // Resample away from singular G; keep the last draw if every
            // attempt lands in the band.
            for _ in 0..32 {
                match crate::dual::build_geometry(prog, &s) {
                    Ok(g) if g.region != Region::Singular => break,
                    _ => s = draw(&mut rng),
                }
            }
            s
        })
        .collect()
}

fn dedupe(points: impl IntoIterator<Item = CriticalPoint>, tol: f64) -> Vec<CriticalPoint> {
    let mut out: Vec<CriticalPoint> = Vec::new();
    for p in points {
        if !out.iter().any(|q| (&q.sigma.0 - &p.sigma.0).amax() <= tol) {
            out.push(p);
        }
    }
    out
}

fn sort_by_dual_desc(points: &mut [CriticalPoint]) {
    points.sort_by(|a, b| b.dual_value.total_cmp(&a.dual_value));
}

fn find_critical_points_counted(
    prog: &QuarticProgram,
    cfg: &SolverConfig,
) -> Result<(Vec<CriticalPoint>, usize), SolverError> {
    let m = prog.term_count();
    cfg.check(m)?;
    let bounds = cfg
        .search_box
        .clone()
        .unwrap_or_else(|| SearchBox::default_for(prog));
    let starts = sample_starts(prog, &bounds, cfg);
    // Indexed parallel collect keeps start order, so the merge below does
    // not depend on scheduling.
    let runs: Vec<RootRun> = starts
        .into_par_iter()
        .map(|s| newton_root(prog, s, &bounds, cfg))
        .collect();
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let found = runs
        .into_iter()
        .filter_map(|r| r.point)
        .filter(|p| bounds.contains(&p.sigma.0, cfg.dedupe_tol));
    let mut points = dedupe(found, cfg.dedupe_tol);
    sort_by_dual_desc(&mut points);
    Ok((points, iterations))
}

/// Multistart Newton search for stationary points of `Pᵈ` inside the
/// configured search box. Exhaustiveness is not guaranteed.
pub fn find_critical_points(
    prog: &QuarticProgram,
    cfg: &SolverConfig,
) -> Result<Vec<CriticalPoint>, SolverError> {
    find_critical_points_counted(prog, cfg).map(|(p, _)| p)
}

/// Certified ascent plus critical-point search, with every failure folded
/// into the report's diagnostics.
pub fn solve(prog: &QuarticProgram, cfg: &SolverConfig) -> SolveReport {
    let started = Instant::now();
    let mut diagnostics: Vec<String> = prog.validate().iter().map(ToString::to_string).collect();
    let mut report = SolveReport {
        best: None,
        all_points: Vec::new(),
        biggest_local_min: None,
        biggest_local_max: None,
        iterations: 0,
        wall_time: Duration::ZERO,
        diagnostics: Vec::new(),
    };
    if !diagnostics.is_empty() {
        report.diagnostics = diagnostics;
        report.wall_time = started.elapsed();
        return report;
    }

    let certified = match maximize_dual_positive(prog, cfg) {
        Ok(p) => Some(p),
        Err(SolverError::IterationLimit(p)) => {
            diagnostics.push(format!(
                "positive-region ascent hit the iteration limit (gradient norm {:.3e})",
                p.grad_norm
            ));
            None
        }
        Err(e) => {
            diagnostics.push(format!("positive-region ascent: {e}"));
            None
        }
    };

    let mut points = match find_critical_points_counted(prog, cfg) {
        Ok((p, iters)) => {
            report.iterations += iters;
            p
        }
        Err(e) => {
            diagnostics.push(format!("critical point search: {e}"));
            Vec::new()
        }
    };

    if let Some(c) = &certified {
        match points
            .iter_mut()
            .find(|q| (&q.sigma.0 - &c.sigma.0).amax() <= cfg.dedupe_tol)
        {
            Some(q) => *q = c.clone(),
            None => points.push(c.clone()),
        }
        sort_by_dual_desc(&mut points);
    }

    report.best = points
        .iter()
        .filter(|p| p.kind == PointKind::CertifiedGlobalMin)
        .min_by(|a, b| a.primal_value.total_cmp(&b.primal_value))
        .cloned();
    if report.best.is_none() {
        diagnostics.push("no certified global minimizer".to_string());
    }
    let biggest = |kind| {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == kind)
            .max_by(|(_, a), (_, b)| a.primal_value.total_cmp(&b.primal_value))
            .map(|(i, _)| i)
    };
    report.biggest_local_min = biggest(PointKind::LocalMin);
    report.biggest_local_max = biggest(PointKind::LocalMax);
    report.all_points = points;
    report.diagnostics = diagnostics;
    report.wall_time = started.elapsed();
    report
}
