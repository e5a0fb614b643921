//! Lennard-Jones and hydrogen-bond pair potentials, cluster energy and a
//! two-stage local refiner (steepest descent, then Polak–Ribière conjugate
//! gradient).

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `V(r) = 4ε[(σ/r)¹² − (σ/r)⁶]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
}

impl LjParams {
    pub const REDUCED: LjParams = LjParams {
        epsilon: 1.0,
        sigma: 1.0,
    };

    pub fn new(epsilon: f64, sigma: f64) -> Result<Self> {
        if !(epsilon > 0.0 && sigma > 0.0) || !epsilon.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidConfiguration(
                "LJ epsilon and sigma must be positive".into(),
            ));
        }
        Ok(Self { epsilon, sigma })
    }

    /// Separation of the pair minimum, `2^{1/6} σ`.
    pub fn r_min(&self) -> f64 {
        2f64.powf(1.0 / 6.0) * self.sigma
    }
}

/// Coefficient forms `A/r¹² − B/r⁶` (van der Waals) and `C/r¹² − D/r¹⁰`
/// (hydrogen bond).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl PairCoefficients {
    /// Coefficients must be finite and non-negative; a zero attractive
    /// coefficient gives pure repulsion.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if [a, b, c, d].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "pair coefficients must be finite and non-negative".into(),
            ));
        }
        Ok(Self { a, b, c, d })
    }

    /// `A = 4εσ¹²`, `B = 4εσ⁶`.
    pub fn from_lj(p: LjParams) -> Self {
        let s6 = p.sigma.powi(6);
        Self {
            a: 4.0 * p.epsilon * s6 * s6,
            b: 4.0 * p.epsilon * s6,
            c: 0.0,
            d: 0.0,
        }
    }
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveDistance(r))
    }
}

pub fn lj_pair(r: f64, p: &LjParams) -> Result<f64> {
    check_r(r)?;
    let s6 = (p.sigma / r).powi(6);
    Ok(4.0 * p.epsilon * (s6 * s6 - s6))
}

pub fn vdw_ab(r: f64, p: &PairCoefficients) -> Result<f64> {
    check_r(r)?;
    let r6 = r.powi(6);
    Ok(p.a / (r6 * r6) - p.b / r6)
}

pub fn hb_potential(r: f64, p: &PairCoefficients) -> Result<f64> {
    check_r(r)?;
    let r2 = r * r;
    let r10 = r2.powi(5);
    Ok(p.c / (r10 * r2) - p.d / r10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Reduced,
    Angstrom,
}

/// Atom positions of an `N ≥ 2` cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub positions: Vec<Vector3<f64>>,
    #[serde(default)]
    pub units: Units,
}

impl Configuration {
    pub fn new(positions: Vec<Vector3<f64>>, units: Units) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "a cluster needs at least 2 atoms, got {}",
                positions.len()
            )));
        }
        if positions.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidConfiguration("non-finite coordinate".into()));
        }
        Ok(Self { positions, units })
    }

    pub fn reduced(positions: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(positions, Units::Reduced)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.len(),
            self.positions.iter().flat_map(|p| p.iter().copied()),
        )
    }

    fn from_flat(x: &DVector<f64>, units: Units) -> Self {
        Self {
            positions: x
                .as_slice()
                .chunks_exact(3)
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
            units,
        }
    }
}

fn cluster_energy_flat(x: &[f64]) -> Result<f64> {
    let n = x.len() / 3;
    let mut e = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let tau = squared_distance(x, i, j);
            if tau == 0.0 {
                return Err(Error::CoincidentAtoms(i, j));
            }
            let inv3 = 1.0 / (tau * tau * tau);
            e += inv3 * inv3 - inv3;
        }
    }
    Ok(4.0 * e)
}

fn squared_distance(x: &[f64], i: usize, j: usize) -> f64 {
    (0..3).map(|k| (x[3 * i + k] - x[3 * j + k]).powi(2)).sum()
}

fn cluster_grad_flat(x: &[f64]) -> Result<DVector<f64>> {
    let n = x.len() / 3;
    let mut g = DVector::zeros(3 * n);
    for i in 0..n {
        for j in i + 1..n {
            let tau = squared_distance(x, i, j);
            if tau == 0.0 {
                return Err(Error::CoincidentAtoms(i, j));
            }
            // d/dτ 4(τ⁻⁶ − τ⁻³), and dτ/dxᵢ = 2(xᵢ − xⱼ).
            let t3 = tau * tau * tau;
            let de = 4.0 * (-6.0 / (t3 * t3 * tau) + 3.0 / (t3 * tau));
            for k in 0..3 {
                let d = 2.0 * de * (x[3 * i + k] - x[3 * j + k]);
                g[3 * i + k] += d;
                g[3 * j + k] -= d;
            }
        }
    }
    Ok(g)
}

/// Reduced-unit cluster energy `4 Σ_{i<j} (τᵢⱼ⁻⁶ − τᵢⱼ⁻³)` with `τ` the
/// squared distance.
pub fn lj_cluster_energy(cfg: &Configuration) -> Result<f64> {
    cluster_energy_flat(cfg.flat().as_slice())
}

pub fn lj_cluster_grad(cfg: &Configuration) -> Result<DVector<f64>> {
    cluster_grad_flat(cfg.flat().as_slice())
}

/// Sum of [`lj_pair`] over all pairs with explicit parameters.
pub fn pair_sum_energy(cfg: &Configuration, p: &LjParams) -> Result<f64> {
    let mut e = 0.0;
    for (i, a) in cfg.positions.iter().enumerate() {
        for (j, b) in cfg.positions.iter().enumerate().skip(i + 1) {
            let r = (a - b).norm();
            if r == 0.0 {
                return Err(Error::CoincidentAtoms(i, j));
            }
            e += lj_pair(r, p)?;
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub configuration: Configuration,
    pub energy: f64,
    /// Energy after every accepted step, starting with the initial energy.
    pub energy_trace: Vec<f64>,
    pub steepest_steps: usize,
    pub cg_steps: usize,
    pub diagnostics: Vec<String>,
}

/// Largest single-atom displacement allowed per trial step.
const MAX_DISPLACEMENT: f64 = 0.3;
const GRAD_TOL: f64 = 1e-11;

fn max_atom_norm(d: &DVector<f64>) -> f64 {
    d.as_slice()
        .chunks_exact(3)
        .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
        .fold(0.0, f64::max)
}

/// Backtracking Armijo search along `dir`, followed by step doubling while
/// the energy keeps falling. Returns the accepted point and its energy.
fn line_search(
    x: &DVector<f64>,
    e: f64,
    g: &DVector<f64>,
    dir: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let slope = g.dot(dir);
    if !(slope < 0.0) {
        return None;
    }
    let energy = |t: f64| {
        let y = x + dir * t;
        cluster_energy_flat(y.as_slice()).ok().map(|v| (y, v))
    };
    let mut t = (MAX_DISPLACEMENT / max_atom_norm(dir)).min(1.0);
    let mut best = None;
    for _ in 0..60 {
        if let Some((y, v)) = energy(t) {
            if v <= e + 1e-4 * t * slope {
                best = Some((t, y, v));
                break;
            }
        }
        t *= 0.5;
    }
    let (mut t, mut y, mut v) = best?;
    for _ in 0..20 {
        let t2 = 2.0 * t;
        if max_atom_norm(dir) * t2 > MAX_DISPLACEMENT {
            break;
        }
        match energy(t2) {
            Some((y2, v2)) if v2 < v => {
                t = t2;
                y = y2;
                v = v2;
            }
            _ => break,
        }
    }
    Some((y, v))
}

/// Steepest descent for `stage1_steps`, then Polak–Ribière conjugate
/// gradient (restarted every `3N` steps) for `stage2_steps`, on the
/// reduced-unit cluster energy. Only energy-decreasing steps are accepted.
pub fn refine(cfg: &Configuration, stage1_steps: usize, stage2_steps: usize) -> Result<RefineResult> {
    let mut x = cfg.flat();
    let mut e = cluster_energy_flat(x.as_slice())?;
    let mut g = cluster_grad_flat(x.as_slice())?;
    let mut trace = vec![e];
    let mut diagnostics = Vec::new();
    let mut steepest_steps = 0;
    let mut cg_steps = 0;

    for k in 0..stage1_steps {
        if g.amax() <= GRAD_TOL {
            break;
        }
        let dir = -&g;
        match line_search(&x, e, &g, &dir) {
            Some((y, v)) => {
                x = y;
                e = v;
                g = cluster_grad_flat(x.as_slice())?;
                trace.push(e);
                steepest_steps += 1;
            }
            None => {
                diagnostics.push(format!("steepest descent: line search failed at step {k}"));
                break;
            }
        }
    }

    let restart = 3 * cfg.len();
    let mut dir = -&g;
    for k in 0..stage2_steps {
        if g.amax() <= GRAD_TOL {
            break;
        }
        if k % restart == 0 || dir.dot(&g) >= 0.0 {
            dir = -&g;
        }
        let step = line_search(&x, e, &g, &dir).or_else(|| {
            dir = -&g;
            line_search(&x, e, &g, &dir)
        });
        let Some((y, v)) = step else {
            diagnostics.push(format!("conjugate gradient: line search failed at step {k}"));
            break;
        };
        let g_new = cluster_grad_flat(y.as_slice())?;
        let beta = (g_new.dot(&(&g_new - &g)) / g.dot(&g)).max(0.0);
        dir = -&g_new + &dir * beta;
        x = y;
        e = v;
        g = g_new;
        trace.push(e);
        cg_steps += 1;
    }

    Ok(RefineResult {
        configuration: Configuration::from_flat(&x, cfg.units),
        energy: e,
        energy_trace: trace,
        steepest_steps,
        cg_steps,
        diagnostics,
    })
}
