//! Canonical dual of a [`QuarticProgram`].
//!
//! For a dual vector `ς ∈ ℝᵐ`:
//!
//! ```text
//! G(ς) = Q + Σ ςᵢ Aᵢ          F(ς) = f − Σ ςᵢ bᵢ
//! Pᵈ(ς) = Σ (cᵢ ςᵢ − ½ αᵢ⁻¹ ςᵢ²) − ½ Fᵀ G⁺ F
//! ```
//!
//! `Pᵈ` is defined on the set where `F(ς)` lies in the column space of
//! `G(ς)`. A critical point `ς̄` maps back to the primal critical point
//! `x̄ = G⁺(ς̄) F(ς̄)` with `P(x̄) = Pᵈ(ς̄)`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quartic::QuarticProgram;

/// Relative eigenvalue band treated as zero when classifying `G(ς)`.
pub const TOL_EIG: f64 = 1e-10;
/// Column-space membership tolerance for `F(ς) ∈ Col(G(ς))`.
pub const TOL_COL: f64 = 1e-10;
/// Singular values below `RCOND · σ_max` are dropped by the pseudoinverse.
pub const RCOND: f64 = 1e-12;

/// A point `ς` in dual space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DualVector(pub DVector<f64>);

impl DualVector {
    pub fn new(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Deref for DualVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<Vec<f64>> for DualVector {
    fn from(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }
}

/// Definiteness of `G(ς)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Singular,
}

/// `G`, `F`, `G⁺` and the feasibility classification at one `ς`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGeometry {
    pub g: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g_pinv: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
    pub region: Region,
    pub colspace_ok: bool,
    /// `‖(I − G G⁺) F‖`.
    pub colspace_residual: f64,
}

/// Moore–Penrose inverse of a symmetric matrix.
///
/// For symmetric input the singular values are the absolute eigenvalues, so
/// the inverse is assembled from the eigendecomposition, keeping only
/// eigenpairs with `|λ| > rcond · max|λ|`. The input is symmetrized first.
pub fn pseudo_inverse(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    assert!(m.is_square(), "pseudo_inverse expects a square matrix");
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let smax = eig.eigenvalues.amax();
    if smax == 0.0 {
        return DMatrix::zeros(n, n);
    }
    let cut = rcond * smax;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cut {
            let v = eig.eigenvectors.column(k);
            out.ger(1.0 / lambda, &v, &v, 1.0);
        }
    }
    out
}

fn classify(eigenvalues: &DVector<f64>) -> Region {
    let scale = eigenvalues.amax().max(1.0);
    let tol = TOL_EIG * scale;
    let mut pos = 0;
    let mut neg = 0;
    for &l in eigenvalues.iter() {
        if l.abs() <= tol {
            return Region::Singular;
        } else if l > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    match (pos, neg) {
        (_, 0) => Region::PositiveDefinite,
        (0, _) => Region::NegativeDefinite,
        _ => Region::Indefinite,
    }
}

fn check_sigma(prog: &QuarticProgram, sigma: &DualVector) -> Result<()> {
    if sigma.len() != prog.term_count() {
        return Err(Error::DimensionMismatch {
            what: "dual vector",
            expected: prog.term_count(),
            got: sigma.len(),
        });
    }
    prog.check_x(&DVector::zeros(prog.dim()))
}

/// Assembles `G(ς)`, `F(ς)`, `G⁺` and classifies the point.
pub fn build_geometry(prog: &QuarticProgram, sigma: &DualVector) -> Result<DualGeometry> {
    check_sigma(prog, sigma)?;
    let mut g = prog.q().clone();
    let mut f = prog.f().clone();
    for (t, &s) in prog.terms().iter().zip(sigma.iter()) {
        g += t.quad.a() * s;
        f.axpy(-s, t.quad.b(), 1.0);
    }
    let eigenvalues = if g.nrows() == 0 {
        DVector::zeros(0)
    } else {
        SymmetricEigen::new(g.clone()).eigenvalues
    };
    let region = classify(&eigenvalues);
    let g_pinv = pseudo_inverse(&g, RCOND);
    let colspace_residual = (&f - &g * (&g_pinv * &f)).norm();
    let colspace_ok = colspace_residual <= TOL_COL * (1.0 + f.norm());
    Ok(DualGeometry {
        g,
        f,
        g_pinv,
        eigenvalues,
        region,
        colspace_ok,
        colspace_residual,
    })
}

/// Everything the solvers need at one feasible `ς`, computed from a single
/// geometry assembly.
#[derive(Debug, Clone)]
pub struct DualState {
    pub geometry: DualGeometry,
    /// `x̄ = G⁺F`.
    pub x: DVector<f64>,
    /// `ξ(x̄)`.
    pub measure: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
}

impl DualState {
    pub fn evaluate(prog: &QuarticProgram, sigma: &DualVector) -> Result<Self> {
        let geometry = build_geometry(prog, sigma)?;
        if !geometry.colspace_ok {
            return Err(Error::OutsideFeasible {
                residual: geometry.colspace_residual,
            });
        }
        let x = &geometry.g_pinv * &geometry.f;
        let measure = prog.canonical_measure(&x)?;
        let mut value = -0.5 * geometry.f.dot(&x);
        let mut grad = measure.clone();
        for (i, (t, &s)) in prog.terms().iter().zip(sigma.iter()).enumerate() {
            value += t.quad.c() * s - 0.5 * s * s / t.alpha;
            grad[i] -= s / t.alpha;
        }
        Ok(Self {
            geometry,
            x,
            measure,
            value,
            grad,
        })
    }

    /// `Hᵢⱼ = −δᵢⱼ/αᵢ − (Aᵢx̄ + bᵢ)ᵀ G⁻¹ (Aⱼx̄ + bⱼ)`.
    pub fn hessian(&self, prog: &QuarticProgram) -> Result<DMatrix<f64>> {
        if self.geometry.region == Region::Singular {
            return Err(Error::SingularGeometry);
        }
        let m = prog.term_count();
        let n = prog.dim();
        let mut jac = DMatrix::zeros(n, m);
        for (j, t) in prog.terms().iter().enumerate() {
            jac.set_column(j, &t.quad.grad(&self.x));
        }
        let mut h = -(jac.transpose() * &self.geometry.g_pinv * &jac);
        for (i, t) in prog.terms().iter().enumerate() {
            h[(i, i)] -= 1.0 / t.alpha;
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

/// `Pᵈ(ς)`; fails outside the dual feasible space.
pub fn eval_dual(prog: &QuarticProgram, sigma: &DualVector) -> Result<f64> {
    DualState::evaluate(prog, sigma).map(|s| s.value)
}

/// `∇Pᵈ(ς) = ξ(x̄) − diag(α)⁻¹ ς` with `x̄ = G⁺F`.
pub fn grad_dual(prog: &QuarticProgram, sigma: &DualVector) -> Result<DVector<f64>> {
    DualState::evaluate(prog, sigma).map(|s| s.grad)
}

/// Analytic Hessian of `Pᵈ`; requires nonsingular `G(ς)`.
pub fn hess_dual(prog: &QuarticProgram, sigma: &DualVector) -> Result<DMatrix<f64>> {
    DualState::evaluate(prog, sigma)?.hessian(prog)
}

/// `x̄ = G⁺(ς) F(ς)`.
pub fn recover_primal(prog: &QuarticProgram, sigma: &DualVector) -> Result<DVector<f64>> {
    DualState::evaluate(prog, sigma).map(|s| s.x)
}

/// Total complementary function `Ξ(x, ς) = Σ [ξᵢ(x) ςᵢ − ½ αᵢ⁻¹ ςᵢ²] + ½ xᵀQx − xᵀf`.
pub fn gao_strang(prog: &QuarticProgram, x: &DVector<f64>, sigma: &DualVector) -> Result<f64> {
    check_sigma(prog, sigma)?;
    let xi = prog.canonical_measure(x)?;
    let coupled: f64 = prog
        .terms()
        .iter()
        .zip(xi.iter().zip(sigma.iter()))
        .map(|(t, (&m, &s))| m * s - 0.5 * s * s / t.alpha)
        .sum();
    Ok(coupled + 0.5 * x.dot(&(prog.q() * x)) - x.dot(prog.f()))
}

/// `|P(x) − Pᵈ(ς)|`.
pub fn duality_gap(prog: &QuarticProgram, x: &DVector<f64>, sigma: &DualVector) -> Result<f64> {
    let dual = eval_dual(prog, sigma)?;
    Ok((prog.eval_primal(x)? - dual).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quartic::{QuadraticMap, QuarticTerm};
    use approx::assert_relative_eq;

    fn double_well() -> QuarticProgram {
        let quad = QuadraticMap::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1), -2.0);
        QuarticProgram::new(
            1,
            vec![QuarticTerm::new(1.0, quad)],
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 0.5),
        )
    }

    fn s1(v: f64) -> DualVector {
        DualVector::from_slice(&[v])
    }

    fn closed_form(s: f64) -> f64 {
        -1.0 / (8.0 * s) - 0.5 * s * s - 2.0 * s
    }

    #[test]
    fn geometry_classification() {
        let p = double_well();
        let g = build_geometry(&p, &s1(0.236417)).unwrap();
        assert_eq!(g.g[(0, 0)], 0.236417);
        assert_eq!(g.f[0], 0.5);
        assert_eq!(g.region, Region::PositiveDefinite);
        assert!(g.colspace_ok);

        let g = build_geometry(&p, &s1(0.0)).unwrap();
        assert_eq!(g.region, Region::Singular);
        assert!(!g.colspace_ok);

        let g = build_geometry(&p, &s1(-1.96772)).unwrap();
        assert_eq!(g.region, Region::NegativeDefinite);

        assert!(build_geometry(&p, &DualVector::from_slice(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn indefinite_region() {
        let t = |i: usize| {
            let mut a = DMatrix::zeros(2, 2);
            a[(i, i)] = 1.0;
            QuarticTerm::new(1.0, QuadraticMap::new(a, DVector::zeros(2), 0.0))
        };
        let p = QuarticProgram::new(2, vec![t(0), t(1)], DMatrix::zeros(2, 2), DVector::zeros(2));
        let g = build_geometry(&p, &DualVector::from_slice(&[1.0, -1.0])).unwrap();
        assert_eq!(g.region, Region::Indefinite);
    }

    #[test]
    fn pseudo_inverse_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let pd = pseudo_inverse(&d, RCOND);
        assert_relative_eq!(pd, DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0])), epsilon = 1e-15);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = m.clone().try_inverse().unwrap();
        assert_relative_eq!(pseudo_inverse(&m, RCOND), inv, epsilon = 1e-14);

        let ones = DMatrix::from_element(2, 2, 1.0);
        assert_relative_eq!(pseudo_inverse(&ones, RCOND), ones * 0.25, epsilon = 1e-15);

        assert_eq!(pseudo_inverse(&DMatrix::zeros(3, 3), RCOND), DMatrix::zeros(3, 3));
    }

    #[test]
    fn dual_values() {
        let p = double_well();
        assert_relative_eq!(eval_dual(&p, &s1(0.236417)).unwrap(), -1.02951, epsilon = 1e-5);
        assert_relative_eq!(eval_dual(&p, &s1(0.25)).unwrap(), -1.03125, epsilon = 1e-14);
        assert_relative_eq!(eval_dual(&p, &s1(-0.268701)).unwrap(), 0.9665031, epsilon = 1e-6);
        for &s in &[0.1, 0.7, -0.4, -3.0] {
            assert_relative_eq!(eval_dual(&p, &s1(s)).unwrap(), closed_form(s), epsilon = 1e-12);
        }
        match eval_dual(&p, &s1(0.0)) {
            Err(Error::OutsideFeasible { residual }) => assert_relative_eq!(residual, 0.5),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn dual_gradient_and_hessian() {
        let p = double_well();
        assert!(grad_dual(&p, &s1(0.236417)).unwrap()[0].abs() <= 1e-3);
        assert_relative_eq!(grad_dual(&p, &s1(1.0)).unwrap()[0], -2.875, epsilon = 1e-14);
        assert_relative_eq!(hess_dual(&p, &s1(1.0)).unwrap()[(0, 0)], -1.25, epsilon = 1e-14);

        let s = 0.236417;
        let x = 0.5 / s;
        let h = hess_dual(&p, &s1(s)).unwrap()[(0, 0)];
        assert_relative_eq!(h, -1.0 - x * x / s, epsilon = 1e-10);
        // Finite differences of the analytic gradient.
        let e = 1e-6;
        let fd = (grad_dual(&p, &s1(s + e)).unwrap()[0] - grad_dual(&p, &s1(s - e)).unwrap()[0]) / (2.0 * e);
        assert_relative_eq!(h, fd, max_relative = 1e-6);
        assert_relative_eq!(h, -19.919, epsilon = 1e-2);

        assert_eq!(hess_dual(&p, &s1(0.0)).unwrap_err(), Error::OutsideFeasible { residual: 0.5 });
    }

    #[test]
    fn singular_but_consistent_geometry() {
        // ½·½(x²)²: F ≡ 0 so ς = 0 is feasible with singular G.
        let quad = QuadraticMap::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1), 0.0);
        let p = QuarticProgram::new(1, vec![QuarticTerm::new(1.0, quad)], DMatrix::zeros(1, 1), DVector::zeros(1));
        let st = DualState::evaluate(&p, &s1(0.0)).unwrap();
        assert_eq!(st.geometry.region, Region::Singular);
        assert_eq!(st.value, 0.0);
        assert_eq!(st.grad[0], 0.0);
        assert_eq!(st.hessian(&p).unwrap_err(), Error::SingularGeometry);
    }

    #[test]
    fn primal_recovery_and_complementarity() {
        let p = double_well();
        assert_relative_eq!(recover_primal(&p, &s1(0.236417)).unwrap()[0], 2.11491, epsilon = 1e-5);

        let x = |v: f64| DVector::from_element(1, v);
        assert_relative_eq!(gao_strang(&p, &x(2.11491), &s1(0.236417)).unwrap(), -1.02951, epsilon = 1e-5);
        assert_eq!(gao_strang(&p, &x(0.0), &s1(0.0)).unwrap(), 0.0);
        assert_relative_eq!(gao_strang(&p, &x(-1.86081), &s1(-0.268701)).unwrap(), 0.9665031, epsilon = 1e-6);

        assert!(duality_gap(&p, &x(2.11491), &s1(0.236417)).unwrap() <= 1e-3);
        assert_relative_eq!(duality_gap(&p, &x(0.0), &s1(0.25)).unwrap(), 3.03125, epsilon = 1e-14);
    }
}
