//! Structured quartic programs: a sum of weighted squared quadratics plus a
//! quadratic tail,
//!
//! ```text
//! P(x) = Σᵢ ½ αᵢ (½ xᵀAᵢx + bᵢᵀx + cᵢ)² + ½ xᵀQx − xᵀf
//! ```
//!
//! The inner quadratic `ξᵢ(x) = ½ xᵀAᵢx + bᵢᵀx + cᵢ` is the canonical measure
//! paired with the dual variable `ςᵢ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Returns the symmetric part of `m` and whether `m` differed from it.
fn symmetrize(m: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if !m.is_square() {
        return (m, false);
    }
    let t = m.transpose();
    if m == t {
        return (m, false);
    }
    ((&m + &t) * 0.5, true)
}

/// `x ↦ ½ xᵀAx + bᵀx + c` with `A` stored symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMap {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    symmetrized: bool,
}

impl QuadraticMap {
    /// Asymmetric `a` is replaced by `(a + aᵀ)/2` and the map is flagged.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Self {
        let (a, symmetrized) = symmetrize(a);
        Self {
            a,
            b,
            c,
            symmetrized,
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// True when the input matrix was asymmetric and had to be symmetrized.
    pub fn was_symmetrized(&self) -> bool {
        self.symmetrized
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.a * x)) + self.b.dot(x) + self.c
    }

    /// `Ax + b`, the gradient of the map.
    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

/// One squared-quadratic term `½ α ξ(x)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticTerm {
    pub alpha: f64,
    pub quad: QuadraticMap,
}

impl QuarticTerm {
    pub fn new(alpha: f64, quad: QuadraticMap) -> Self {
        Self { alpha, quad }
    }
}

/// A problem found by [`QuarticProgram::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Term index, or `None` for the quadratic tail.
    pub term: Option<usize>,
    pub kind: DiagnosticKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    ZeroAlpha,
    DimensionMismatch,
    NonFinite,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let place = match self.term {
            Some(i) => format!("at index {i}"),
            None => "in quadratic tail".to_string(),
        };
        match self.kind {
            DiagnosticKind::ZeroAlpha => write!(f, "zero alpha {place}"),
            DiagnosticKind::DimensionMismatch => write!(f, "dimension mismatch {place}"),
            DiagnosticKind::NonFinite => write!(f, "non-finite entry {place}"),
        }
    }
}

/// The primal problem: `m` quartic terms over `ℝⁿ` plus `½ xᵀQx − xᵀf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticProgram {
    n: usize,
    terms: Vec<QuarticTerm>,
    q: DMatrix<f64>,
    f: DVector<f64>,
}

impl QuarticProgram {
    /// Builds a program without checking it; see [`validate`](Self::validate)
    /// and [`checked`](Self::checked). `q` is symmetrized like term matrices.
    pub fn new(n: usize, terms: Vec<QuarticTerm>, q: DMatrix<f64>, f: DVector<f64>) -> Self {
        let (q, _) = symmetrize(q);
        Self { n, terms, q, f }
    }

    /// Builds a program and rejects it if [`validate`](Self::validate)
    /// reports anything.
    pub fn checked(
        n: usize,
        terms: Vec<QuarticTerm>,
        q: DMatrix<f64>,
        f: DVector<f64>,
    ) -> Result<Self> {
        let prog = Self::new(n, terms, q, f);
        let diags = prog.validate();
        if diags.is_empty() {
            Ok(prog)
        } else {
            let msgs: Vec<String> = diags.iter().map(ToString::to_string).collect();
            Err(Error::InvalidProgram(msgs.join("; ")))
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[QuarticTerm] {
        &self.terms
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(|t| t.alpha)
    }

    /// Reports structural problems. An empty list means the program is
    /// well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let n = self.n;
        let mut out = Vec::new();
        let mut push = |term, kind| out.push(Diagnostic { term, kind });

        for (i, t) in self.terms.iter().enumerate() {
            let q = &t.quad;
            if q.a.nrows() != n || q.a.ncols() != n || q.b.len() != n {
                push(Some(i), DiagnosticKind::DimensionMismatch);
            }
            if !t.alpha.is_finite()
                || !q.c.is_finite()
                || q.a.iter().chain(q.b.iter()).any(|v| !v.is_finite())
            {
                push(Some(i), DiagnosticKind::NonFinite);
            }
            if t.alpha == 0.0 {
                push(Some(i), DiagnosticKind::ZeroAlpha);
            }
        }
        if self.q.nrows() != n || self.q.ncols() != n || self.f.len() != n {
            push(None, DiagnosticKind::DimensionMismatch);
        }
        if self.q.iter().chain(self.f.iter()).any(|v| !v.is_finite()) {
            push(None, DiagnosticKind::NonFinite);
        }
        out
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.n;
        let bad = |got| Error::DimensionMismatch {
            what: "program",
            expected: n,
            got,
        };
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(bad(self.q.nrows()));
        }
        if self.f.len() != n {
            return Err(bad(self.f.len()));
        }
        for t in &self.terms {
            if t.quad.a.nrows() != n || t.quad.a.ncols() != n {
                return Err(bad(t.quad.a.nrows()));
            }
            if t.quad.b.len() != n {
                return Err(bad(t.quad.b.len()));
            }
        }
        Ok(())
    }

    pub(crate) fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        self.check_shape()?;
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "x",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn tail(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) - x.dot(&self.f)
    }

    /// `P(x)`.
    pub fn eval_primal(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        let quartic: f64 = self
            .terms
            .iter()
            .map(|t| {
                let xi = t.quad.eval(x);
                0.5 * t.alpha * xi * xi
            })
            .sum();
        Ok(quartic + self.tail(x))
    }

    /// `ξ(x)`, one entry per term.
    pub fn canonical_measure(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.quad.eval(x)),
        ))
    }

    /// `∇P(x) = Σ αᵢ ξᵢ (Aᵢx + bᵢ) + Qx − f`.
    pub fn grad_primal(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        let mut g = &self.q * x - &self.f;
        for t in &self.terms {
            let xi = t.quad.eval(x);
            g.axpy(t.alpha * xi, &t.quad.grad(x), 1.0);
        }
        Ok(g)
    }

    /// `∇²P(x) = Σ αᵢ [(Aᵢx + bᵢ)(Aᵢx + bᵢ)ᵀ + ξᵢ Aᵢ] + Q`.
    pub fn hess_primal(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_x(x)?;
        let mut h = self.q.clone();
        for t in &self.terms {
            let xi = t.quad.eval(x);
            let g = t.quad.grad(x);
            h.ger(t.alpha, &g, &g, 1.0);
            h += &t.quad.a * (t.alpha * xi);
        }
        Ok(h)
    }
}
