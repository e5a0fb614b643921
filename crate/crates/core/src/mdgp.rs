//! Molecular distance geometry with anchors and sensors.
//!
//! An instance fixes some points (anchors) and asks for positions of the
//! others (sensors) so that selected pairs sit at prescribed distances. The
//! weighted least-squares objective with a linear perturbation
//!
//! ```text
//! P_ε(X) = Σ w (‖Xᵢ − Xⱼ‖² − r²)² − εᵀX
//! ```
//!
//! is exactly a [`QuarticProgram`] with one term per constraint.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quartic::{QuadraticMap, QuarticProgram, QuarticTerm};
use crate::solver::{self, SolveReport, SolverConfig};

/// Target contact distance: twice the carbon van der Waals radius, in Å.
pub const DEFAULT_DISTANCE: f64 = 3.4;
pub const DEFAULT_WEIGHT: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Residuals above this many Å² are flagged by [`violation_report`].
pub const DEFAULT_REPORT_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Anchor(usize),
    Sensor(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceConstraint {
    pub a: Endpoint,
    pub b: Endpoint,
    /// Target distance in Å.
    pub r: f64,
    pub w: f64,
}

impl DistanceConstraint {
    pub fn new(a: Endpoint, b: Endpoint, r: f64) -> Self {
        Self {
            a,
            b,
            r,
            w: DEFAULT_WEIGHT,
        }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.w = w;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdgpInstance {
    pub anchors: Vec<Vector3<f64>>,
    pub sensors: usize,
    pub constraints: Vec<DistanceConstraint>,
    /// Linear perturbation, length `3 · sensors`.
    pub epsilon: Vec<f64>,
}

impl MdgpInstance {
    /// Builds and validates an instance. `epsilon = None` uses
    /// [`DEFAULT_EPSILON`] on every coordinate.
    pub fn new(
        anchors: Vec<Vector3<f64>>,
        sensors: usize,
        constraints: Vec<DistanceConstraint>,
        epsilon: Option<Vec<f64>>,
    ) -> Result<Self> {
        let epsilon = epsilon.unwrap_or_else(|| vec![DEFAULT_EPSILON; 3 * sensors]);
        let inst = Self {
            anchors,
            sensors,
            constraints,
            epsilon,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        3 * self.sensors
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.constraints.is_empty() {
            return bad("no constraints".into());
        }
        if self.epsilon.len() != self.dim() {
            return bad(format!(
                "epsilon has length {}, expected {}",
                self.epsilon.len(),
                self.dim()
            ));
        }
        if self.epsilon.iter().any(|v| !v.is_finite())
            || self.anchors.iter().any(|a| a.iter().any(|v| !v.is_finite()))
        {
            return bad("non-finite coordinate or perturbation".into());
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for end in [c.a, c.b] {
                match end {
                    Endpoint::Anchor(k) if k >= self.anchors.len() => {
                        return bad(format!("constraint {i}: anchor index {k} out of range"))
                    }
                    Endpoint::Sensor(k) if k >= self.sensors => {
                        return bad(format!("constraint {i}: sensor index {k} out of range"))
                    }
                    _ => {}
                }
            }
            match (c.a, c.b) {
                (Endpoint::Anchor(_), Endpoint::Anchor(_)) => {
                    return bad(format!("constraint {i}: both ends are anchors"))
                }
                (Endpoint::Sensor(j), Endpoint::Sensor(k)) if j == k => {
                    return bad(format!("constraint {i}: sensor {j} constrained to itself"))
                }
                _ => {}
            }
            if !(c.r > 0.0) || !c.r.is_finite() {
                return bad(format!("constraint {i}: target distance must be positive"));
            }
            if !(c.w > 0.0) || !c.w.is_finite() {
                return bad(format!("constraint {i}: weight must be positive"));
            }
        }
        Ok(())
    }

    fn position(&self, x: &DVector<f64>, end: Endpoint) -> Vector3<f64> {
        match end {
            Endpoint::Anchor(k) => self.anchors[k],
            Endpoint::Sensor(k) => Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]),
        }
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "sensor coordinates",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn add_block(a: &mut DMatrix<f64>, row: usize, col: usize, v: f64) {
    for d in 0..3 {
        a[(3 * row + d, 3 * col + d)] += v;
    }
}

/// Compiles the instance into `P_ε` with `α = 2w` so that
/// `½ α ξ² = w (‖·‖² − r²)²`.
pub fn build_program(inst: &MdgpInstance) -> Result<QuarticProgram> {
    inst.validate()?;
    let n = inst.dim();
    let terms = inst
        .constraints
        .iter()
        .map(|c| {
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            let r2 = c.r * c.r;
            let cst = match (c.a, c.b) {
                (Endpoint::Anchor(p), Endpoint::Sensor(k))
                | (Endpoint::Sensor(k), Endpoint::Anchor(p)) => {
                    let anchor = inst.anchors[p];
                    add_block(&mut a, k, k, 2.0);
                    b.rows_mut(3 * k, 3).copy_from(&(anchor * -2.0));
                    anchor.norm_squared() - r2
                }
                (Endpoint::Sensor(j), Endpoint::Sensor(k)) => {
                    add_block(&mut a, j, j, 2.0);
                    add_block(&mut a, k, k, 2.0);
                    add_block(&mut a, j, k, -2.0);
                    add_block(&mut a, k, j, -2.0);
                    -r2
                }
                (Endpoint::Anchor(_), Endpoint::Anchor(_)) => unreachable!("rejected by validate"),
            };
            QuarticTerm::new(2.0 * c.w, QuadraticMap::new(a, b, cst))
        })
        .collect();
    QuarticProgram::checked(
        n,
        terms,
        DMatrix::zeros(n, n),
        DVector::from_column_slice(&inst.epsilon),
    )
}

/// `P_ε(x)` by explicit distance arithmetic, without going through
/// [`build_program`].
pub fn eval_direct(inst: &MdgpInstance, x: &DVector<f64>) -> Result<f64> {
    inst.check_x(x)?;
    let fit: f64 = inst
        .constraints
        .iter()
        .map(|c| {
            let d2 = (inst.position(x, c.a) - inst.position(x, c.b)).norm_squared();
            let res = d2 - c.r * c.r;
            c.w * res * res
        })
        .sum();
    let pert: f64 = inst.epsilon.iter().zip(x.iter()).map(|(e, v)| e * v).sum();
    Ok(fit - pert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: usize,
    pub target: f64,
    pub achieved: f64,
    /// `‖Xᵢ − Xⱼ‖² − r²` in Å².
    pub residual: f64,
    pub flagged: bool,
}

/// Per-constraint achieved distances and squared-distance residuals.
pub fn violation_report(
    inst: &MdgpInstance,
    x: &DVector<f64>,
    threshold: f64,
) -> Result<Vec<Violation>> {
    inst.check_x(x)?;
    Ok(inst
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let achieved = (inst.position(x, c.a) - inst.position(x, c.b)).norm();
            let residual = achieved * achieved - c.r * c.r;
            Violation {
                constraint: i,
                target: c.r,
                achieved,
                residual,
                flagged: residual.abs() > threshold,
            }
        })
        .collect())
}

/// Flat `3s` vector into per-sensor positions.
pub fn split_sensors(x: &DVector<f64>) -> Vec<Vector3<f64>> {
    x.as_slice()
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdgpSolution {
    /// Certified sensor positions; `None` when no certificate was found.
    pub sensors: Option<Vec<Vector3<f64>>>,
    pub report: SolveReport,
}

pub fn solve_mdgp(inst: &MdgpInstance, cfg: &SolverConfig) -> Result<MdgpSolution> {
    let prog = build_program(inst)?;
    let report = solver::solve(&prog, cfg);
    let sensors = report.best.as_ref().map(|b| split_sensors(&b.x));
    Ok(MdgpSolution { sensors, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn anchor_sensor(anchor: [f64; 3]) -> MdgpInstance {
        MdgpInstance::new(
            vec![Vector3::from(anchor)],
            1,
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), DEFAULT_DISTANCE)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn nvh_coefficient_and_direct_value() {
        let inst = anchor_sensor([1.731, -1.514, -7.980]);
        let prog = build_program(&inst).unwrap();
        assert_relative_eq!(prog.terms()[0].quad.c(), 57.409, epsilon = 5e-4);
        assert_eq!(prog.terms()[0].alpha, 1.0);

        let x = DVector::from_vec(vec![1.731, -1.514, -7.980]);
        assert_relative_eq!(eval_direct(&inst, &x).unwrap(), 67.20495, epsilon = 1e-9);
        assert_relative_eq!(prog.eval_primal(&x).unwrap(), 67.20495, epsilon = 1e-9);
    }

    #[test]
    fn exact_placement_is_zero() {
        let mut inst = anchor_sensor([0.0, 0.0, 0.0]);
        inst.epsilon = vec![0.0; 3];
        let x = DVector::from_vec(vec![0.0, DEFAULT_DISTANCE, 0.0]);
        assert_eq!(eval_direct(&inst, &x).unwrap(), 0.0);
        let v = violation_report(&inst, &x, DEFAULT_REPORT_THRESHOLD).unwrap();
        assert_eq!(v[0].residual, 0.0);
        assert!(!v[0].flagged);
    }

    #[test]
    fn sensor_sensor_term_matches_direct_form() {
        let inst = MdgpInstance::new(
            vec![Vector3::new(1.0, 2.0, 3.0)],
            2,
            vec![
                DistanceConstraint::new(Endpoint::Sensor(0), Endpoint::Sensor(1), 2.5).with_weight(0.7),
                DistanceConstraint::new(Endpoint::Sensor(1), Endpoint::Anchor(0), 3.4),
            ],
            None,
        )
        .unwrap();
        let prog = build_program(&inst).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0, 4.0, 0.5, -0.2]);
        assert_relative_eq!(
            prog.eval_primal(&x).unwrap(),
            eval_direct(&inst, &x).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn endpoint_order_does_not_matter() {
        let a = anchor_sensor([1.0, -2.0, 0.5]);
        let mut b = a.clone();
        b.constraints[0] = DistanceConstraint::new(Endpoint::Sensor(0), Endpoint::Anchor(0), DEFAULT_DISTANCE);
        assert_eq!(build_program(&a).unwrap(), build_program(&b).unwrap());
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let anchors = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let err = |c: Vec<DistanceConstraint>, s: usize| {
            MdgpInstance::new(anchors.clone(), s, c, None).unwrap_err().to_string()
        };
        assert!(err(vec![], 1).contains("no constraints"));
        assert!(err(
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Anchor(1), 1.0)],
            1
        )
        .contains("both ends are anchors"));
        assert!(err(
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), -1.0)],
            1
        )
        .contains("target distance must be positive"));
        assert!(err(
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(3), 1.0)],
            1
        )
        .contains("out of range"));
        assert!(err(
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), 1.0).with_weight(0.0)],
            1
        )
        .contains("weight"));
        assert!(MdgpInstance::new(
            anchors.clone(),
            1,
            vec![DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), 1.0)],
            Some(vec![0.0; 2])
        )
        .is_err());
    }

    #[test]
    fn wrong_dimension_is_an_error() {
        let inst = anchor_sensor([0.0; 3]);
        assert!(eval_direct(&inst, &DVector::zeros(6)).is_err());
        assert!(violation_report(&inst, &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn feasible_unperturbed_instance_solves_exactly() {
        // Two anchors 4 Å apart, one sensor at 3.4 Å from both: feasible.
        let inst = MdgpInstance::new(
            vec![Vector3::new(-2.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)],
            1,
            vec![
                DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), 3.4),
                DistanceConstraint::new(Endpoint::Anchor(1), Endpoint::Sensor(0), 3.4),
            ],
            Some(vec![0.0; 3]),
        )
        .unwrap();
        let sol = solve_mdgp(&inst, &SolverConfig::default()).unwrap();
        // The solution set is a circle, so no strict certificate is expected;
        // any stationary point reported must still fit the distances.
        for p in &sol.report.all_points {
            if p.kind == crate::solver::PointKind::CertifiedGlobalMin {
                assert!(p.primal_value <= 1e-8);
                for v in violation_report(&inst, &p.x, DEFAULT_REPORT_THRESHOLD).unwrap() {
                    assert!(v.residual.abs() <= 1e-4);
                }
            }
        }
    }
}
