//! On-disk formats: JSON instance and report documents, PDB `ATOM` records
//! and plain XYZ coordinates.
//!
//! Instance documents look like
//!
//! ```json
//! { "schema_version": 1,
//!   "problem": "mdgp",
//!   "payload": { "anchors": [[1.731, -1.514, -7.98]], "sensors": 1,
//!                "constraints": [{ "a": {"anchor": 0}, "b": {"sensor": 0}, "r": 3.4, "w": 0.5 }],
//!                "epsilon": [0.05, 0.05, 0.05] },
//!   "solver": { "seed": 7 } }
//! ```
//!
//! or, for a raw quartic program, `"problem": "quartic"` with a payload of
//! `n`, `terms: [{alpha, A, b, c}]`, `Q` and `f` (matrices as row lists).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{Atom, Chain};
use crate::mdgp::{self, DistanceConstraint, Endpoint, MdgpInstance, Violation};
use crate::quartic::{QuadraticMap, QuarticProgram, QuarticTerm};
use crate::solver::{CriticalPoint, PointKind, SearchBox, SolveReport, SolverConfig};
use crate::Region;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("{location}: {message}")]
    Schema { location: String, message: String },

    #[error("line {line}, columns {columns}: {message}")]
    Coordinates {
        line: usize,
        columns: String,
        message: String,
    },
}

fn schema_err(location: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Schema {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Quartic,
    Mdgp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarticSpec {
    pub n: usize,
    pub terms: Vec<TermSpec>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub a: Endpoint,
    pub b: Endpoint,
    pub r: f64,
    #[serde(default = "default_weight")]
    pub w: f64,
}

fn default_weight() -> f64 {
    mdgp::DEFAULT_WEIGHT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdgpSpec {
    pub anchors: Vec<[f64; 3]>,
    pub sensors: usize,
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

/// Solver settings an instance may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_shrink: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedupe_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_box: Option<SearchBox>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(v) = self.grad_tol {
            cfg.grad_tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.multistart_count {
            cfg.multistart_count = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.step_shrink {
            cfg.step_shrink = v;
        }
        if let Some(v) = self.dedupe_tol {
            cfg.dedupe_tol = v;
        }
        if let Some(v) = &self.search_box {
            cfg.search_box = Some(v.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Quartic(QuarticSpec),
    Mdgp(MdgpSpec),
}

/// A validated instance file.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDocument {
    pub schema_version: u32,
    pub problem: Problem,
    pub solver: Option<SolverOverrides>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    schema_version: u32,
    problem: ProblemKind,
    payload: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<SolverOverrides>,
}

fn matrix(rows: &[Vec<f64>], n: usize, location: &str) -> Result<DMatrix<f64>, FormatError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(schema_err(location, format!("expected a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, location: &str) -> Result<DVector<f64>, FormatError> {
    if v.len() != n {
        return Err(schema_err(location, format!("expected length {n}, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl QuarticSpec {
    pub fn to_program(&self) -> Result<QuarticProgram, FormatError> {
        let n = self.n;
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let loc = |f: &str| format!("payload.terms[{i}].{f}");
                if t.alpha == 0.0 {
                    return Err(schema_err(loc("alpha"), "alpha must be nonzero"));
                }
                Ok(QuarticTerm::new(
                    t.alpha,
                    QuadraticMap::new(matrix(&t.a, n, &loc("A"))?, vector(&t.b, n, &loc("b"))?, t.c),
                ))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let prog = QuarticProgram::new(
            n,
            terms,
            matrix(&self.q, n, "payload.Q")?,
            vector(&self.f, n, "payload.f")?,
        );
        if let Some(d) = prog.validate().first() {
            return Err(schema_err("payload", d.to_string()));
        }
        Ok(prog)
    }

    pub fn from_program(prog: &QuarticProgram) -> Self {
        Self {
            n: prog.dim(),
            terms: prog
                .terms()
                .iter()
                .map(|t| TermSpec {
                    alpha: t.alpha,
                    a: rows(t.quad.a()),
                    b: t.quad.b().iter().copied().collect(),
                    c: t.quad.c(),
                })
                .collect(),
            q: rows(prog.q()),
            f: prog.f().iter().copied().collect(),
        }
    }
}

impl MdgpSpec {
    pub fn to_instance(&self) -> Result<MdgpInstance, FormatError> {
        if self.constraints.is_empty() {
            return Err(schema_err("payload.constraints", "no constraints"));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !(c.r > 0.0) {
                return Err(schema_err(
                    format!("payload.constraints[{i}].r"),
                    "target distance must be positive",
                ));
            }
        }
        let constraints = self
            .constraints
            .iter()
            .map(|c| DistanceConstraint {
                a: c.a,
                b: c.b,
                r: c.r,
                w: c.w,
            })
            .collect();
        MdgpInstance::new(
            self.anchors.iter().map(|a| Vector3::from(*a)).collect(),
            self.sensors,
            constraints,
            self.epsilon.clone(),
        )
        .map_err(|e| schema_err("payload", e.to_string()))
    }

    pub fn from_instance(inst: &MdgpInstance) -> Self {
        Self {
            anchors: inst.anchors.iter().map(|a| [a.x, a.y, a.z]).collect(),
            sensors: inst.sensors,
            constraints: inst
                .constraints
                .iter()
                .map(|c| ConstraintSpec {
                    a: c.a,
                    b: c.b,
                    r: c.r,
                    w: c.w,
                })
                .collect(),
            epsilon: Some(inst.epsilon.clone()),
        }
    }
}

impl InstanceDocument {
    pub fn quartic(prog: &QuarticProgram) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: Problem::Quartic(QuarticSpec::from_program(prog)),
            solver: None,
        }
    }

    pub fn mdgp(inst: &MdgpInstance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: Problem::Mdgp(MdgpSpec::from_instance(inst)),
            solver: None,
        }
    }

    /// The quartic program behind the document (compiled for MDGP).
    pub fn program(&self) -> Result<QuarticProgram, FormatError> {
        match &self.problem {
            Problem::Quartic(q) => q.to_program(),
            Problem::Mdgp(m) => mdgp::build_program(&m.to_instance()?)
                .map_err(|e| schema_err("payload", e.to_string())),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(o) = &self.solver {
            o.apply(&mut cfg);
        }
        cfg
    }

    pub fn to_json(&self) -> String {
        let payload = match &self.problem {
            Problem::Quartic(q) => serde_json::to_value(q),
            Problem::Mdgp(m) => serde_json::to_value(m),
        }
        .expect("specs serialize");
        let raw = RawDocument {
            schema_version: self.schema_version,
            problem: match self.problem {
                Problem::Quartic(_) => ProblemKind::Quartic,
                Problem::Mdgp(_) => ProblemKind::Mdgp,
            },
            payload,
            solver: self.solver.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("documents serialize")
    }
}

fn from_payload<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, FormatError> {
    serde_json::from_value(v).map_err(|e| schema_err("payload", e.to_string()))
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<InstanceDocument, FormatError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| {
        schema_err(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(schema_err(
            "schema_version",
            format!("unsupported version {}", raw.schema_version),
        ));
    }
    let problem = match raw.problem {
        ProblemKind::Quartic => {
            let q: QuarticSpec = from_payload(raw.payload)?;
            q.to_program()?;
            Problem::Quartic(q)
        }
        ProblemKind::Mdgp => {
            let m: MdgpSpec = from_payload(raw.payload)?;
            m.to_instance()?;
            Problem::Mdgp(m)
        }
    };
    Ok(InstanceDocument {
        schema_version: raw.schema_version,
        problem,
        solver: raw.solver,
    })
}

/// Hex SHA-256 of the input text.
pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: Vec<f64>,
    pub sigma: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub grad_norm: f64,
    pub region: Region,
    pub kind: PointKind,
}

impl From<&CriticalPoint> for PointRecord {
    fn from(p: &CriticalPoint) -> Self {
        Self {
            x: p.x.iter().copied().collect(),
            sigma: p.sigma.iter().copied().collect(),
            primal: p.primal_value,
            dual: p.dual_value,
            gap: p.gap(),
            grad_norm: p.grad_norm,
            region: p.region,
            kind: p.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub iterations: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub input_digest: String,
    pub best: Option<PointRecord>,
    pub critical_points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biggest_local_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biggest_local_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
    pub diagnostics: Vec<String>,
    /// Omitted unless requested, so reports stay byte-identical across runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ReportDocument {
    pub fn from_report(input: &str, report: &SolveReport, with_timing: bool) -> Self {
        Self {
            input_digest: digest(input),
            best: report.best.as_ref().map(PointRecord::from),
            critical_points: report.all_points.iter().map(PointRecord::from).collect(),
            biggest_local_min: report.biggest_local_min,
            biggest_local_max: report.biggest_local_max,
            sensors: None,
            violations: None,
            diagnostics: report.diagnostics.clone(),
            timing: with_timing.then_some(Timing {
                iterations: report.iterations,
                wall_time_ms: report.wall_time.as_secs_f64() * 1e3,
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| {
            schema_err(format!("line {}, column {}", e.line(), e.column()), e.to_string())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateFormat {
    PdbAtom,
    Xyz,
}

impl CoordinateFormat {
    /// `.pdb`/`.ent` files are PDB, everything else XYZ.
    pub fn from_path(path: &str) -> Self {
        let lower = path.to_ascii_lowercase();
        if lower.ends_with(".pdb") || lower.ends_with(".ent") {
            Self::PdbAtom
        } else {
            Self::Xyz
        }
    }
}

/// One fixed-width `ATOM` line.
#[derive(Debug, Clone, PartialEq)]
pub struct PdbAtomRecord {
    pub serial: u32,
    pub atom_name: String,
    pub residue_name: String,
    pub chain_id: char,
    pub residue_seq: i32,
    pub position: Vector3<f64>,
}

impl PdbAtomRecord {
    /// `ALA4.CB`-style name used inside chains.
    pub fn qualified_name(&self) -> String {
        format!("{}{}.{}", self.residue_name, self.residue_seq, self.atom_name)
    }

    pub fn to_line(&self) -> String {
        let name = if self.atom_name.len() < 4 {
            format!(" {:<3}", self.atom_name)
        } else {
            self.atom_name.clone()
        };
        format!(
            "ATOM  {:>5} {:<4} {:>3} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00  0.00",
            self.serial,
            name,
            self.residue_name,
            self.chain_id,
            self.residue_seq,
            self.position.x,
            self.position.y,
            self.position.z
        )
    }
}

fn columns(line: &str, lineno: usize, from: usize, to: usize) -> Result<&str, FormatError> {
    line.get(from - 1..to).ok_or_else(|| FormatError::Coordinates {
        line: lineno,
        columns: format!("{from}-{to}"),
        message: "line too short".into(),
    })
}

fn numeric<T: std::str::FromStr>(
    line: &str,
    lineno: usize,
    from: usize,
    to: usize,
    what: &str,
) -> Result<T, FormatError> {
    let field = columns(line, lineno, from, to)?.trim();
    field.parse().map_err(|_| FormatError::Coordinates {
        line: lineno,
        columns: format!("{from}-{to}"),
        message: format!("{what} {field:?} is not numeric"),
    })
}

/// Parses one `ATOM` record (1-based columns per the PDB layout).
pub fn parse_pdb_atom(line: &str, lineno: usize) -> Result<PdbAtomRecord, FormatError> {
    let coord = |from, to, axis| -> Result<f64, FormatError> {
        let v: f64 = numeric(line, lineno, from, to, axis)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FormatError::Coordinates {
                line: lineno,
                columns: format!("{from}-{to}"),
                message: format!("{axis} is not finite"),
            })
        }
    };
    let position = Vector3::new(coord(31, 38, "x")?, coord(39, 46, "y")?, coord(47, 54, "z")?);
    Ok(PdbAtomRecord {
        serial: numeric(line, lineno, 7, 11, "serial")?,
        atom_name: columns(line, lineno, 13, 16)?.trim().to_string(),
        residue_name: columns(line, lineno, 18, 20)?.trim().to_string(),
        chain_id: columns(line, lineno, 22, 22)?.chars().next().unwrap_or(' '),
        residue_seq: numeric(line, lineno, 23, 26, "residue sequence")?,
        position,
    })
}

/// Groups `ATOM` records by chain id (PDB) or reads one chain `A` (XYZ).
/// Other PDB record types are skipped.
pub fn parse_coordinates(text: &str, format: CoordinateFormat) -> Result<Vec<Chain>, FormatError> {
    match format {
        CoordinateFormat::PdbAtom => parse_pdb(text),
        CoordinateFormat::Xyz => parse_xyz(text),
    }
}

fn into_chains(groups: BTreeMap<char, Vec<Atom>>) -> Result<Vec<Chain>, FormatError> {
    groups
        .into_iter()
        .map(|(name, atoms)| Chain::new(name, atoms).map_err(|e| schema_err(format!("chain {name}"), e.to_string())))
        .collect()
}

fn parse_pdb(text: &str) -> Result<Vec<Chain>, FormatError> {
    let mut groups: BTreeMap<char, Vec<Atom>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if !line.starts_with("ATOM  ") && line != "ATOM" {
            continue;
        }
        let rec = parse_pdb_atom(line, i + 1)?;
        groups
            .entry(rec.chain_id)
            .or_default()
            .push(Atom::new(rec.qualified_name(), rec.position));
    }
    into_chains(groups)
}

/// Standard XYZ: a count line, a comment line, then `label x y z` rows.
/// Atoms are named `<ordinal>.<label>` so repeated element labels stay
/// distinct.
fn parse_xyz(text: &str) -> Result<Vec<Chain>, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((n0, count)) = lines.next() else {
        return Ok(vec![]);
    };
    let err = |line: usize, message: String| FormatError::Coordinates {
        line,
        columns: "1-".into(),
        message,
    };
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| err(n0 + 1, format!("atom count {:?} is not an integer", count.trim())))?;
    // Comment line: may be blank, so take it from the raw text.
    let body: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .skip(n0 + 2)
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if body.len() != count {
        return Err(err(n0 + 1, format!("expected {count} atoms, found {}", body.len())));
    }
    let atoms = body
        .iter()
        .enumerate()
        .map(|(k, (i, l))| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() < 4 {
                return Err(err(i + 1, "expected `label x y z`".into()));
            }
            let mut xyz = [0.0; 3];
            for (d, v) in xyz.iter_mut().enumerate() {
                *v = f[d + 1]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(i + 1, format!("coordinate {:?} is not numeric", f[d + 1])))?;
            }
            Ok(Atom::new(format!("{}.{}", k + 1, f[0]), Vector3::from(xyz)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if atoms.is_empty() {
        return Ok(vec![]);
    }
    into_chains(BTreeMap::from([('A', atoms)]))
}

/// Writes chains as PDB `ATOM` records. Atom names of the form
/// `RESn.NAME` are split back into residue and atom fields.
pub fn write_pdb(chains: &[Chain]) -> String {
    let mut out = String::new();
    let mut serial = 1;
    for c in chains {
        for a in &c.atoms {
            let (res, name) = a.name.rsplit_once('.').unwrap_or(("UNK0", a.name.as_str()));
            let split = res.find(|ch: char| ch.is_ascii_digit() || ch == '-').unwrap_or(res.len());
            let rec = PdbAtomRecord {
                serial,
                atom_name: name.to_string(),
                residue_name: res[..split].to_string(),
                chain_id: c.name,
                residue_seq: res[split..].parse().unwrap_or(0),
                position: a.position,
            };
            out.push_str(&rec.to_line());
            out.push('\n');
            serial += 1;
        }
    }
    out.push_str("END\n");
    out
}

/// Writes a single XYZ block; atom labels are the atom types.
pub fn write_xyz(chains: &[Chain], comment: &str) -> String {
    let atoms: Vec<&Atom> = chains.iter().flat_map(|c| &c.atoms).collect();
    let mut out = format!("{}\n{}\n", atoms.len(), comment);
    for a in atoms {
        let _ = writeln!(
            out,
            "{} {:.6} {:.6} {:.6}",
            a.atom_type(),
            a.position.x,
            a.position.y,
            a.position.z
        );
    }
    out
}
