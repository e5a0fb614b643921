//! Command-line front end for `canodual`.
//!
//! Exit codes: 0 success, 1 solver found no certificate, 2 input or usage error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use canodual::chain::{self, AffineTransform, AtomFilter, Chain, Family, FibrilModel};
use canodual::dual::{self, DualVector};
use canodual::energy::{self, Configuration, LjParams, Units};
use canodual::io::{self, CoordinateFormat, InstanceDocument, Problem, ReportDocument};
use canodual::mdgp::{self, DEFAULT_REPORT_THRESHOLD};
use canodual::solver::{self, SolverConfig};
use clap::{Parser, Subcommand};
use nalgebra::{DVector, Vector3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_CERTIFICATE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable that overrides the solver seed.
pub const SEED_ENV: &str = "CANODUAL_SEED";

#[derive(Debug, Parser)]
#[command(name = "canodual", version, about = "Canonical dual solver for quartic programs and fibril geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a quartic or MDGP instance and print the JSON report.
    Solve {
        instance: PathBuf,
        /// Include iteration count and wall time (breaks byte-identical output).
        #[arg(long)]
        timing: bool,
    },
    /// Solve an MDGP instance and print sensor positions and violations.
    Mdgp {
        instance: PathBuf,
        /// Residual magnitude (Å²) above which a constraint is flagged.
        #[arg(long, default_value_t = DEFAULT_REPORT_THRESHOLD)]
        threshold: f64,
    },
    /// Sample the primal along one coordinate (others held at zero) as CSV.
    /// For single-term programs the dual is sampled over the same grid.
    Landscape {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        var: usize,
        /// Interval `a:b`.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        #[arg(long)]
        steps: usize,
    },
    /// Build a 10-chain (or larger) fibril model from chain A of a coordinate file.
    Replicate {
        coords: PathBuf,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        /// Sheet translation `x,y,z` replacing the template value.
        #[arg(long, allow_hyphen_values = true)]
        translation: Option<String>,
        #[arg(long, value_parser = ["pdb", "xyz"], default_value = "pdb")]
        format: String,
    },
    /// Lennard-Jones energy of all atoms in a coordinate file.
    Energy {
        coords: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Refine in reduced units and print the final energy.
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value_t = 1000)]
        steepest_steps: usize,
        #[arg(long, default_value_t = 1000)]
        cg_steps: usize,
    },
    /// RMSD between the first chains of two coordinate files, no superposition.
    Rmsd {
        first: PathBuf,
        second: PathBuf,
        /// Restrict to one atom type, e.g. `CA`.
        #[arg(long)]
        atoms: Option<String>,
    },
    /// Inter-chain atom pairs closer than the threshold.
    Contacts {
        coords: PathBuf,
        #[arg(long, default_value_t = chain::DEFAULT_CONTACT_THRESHOLD)]
        threshold: f64,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

type Outcome = std::result::Result<(String, i32), Failure>;

/// Runs one invocation. `seed_override` is the raw value of [`SEED_ENV`].
pub fn run<I, T>(args: I, seed_override: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match dispatch(cli.command, seed_override) {
        Ok((text, code)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, seed: Option<&str>) -> Outcome {
    match cmd {
        Command::Solve { instance, timing } => cmd_solve(&instance, timing, seed),
        Command::Mdgp { instance, threshold } => cmd_mdgp(&instance, threshold, seed),
        Command::Landscape {
            instance,
            var,
            range,
            steps,
        } => cmd_landscape(&instance, var, &range, steps),
        Command::Replicate {
            coords,
            family,
            levels,
            translation,
            format,
        } => cmd_replicate(&coords, &family, levels, translation.as_deref(), &format),
        Command::Energy {
            coords,
            epsilon,
            sigma,
            refine,
            steepest_steps,
            cg_steps,
        } => cmd_energy(&coords, epsilon, sigma, refine.then_some((steepest_steps, cg_steps))),
        Command::Rmsd { first, second, atoms } => cmd_rmsd(&first, &second, atoms),
        Command::Contacts { coords, threshold } => cmd_contacts(&coords, threshold),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<(String, InstanceDocument), Failure> {
    let text = read(path)?;
    let doc = io::parse_instance(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok((text, doc))
}

fn config(doc: &InstanceDocument, seed: Option<&str>) -> Result<SolverConfig, Failure> {
    let mut cfg = doc.solver_config();
    if let Some(s) = seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    Ok(cfg)
}

fn load_chains(path: &Path) -> Result<Vec<Chain>, Failure> {
    let text = read(path)?;
    let fmt = CoordinateFormat::from_path(&path.to_string_lossy());
    io::parse_coordinates(&text, fmt).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn first_chain(path: &Path) -> Result<Chain, Failure> {
    load_chains(path)?
        .into_iter()
        .next()
        .ok_or_else(|| Failure::input(format!("{}: no atoms", path.display())))
}

fn certificate_code(doc: &ReportDocument) -> i32 {
    if doc.best.is_some() {
        EXIT_OK
    } else {
        EXIT_NO_CERTIFICATE
    }
}

fn cmd_solve(path: &Path, timing: bool, seed: Option<&str>) -> Outcome {
    let (text, doc) = load_instance(path)?;
    let cfg = config(&doc, seed)?;
    let prog = doc.program().map_err(|e| Failure::input(e.to_string()))?;
    let report = solver::solve(&prog, &cfg);
    let mut rep = ReportDocument::from_report(&text, &report, timing);
    if let Problem::Mdgp(spec) = &doc.problem {
        let inst = spec.to_instance().map_err(|e| Failure::input(e.to_string()))?;
        attach_mdgp(&mut rep, &inst, report.best.as_ref().map(|b| &b.x), DEFAULT_REPORT_THRESHOLD)?;
    }
    let code = certificate_code(&rep);
    Ok((rep.to_json() + "\n", code))
}

fn attach_mdgp(
    rep: &mut ReportDocument,
    inst: &mdgp::MdgpInstance,
    x: Option<&DVector<f64>>,
    threshold: f64,
) -> Result<(), Failure> {
    if let Some(x) = x {
        rep.sensors = Some(mdgp::split_sensors(x).iter().map(|p| [p.x, p.y, p.z]).collect());
        rep.violations =
            Some(mdgp::violation_report(inst, x, threshold).map_err(|e| Failure::input(e.to_string()))?);
    }
    Ok(())
}

fn cmd_mdgp(path: &Path, threshold: f64, seed: Option<&str>) -> Outcome {
    let (text, doc) = load_instance(path)?;
    let Problem::Mdgp(spec) = &doc.problem else {
        return Err(Failure::input(format!("{}: not an mdgp instance", path.display())));
    };
    let inst = spec.to_instance().map_err(|e| Failure::input(e.to_string()))?;
    let cfg = config(&doc, seed)?;
    let sol = mdgp::solve_mdgp(&inst, &cfg).map_err(|e| Failure::input(e.to_string()))?;
    let mut rep = ReportDocument::from_report(&text, &sol.report, false);
    attach_mdgp(&mut rep, &inst, sol.report.best.as_ref().map(|b| &b.x), threshold)?;

    let mut s = String::new();
    match (&rep.sensors, &rep.violations) {
        (Some(sensors), Some(violations)) => {
            for (k, p) in sensors.iter().enumerate() {
                let _ = writeln!(s, "sensor {k}: {:.6} {:.6} {:.6}", p[0], p[1], p[2]);
            }
            for v in violations {
                let _ = writeln!(
                    s,
                    "constraint {}: target {:.6} achieved {:.6} residual {:.3e}{}",
                    v.constraint,
                    v.target,
                    v.achieved,
                    v.residual,
                    if v.flagged { " FLAGGED" } else { "" }
                );
            }
        }
        _ => s.push_str("no certified solution\n"),
    }
    for d in &rep.diagnostics {
        let _ = writeln!(s, "note: {d}");
    }
    let code = certificate_code(&rep);
    Ok((s, code))
}

fn parse_range(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::input(format!("--range {s:?}: expected a:b with a < b"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(bad());
    }
    Ok((a, b))
}

fn cmd_landscape(path: &Path, var: usize, range: &str, steps: usize) -> Outcome {
    let (_, doc) = load_instance(path)?;
    let prog = doc.program().map_err(|e| Failure::input(e.to_string()))?;
    if var >= prog.dim() {
        return Err(Failure::input(format!("--var {var} out of range for dimension {}", prog.dim())));
    }
    if steps < 2 {
        return Err(Failure::input("--steps must be at least 2"));
    }
    let (a, b) = parse_range(range)?;
    let with_dual = prog.term_count() == 1;
    let mut s = String::from(if with_dual { "t,P,Pd\n" } else { "t,P\n" });
    let mut x = DVector::zeros(prog.dim());
    for k in 0..steps {
        let t = a + (b - a) * k as f64 / (steps - 1) as f64;
        x[var] = t;
        let p = prog.eval_primal(&x).map_err(|e| Failure::input(e.to_string()))?;
        let _ = write!(s, "{t:.16e},{p:.16e}");
        if with_dual {
            match dual::eval_dual(&prog, &DualVector::from_slice(&[t])) {
                Ok(d) if d.is_finite() => {
                    let _ = write!(s, ",{d:.16e}");
                }
                _ => s.push(','),
            }
        }
        s.push('\n');
    }
    Ok((s, EXIT_OK))
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, Failure> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::input(format!("{s:?}: expected x,y,z")))?;
    match parts.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(Failure::input(format!("{s:?}: expected x,y,z"))),
    }
}

fn cmd_replicate(path: &Path, family: &str, levels: usize, translation: Option<&str>, format: &str) -> Outcome {
    let fam = Family::parse(family)
        .ok_or_else(|| Failure::input(format!("unknown family {family:?}; expected 3nvf, 3nvg or 3nvh")))?;
    let a = first_chain(path)?;
    let sheet = match translation {
        Some(t) => AffineTransform::diagonal(fam.sheet_signs(), parse_vec3(t)?)
            .map_err(|e| Failure::input(e.to_string()))?,
        None => fam.template_sheet(),
    };
    let model = chain::replicate_fibril(&a, &sheet, &fam.stack(), levels)
        .map_err(|e| Failure::input(e.to_string()))?;
    let chains: Vec<Chain> = model.chains.into_values().collect();
    let text = if format == "xyz" {
        io::write_xyz(&chains, &format!("{} fibril, {levels} levels", fam.name()))
    } else {
        io::write_pdb(&chains)
    };
    Ok((text, EXIT_OK))
}

fn cmd_energy(path: &Path, epsilon: f64, sigma: f64, refine: Option<(usize, usize)>) -> Outcome {
    let params = LjParams::new(epsilon, sigma).map_err(|e| Failure::input(e.to_string()))?;
    let positions: Vec<Vector3<f64>> = load_chains(path)?
        .into_iter()
        .flat_map(|c| c.atoms.into_iter().map(|a| a.position))
        .collect();
    let cfg = Configuration::new(positions, Units::Angstrom).map_err(|e| Failure::input(e.to_string()))?;
    let e = energy::pair_sum_energy(&cfg, &params).map_err(|e| Failure::input(e.to_string()))?;
    let mut s = format!("atoms {}\nenergy {e:.12}\n", cfg.len());
    if let Some((s1, s2)) = refine {
        let reduced = Configuration::reduced(cfg.positions.iter().map(|p| p / sigma).collect())
            .map_err(|e| Failure::input(e.to_string()))?;
        let r = energy::refine(&reduced, s1, s2).map_err(|e| Failure::input(e.to_string()))?;
        let _ = writeln!(
            s,
            "refined {:.12}\nsteps {} steepest, {} conjugate-gradient",
            r.energy * epsilon,
            r.steepest_steps,
            r.cg_steps
        );
        for d in &r.diagnostics {
            let _ = writeln!(s, "note: {d}");
        }
    }
    Ok((s, EXIT_OK))
}

fn cmd_rmsd(first: &Path, second: &Path, atoms: Option<String>) -> Outcome {
    let a = first_chain(first)?;
    let b = first_chain(second)?;
    let filter = atoms.map_or(AtomFilter::All, AtomFilter::Type);
    let d = chain::rmsd(&a, &b, &filter).map_err(|e| Failure::input(e.to_string()))?;
    Ok((format!("{d:.6}\n"), EXIT_OK))
}

fn cmd_contacts(path: &Path, threshold: f64) -> Outcome {
    let model = FibrilModel::from_chains(load_chains(path)?).map_err(|e| Failure::input(e.to_string()))?;
    let contacts = chain::contact_report(&model, threshold).map_err(|e| Failure::input(e.to_string()))?;
    let mut s = String::from("first,second,distance\n");
    for c in contacts {
        let _ = writeln!(s, "{},{},{:.6}", c.first, c.second, c.distance);
    }
    Ok((s, EXIT_OK))
}
