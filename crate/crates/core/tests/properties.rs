use canodual::chain::{self, AffineTransform, Atom, AtomFilter, Chain, FibrilModel};
use canodual::dual::{self, DualState, DualVector};
use canodual::energy::{self, Configuration, LjParams};
use canodual::fixtures::Fixture;
use canodual::io::{self, InstanceDocument, Problem, ReportDocument};
use canodual::mdgp::{self, DistanceConstraint, Endpoint, MdgpInstance};
use canodual::solver::{self, PointKind, SolverConfig};
use canodual::{QuadraticMap, QuarticProgram, QuarticTerm, Region};
use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

prop_compose! {
    fn program(alpha_positive: bool)(n in 1usize..4, m in 0usize..4)
        (entries in prop::collection::vec(coord(), m * (n * n + n + 2) + n * n + n), n in Just(n), m in Just(m))
        -> QuarticProgram
    {
        let mut it = entries.into_iter();
        let mut next = || it.next().unwrap();
        let terms = (0..m)
            .map(|_| {
                let a = DMatrix::from_fn(n, n, |_, _| next());
                let b = DVector::from_fn(n, |_, _| next());
                let c = next();
                let raw = next();
                let alpha = if alpha_positive { 0.1 + raw.abs() } else { raw };
                QuarticTerm::new(alpha, QuadraticMap::new(&a + a.transpose(), b, c))
            })
            .collect();
        let l = DMatrix::from_fn(n, n, |_, _| next());
        let q = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
        let f = DVector::from_fn(n, |_, _| next());
        QuarticProgram::new(n, terms, q, f)
    }
}

fn point(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(coord(), n).prop_map(DVector::from_vec)
}

fn prog_and_point(alpha_positive: bool) -> impl Strategy<Value = (QuarticProgram, DVector<f64>)> {
    program(alpha_positive).prop_flat_map(|p| {
        let n = p.dim();
        (Just(p), point(n))
    })
}

/// P(x) from the raw matrices, without the library's evaluation path.
fn primal_oracle(p: &QuarticProgram, x: &DVector<f64>) -> f64 {
    let n = p.dim();
    let mut v = 0.0;
    for t in p.terms() {
        let a = t.quad.a();
        let mut xi = t.quad.c();
        for i in 0..n {
            xi += t.quad.b()[i] * x[i];
            for j in 0..n {
                xi += 0.5 * a[(i, j)] * x[i] * x[j];
            }
        }
        v += 0.5 * t.alpha * xi * xi;
    }
    for i in 0..n {
        v -= p.f()[i] * x[i];
        for j in 0..n {
            v += 0.5 * p.q()[(i, j)] * x[i] * x[j];
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn primal_value_matches_raw_formula((p, x) in prog_and_point(false)) {
        let v = p.eval_primal(&x).unwrap();
        let o = primal_oracle(&p, &x);
        prop_assert!((v - o).abs() <= 1e-10 * (1.0 + o.abs()));
    }

    #[test]
    fn complementarity_recovers_primal((p, x) in prog_and_point(true)) {
        let xi = p.canonical_measure(&x).unwrap();
        let sigma = DualVector::new(DVector::from_iterator(
            p.term_count(),
            p.alphas().zip(xi.iter()).map(|(a, v)| a * v),
        ));
        let xi_val = dual::gao_strang(&p, &x, &sigma).unwrap();
        let pv = p.eval_primal(&x).unwrap();
        prop_assert!((xi_val - pv).abs() <= 1e-9 * (1.0 + pv.abs()));
    }

    #[test]
    fn primal_gradient_matches_differences((p, x) in prog_and_point(false)) {
        let g = p.grad_primal(&x).unwrap();
        let h = 1e-5;
        for i in 0..p.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (p.eval_primal(&xp).unwrap() - p.eval_primal(&xm).unwrap()) / (2.0 * h);
            prop_assert!((g[i] - fd).abs() <= 1e-6 * g.norm().max(1.0));
        }
        let hess = p.hess_primal(&x).unwrap();
        prop_assert!((&hess - hess.transpose()).amax() <= 1e-12 * hess.amax().max(1.0));
    }

    #[test]
    fn weak_duality_on_positive_region(
        (p, x) in prog_and_point(true),
        raw in prop::collection::vec(0.0..5.0f64, 3),
    ) {
        let sigma = DualVector::new(DVector::from_iterator(p.term_count(), raw.iter().copied().take(p.term_count())));
        let st = DualState::evaluate(&p, &sigma).unwrap();
        prop_assume!(st.geometry.region == Region::PositiveDefinite);
        let pd = st.value;
        let pv = p.eval_primal(&x).unwrap();
        prop_assert!(pd <= pv + 1e-9 * (1.0 + pv.abs()));
        // x̄ is stationary for Ξ(·, ς): G x̄ = F.
        let resid = (&st.geometry.g * &st.x - &st.geometry.f).norm();
        prop_assert!(resid <= 1e-9 * (1.0 + st.geometry.f.norm()));
        if p.term_count() > 0 {
            let h = dual::hess_dual(&p, &sigma).unwrap();
            prop_assert!(h.symmetric_eigenvalues().max() <= 1e-10);
        }
    }

    #[test]
    fn dual_gradient_is_measure_minus_scaled_sigma(
        p in program(true),
        raw in prop::collection::vec(0.0..5.0f64, 3),
    ) {
        let sigma = DualVector::new(DVector::from_iterator(p.term_count(), raw.iter().copied().take(p.term_count())));
        let st = DualState::evaluate(&p, &sigma).unwrap();
        prop_assume!(st.geometry.region == Region::PositiveDefinite);
        let xi = p.canonical_measure(&st.x).unwrap();
        for (i, a) in p.alphas().enumerate() {
            prop_assert!((st.grad[i] - (xi[i] - sigma[i] / a)).abs() <= 1e-10 * (1.0 + xi[i].abs()));
        }
    }

    #[test]
    fn pseudo_inverse_penrose(entries in prop::collection::vec(-3.0..3.0f64, 36), rank in 0usize..=6) {
        let b = DMatrix::from_row_slice(6, 6, &entries).columns(0, rank).into_owned();
        let m = &b * b.transpose();
        let pinv = dual::pseudo_inverse(&m, dual::RCOND);
        let smax = m.clone().symmetric_eigenvalues().abs().max();
        let tol = 1e-8 * smax.max(1e-300);
        prop_assert!((&m * &pinv * &m - &m).norm() <= tol.max(1e-12));
        prop_assert!((&m * &pinv - (&m * &pinv).transpose()).norm() <= tol.max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certified_point_is_not_beaten((p, x) in prog_and_point(true), seed in any::<u64>()) {
        let cfg = SolverConfig { seed, multistart_count: 16, ..SolverConfig::default() };
        let report = solver::solve(&p, &cfg);
        if let Some(best) = &report.best {
            prop_assert_eq!(best.kind, PointKind::CertifiedGlobalMin);
            prop_assert!(best.gap() <= 1e-6 * (1.0 + best.dual_value.abs()));
            prop_assert!(best.primal_value <= p.eval_primal(&x).unwrap() + 1e-8 * (1.0 + best.primal_value.abs()));
        }
    }

    #[test]
    fn solver_is_deterministic(p in program(true), seed in any::<u64>()) {
        let cfg = SolverConfig { seed, multistart_count: 8, ..SolverConfig::default() };
        let a = solver::solve(&p, &cfg);
        let b = solver::solve(&p, &cfg);
        prop_assert_eq!(a.all_points, b.all_points);
        prop_assert_eq!(a.best, b.best);
    }
}

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    (-20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

prop_compose! {
    fn sensor_pair_instance()(a in vec3(), r1 in 1.0..6.0f64, r2 in 1.0..6.0f64, w in 0.1..3.0f64,
        x in prop::collection::vec(-20.0..20.0f64, 6)) -> (MdgpInstance, MdgpInstance, DVector<f64>)
    {
        let mk = |swap: bool| {
            let (p, q) = if swap { (Endpoint::Sensor(1), Endpoint::Sensor(0)) } else { (Endpoint::Sensor(0), Endpoint::Sensor(1)) };
            MdgpInstance::new(
                vec![a],
                2,
                vec![
                    DistanceConstraint::new(Endpoint::Anchor(0), Endpoint::Sensor(0), r1),
                    DistanceConstraint::new(p, q, r2).with_weight(w),
                ],
                None,
            )
            .unwrap()
        };
        (mk(false), mk(true), DVector::from_vec(x))
    }
}

proptest! {
    #[test]
    fn builder_matches_direct_form((inst, swapped, x) in sensor_pair_instance()) {
        let direct = mdgp::eval_direct(&inst, &x).unwrap();
        let built = mdgp::build_program(&inst).unwrap().eval_primal(&x).unwrap();
        prop_assert!((direct - built).abs() <= 1e-9 * (1.0 + direct.abs()));
        let other = mdgp::build_program(&swapped).unwrap().eval_primal(&x).unwrap();
        prop_assert!((other - built).abs() <= 1e-9 * (1.0 + built.abs()));
        for t in mdgp::build_program(&inst).unwrap().terms() {
            prop_assert!(t.alpha > 0.0);
            prop_assert!(!t.quad.was_symmetrized());
        }
    }

    #[test]
    fn rigid_motions_preserve_lj_energy(
        pts in prop::collection::vec(vec3(), 2..8),
        axis in vec3(),
        shift in vec3(),
    ) {
        let cfg = Configuration::reduced(pts.iter().map(|p| p / 4.0).collect()).unwrap();
        let e0 = energy::lj_cluster_energy(&cfg);
        prop_assume!(e0.as_ref().is_ok_and(|e| e.abs() < 1e12));
        let e0 = e0.unwrap();
        let rot = Rotation3::from_scaled_axis(axis / 10.0);
        let moved = Configuration::reduced(cfg.positions.iter().map(|p| rot * p + shift).collect()).unwrap();
        let e1 = energy::lj_cluster_energy(&moved).unwrap();
        prop_assert!((e1 - e0).abs() <= 1e-9 * e0.abs().max(1.0));
        let pair = energy::pair_sum_energy(&cfg, &LjParams::REDUCED).unwrap();
        prop_assert!((pair - e0).abs() <= 1e-12 * e0.abs().max(1.0));
    }

    #[test]
    fn transforms_preserve_distances(pts in prop::collection::vec(vec3(), 2..6), signs in prop::collection::vec(any::<bool>(), 3), t in vec3()) {
        let c = Chain::new('A', pts.iter().enumerate().map(|(i, p)| Atom::new(format!("R{i}.CA"), *p)).collect()).unwrap();
        let s: Vec<f64> = signs.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let tr = AffineTransform::diagonal([s[0], s[1], s[2]], t).unwrap();
        let h = chain::apply_transform(&c, &tr, 'H');
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                let d0 = (c.atoms[i].position - c.atoms[j].position).norm();
                let d1 = (h.atoms[i].position - h.atoms[j].position).norm();
                prop_assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0));
            }
        }
        let ab = chain::rmsd(&c, &h, &AtomFilter::All).unwrap();
        let ba = chain::rmsd(&h, &c, &AtomFilter::All).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn fibril_levels_are_symmetric(p in vec3(), levels in 1usize..4) {
        let a = Chain::new('A', vec![Atom::new("ALA1.CA", p)]).unwrap();
        for fam in [chain::Family::Nvf, chain::Family::Nvg, chain::Family::Nvh] {
            let m = chain::replicate_fibril(&a, &fam.template_sheet(), &fam.stack(), levels).unwrap();
            prop_assert_eq!(m.chains.len(), 2 + 4 * levels);
            let centroid = m.chains.values().map(|c| c.atoms[0].position).sum::<Vector3<f64>>() / m.chains.len() as f64;
            let expected = (p + fam.template_sheet().apply(&p)) / 2.0;
            prop_assert!((centroid - expected).amax() <= 1e-9);
        }
    }

    #[test]
    fn contacts_are_symmetric_and_sorted(pts in prop::collection::vec(vec3(), 1..5), v in vec3()) {
        let atoms = |shift: Vector3<f64>| pts.iter().enumerate().map(|(i, p)| Atom::new(format!("R{i}.CA"), p / 4.0 + shift)).collect::<Vec<_>>();
        let a = Chain::new('A', atoms(Vector3::zeros())).unwrap();
        let b = Chain::new('B', atoms(v / 4.0)).unwrap();
        let ab = chain::contact_report(&FibrilModel::from_chains([a.clone(), b.clone()]).unwrap(), 3.4).unwrap();
        let a2 = Chain { name: 'B', ..a };
        let b2 = Chain { name: 'A', ..b };
        let ba = chain::contact_report(&FibrilModel::from_chains([a2, b2]).unwrap(), 3.4).unwrap();
        let da: Vec<f64> = ab.iter().map(|c| c.distance).collect();
        let db: Vec<f64> = ba.iter().map(|c| c.distance).collect();
        prop_assert_eq!(&da, &db);
        prop_assert!(da.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(da.iter().all(|&d| d < 3.4));
    }

    #[test]
    fn pdb_round_trip(pts in prop::collection::vec(vec3(), 1..6)) {
        let c = Chain::new('C', pts.iter().enumerate().map(|(i, p)| Atom::new(format!("GLY{}.CA", i + 1), *p)).collect()).unwrap();
        let text = io::write_pdb(std::slice::from_ref(&c));
        let back = io::parse_coordinates(&text, io::CoordinateFormat::PdbAtom).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].name, 'C');
        for (x, y) in back[0].atoms.iter().zip(&c.atoms) {
            prop_assert_eq!(&x.name, &y.name);
            prop_assert!((x.position - y.position).amax() <= 5e-4 + 1e-12);
        }
    }
}

#[test]
fn instance_documents_round_trip() {
    for f in Fixture::ALL {
        let doc = f.document();
        let again = io::parse_instance(&doc.to_json()).unwrap();
        assert_eq!(doc, again, "{}", f.name());
        if let Some(inst) = f.instance() {
            let Problem::Mdgp(spec) = InstanceDocument::mdgp(&inst).problem else { panic!() };
            assert_eq!(spec.to_instance().unwrap(), inst);
        }
    }
}

#[test]
fn report_documents_round_trip() {
    for f in Fixture::ALL {
        let report = solver::solve(&f.program(), &SolverConfig::default());
        for timing in [false, true] {
            let doc = ReportDocument::from_report(f.text(), &report, timing);
            assert_eq!(ReportDocument::from_json(&doc.to_json()).unwrap(), doc);
        }
    }
}

#[test]
fn nvh_box_search_finds_single_positive_root() {
    let cfg = SolverConfig {
        search_box: Some(solver::SearchBox::uniform(1, 1e-9, 2.0)),
        ..SolverConfig::default()
    };
    let pts = solver::find_critical_points(&Fixture::Nvh.program(), &cfg).unwrap();
    assert_eq!(pts.len(), 1);
    assert!((pts[0].sigma[0] - 0.0127287).abs() < 1e-6);
    assert_eq!(pts[0].kind, PointKind::CertifiedGlobalMin);
}

#[test]
fn nvh_contact_at_solved_distance_is_not_reported() {
    let inst = Fixture::Nvh.instance().unwrap();
    let x = solver::maximize_dual_positive(&Fixture::Nvh.program(), &SolverConfig::default()).unwrap().x;
    let a = Chain::new('A', vec![Atom::new("ALA4.CB", inst.anchors[0])]).unwrap();
    let h = Chain::new('H', vec![Atom::new("ALA4.CB", Vector3::new(x[0], x[1], x[2]))]).unwrap();
    let model = FibrilModel::from_chains([a, h]).unwrap();
    let d = (inst.anchors[0] - Vector3::new(x[0], x[1], x[2])).norm();
    assert!((d - 3.4019).abs() < 1e-4, "{d}");
    assert!(chain::contact_report(&model, 3.4).unwrap().is_empty());
    assert_eq!(chain::contact_report(&model, 3.5).unwrap().len(), 1);
}

#[test]
fn hb_and_vdw_minima_by_golden_section() {
    fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }
    let lj = energy::PairCoefficients::from_lj(LjParams::REDUCED);
    let r = golden(|r| energy::vdw_ab(r, &lj).unwrap(), 0.9, 2.0);
    assert!((r - 2f64.powf(1.0 / 6.0)).abs() < 1e-7);
    assert!((energy::vdw_ab(r, &lj).unwrap() + 1.0).abs() < 1e-12);

    let hb = energy::PairCoefficients::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let r = golden(|r| energy::hb_potential(r, &hb).unwrap(), 0.5, 3.0);
    assert!((r - 1.2f64.sqrt()).abs() < 1e-7, "{r}");
    assert!((energy::hb_potential(r, &hb).unwrap() + 0.0669796).abs() < 1e-6);
}
